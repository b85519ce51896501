#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "locreward/emit.hpp"
#include "locreward/parsing.hpp"
#include "test_support.hpp"

using namespace locreward;
using nlohmann::json;

namespace {

const auto kPx = CoordinateSpace::pixels(640, 480);
const auto kTh = CoordinateSpace::thousandths(640, 480);

void check_golden(const std::string& file) {
  const auto cases = testsupport::read_jsonl(testsupport::data_path("golden/" + file));
  ASSERT_GE(cases.size(), 30u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c["name"].get<std::string>());
    const CompletionFormat format =
        c["format"] == "plain" ? CompletionFormat::plain() : CompletionFormat::structured();
    const CoordinateSpace space{c["coords"] == "thousandths" ? SpaceKind::normalized_thousandths
                                                             : SpaceKind::absolute_pixels,
                                c["width"].get<int>(), c["height"].get<int>()};
    const ParseOutcome out = parse_completion(c["text"].get<std::string>(), format, space);
    EXPECT_EQ(out.template_ok, c["template_ok"].get<bool>());
    EXPECT_EQ(out.content_ok, c["content_ok"].get<bool>());
    ASSERT_EQ(out.predictions.size(), c["predictions"].size());
    for (std::size_t i = 0; i < out.predictions.size(); ++i) {
      const auto& want = c["predictions"][i];
      EXPECT_EQ(out.predictions[i].label, want["label"].get<std::string>());
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(out.predictions[i].coords[k], want["coords"][k].get<double>());
    }
    EXPECT_EQ(extract_objects(out).size(), c["extracted"].get<std::size_t>());
    if (!out.template_ok || !out.content_ok) {
      EXPECT_FALSE(out.diagnostics.empty());
    }
  }
}

}  // namespace

TEST(ParserGolden, Structured) { check_golden("parser_structured.jsonl"); }
TEST(ParserGolden, Plain) { check_golden("parser_plain.jsonl"); }

TEST(Parser, SpecExamples) {
  auto ok = parse_completion(R"([{"bbox_2d": [10, 20, 110, 220], "label": "cat"}])", CompletionFormat::structured(), kPx);
  EXPECT_TRUE(ok.template_ok);
  EXPECT_TRUE(ok.content_ok);
  ASSERT_EQ(ok.predictions.size(), 1u);
  EXPECT_EQ(ok.predictions[0].box(), (Box{10, 20, 110, 220}));

  auto prose = parse_completion("I cannot find any objects.", CompletionFormat::structured(), kPx);
  EXPECT_FALSE(prose.template_ok);
  EXPECT_FALSE(prose.content_ok);
  EXPECT_TRUE(prose.predictions.empty());

  auto oob = parse_completion(R"([{"bbox_2d": [10, 20, 110, 900], "label": "cat"}])", CompletionFormat::structured(), kPx);
  EXPECT_TRUE(oob.template_ok);
  EXPECT_FALSE(oob.content_ok);
  EXPECT_TRUE(extract_objects(oob).empty());
}

TEST(Parser, NeverThrowsOnGarbage) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "[]{}\",:;-0123456789.eE abcbbox_2dlabel\n`";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1), len(0, 80);
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    for (std::size_t n = len(rng); n > 0; --n) s.push_back(alphabet[pick(rng)]);
    for (const auto f : {CompletionFormat::structured(), CompletionFormat::plain()}) {
      ParseOutcome out;
      ASSERT_NO_THROW(out = parse_completion(s, f, kTh));
      if (out.content_ok) {
        ASSERT_TRUE(out.template_ok);
      }
      if (!out.template_ok) {
        ASSERT_TRUE(out.predictions.empty());
      }
    }
  }
}

TEST(ExtractObjects, KeepsValidInOrder) {
  auto out = parse_completion("a-[1,2,3,4];b-[5,6,1005,8];c-[9,10,11,12]", CompletionFormat::plain(), kTh);
  EXPECT_TRUE(out.template_ok);
  EXPECT_FALSE(out.content_ok);
  const auto objs = extract_objects(out);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_EQ(objs[0].label, "a");
  EXPECT_EQ(objs[1].label, "c");
}

TEST(ExtractObjects, TemplateFailureYieldsNothing) {
  ParseOutcome out;
  out.template_ok = false;
  out.predictions.push_back({"cat", {1, 2, 3, 4}});
  out.space = kPx;
  EXPECT_TRUE(extract_objects(out).empty());
}

TEST(Labels, Normalization) {
  EXPECT_EQ(normalize_label("  Traffic \t Light "), "Traffic Light");
  EXPECT_EQ(label_key("  Traffic \t Light "), "traffic light");
  EXPECT_TRUE(labels_equal("Cat", " cat "));
  EXPECT_FALSE(labels_equal("cat", "cats"));
}

TEST(Emit, CanonicalText) {
  const std::vector<LabeledBox> objs{{"cat", {10, 20, 110, 220}}, {"dog \"x\"", {1.5, 2, 3, 4}}};
  EXPECT_EQ(emit_completion(objs, CompletionFormat::structured()),
            R"([{"bbox_2d": [10, 20, 110, 220], "label": "cat"}, {"bbox_2d": [1.5, 2, 3, 4], "label": "dog \"x\""}])");
  const std::vector<LabeledBox> ints{{"cat", {10, 20, 110, 220}}, {"dog", {1, 2, 3, 4}}};
  EXPECT_EQ(emit_completion(ints, CompletionFormat::plain()), "cat-[10,20,110,220];dog-[1,2,3,4]");
  EXPECT_EQ(emit_completion({}, CompletionFormat::plain()), "");
  EXPECT_EQ(emit_completion({}, CompletionFormat::structured()), "[]");
}

TEST(Emit, RoundTripBothFormats) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> labels{"cat", "dog", "traffic light", "t-shirt", "Person"};
  std::uniform_int_distribution<std::size_t> n_objs(0, 10), which(0, labels.size() - 1);
  for (int i = 0; i < 300; ++i) {
    std::vector<LabeledBox> s_objs, p_objs;
    for (std::size_t n = n_objs(rng); n > 0; --n) {
      s_objs.push_back({labels[which(rng)], testsupport::random_box(rng, 640, 480)});
      p_objs.push_back({labels[which(rng)], testsupport::random_int_box(rng, 1000, 1000)});
    }
    const auto s = parse_completion(emit_completion(s_objs, CompletionFormat::structured()),
                                    CompletionFormat::structured(), kPx);
    ASSERT_TRUE(s.template_ok && s.content_ok);
    ASSERT_EQ(extract_objects(s), s_objs);
    const auto p = parse_completion(emit_completion(p_objs, CompletionFormat::plain()), CompletionFormat::plain(), kTh);
    ASSERT_TRUE(p.template_ok && p.content_ok);
    ASSERT_EQ(extract_objects(p), p_objs);
  }
}
