#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "locreward/harness/annotations_io.hpp"
#include "locreward/harness/batch.hpp"
#include "locreward/harness/config.hpp"
#include "locreward/harness/service.hpp"
#include "locreward/harness/socket_server.hpp"
#include "locreward/harness/wire.hpp"
#include "test_support.hpp"

using namespace locreward;
using namespace locreward::harness;

namespace {

ScoringRequest basic_request(std::vector<std::string> completions) {
  ScoringRequest r;
  r.request_id = "r1";
  r.sample.image_id = "img";
  r.sample.width = 640;
  r.sample.height = 480;
  r.sample.gt = {{"cat", {10, 20, 110, 220}}};
  r.completions = std::move(completions);
  return r;
}

const std::string kPerfect = R"([{"bbox_2d": [10, 20, 110, 220], "label": "cat"}])";

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / ("locreward_test_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, DefaultsAndJson) {
  EngineConfig cfg;
  EXPECT_EQ(cfg.beta, 0.2);
  EXPECT_EQ(cfg.matcher, MatcherPolicy::box_only);
  EXPECT_EQ(cfg.phase.step_fraction, 0.5);
  EXPECT_EQ(cfg.completion_space_kind(), SpaceKind::absolute_pixels);
  apply_config_json(cfg, json::parse(R"({"beta":0.05,"matcher":"box-label","format":"plain","kl":"seq",
      "phase":{"step_fraction":0.25,"advanced":[0.8,0.8,0.95]},"reward":{"recall":false},"clip":0.2})"));
  EXPECT_EQ(cfg.beta, 0.05);
  EXPECT_EQ(cfg.matcher, MatcherPolicy::box_and_label);
  EXPECT_EQ(cfg.completion_space_kind(), SpaceKind::normalized_thousandths);
  EXPECT_EQ(cfg.kl, KlMode::sequence_log_ratio);
  EXPECT_EQ(cfg.phase.step_fraction, 0.25);
  EXPECT_EQ(cfg.phase.advanced, (Thresholds{0.8, 0.8, 0.95}));
  EXPECT_FALSE(cfg.reward.use_recall);
  EXPECT_EQ(cfg.clip, 0.2);

  EngineConfig round;
  apply_config_json(round, config_to_json(cfg));
  EXPECT_EQ(config_to_json(round), config_to_json(cfg));
}

TEST(Config, RejectsBadInput) {
  EngineConfig cfg;
  EXPECT_THROW(apply_config_json(cfg, json::parse(R"({"betta":0.1})")), Error);
  EXPECT_THROW(apply_config_json(cfg, json::parse(R"({"beta":"high"})")), Error);
  EXPECT_THROW(apply_config_json(cfg, json::parse(R"({"phase":{"step_fraction":2}})")), Error);
  EXPECT_THROW(apply_config_json(cfg, json::parse(R"({"matcher":"greedy"})")), Error);
  EXPECT_THROW(load_config_file("/nonexistent/config.json"), Error);
}

TEST(Wire, RequestRoundTrip) {
  ScoringRequest r = basic_request({kPerfect, "x"});
  r.sample.task = Task::rec;
  r.logprobs = std::vector<LogProbRecord>{{{-1, -2}, {-1, -2.5}, {-0.5, -2}}, {{-0.1}, {-0.2}, {-0.3}}};
  r.progress = 0.625;
  r.format = FormatKind::plain_text_pairs;
  r.coords = SpaceKind::absolute_pixels;
  r.matcher = MatcherPolicy::box_and_label;
  r.phase = PhaseOverride{0.3, Thresholds{0.4, 0.4, 0.7}, std::nullopt};
  r.want_advantages = false;
  r.final = true;
  EXPECT_EQ(request_from_json(json::parse(to_json(r).dump())), r);
  const ScoringRequest minimal = basic_request({"a", "b"});
  EXPECT_EQ(request_from_json(json::parse(to_json(minimal).dump())), minimal);
}

TEST(Wire, ResponseRoundTrip) {
  ScoringRequest r = basic_request({kPerfect, "junk", "[]"});
  r.logprobs = std::vector<LogProbRecord>(3, LogProbRecord{{-1}, {-1.1}, {-1.3}});
  const ScoringResponse resp = score_group(r, {});
  ASSERT_TRUE(resp.ok());
  EXPECT_EQ(response_from_json(json::parse(to_json(resp).dump())), resp);
  const ScoringResponse err = error_response("x", ErrorCode::malformed_request, "bad");
  EXPECT_EQ(response_from_json(json::parse(to_json(err).dump())), err);
}

TEST(Wire, StrictParsing) {
  json j = to_json(basic_request({"a", "b"}));
  j["extra"] = 1;
  EXPECT_THROW(request_from_json(j), Error);
  j.erase("extra");
  j["v"] = 2;
  EXPECT_THROW(request_from_json(j), Error);
  j["v"] = 1;
  j["sample"].erase("width");
  EXPECT_THROW(request_from_json(j), Error);
}

TEST(ScoreGroup, PerfectAndUnparseable) {
  const auto resp = score_group(basic_request({kPerfect, "nope", "nope", "nope"}), {});
  ASSERT_TRUE(resp.ok());
  ASSERT_EQ(resp.rewards.size(), 4u);
  EXPECT_EQ(resp.rewards[0].total, 3.0);
  EXPECT_EQ(resp.rewards[1].total, 0.0);
  EXPECT_NEAR(resp.advantages[0], 1.7320, 1e-3);
  EXPECT_NEAR(resp.advantages[1], -0.5773, 1e-3);
  EXPECT_EQ(resp.request_id, "r1");
  EXPECT_FALSE(resp.objective);
}

TEST(ScoreGroup, IdenticalCompletions) {
  const auto resp = score_group(basic_request({kPerfect, kPerfect, kPerfect}), {});
  EXPECT_EQ(resp.advantages, std::vector<double>(3, 0.0));
}

TEST(ScoreGroup, ReportsActivePhase) {
  auto req = basic_request({kPerfect, "x"});
  req.progress = 0.6;
  const auto resp = score_group(req, {});
  EXPECT_EQ(resp.phase, Phase::advanced);
  EXPECT_EQ(resp.thresholds, (Thresholds{0.75, 0.75, 0.9}));
  req.phase = PhaseOverride{1.0, std::nullopt, std::nullopt};
  EXPECT_EQ(score_group(req, {}).phase, Phase::beginner);
}

TEST(ScoreGroup, ObjectiveWithLogprobs) {
  auto req = basic_request({kPerfect, "x"});
  req.logprobs = std::vector<LogProbRecord>(2, LogProbRecord{{-1, -1}, {-1, -1}, {-1, -1}});
  const auto resp = score_group(req, {});
  ASSERT_TRUE(resp.objective);
  EXPECT_EQ(*resp.objective, 0.0);
  EXPECT_EQ(resp.kl_values, std::vector<double>(2, 0.0));
}

TEST(ScoreGroup, MalformedRequests) {
  EXPECT_FALSE(score_group(basic_request({kPerfect}), {}).ok());
  auto single = basic_request({kPerfect});
  single.want_advantages = false;
  EXPECT_TRUE(score_group(single, {}).ok());
  auto progress = basic_request({"a", "b"});
  progress.progress = 1.5;
  EXPECT_FALSE(score_group(progress, {}).ok());
  auto lp = basic_request({"a", "b"});
  lp.logprobs = std::vector<LogProbRecord>(1, LogProbRecord{{-1}, {-1}, {-1}});
  EXPECT_FALSE(score_group(lp, {}).ok());
  auto bad_gt = basic_request({"a", "b"});
  bad_gt.sample.gt[0].box.x2 = 5000;
  const auto resp = score_group(bad_gt, {});
  ASSERT_FALSE(resp.ok());
  EXPECT_EQ(resp.error->code, "malformed-request");
}

TEST(ScoreGroup, RequestOverridesConfig) {
  EngineConfig cfg;
  cfg.format.kind = FormatKind::plain_text_pairs;
  auto req = basic_request({kPerfect, "x"});
  EXPECT_EQ(score_group(req, cfg).rewards[0].total, 0.0);
  req.format = FormatKind::structured_object_list;
  req.coords = SpaceKind::absolute_pixels;
  EXPECT_EQ(score_group(req, cfg).rewards[0].total, 3.0);
}

TEST(Service, LinesInLinesOut) {
  std::stringstream in, out;
  in << to_json(basic_request({kPerfect, "x"})).dump() << "\n\n{not json\n[1,2]\n";
  const auto stats = run_service(in, out, {});
  EXPECT_EQ(stats.requests, 3u);
  EXPECT_EQ(stats.errors, 2u);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(json::parse(line)["request_id"], "r1");
  EXPECT_TRUE(json::parse(line)["ok"].get<bool>());
  std::getline(out, line);
  EXPECT_FALSE(json::parse(line)["ok"].get<bool>());
  EXPECT_TRUE(json::parse(line)["request_id"].is_null());
}

TEST(Service, StatelessUnderReordering) {
  std::vector<std::string> lines;
  for (int i = 0; i < 50; ++i) {
    auto r = basic_request({kPerfect, i % 3 ? "x" : kPerfect, R"([{"bbox_2d": [0, 0, 100, 100], "label": "cat"}])"});
    r.request_id = "q" + std::to_string(i);
    r.progress = (i % 10) / 10.0;
    lines.push_back(to_json(r).dump());
  }
  const auto answer_all = [](const std::vector<std::string>& ls) {
    std::map<std::string, std::string> by_id;
    for (const auto& l : ls) {
      const json resp = to_json(handle_line(l, {}));
      by_id[resp["request_id"].get<std::string>()] = resp.dump();
    }
    return by_id;
  };
  auto shuffled = lines;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  EXPECT_EQ(answer_all(lines), answer_all(shuffled));
}

TEST(Batch, EmptyManifest) {
  std::stringstream in, out;
  const auto rep = run_batch(in, out, {});
  EXPECT_EQ(rep.groups_total, 0u);
  EXPECT_TRUE(rep.errors.empty());
  EXPECT_FALSE(rep.metrics);
  EXPECT_TRUE(out.str().empty());
}

TEST(Batch, CorruptLineIsReported) {
  std::stringstream in, out;
  in << to_json(basic_request({kPerfect, "x"})).dump() << "\n{\"v\":1}\n" << to_json(basic_request({"a", "b"})).dump()
     << "\n";
  const auto rep = run_batch(in, out, {});
  EXPECT_EQ(rep.groups_total, 3u);
  EXPECT_EQ(rep.groups_scored, 2u);
  ASSERT_EQ(rep.errors.size(), 1u);
  EXPECT_EQ(rep.errors[0].line, 2u);
  EXPECT_EQ(rep.completions, 4u);
  EXPECT_EQ(rep.format_failures, 3u);
  EXPECT_DOUBLE_EQ(rep.format_failure_rate(), 0.75);
}

TEST(Batch, BundledFixtureMatchesGolden) {
  const json golden = json::parse(testsupport::read_file(testsupport::data_path("fixtures/bundle/golden.json")));
  const auto dir = temp_dir();
  const auto rep = run_batch(testsupport::data_path("fixtures/bundle/manifest.jsonl"), (dir / "resp.jsonl").string(), {});
  EXPECT_TRUE(rep.errors.empty());
  EXPECT_EQ(rep.groups_total, 40u);
  ASSERT_TRUE(rep.metrics);
  EXPECT_NEAR(rep.metrics->map_5095, golden["map"].get<double>(), 1e-6);
  EXPECT_NEAR(rep.metrics->ap50, golden["ap50"].get<double>(), 1e-6);
  EXPECT_NEAR(rep.metrics->ap75, golden["ap75"].get<double>(), 1e-6);
  EXPECT_NEAR(rep.metrics->ar100, golden["ar100"].get<double>(), 1e-6);
  const json report = report_to_json(rep);
  EXPECT_EQ(report["reward_histogram"]["counts"].size(), kHistogramBins);
  std::size_t counted = 0;
  for (const auto& c : report["reward_histogram"]["counts"]) counted += c.get<std::size_t>();
  EXPECT_EQ(counted, rep.completions);
  EXPECT_EQ(testsupport::read_jsonl((dir / "resp.jsonl").string()).size(), 40u);
}

TEST(Batch, MissingFilesAreFatal) {
  EXPECT_THROW(run_batch("/nonexistent/manifest.jsonl", "/tmp/x.jsonl", {}), Error);
}

TEST(Annotations, RoundTripAndValidation) {
  const auto images = load_annotations(testsupport::data_path("fixtures/bundle/annotations.jsonl"));
  ASSERT_EQ(images.size(), 20u);
  for (const auto& im : images) EXPECT_EQ(annotation_from_json(annotation_to_json(im)), im);
  std::stringstream bad(R"({"image_id":"a","width":10,"height":10,"instances":[{"label":"x","bbox":[0,0,20,5]}]})");
  try {
    read_annotations(bad, "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:1"), std::string::npos);
  }
  std::stringstream ref(R"({"image_id":"a","width":10,"height":10,"instances":[],"refs":[{"expression":"x","instances":[3]}]})");
  EXPECT_THROW(read_annotations(ref), Error);
}

TEST(Annotations, CocoConversion) {
  const json doc = json::parse(R"({
    "images":[{"id":1,"width":100,"height":50},{"id":2,"width":30,"height":30}],
    "categories":[{"id":5,"name":"cat"},{"id":6,"name":"dog"}],
    "annotations":[
      {"id":1,"image_id":1,"category_id":5,"bbox":[10,10,20,5],"iscrowd":0},
      {"id":2,"image_id":1,"category_id":6,"bbox":[90,40,20,20],"iscrowd":0},
      {"id":3,"image_id":2,"category_id":5,"bbox":[0,0,10,10],"iscrowd":1},
      {"id":4,"image_id":2,"category_id":6,"bbox":[40,40,5,5],"iscrowd":0}]})");
  ConvertReport rep;
  const auto images = convert_coco(doc, &rep);
  ASSERT_EQ(images.size(), 2u);
  EXPECT_EQ(images[0].image_id, "1");
  ASSERT_EQ(images[0].instances.size(), 2u);
  EXPECT_EQ(images[0].instances[0].box, (Box{10, 10, 30, 15}));
  EXPECT_EQ(images[0].instances[1].box, (Box{90, 40, 100, 50}));
  EXPECT_TRUE(images[1].instances.empty());
  EXPECT_EQ(rep.skipped_crowd, 1u);
  EXPECT_EQ(rep.skipped_degenerate, 1u);
  EXPECT_EQ(rep.clipped, 2u);
}

TEST(Socket, ServesOneConnection) {
  const std::string path = (temp_dir() / "svc.sock").string();
  std::atomic<bool> ready{false};
  ServiceStats stats;
  std::thread server([&] { stats = serve_unix_socket(path, {}, 1, [&] { ready = true; }); });
  while (!ready) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  const int fd = connect_unix_socket(path);
  std::string payload;
  for (int i = 0; i < 20; ++i) {
    auto r = basic_request({kPerfect, "x"});
    r.request_id = "s" + std::to_string(i);
    payload += to_json(r).dump() + "\n";
  }
  payload += "garbage\n";
  locreward::harness::detail::write_all(fd, payload);
  ::shutdown(fd, SHUT_WR);
  std::string received;
  char buf[4096];
  for (ssize_t n; (n = ::read(fd, buf, sizeof(buf))) > 0;) received.append(buf, static_cast<std::size_t>(n));
  ::close(fd);
  server.join();
  std::stringstream lines(received);
  std::string line;
  int i = 0;
  for (; std::getline(lines, line) && i < 20; ++i) EXPECT_EQ(json::parse(line)["request_id"], "s" + std::to_string(i));
  EXPECT_FALSE(json::parse(line)["ok"].get<bool>());
  EXPECT_EQ(stats.requests, 21u);
  EXPECT_EQ(stats.errors, 1u);
}
