// Command-line front end: batch scoring, the streaming service, metrics,
// curation, prompt rendering and annotation conversion.

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "locreward/curation.hpp"
#include "locreward/harness/annotations_io.hpp"
#include "locreward/harness/batch.hpp"
#include "locreward/harness/config.hpp"
#include "locreward/harness/curation_io.hpp"
#include "locreward/harness/service.hpp"
#include "locreward/harness/socket_server.hpp"
#include "locreward/metrics.hpp"

namespace {

using locreward::Error;
using locreward::ErrorCode;
using nlohmann::json;
namespace lh = locreward::harness;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;

void init_logging() {
  auto logger = spdlog::stderr_logger_mt("locreward");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("VISION_R1_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honor it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
    else spdlog::warn("ignoring unknown VISION_R1_LOG level '{}'", env);
  }
}

struct GlobalFlags {
  std::string config_path;
  std::string format;
  std::string matcher;
  std::optional<double> step_fraction;
  std::optional<double> beta;
  std::string kl;
  std::uint64_t seed = 0;
};

lh::EngineConfig resolve_config(const GlobalFlags& flags) {
  lh::EngineConfig cfg;
  if (!flags.config_path.empty()) cfg = lh::load_config_file(flags.config_path);
  if (!flags.format.empty()) cfg.format.kind = lh::parse_format(flags.format);
  if (!flags.matcher.empty()) cfg.matcher = lh::parse_matcher(flags.matcher);
  if (flags.step_fraction) cfg.phase.step_fraction = *flags.step_fraction;
  if (flags.beta) cfg.beta = *flags.beta;
  if (!flags.kl.empty()) cfg.kl = lh::parse_kl_mode(flags.kl);
  cfg.validate();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << text;
}

int cmd_score(const lh::EngineConfig& cfg, const std::string& manifest, const std::string& out,
              std::string report_path) {
  if (report_path.empty()) report_path = out + ".report.json";
  const auto report = lh::run_batch(manifest, out, cfg);
  const json j = lh::report_to_json(report);
  write_text(report_path, j.dump(2) + "\n");
  spdlog::info("scored {} of {} groups", report.groups_scored, report.groups_total);
  for (const auto& e : report.errors) spdlog::warn("manifest line {}: {}", e.line, e.message);
  std::cout << "groups " << report.groups_scored << "/" << report.groups_total << ", errors " << report.errors.size()
            << ", mean reward " << report.mean_total;
  if (report.metrics) std::cout << ", mAP " << report.metrics->map_5095;
  std::cout << "\n";
  return kExitOk;
}

int cmd_serve(const lh::EngineConfig& cfg, const std::string& socket_path, std::optional<std::size_t> max_conn) {
  std::ios::sync_with_stdio(false);
  lh::ServiceStats stats;
  if (socket_path.empty()) {
    stats = lh::run_service(std::cin, std::cout, cfg);
  } else {
    stats = lh::serve_unix_socket(socket_path, cfg, max_conn,
                                  [&] { spdlog::info("listening on {}", socket_path); });
  }
  spdlog::info("served {} requests ({} errors)", stats.requests, stats.errors);
  return kExitOk;
}

std::vector<std::vector<locreward::LabeledBox>> load_predictions(const std::string& path,
                                                                 const std::vector<locreward::AnnotatedImage>& images,
                                                                 const lh::EngineConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open predictions " + path);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < images.size(); ++i) index[images[i].image_id] = i;
  std::vector<std::vector<locreward::LabeledBox>> preds(images.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    const json j = json::parse(line, nullptr, false);
    if (!j.is_object() || !j.contains("image_id")) throw Error(ErrorCode::invalid_config, where + "bad record");
    const std::string id = lh::detail::get_id(j["image_id"], "image_id");
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::invalid_config, where + "unknown image " + id);
    const auto& im = images[it->second];
    auto& bucket = preds[it->second];
    if (j.contains("objects")) {
      auto objs = lh::objects_from_json(j["objects"]);
      bucket.insert(bucket.end(), objs.begin(), objs.end());
    } else if (j.contains("completion")) {
      const locreward::CoordinateSpace cspace{cfg.completion_space_kind(), im.width, im.height};
      auto objs = locreward::extract_objects(locreward::parse_completion(
          lh::detail::get_string(j["completion"], "completion", ErrorCode::invalid_config), cfg.format, cspace));
      for (auto& o : objs) bucket.push_back({o.label, locreward::to_space(o.box, cspace, im.space())});
    } else {
      throw Error(ErrorCode::invalid_config, where + "record needs objects or completion");
    }
  }
  return preds;
}

int cmd_eval(const lh::EngineConfig& cfg, const std::string& annotations, const std::string& predictions,
             const std::string& out) {
  const auto images = lh::load_annotations(annotations);
  const auto preds = load_predictions(predictions, images, cfg);
  locreward::EvalDataset ds;
  for (const auto& im : images) ds.images.push_back({im.image_id, im.ground_truth()});
  ds.categories = lh::category_list(images);
  const auto result = locreward::evaluate(preds, ds);
  for (const auto& d : result.diagnostics) spdlog::warn("{}", d);
  write_text(out, lh::eval_result_to_json(result).dump(2) + "\n");
  return kExitOk;
}

struct CurateFlags {
  std::string annotations;
  std::size_t det = 0, grounding = 0, rec = 0;
  double hard_fraction = 0.5;
  double negative_fraction = 0.1;
  std::size_t instance_threshold = 10;
  std::size_t category_threshold = 5;
  std::string style = "griffon-g";
  std::string out;
};

int cmd_curate(const GlobalFlags& g, const CurateFlags& f) {
  const auto images = lh::load_annotations(f.annotations);
  const auto corpus = locreward::build_corpus(images);
  locreward::MixtureSpec spec;
  spec.counts = {f.det, f.grounding, f.rec};
  spec.hard_fraction = f.hard_fraction;
  spec.negative_fraction = f.negative_fraction;
  spec.difficulty = {f.instance_threshold, f.category_threshold};
  spec.seed = g.seed;
  const auto style = locreward::parse_prompt_style(f.style);
  const auto result = locreward::sample_mixture(corpus, spec);
  for (const auto& s : result.shortages) spdlog::warn("shortage: {}", s);

  const json manifest = lh::mixture_to_json(result, spec, style);
  write_text(f.out, manifest.dump(2) + "\n");
  return kExitOk;
}

int cmd_prompts(const std::string& annotations, const std::string& style_name, const std::string& task,
                const std::string& out) {
  const auto images = lh::load_annotations(annotations);
  const auto style = locreward::parse_prompt_style(style_name);
  std::optional<locreward::Task> only;
  if (!task.empty()) only = locreward::parse_task(task);
  std::string text;
  for (const auto& s : locreward::build_corpus(images)) {
    if (only && s.task != *only) continue;
    text += json{{"sample_id", s.sample_id}, {"task", locreward::to_string(s.task)},
                 {"prompt", locreward::render_prompt(s, style)}}
                .dump() +
            "\n";
  }
  write_text(out, text);
  return kExitOk;
}

int cmd_convert_coco(const std::string& input, const std::string& out) {
  std::ifstream in(input);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + input);
  std::stringstream buf;
  buf << in.rdbuf();
  const json doc = json::parse(buf.str(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::invalid_config, input + " is not valid JSON");
  lh::ConvertReport rep;
  const auto images = lh::convert_coco(doc, &rep);
  std::string text;
  for (const auto& im : images) text += lh::annotation_to_json(im).dump() + "\n";
  write_text(out, text);
  spdlog::info("converted {} images, {} instances ({} crowd, {} degenerate skipped, {} clipped)", rep.images,
               rep.instances, rep.skipped_crowd, rep.skipped_degenerate, rep.clipped);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Localization reward engine: completion scoring, group advantages and detection metrics"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON engine configuration file")->check(CLI::ExistingFile);
  app.add_option("--format", g.format, "completion grammar")->check(CLI::IsMember({"structured", "plain"}));
  app.add_option("--matcher", g.matcher, "assignment cost")->check(CLI::IsMember({"box", "box-label"}));
  app.add_option("--step-fraction", g.step_fraction, "training fraction where the advanced phase starts");
  app.add_option("--beta", g.beta, "KL penalty weight");
  app.add_option("--kl", g.kl, "KL estimator")->check(CLI::IsMember({"k3", "seq"}));
  app.add_option("--seed", g.seed, "random seed for curation");

  std::string manifest, out, report;
  auto* score = app.add_subcommand("score", "score a manifest of completion groups");
  score->add_option("--manifest", manifest, "request-per-line manifest")->required();
  score->add_option("--out", out, "responses output (JSON lines)")->required();
  score->add_option("--report", report, "aggregate report path (default <out>.report.json)");

  std::string socket_path;
  std::optional<std::size_t> max_conn;
  auto* serve = app.add_subcommand("serve", "answer newline-delimited requests on stdin or a local socket");
  serve->add_option("--socket", socket_path, "listen on this AF_UNIX path instead of stdin/stdout");
  serve->add_option("--max-connections", max_conn, "exit after serving this many socket connections");

  std::string annotations, predictions, eval_out;
  auto* eval = app.add_subcommand("eval", "detection metrics for final predictions");
  eval->add_option("--annotations", annotations, "annotation file")->required()->check(CLI::ExistingFile);
  eval->add_option("--predictions", predictions, "prediction records (JSON lines)")->required();
  eval->add_option("--out", eval_out, "result path (default stdout)");

  CurateFlags cf;
  auto* curate = app.add_subcommand("curate", "seeded stratified sampling of training queries");
  curate->add_option("--annotations", cf.annotations, "annotation file")->required()->check(CLI::ExistingFile);
  curate->add_option("--det", cf.det, "object detection samples");
  curate->add_option("--grounding", cf.grounding, "visual grounding samples");
  curate->add_option("--rec", cf.rec, "referring expression samples");
  curate->add_option("--hard-fraction", cf.hard_fraction, "share of hard samples per task")->check(CLI::Range(0.0, 1.0));
  curate->add_option("--negative-fraction", cf.negative_fraction, "share of negative grounding/REC samples")
      ->check(CLI::Range(0.0, 1.0));
  curate->add_option("--instance-threshold", cf.instance_threshold, "instances above this make a sample hard");
  curate->add_option("--category-threshold", cf.category_threshold, "categories above this make a sample hard");
  curate->add_option("--style", cf.style, "prompt style (griffon-g or structured-coordinates)");
  curate->add_option("--out", cf.out, "manifest path (default stdout)");

  std::string prompt_style = "griffon-g", prompt_task, prompt_out;
  auto* prompts = app.add_subcommand("prompts", "render instruction prompts for every candidate sample");
  prompts->add_option("--annotations", annotations, "annotation file")->required()->check(CLI::ExistingFile);
  prompts->add_option("--style", prompt_style, "prompt style (griffon-g or structured-coordinates)");
  prompts->add_option("--task", prompt_task, "only this task");
  prompts->add_option("--out", prompt_out, "output path (default stdout)");

  std::string convert_in, convert_out;
  auto* convert = app.add_subcommand("convert", "import annotations from other layouts");
  convert->require_subcommand(1);
  auto* coco = convert->add_subcommand("coco", "COCO instances JSON to annotation lines");
  coco->add_option("--input", convert_in, "COCO instances file")->required()->check(CLI::ExistingFile);
  coco->add_option("--out", convert_out, "annotation output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    const lh::EngineConfig cfg = resolve_config(g);
    if (*score) return cmd_score(cfg, manifest, out, report);
    if (*serve) return cmd_serve(cfg, socket_path, max_conn);
    if (*eval) return cmd_eval(cfg, annotations, predictions, eval_out);
    if (*curate) return cmd_curate(g, cf);
    if (*prompts) return cmd_prompts(annotations, prompt_style, prompt_task, prompt_out);
    if (*coco) return cmd_convert_coco(convert_in, convert_out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    std::cerr << e.what() << "\n";
    return e.code() == ErrorCode::io_error ? kExitIo : kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
