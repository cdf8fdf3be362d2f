#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "lesr/pipeline.hpp"

namespace {

lesr::Split parse_split(const std::string& s) {
  if (s == "valid") return lesr::Split::kValid;
  if (s == "test") return lesr::Split::kTest;
  throw lesr::Error("--split must be valid or test, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LeSR: rule proposing, grounding and weight learning for knowledge base completion"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool verbose = false;
  app.add_option("--config", config_path, "pipeline config file (INI)");
  app.add_option("--seed", seed, "override [run] seed");
  app.add_option("--output-dir", output_dir, "override [run] output_dir");
  app.add_flag("-v,--verbose", verbose, "print progress messages");

  auto* extract = app.add_subcommand("extract", "sample targets and extract subgraphs per relation");
  auto* propose = app.add_subcommand("propose", "propose, filter, map, classify and deduplicate rules");

  auto* train = app.add_subcommand("train", "ground rules and learn rule weights");
  bool uniform = false, resume = false;
  train->add_flag("--uniform-weights", uniform, "ablation: fix every rule weight to be equal");
  train->add_flag("--resume", resume, "continue from this run's checkpoint");

  auto* eval = app.add_subcommand("eval", "evaluate trained checkpoints");
  std::string split = "test";
  lesr::EvalOptions eval_opts;
  eval->add_option("--split", split, "valid or test")->capture_default_str();
  eval->add_flag("--rules-report", eval_opts.rules_report, "add HCR/RCS/RQI from [eval] annotations");
  eval->add_flag("--emit-csv", eval_opts.emit_csv, "also write a CSV report");
  eval->add_flag("--inference-baseline", eval_opts.inference_baseline,
                 "also score direct LLM inference (remote backend)");

  auto* explain = app.add_subcommand("explain", "rank tails for a query and show rule attributions");
  std::string query;
  std::size_t top_k = 10;
  explain->add_option("query", query, "\"<head entity> <relation>\"")->required();
  explain->add_option("--top-k", top_k, "candidates to show")->capture_default_str();

  auto* rotate = app.add_subcommand("rotate-train", "pretrain RotatE embeddings");
  auto* example = app.add_subcommand("config-example", "print a commented config with every default");

  CLI11_PARSE(app, argc, argv);

  try {
    lesr::set_log_level(verbose ? lesr::LogLevel::kInfo : lesr::LogLevel::kWarn);
    if (example->parsed()) {
      std::cout << lesr::config_example();
      return 0;
    }
    if (config_path.empty()) throw lesr::Error("--config is required");
    auto cfg = lesr::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      lesr::derive_stage_seeds(cfg);
    }
    if (!output_dir.empty()) cfg.output_dir = output_dir;

    if (extract->parsed()) lesr::cmd_extract(cfg, std::cout);
    if (propose->parsed()) lesr::cmd_propose(cfg, std::cout);
    if (rotate->parsed()) lesr::cmd_rotate_train(cfg, std::cout);
    if (train->parsed()) lesr::cmd_train(cfg, uniform, resume, std::cout);
    if (eval->parsed()) {
      eval_opts.split = parse_split(split);
      lesr::cmd_eval(cfg, eval_opts, std::cout);
    }
    if (explain->parsed()) lesr::cmd_explain(cfg, query, top_k, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "lesr: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
