#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>

#include "lesr/grounding.hpp"
#include "lesr/proposer.hpp"
#include "lesr/rotate.hpp"
#include "lesr/subgraph.hpp"
#include "lesr/trainer.hpp"

namespace lesr {

// Everything a pipeline run needs. Relative paths in a config file resolve
// against the file's directory.
struct PipelineConfig {
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  std::filesystem::path output_dir = "lesr-runs";
  std::uint64_t seed = 0;

  ExtractorConfig extract;
  ProposerBackend backend;
  std::string similarity = "trigram";
  Count count_cap = kDefaultCountCap;
  bool rotate_enabled = true;
  RotatEConfig rotate;
  TrainerConfig train;
  std::filesystem::path annotations;  // empty: no rule-quality report

  void validate() const;
};

// INI text with sections [kb] [run] [extract] [propose] [rotate] [train] [eval].
// Unknown sections or keys are errors.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

// Stage seeds derived from the global seed.
void derive_stage_seeds(PipelineConfig& cfg);

// Every effective setting, one "section.key = value" line each, sorted.
// output_dir, train.max_epochs and [eval] are left out: moving the output
// root, extending training with --resume or changing report inputs keeps the
// same run directory.
std::string canonical_config(const PipelineConfig& cfg);
// 16 hex digits of FNV-1a over canonical_config.
std::string config_hash(const PipelineConfig& cfg);
std::filesystem::path run_dir(const PipelineConfig& cfg);

// Commented example listing every key with its default.
std::string config_example();

}  // namespace lesr
