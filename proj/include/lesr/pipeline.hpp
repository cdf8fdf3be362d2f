#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lesr/config.hpp"
#include "lesr/eval.hpp"

namespace lesr {

// File names inside a run directory.
namespace artifacts {
inline constexpr const char* kConfig = "config.ini";
inline constexpr const char* kSubgraphDir = "subgraphs";
inline constexpr const char* kExtractSummary = "extract_summary.tsv";
inline constexpr const char* kProposals = "proposals.jsonl";
inline constexpr const char* kRules = "rules.jsonl";
inline constexpr const char* kProposeStats = "propose_stats.tsv";
inline constexpr const char* kGroundingCache = "grounding_cache";
inline constexpr const char* kRotate = "rotate.bin";
inline constexpr const char* kRotateTrace = "rotate_trace.tsv";
std::string params_file(bool uniform);
std::string train_trace_file(bool uniform);
std::string report_file(Split split, std::string_view extension);
}  // namespace artifacts

struct ExtractRow {
  std::string relation;
  std::size_t targets = 0;
  std::size_t subgraphs = 0;
  double mean_size = 0.0;
};

// One subgraph dump per relation plus a summary table. Subgraphs with no
// context triples are not written.
std::vector<ExtractRow> cmd_extract(const PipelineConfig& cfg, std::ostream& log);

// Per relation: every count is conserved across stages, e.g.
// lines = parse_rejected + parsed and parsed = stage1_rejected + stage1_accepted.
struct ProposeStats {
  std::string relation;
  std::size_t subgraphs = 0;
  std::size_t backend_errors = 0;
  std::size_t lines = 0;
  std::size_t parse_rejected = 0;
  std::size_t parsed = 0;
  std::size_t stage1_rejected = 0;
  std::size_t stage1_accepted = 0;
  std::size_t unclassified = 0;
  std::size_t classified = 0;
  std::size_t duplicates = 0;
  std::size_t learnable = 0;
};

// Proposes, filters, maps, classifies and deduplicates rules; needs extract.
std::vector<ProposeStats> cmd_propose(const PipelineConfig& cfg, std::ostream& log);

struct RotateSummary {
  std::size_t epochs = 0;
  double final_loss = 0.0;
};
RotateSummary cmd_rotate_train(const PipelineConfig& cfg, std::ostream& log);

struct TrainSummary {
  std::size_t rules = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::optional<double> best_valid_mrr;
};

// Grounds the rule file (through the cache), pretrains RotatE when enabled
// and missing, then learns the reasoner parameters; needs propose.
TrainSummary cmd_train(const PipelineConfig& cfg, bool uniform_weights, bool resume, std::ostream& log);

struct EvalOptions {
  Split split = Split::kTest;
  bool rules_report = false;
  bool emit_csv = false;
  bool inference_baseline = false;
};
struct EvalSummary {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::optional<RuleQualityReport> quality;
  std::string table;
};
// Evaluates every trained checkpoint of the run; needs train.
EvalSummary cmd_eval(const PipelineConfig& cfg, const EvalOptions& opts, std::ostream& log);

struct ExplainedRule {
  std::string rule;
  double weight = 0.0;
  double value = 0.0;
  double contribution = 0.0;
  std::vector<std::string> paths;  // instantiated bodies, at most three
};
struct ExplainedCandidate {
  std::string tail;
  double score = 0.0;
  double embedding_contribution = 0.0;
  std::vector<ExplainedRule> rules;
};
struct Explanation {
  std::string head;
  std::string relation;
  std::vector<ExplainedCandidate> candidates;
  std::string text;
};
// Query "head relation"; names may contain spaces. Unknown names throw an
// error listing the closest vocabulary entries. Needs train.
Explanation cmd_explain(const PipelineConfig& cfg, const std::string& query, std::size_t top_k, std::ostream& log);

// Bindings of the rule body that connect head to tail, rendered as
// "(h, r1, x) AND (x, r2, t)". At most `limit`.
std::vector<std::string> instantiate_paths(const KnowledgeBase& kb, const Rule& rule, EntityId head, EntityId tail,
                                           std::size_t limit);

}  // namespace lesr
