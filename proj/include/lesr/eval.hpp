#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesr/kb.hpp"
#include "lesr/proposer.hpp"
#include "lesr/rotate.hpp"
#include "lesr/rules.hpp"
#include "lesr/trainer.hpp"

namespace lesr {

inline constexpr int kHitsAt[] = {1, 3, 10};

struct MetricsReport {
  // Absent for the hits-only inference baseline.
  std::optional<double> mr;
  std::optional<double> mrr;
  std::map<int, double> hits;
  std::size_t query_count = 0;
  // Baseline queries whose backend call failed (counted as misses).
  std::size_t failed_queries = 0;
};

// Ranks must be >= 1; throws on an empty list.
MetricsReport compute_metrics(std::span<const double> ranks);

struct RuleQualityReport {
  std::size_t learned_count = 0;
  std::size_t high_conf_count = 0;
  double hcr = 0.0;  // percent
  double rcs = 0.0;  // in [0, 1]
  double rqi = 0.0;  // percent
};

// high / learned * 100.
double hcr_percent(std::size_t high_conf, std::size_t learned);
// Harmonic mean of HCR (as a fraction) and RCS, in percent; 0 when both are 0.
double rqi_percent(double hcr, double rcs);

// Canonical rule form -> path interpretability scores, each in {0, 0.5, 1}.
using RuleAnnotations = std::map<std::string, std::vector<double>>;
// Reads JSON lines {"rule": "IF ... THEN ...", "scores": [..]}; rule texts are
// classified and keyed by canonical form, so variable names do not matter.
RuleAnnotations read_annotations(std::istream& in);
RuleAnnotations load_annotations(const std::filesystem::path& path);

// A rule is high-confidence iff it has at least one annotated path.
RuleQualityReport compute_rule_quality(std::span<const Rule> rules, const RuleAnnotations& annotations);

MetricsReport evaluate_model(const ReasonerParams& params, const KnowledgeBase& kb, const RuleBank& bank,
                             const RotatEModel* emb, Split split);

// Lowercase, trimmed, internal whitespace collapsed.
std::string normalize_entity_name(std::string_view name);
// Hits@K by name membership of the gold tail among the first K candidates.
MetricsReport score_candidate_lists(const KnowledgeBase& kb, std::span<const Triple> queries,
                                    const std::vector<std::optional<std::vector<std::string>>>& candidates);
MetricsReport evaluate_inference_baseline(const KnowledgeBase& kb, const ProposerBackend& backend, Split split,
                                          const ExtractorConfig& cfg);

// Aligned plain-text table; one row per labelled report.
std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string render_rule_quality(const RuleQualityReport& q);
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string report_json(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                        const std::optional<RuleQualityReport>& quality);

}  // namespace lesr
