#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lesr/grounding.hpp"
#include "lesr/kb.hpp"
#include "lesr/rotate.hpp"

namespace lesr {

// What a rule contributes to candidate t for query (h, r, ?).
//   kEvidence: C(h, t), the number of body bindings ending at t.
//   kSigned:   s(h, t), i.e. +A if confirmed by a train fact, else -C.
enum class RuleRowMode { kEvidence, kSigned };
std::string_view row_mode_name(RuleRowMode m);
RuleRowMode parse_row_mode(std::string_view name);

struct TrainerConfig {
  double lr = 1e-3;
  double weight_decay = 0.1;
  std::size_t step_size = 100;
  double gamma = 0.01;
  std::size_t patience = 30;
  std::size_t max_epochs = 300;
  std::size_t batch_size = 4;
  bool uniform_weights = false;
  RuleRowMode row_mode = RuleRowMode::kEvidence;
  std::uint64_t seed = 0;

  void validate() const;
};

// Groundings grouped by head relation; by_relation[r] lists indices into
// groundings in input order.
struct RuleBank {
  std::vector<Grounding> groundings;
  std::vector<std::vector<std::size_t>> by_relation;

  static RuleBank build(std::size_t num_relations, std::vector<Grounding> groundings);
  const Grounding& rule(RelationId r, std::size_t local) const {
    return groundings[by_relation.at(index(r)).at(local)];
  }
};

struct RelationParams {
  std::vector<std::string> rules;  // canonical forms, aligned with RuleBank::by_relation
  std::vector<double> logits;
  double emb_logit = 0.0;
  double mix_logit = 0.0;

  friend bool operator==(const RelationParams&, const RelationParams&) = default;
};

struct ReasonerParams {
  std::vector<std::string> relation_names;
  std::vector<RelationParams> relations;
  bool uniform_weights = false;
  RuleRowMode row_mode = RuleRowMode::kEvidence;
  std::size_t epoch = 0;
  std::size_t best_epoch = 0;
  // Adam state, flat over [logits..., emb_logit, mix_logit] per relation.
  std::size_t step = 0;
  std::vector<double> adam_m;
  std::vector<double> adam_v;

  static ReasonerParams initial(const KnowledgeBase& kb, const RuleBank& bank, bool uniform,
                                RuleRowMode mode);
  std::size_t flat_size() const;
  friend bool operator==(const ReasonerParams&, const ReasonerParams&) = default;
};

// Numerically stable softmax; empty in, empty out.
std::vector<double> softmax(std::span<const double> logits);
double sigmoid(double x);

// Softmax over [rule logits..., emb logit] of the whole relation: w_1..w_n, w_emb.
std::vector<double> relation_weights(const RelationParams& p, bool uniform);

struct RuleRow {
  std::size_t rule;  // position in RuleBank::by_relation[r]
  std::vector<std::uint32_t> tails;
  std::vector<double> values;
};

// Everything combined_score needs for one (h, r) query. Rules whose row is
// all zero are absent.
struct QueryFeatures {
  std::size_t num_entities = 0;
  std::vector<RuleRow> rows;
  std::vector<double> emb;  // min-max normalized to [0, 1]; empty without an embedding
};

std::vector<double> normalize_min_max(std::vector<double> v);
// With held_out (evidence mode only), rule rows leave out bindings through
// that train fact, so a training query cannot see its own answer.
QueryFeatures query_features(const KnowledgeBase& kb, const RuleBank& bank, const RotatEModel* emb,
                             EntityId head, RelationId r, RuleRowMode mode, const Triple* held_out = nullptr);

// Weights used for one query: softmax over the logits of the rules present
// in the query plus the embedding logit.
struct MixWeights {
  std::vector<double> rule;  // aligned with QueryFeatures::rows
  double emb = 0.0;
  double alpha = 0.0;
};
MixWeights mix_weights(const RelationParams& p, const QueryFeatures& f, bool uniform);

// alpha * sum_i w_i row_i(t) + (1 - alpha) * w_emb * emb(t), for every t.
std::vector<double> combined_score(const RelationParams& p, const QueryFeatures& f, bool uniform);

struct RelationGrad {
  std::vector<double> logits;
  double emb_logit = 0.0;
  double mix_logit = 0.0;
};

// -log softmax(combined_score)[gold] over all entities except `excluded`
// (gold is never excluded). Adds gradients into grad when given; in uniform
// mode the rule-logit gradients are left untouched.
double query_loss(const RelationParams& p, const QueryFeatures& f, EntityId gold,
                  std::span<const EntityId> excluded, bool uniform, RelationGrad* grad = nullptr);

// 1 + #{higher} + #{tied}/2 over candidates not in `filtered` (gold excepted).
double filtered_rank(std::span<const double> scores, EntityId gold, std::span<const EntityId> filtered);

struct Attribution {
  std::size_t grounding;  // index into RuleBank::groundings
  double weight;
  double value;
  double contribution;
};

struct Candidate {
  EntityId tail;
  double score;
  double embedding_contribution;
  std::vector<Attribution> rules;  // by contribution, largest first
};

struct RankingResult {
  EntityId head;
  RelationId relation;
  std::vector<Candidate> candidates;  // top_k by score, ties by lower id
  std::optional<double> gold_rank;
};

RankingResult rank(const ReasonerParams& params, const KnowledgeBase& kb, const RuleBank& bank,
                   const RotatEModel* emb, EntityId head, RelationId r, std::optional<EntityId> gold,
                   std::size_t top_k = 10);

// Filtered ranks of every triple of a split, in split order.
std::vector<double> split_ranks(const ReasonerParams& params, const KnowledgeBase& kb,
                                const RuleBank& bank, const RotatEModel* emb, Split split);

struct EpochRecord {
  std::size_t epoch;
  double loss;
  double lr;
  std::optional<double> valid_mrr;
};

struct TrainResult {
  ReasonerParams params;  // best by validation MRR
  std::vector<EpochRecord> trace;
  bool early_stopped = false;
};

// Trains every relation's parameters on train-split queries. With resume,
// continues from its parameters, optimizer state and epoch counter.
TrainResult train(const KnowledgeBase& kb, const RuleBank& bank, const RotatEModel* emb,
                  const TrainerConfig& cfg, const ReasonerParams* resume = nullptr);

void save_params(const std::filesystem::path& path, const ReasonerParams& params);
// Checks the stored rule lists against bank.
ReasonerParams load_params(const std::filesystem::path& path, const KnowledgeBase& kb,
                           const RuleBank& bank);

}  // namespace lesr
