#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "lesr/kb.hpp"

namespace lesr {

struct RotatEConfig {
  std::size_t dim = 64;
  std::size_t negatives = 64;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double gamma = 6.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Entities are complex vectors stored as [re_0..re_{d-1}, im_0..im_{d-1}];
// relations are phase vectors, so every rotation has unit modulus.
class RotatEModel {
 public:
  RotatEModel() = default;
  RotatEModel(std::size_t entities, std::size_t relations, std::size_t dim, double gamma);

  // Entities uniform in +-(gamma + 2) / dim, phases uniform in (-pi, pi].
  static RotatEModel initialize(std::size_t entities, std::size_t relations, std::size_t dim,
                                double gamma, std::uint64_t seed);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_entities() const noexcept { return num_entities_; }
  std::size_t num_relations() const noexcept { return num_relations_; }
  double gamma() const noexcept { return gamma_; }

  std::span<double> entity(std::size_t e);
  std::span<const double> entity(std::size_t e) const;
  std::span<double> phase(std::size_t r);
  std::span<const double> phase(std::size_t r) const;
  std::vector<double>& entity_table() noexcept { return entities_; }
  std::vector<double>& phase_table() noexcept { return phases_; }
  const std::vector<double>& entity_table() const noexcept { return entities_; }
  const std::vector<double>& phase_table() const noexcept { return phases_; }

  // gamma - sum_k |h_k * exp(i theta_k) - t_k|
  double score(EntityId h, RelationId r, EntityId t) const;
  // score(h, r, t) for every entity t.
  std::vector<double> score_tails(EntityId h, RelationId r) const;

  void save(const std::filesystem::path& path) const;
  static RotatEModel load(const std::filesystem::path& path);

  friend bool operator==(const RotatEModel&, const RotatEModel&) = default;

 private:
  void check(EntityId h, RelationId r, EntityId t) const;

  std::size_t dim_ = 0;
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  double gamma_ = 0.0;
  std::vector<double> entities_;
  std::vector<double> phases_;
};

// Row-sparse gradient: entity rows have 2*dim values, relation rows dim.
struct RotatEGrad {
  std::map<std::size_t, std::vector<double>> entity;
  std::map<std::size_t, std::vector<double>> relation;
};

// -log sigmoid(score(pos)) - mean_k log sigmoid(-score(h, r, neg_k)).
// Accumulates d loss / d params into grad (scaled by weight) when given.
double rotate_loss(const RotatEModel& model, const Triple& pos, std::span<const EntityId> neg_tails,
                   RotatEGrad* grad = nullptr, double weight = 1.0);

struct RotatETrainResult {
  RotatEModel model;
  // Mean loss per epoch.
  std::vector<double> loss_trace;
};

// Uniform tail corruption, lazy Adam over touched rows. Deterministic in seed.
RotatETrainResult rotate_train(const KnowledgeBase& kb, const RotatEConfig& cfg);

}  // namespace lesr
