#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lesr/kb.hpp"
#include "lesr/rules.hpp"
#include "lesr/sparse.hpp"

namespace lesr {

// body(h, t): number of bindings that satisfy the rule body from h to t.
// confirmed(h, t): the same bindings restricted to train facts of the head
// relation, i.e. body ∘ M_head.
struct Grounding {
  Rule rule;
  SparseMatrix body;
  SparseMatrix confirmed;
};

struct RowEntry {
  EntityId tail;
  Count value;

  friend bool operator==(const RowEntry&, const RowEntry&) = default;
};
using ScoreRow = std::vector<RowEntry>;

// Matrix chain for a classified rule, one factor per body atom in path order.
std::vector<const SparseMatrix*> grounding_chain(const KnowledgeBase& kb, const Rule& rule);

Grounding ground(const KnowledgeBase& kb, const Rule& rule, Count cap = kDefaultCountCap);

// Grounds every rule, in parallel across rules. Output order matches input.
std::vector<Grounding> ground_all(const KnowledgeBase& kb, std::span<const Rule> rules,
                                  Count cap = kDefaultCountCap);

namespace reference {
std::vector<Grounding> ground_all(const KnowledgeBase& kb, std::span<const Rule> rules,
                                  Count cap = kDefaultCountCap);
}

// +confirmed if positive, else -body if positive, else 0.
Count score(const Grounding& g, EntityId head, EntityId tail);
// score() for every tail with a body match, sorted by tail.
ScoreRow score_row(const Grounding& g, EntityId head);
// Body counts for every tail: the rule's support for each candidate answer
// when the candidate fact itself is the hypothesis under test.
ScoreRow evidence_row(const Grounding& g, EntityId head);
// evidence_row with every binding that uses the train fact `held_out` removed.
// Equal to evidence_row unless the body mentions held_out's relation.
ScoreRow evidence_row_without(const KnowledgeBase& kb, const Grounding& g, EntityId head, const Triple& held_out);

// Directory of groundings keyed by (KB fingerprint, canonical rule, cap).
// Writes go through a temporary file and rename, so concurrent writers of
// the same key are safe.
class GroundingCache {
 public:
  explicit GroundingCache(std::filesystem::path dir);

  std::optional<Grounding> load(const KnowledgeBase& kb, const Rule& rule, Count cap) const;
  void store(const KnowledgeBase& kb, const Grounding& g, Count cap) const;
  std::filesystem::path entry_path(const KnowledgeBase& kb, const Rule& rule, Count cap) const;

 private:
  std::filesystem::path dir_;
};

// Loads what the cache has and grounds (and stores) the rest.
std::vector<Grounding> ground_cached(const KnowledgeBase& kb, std::span<const Rule> rules,
                                     const GroundingCache* cache, Count cap = kDefaultCountCap);

}  // namespace lesr
