#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lesr/kb.hpp"

namespace lesr {

// Traversal structures for conjunctive chain rules. The name "o-k" gives
// the order (number of intermediate nodes) and the variant within it.
enum class RuleCase : std::uint8_t {
  k0_1, k0_2,
  k1_1, k1_2, k1_3, k1_4,
  k2_1, k2_2, k2_3, k2_4, k2_5, k2_6, k2_7, k2_8,
  kUnclassified,
};

inline constexpr std::size_t kNumRuleCases = 14;
std::string_view case_name(RuleCase c);
std::optional<RuleCase> parse_case_name(std::string_view name);
// For each body step along the path from the head subject to the head
// object, whether the atom is traversed against its direction (a transpose).
std::vector<bool> case_directions(RuleCase c);
RuleCase case_from_directions(const std::vector<bool>& reversed);

struct RuleAtom {
  std::string subject;
  // Raw proposer text until mapped, then the KB relation name.
  std::string relation;
  std::string object;
  std::optional<RelationId> relation_id;
  std::string raw_relation;
  double similarity = 0.0;

  friend bool operator==(const RuleAtom&, const RuleAtom&) = default;
};

struct Rule {
  std::vector<RuleAtom> body;
  RuleAtom head;
  RuleCase rule_case = RuleCase::kUnclassified;
  std::string target_relation;
  std::string raw_text;
  std::vector<std::string> provenance;

  bool mapped() const;
  bool classified() const { return rule_case != RuleCase::kUnclassified; }
  friend bool operator==(const Rule&, const Rule&) = default;
};

inline constexpr std::size_t kMaxBodyAtoms = 3;

struct ParseResult {
  std::optional<Rule> rule;
  std::string error;

  explicit operator bool() const noexcept { return rule.has_value(); }
};

// Accepts `IF (V, rel, V) [AND (V, rel, V)]* THEN (V, rel, V)`, with the
// keyword case ignored, a leading list marker stripped, and an optional
// comma before THEN. OR and NOT are rejected.
ParseResult parse_rule(std::string_view text);
std::string format_rule(const Rule& rule);

bool is_variable(std::string_view token);
// Lowercase, '_' to space, trimmed, internal whitespace collapsed.
std::string normalize_relation_text(std::string_view text);

struct StageVerdict {
  bool accepted = false;
  std::string reason;
};

StageVerdict filter_stage1(const Rule& rule, std::string_view target_relation);

class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  virtual std::string_view name() const = 0;
  // In [0, 1]; symmetric; score(x, x) == 1.
  virtual double score(std::string_view a, std::string_view b) const = 0;
};

// Cosine similarity of character-trigram count vectors.
class TrigramSimilarity final : public SimilarityProvider {
 public:
  std::string_view name() const override { return "trigram"; }
  double score(std::string_view a, std::string_view b) const override;
};

std::unique_ptr<SimilarityProvider> make_similarity(std::string_view name);

// Replaces every relation by the KB relation with the highest similarity,
// lower id winning ties.
Rule map_relations(const Rule& rule, const KnowledgeBase& kb, const SimilarityProvider& sim);

// Orders the body along the path from head subject to head object, renames
// variables to the case template letters and sets rule_case. Rules that are
// not a simple chain of 1-3 atoms come back unchanged and unclassified.
Rule classify_case(const Rule& rule);

// Variable-renaming invariant text form.
std::string canonical_form(const Rule& rule);
std::vector<Rule> dedup(const std::vector<Rule>& rules);

// Rule file: one JSON object per line with keys case, mapped_relations,
// provenance, raw_text, similarity_scores, target_relation, text.
void write_rule_file(std::ostream& out, const std::vector<Rule>& rules);
std::vector<Rule> read_rule_file(std::istream& in, const KnowledgeBase& kb);
void save_rules(const std::filesystem::path& path, const std::vector<Rule>& rules);
std::vector<Rule> load_rules(const std::filesystem::path& path, const KnowledgeBase& kb);

}  // namespace lesr
