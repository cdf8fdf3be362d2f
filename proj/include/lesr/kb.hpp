#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lesr/common.hpp"
#include "lesr/sparse.hpp"

namespace lesr {

// Bidirectional name <-> dense id map. Ids follow first appearance.
class Vocabulary {
 public:
  std::size_t intern(std::string_view name);
  std::optional<std::size_t> find(std::string_view name) const;
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  std::span<const std::string> names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> ids_;
};

enum class Split { kTrain, kValid, kTest };
std::string_view split_name(Split split);

class KbFormatError : public Error {
 public:
  KbFormatError(std::string source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}
  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

struct RawTriple {
  std::string head;
  std::string relation;
  std::string tail;
};

// Immutable after construction; safe to share across threads.
class KnowledgeBase {
 public:
  // Vocabularies cover every split; matrices come from train only.
  static KnowledgeBase build(std::span<const RawTriple> train, std::span<const RawTriple> valid,
                             std::span<const RawTriple> test);

  const Vocabulary& entities() const noexcept { return entities_; }
  const Vocabulary& relations() const noexcept { return relations_; }
  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }
  const std::string& name(EntityId e) const { return entities_.name(index(e)); }
  const std::string& name(RelationId r) const { return relations_.name(index(r)); }
  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  std::span<const Triple> triples(Split split) const;
  std::span<const Triple> train() const noexcept { return train_; }

  // M_r: 1 at (h, t) iff (h, r, t) is a train fact.
  const SparseMatrix& matrix(RelationId r) const { return matrices_.at(index(r)); }
  const SparseMatrix& transposed(RelationId r) const { return transposed_.at(index(r)); }
  bool is_train_fact(const Triple& t) const;

  // Indices into train() of triples touching an entity, in train order.
  std::span<const std::uint32_t> incident(EntityId e) const { return incident_.at(index(e)); }
  // Indices into train() of triples with the given relation, in train order.
  std::span<const std::uint32_t> with_relation(RelationId r) const {
    return by_relation_.at(index(r));
  }

  // All tails t with (h, r, t) in any split, sorted.
  std::span<const EntityId> known_tails(EntityId h, RelationId r) const;

  // Content hash of vocabularies and train triples.
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  std::size_t duplicates_dropped() const noexcept { return duplicates_dropped_; }

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> train_;
  std::vector<Triple> valid_;
  std::vector<Triple> test_;
  std::vector<SparseMatrix> matrices_;
  std::vector<SparseMatrix> transposed_;
  std::vector<std::vector<std::uint32_t>> incident_;
  std::vector<std::vector<std::uint32_t>> by_relation_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> known_tails_;
  std::string fingerprint_;
  std::size_t duplicates_dropped_ = 0;
};

// Reads head<TAB>relation<TAB>tail lines. Blank lines are skipped; any other
// line without exactly three non-empty fields is an error naming the line.
std::vector<RawTriple> read_triples(std::istream& in, const std::string& source);
std::vector<RawTriple> read_triples(const std::filesystem::path& path);

KnowledgeBase load_kb(const std::filesystem::path& train, const std::filesystem::path& valid,
                      const std::filesystem::path& test);

}  // namespace lesr
