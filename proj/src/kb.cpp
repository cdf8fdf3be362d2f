#include "lesr/kb.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace lesr {

namespace {

std::uint64_t pair_key(EntityId h, RelationId r) {
  return (static_cast<std::uint64_t>(index(h)) << 32) | index(r);
}

}  // namespace

std::size_t Vocabulary::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  const std::size_t id = names_.size();
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::size_t> Vocabulary::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

KnowledgeBase KnowledgeBase::build(std::span<const RawTriple> train,
                                   std::span<const RawTriple> valid,
                                   std::span<const RawTriple> test) {
  if (train.empty()) throw Error("train split is empty");
  KnowledgeBase kb;

  auto intern_split = [&kb](std::span<const RawTriple> raw, Split split) {
    std::vector<Triple> out;
    std::set<Triple> seen;
    out.reserve(raw.size());
    for (const auto& r : raw) {
      Triple t{entity(kb.entities_.intern(r.head)), relation(kb.relations_.intern(r.relation)),
               entity(kb.entities_.intern(r.tail))};
      if (!seen.insert(t).second) {
        ++kb.duplicates_dropped_;
        log_warn("dropping duplicate " + std::string(split_name(split)) + " triple (" + r.head +
                 ", " + r.relation + ", " + r.tail + ")");
        continue;
      }
      out.push_back(t);
    }
    return out;
  };
  kb.train_ = intern_split(train, Split::kTrain);
  kb.valid_ = intern_split(valid, Split::kValid);
  kb.test_ = intern_split(test, Split::kTest);

  const std::size_t ne = kb.entities_.size();
  const std::size_t nr = kb.relations_.size();
  std::vector<std::vector<MatrixEntry>> per_relation(nr);
  kb.incident_.assign(ne, {});
  kb.by_relation_.assign(nr, {});
  for (std::size_t i = 0; i < kb.train_.size(); ++i) {
    const Triple& t = kb.train_[i];
    per_relation[index(t.relation)].push_back({index(t.head), index(t.tail), 1});
    kb.by_relation_[index(t.relation)].push_back(static_cast<std::uint32_t>(i));
    kb.incident_[index(t.head)].push_back(static_cast<std::uint32_t>(i));
    if (t.tail != t.head) kb.incident_[index(t.tail)].push_back(static_cast<std::uint32_t>(i));
  }
  kb.matrices_.reserve(nr);
  kb.transposed_.reserve(nr);
  for (auto& entries : per_relation) {
    kb.matrices_.push_back(SparseMatrix::from_entries(ne, ne, std::move(entries)));
    kb.transposed_.push_back(sparse::transpose(kb.matrices_.back()));
  }

  for (const auto* split : {&kb.train_, &kb.valid_, &kb.test_}) {
    for (const Triple& t : *split) kb.known_tails_[pair_key(t.head, t.relation)].push_back(t.tail);
  }
  for (auto& [key, tails] : kb.known_tails_) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
  }

  Fnv1a hash;
  hash.update_u64(ne).update_u64(nr);
  for (const auto& n : kb.entities_.names()) hash.update(n).update_u64(n.size());
  for (const auto& n : kb.relations_.names()) hash.update(n).update_u64(n.size());
  for (const Triple& t : kb.train_) {
    hash.update_u64(index(t.head)).update_u64(index(t.relation)).update_u64(index(t.tail));
  }
  kb.fingerprint_ = hash.hex();
  return kb;
}

std::optional<EntityId> KnowledgeBase::find_entity(std::string_view name) const {
  if (auto id = entities_.find(name)) return entity(*id);
  return std::nullopt;
}

std::optional<RelationId> KnowledgeBase::find_relation(std::string_view name) const {
  if (auto id = relations_.find(name)) return relation(*id);
  return std::nullopt;
}

std::span<const Triple> KnowledgeBase::triples(Split split) const {
  switch (split) {
    case Split::kTrain: return train_;
    case Split::kValid: return valid_;
    case Split::kTest: return test_;
  }
  return {};
}

bool KnowledgeBase::is_train_fact(const Triple& t) const {
  return matrix(t.relation).at(index(t.head), index(t.tail)) != 0;
}

std::span<const EntityId> KnowledgeBase::known_tails(EntityId h, RelationId r) const {
  auto it = known_tails_.find(pair_key(h, r));
  if (it == known_tails_.end()) return {};
  return it->second;
}

std::vector<RawTriple> read_triples(std::istream& in, const std::string& source) {
  std::vector<RawTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto first = line.find('\t');
    const auto second = first == std::string::npos ? first : line.find('\t', first + 1);
    if (second == std::string::npos || line.find('\t', second + 1) != std::string::npos) {
      throw KbFormatError(source, line_no, "expected head<TAB>relation<TAB>tail");
    }
    RawTriple t{line.substr(0, first), line.substr(first + 1, second - first - 1),
                line.substr(second + 1)};
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      throw KbFormatError(source, line_no, "empty field");
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RawTriple> read_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file " + path.string());
  return read_triples(in, path.string());
}

KnowledgeBase load_kb(const std::filesystem::path& train, const std::filesystem::path& valid,
                      const std::filesystem::path& test) {
  auto tr = read_triples(train);
  if (tr.empty()) throw Error("train split is empty: " + train.string());
  auto va = read_triples(valid);
  auto te = read_triples(test);
  return KnowledgeBase::build(tr, va, te);
}

}  // namespace lesr
