#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "lesr/kb.hpp"

namespace lesr {

struct ExtractorConfig {
  std::size_t max_hops = 3;
  std::size_t max_neighbors_per_entity = 3;
  std::size_t max_subgraphs_per_relation = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

// Triples reached by breadth-first expansion around a target triple.
// triples and hops are parallel; hops are 1-based and nondecreasing.
struct Subgraph {
  Triple target;
  std::vector<Triple> triples;
  std::vector<std::size_t> hops;

  std::size_t size() const noexcept { return triples.size(); }
  bool empty() const noexcept { return triples.empty(); }
  friend bool operator==(const Subgraph&, const Subgraph&) = default;
};

// Up to m distinct train triples of the relation, seeded. Returned in the
// sampled order.
std::vector<Triple> sample_targets(const KnowledgeBase& kb, RelationId r, std::size_t m,
                                   std::uint64_t seed);

// Expands from {head, tail} of the target. Each pivot contributes at most
// max_neighbors_per_entity incident triples per hop; final-hop triples that
// touch neither target.head nor target.tail are dropped.
Subgraph extract_subgraph(const KnowledgeBase& kb, const Triple& target,
                          const ExtractorConfig& cfg);

// Same expansion from a single entity with no closing constraint. Used to
// build context for (h, r, ?) queries, where no tail is known.
std::vector<Triple> extract_neighborhood(const KnowledgeBase& kb, EntityId center,
                                         const ExtractorConfig& cfg);

// "(SUBJ, REL, OBJ)" per line using surface names. No trailing newline.
std::string linearize(const KnowledgeBase& kb, const std::vector<Triple>& triples);
inline std::string linearize(const KnowledgeBase& kb, const Subgraph& sg) {
  return linearize(kb, sg.triples);
}
std::string format_triple(const KnowledgeBase& kb, const Triple& t);

// Audit dump: one record per subgraph.
//   SUBGRAPH <tab> index
//   TARGET <tab> h <tab> r <tab> t
//   <hop> <tab> h <tab> r <tab> t     (one per triple)
//   END
void write_subgraphs(std::ostream& out, const KnowledgeBase& kb,
                     const std::vector<Subgraph>& subgraphs);
std::vector<Subgraph> read_subgraphs(std::istream& in, const KnowledgeBase& kb);

}  // namespace lesr
