#include "lesr/subgraph.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace lesr {

namespace {

// Pick up to `cap` of `candidates` with a seeded partial shuffle, then restore
// train order so output does not depend on the shuffle layout.
std::vector<std::uint32_t> choose(std::vector<std::uint32_t> candidates, std::size_t cap,
                                  Rng& rng) {
  if (candidates.size() > cap) {
    for (std::size_t i = 0; i < cap; ++i) {
      std::size_t j = i + rng.below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(cap);
    std::sort(candidates.begin(), candidates.end());
  }
  return candidates;
}

struct Expansion {
  std::vector<Triple> triples;
  std::vector<std::size_t> hops;
};

Expansion expand(const KnowledgeBase& kb, std::vector<EntityId> seeds,
                 const std::optional<Triple>& exclude, const ExtractorConfig& cfg, Rng& rng) {
  Expansion out;
  std::unordered_set<std::uint32_t> taken;
  std::unordered_set<std::size_t> seen;
  for (EntityId e : seeds) seen.insert(index(e));
  std::vector<EntityId> pivots = std::move(seeds);
  const auto train = kb.train();

  for (std::size_t hop = 1; hop <= cfg.max_hops && !pivots.empty(); ++hop) {
    std::vector<EntityId> next;
    for (EntityId pivot : pivots) {
      std::vector<std::uint32_t> candidates;
      for (std::uint32_t idx : kb.incident(pivot)) {
        if (taken.contains(idx)) continue;
        if (exclude && train[idx] == *exclude) continue;
        candidates.push_back(idx);
      }
      for (std::uint32_t idx : choose(std::move(candidates), cfg.max_neighbors_per_entity, rng)) {
        taken.insert(idx);
        const Triple& t = train[idx];
        out.triples.push_back(t);
        out.hops.push_back(hop);
        for (EntityId e : {t.head, t.tail}) {
          if (seen.insert(index(e)).second) next.push_back(e);
        }
      }
    }
    pivots = std::move(next);
  }
  return out;
}

}  // namespace

void ExtractorConfig::validate() const {
  if (max_hops == 0 || max_neighbors_per_entity == 0 || max_subgraphs_per_relation == 0) {
    throw Error("extractor limits must be positive");
  }
}

std::vector<Triple> sample_targets(const KnowledgeBase& kb, RelationId r, std::size_t m,
                                   std::uint64_t seed) {
  if (index(r) >= kb.num_relations()) throw Error("unknown relation id");
  std::vector<std::uint32_t> pool(kb.with_relation(r).begin(), kb.with_relation(r).end());
  Rng rng(derive_seed(seed, "targets:" + std::to_string(index(r))));
  const std::size_t take = std::min(m, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<Triple> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(kb.train()[pool[i]]);
  return out;
}

Subgraph extract_subgraph(const KnowledgeBase& kb, const Triple& target,
                          const ExtractorConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "subgraph:" + std::to_string(index(target.head)) + ":" +
                                    std::to_string(index(target.relation)) + ":" +
                                    std::to_string(index(target.tail))));
  std::vector<EntityId> seeds{target.head};
  if (target.tail != target.head) seeds.push_back(target.tail);
  Expansion ex = expand(kb, std::move(seeds), target, cfg, rng);

  Subgraph sg{target, {}, {}};
  for (std::size_t i = 0; i < ex.triples.size(); ++i) {
    const Triple& t = ex.triples[i];
    if (ex.hops[i] == cfg.max_hops) {
      const bool adjacent = t.head == target.head || t.head == target.tail ||
                            t.tail == target.head || t.tail == target.tail;
      if (!adjacent) continue;
    }
    sg.triples.push_back(t);
    sg.hops.push_back(ex.hops[i]);
  }
  return sg;
}

std::vector<Triple> extract_neighborhood(const KnowledgeBase& kb, EntityId center,
                                         const ExtractorConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "neighborhood:" + std::to_string(index(center))));
  return expand(kb, {center}, std::nullopt, cfg, rng).triples;
}

std::string format_triple(const KnowledgeBase& kb, const Triple& t) {
  return "(" + kb.name(t.head) + ", " + kb.name(t.relation) + ", " + kb.name(t.tail) + ")";
}

std::string linearize(const KnowledgeBase& kb, const std::vector<Triple>& triples) {
  std::string out;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    if (i) out += '\n';
    out += format_triple(kb, triples[i]);
  }
  return out;
}

void write_subgraphs(std::ostream& out, const KnowledgeBase& kb,
                     const std::vector<Subgraph>& subgraphs) {
  auto line = [&](const std::string& tag, const Triple& t) {
    out << tag << '\t' << kb.name(t.head) << '\t' << kb.name(t.relation) << '\t'
        << kb.name(t.tail) << '\n';
  };
  for (std::size_t i = 0; i < subgraphs.size(); ++i) {
    const auto& sg = subgraphs[i];
    out << "SUBGRAPH\t" << i << '\n';
    line("TARGET", sg.target);
    for (std::size_t k = 0; k < sg.triples.size(); ++k) line(std::to_string(sg.hops[k]), sg.triples[k]);
    out << "END\n";
  }
}

std::vector<Subgraph> read_subgraphs(std::istream& in, const KnowledgeBase& kb) {
  std::vector<Subgraph> out;
  std::string line;
  std::size_t line_no = 0;
  bool open = false;
  auto fail = [&](const std::string& what) -> Error {
    return Error("subgraph dump line " + std::to_string(line_no) + ": " + what);
  };
  auto parse_triple = [&](std::string_view h, std::string_view r, std::string_view t) {
    auto he = kb.find_entity(h);
    auto re = kb.find_relation(r);
    auto te = kb.find_entity(t);
    if (!he || !re || !te) throw fail("triple names not in the knowledge base");
    return Triple{*he, *re, *te};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields[0] == "SUBGRAPH") {
      if (open) throw fail("missing END");
      out.emplace_back();
      open = true;
    } else if (fields[0] == "END") {
      if (!open) throw fail("END without SUBGRAPH");
      open = false;
    } else {
      if (!open || fields.size() != 4) throw fail("malformed record line");
      Triple t = parse_triple(fields[1], fields[2], fields[3]);
      if (fields[0] == "TARGET") {
        out.back().target = t;
      } else {
        std::size_t hop = 0;
        try {
          hop = std::stoul(fields[0]);
        } catch (const std::exception&) {
          throw fail("bad hop index");
        }
        out.back().triples.push_back(t);
        out.back().hops.push_back(hop);
      }
    }
  }
  if (open) throw fail("unterminated record");
  return out;
}

}  // namespace lesr
