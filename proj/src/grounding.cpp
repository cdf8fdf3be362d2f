#include "lesr/grounding.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace lesr {

std::vector<const SparseMatrix*> grounding_chain(const KnowledgeBase& kb, const Rule& rule) {
  if (!rule.classified()) throw Error("cannot ground unclassified rule: " + format_rule(rule));
  if (!rule.mapped()) throw Error("cannot ground unmapped rule: " + format_rule(rule));
  const auto reversed = case_directions(rule.rule_case);
  std::vector<const SparseMatrix*> chain;
  for (std::size_t k = 0; k < rule.body.size(); ++k) {
    const RelationId r = *rule.body[k].relation_id;
    chain.push_back(reversed[k] ? &kb.transposed(r) : &kb.matrix(r));
  }
  return chain;
}

Grounding ground(const KnowledgeBase& kb, const Rule& rule, Count cap) {
  const auto chain = grounding_chain(kb, rule);
  SparseMatrix body = sparse::multiply_chain(chain, cap);
  SparseMatrix confirmed = sparse::hadamard(body, kb.matrix(*rule.head.relation_id), cap);
  if (body.saturated()) log_warn("grounding counts saturated for " + format_rule(rule));
  return {rule, std::move(body), std::move(confirmed)};
}

std::vector<Grounding> ground_all(const KnowledgeBase& kb, std::span<const Rule> rules, Count cap) {
  std::vector<Grounding> out(rules.size());
  const auto n = static_cast<std::ptrdiff_t>(rules.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = ground(kb, rules[static_cast<std::size_t>(i)], cap);
    } catch (...) {
#pragma omp critical(lesr_ground_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

namespace reference {

std::vector<Grounding> ground_all(const KnowledgeBase& kb, std::span<const Rule> rules, Count cap) {
  std::vector<Grounding> out;
  out.reserve(rules.size());
  for (const Rule& rule : rules) {
    const auto chain = grounding_chain(kb, rule);
    SparseMatrix body = *chain[0];
    for (std::size_t k = 1; k < chain.size(); ++k) {
      body = sparse::reference::multiply(body, *chain[k], cap);
    }
    SparseMatrix confirmed =
        sparse::reference::hadamard(body, kb.matrix(*rule.head.relation_id), cap);
    out.push_back({rule, std::move(body), std::move(confirmed)});
  }
  return out;
}

}  // namespace reference

Count score(const Grounding& g, EntityId head, EntityId tail) {
  const Count a = g.confirmed.at(index(head), index(tail));
  if (a > 0) return a;
  const Count c = g.body.at(index(head), index(tail));
  return c > 0 ? -c : 0;
}

ScoreRow score_row(const Grounding& g, EntityId head) {
  ScoreRow row;
  const auto cols = g.body.row_cols(index(head));
  const auto vals = g.body.row_values(index(head));
  const auto a_cols = g.confirmed.row_cols(index(head));
  const auto a_vals = g.confirmed.row_values(index(head));
  row.reserve(cols.size());
  // confirmed's support is a subset of body's, so one merge pass suffices.
  std::size_t q = 0;
  for (std::size_t p = 0; p < cols.size(); ++p) {
    while (q < a_cols.size() && a_cols[q] < cols[p]) ++q;
    const bool hit = q < a_cols.size() && a_cols[q] == cols[p];
    row.push_back({entity(cols[p]), hit ? a_vals[q] : -vals[p]});
  }
  return row;
}

ScoreRow evidence_row(const Grounding& g, EntityId head) {
  ScoreRow row;
  const auto cols = g.body.row_cols(index(head));
  const auto vals = g.body.row_values(index(head));
  row.reserve(cols.size());
  for (std::size_t p = 0; p < cols.size(); ++p) row.push_back({entity(cols[p]), vals[p]});
  return row;
}

ScoreRow evidence_row_without(const KnowledgeBase& kb, const Grounding& g, EntityId head, const Triple& held_out) {
  const bool touched = std::any_of(g.rule.body.begin(), g.rule.body.end(),
                                   [&](const RuleAtom& a) { return a.relation_id == held_out.relation; });
  if (!touched) return evidence_row(g, head);
  const SparseMatrix* fwd = &kb.matrix(held_out.relation);
  const SparseMatrix* bwd = &kb.transposed(held_out.relation);
  const auto h = static_cast<std::uint32_t>(index(held_out.head));
  const auto t = static_cast<std::uint32_t>(index(held_out.tail));
  std::map<std::uint32_t, Count> v{{static_cast<std::uint32_t>(index(head)), 1}};
  for (const SparseMatrix* m : grounding_chain(kb, g.rule)) {
    std::map<std::uint32_t, Count> next;
    for (const auto& [u, c] : v) {
      const auto cols = m->row_cols(u);
      const auto vals = m->row_values(u);
      for (std::size_t p = 0; p < cols.size(); ++p) {
        if ((m == fwd && u == h && cols[p] == t) || (m == bwd && u == t && cols[p] == h)) continue;
        Count& slot = next[cols[p]];
        slot = saturating_add(slot, saturating_mul(c, vals[p], kDefaultCountCap), kDefaultCountCap);
      }
    }
    v = std::move(next);
  }
  ScoreRow row;
  for (const auto& [w, c] : v) {
    // Never above the stored count, so a lower grounding cap still applies.
    const Count value = std::min(c, g.body.at(index(head), w));
    if (value > 0) row.push_back({entity(w), value});
  }
  return row;
}

namespace {

constexpr std::string_view kCacheMagic = "lesr-grounding 1";

void write_matrix(std::ostream& out, char tag, const SparseMatrix& m) {
  out << tag << ' ' << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << ' '
      << (m.saturated() ? 1 : 0) << '\n';
  for (const auto& e : m.entries()) out << e.row << ' ' << e.col << ' ' << e.value << '\n';
}

std::optional<SparseMatrix> read_matrix(std::istream& in, char tag) {
  char got = 0;
  std::size_t rows = 0, cols = 0, nnz = 0;
  int saturated = 0;
  if (!(in >> got >> rows >> cols >> nnz >> saturated) || got != tag) return std::nullopt;
  std::vector<MatrixEntry> entries(nnz);
  for (auto& e : entries) {
    if (!(in >> e.row >> e.col >> e.value)) return std::nullopt;
  }
  try {
    auto m = SparseMatrix::from_entries(rows, cols, std::move(entries));
    if (m.nnz() != nnz) return std::nullopt;
    if (saturated) {
      // Rebuild with the flag the writer observed.
      auto e = m.entries();
      std::vector<std::size_t> row_ptr(rows + 1, 0);
      std::vector<std::uint32_t> col_idx;
      std::vector<Count> values;
      for (const auto& x : e) {
        ++row_ptr[x.row + 1];
        col_idx.push_back(static_cast<std::uint32_t>(x.col));
        values.push_back(x.value);
      }
      for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
      return SparseMatrix::from_csr(rows, cols, std::move(row_ptr), std::move(col_idx),
                                    std::move(values), true);
    }
    return m;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string unique_suffix() {
  static std::atomic<std::uint64_t> counter{0};
  Fnv1a h;
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  h.update(tid.str()).update_u64(counter.fetch_add(1)).update_u64(
      static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  return h.hex();
}

}  // namespace

GroundingCache::GroundingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path GroundingCache::entry_path(const KnowledgeBase& kb, const Rule& rule,
                                                 Count cap) const {
  Fnv1a h;
  h.update(kb.fingerprint()).update("\n").update(canonical_form(rule)).update_u64(
      static_cast<std::uint64_t>(cap));
  return dir_ / (h.hex() + ".grd");
}

std::optional<Grounding> GroundingCache::load(const KnowledgeBase& kb, const Rule& rule,
                                              Count cap) const {
  std::ifstream in(entry_path(kb, rule, cap));
  if (!in) return std::nullopt;
  std::string magic, kb_line, rule_line, cap_line;
  if (!std::getline(in, magic) || magic != kCacheMagic) return std::nullopt;
  if (!std::getline(in, kb_line) || kb_line != "kb " + kb.fingerprint()) return std::nullopt;
  if (!std::getline(in, rule_line) || rule_line != "rule " + canonical_form(rule)) return std::nullopt;
  if (!std::getline(in, cap_line) || cap_line != "cap " + std::to_string(cap)) return std::nullopt;
  auto body = read_matrix(in, 'C');
  if (!body) return std::nullopt;
  auto confirmed = read_matrix(in, 'A');
  if (!confirmed) return std::nullopt;
  return Grounding{rule, std::move(*body), std::move(*confirmed)};
}

void GroundingCache::store(const KnowledgeBase& kb, const Grounding& g, Count cap) const {
  const auto final_path = entry_path(kb, g.rule, cap);
  auto tmp = final_path;
  tmp += ".tmp-" + unique_suffix();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write grounding cache entry " + tmp.string());
    out << kCacheMagic << '\n'
        << "kb " << kb.fingerprint() << '\n'
        << "rule " << canonical_form(g.rule) << '\n'
        << "cap " << cap << '\n';
    write_matrix(out, 'C', g.body);
    write_matrix(out, 'A', g.confirmed);
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path);
}

std::vector<Grounding> ground_cached(const KnowledgeBase& kb, std::span<const Rule> rules,
                                     const GroundingCache* cache, Count cap) {
  if (!cache) return ground_all(kb, rules, cap);
  std::vector<std::optional<Grounding>> found(rules.size());
  std::vector<Rule> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    found[i] = cache->load(kb, rules[i], cap);
    if (!found[i]) {
      missing.push_back(rules[i]);
      missing_at.push_back(i);
    }
  }
  auto fresh = ground_all(kb, missing, cap);
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    cache->store(kb, fresh[k], cap);
    found[missing_at[k]] = std::move(fresh[k]);
  }
  std::vector<Grounding> out;
  out.reserve(rules.size());
  for (auto& g : found) out.push_back(std::move(*g));
  return out;
}

}  // namespace lesr
