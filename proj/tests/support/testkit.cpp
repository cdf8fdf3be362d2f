#include "testkit.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace lesr::testkit {

Dense to_dense(const SparseMatrix& m) {
  Dense d(m.rows(), std::vector<Count>(m.cols(), 0));
  for (const auto& e : m.entries()) d[e.row][e.col] = e.value;
  return d;
}

Dense dense_multiply(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), inner = b.size(), m = b.empty() ? 0 : b[0].size();
  Dense out(n, std::vector<Count>(m, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < inner; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Dense dense_transpose(const Dense& a) {
  if (a.empty()) return {};
  Dense out(a[0].size(), std::vector<Count>(a.size(), 0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[j][i] = a[i][j];
  return out;
}

Dense dense_hadamard(const Dense& a, const Dense& b) {
  Dense out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] = a[i][j] * b[i][j];
  return out;
}

SparseMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double density,
                           Count max_value) {
  std::vector<MatrixEntry> entries;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (rng.unit() < density) {
        entries.push_back({i, j, 1 + static_cast<Count>(rng.below(static_cast<std::size_t>(max_value)))});
      }
  return SparseMatrix::from_entries(rows, cols, std::move(entries));
}

KnowledgeBase random_kb(Rng& rng, std::size_t entities, std::size_t relations, double density) {
  std::vector<RawTriple> train;
  // One guaranteed triple per relation.
  for (std::size_t r = 0; r < relations; ++r) {
    const std::size_t h = rng.below(entities);
    std::size_t t = rng.below(entities);
    train.push_back({"e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t)});
  }
  std::vector<RawTriple> named;
  for (std::size_t e = 0; e < entities; ++e) {
    named.push_back({"e" + std::to_string(e), "r0", "e" + std::to_string(e)});
  }
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (const auto& t : train) {
    seen.insert({std::stoul(t.head.substr(1)), std::stoul(t.relation.substr(1)),
                 std::stoul(t.tail.substr(1))});
  }
  for (std::size_t r = 0; r < relations; ++r)
    for (std::size_t h = 0; h < entities; ++h)
      for (std::size_t t = 0; t < entities; ++t)
        if (rng.unit() < density && seen.insert({h, r, t}).second) {
          train.push_back({"e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t)});
        }
  // The naming triples go to the test split: vocabulary only, no matrix entries.
  return KnowledgeBase::build(train, {}, named);
}

namespace {

std::vector<std::string> shuffled_letters(Rng& rng) {
  std::vector<std::string> letters;
  for (char c = 'A'; c <= 'Z'; ++c) letters.emplace_back(1, c);
  rng.shuffle(letters.begin(), letters.end());
  return letters;
}

RuleAtom atom(const KnowledgeBase& kb, const std::string& s, RelationId r, const std::string& o) {
  RuleAtom a;
  a.subject = s;
  a.object = o;
  a.relation = kb.name(r);
  a.raw_relation = a.relation;
  a.relation_id = r;
  a.similarity = 1.0;
  return a;
}

}  // namespace

Rule random_case_rule(Rng& rng, const KnowledgeBase& kb, RuleCase c) {
  const auto reversed = case_directions(c);
  const auto letters = shuffled_letters(rng);
  const std::size_t n = reversed.size();
  Rule rule;
  for (std::size_t k = 0; k < n; ++k) {
    const RelationId r = relation(rng.below(kb.num_relations()));
    const auto& from = letters[k];
    const auto& to = letters[k + 1];
    rule.body.push_back(reversed[k] ? atom(kb, to, r, from) : atom(kb, from, r, to));
  }
  rule.head = atom(kb, letters[0], relation(rng.below(kb.num_relations())), letters[n]);
  rng.shuffle(rule.body.begin(), rule.body.end());
  rule.target_relation = rule.head.relation;
  rule.raw_text = format_rule(rule);
  return rule;
}

BindingCounts enumerate_bindings(const KnowledgeBase& kb, const Rule& rule) {
  const std::size_t ne = kb.num_entities();
  std::set<Triple> facts(kb.train().begin(), kb.train().end());
  std::vector<std::string> vars;
  for (const auto& a : rule.body) {
    for (const auto& v : {a.subject, a.object}) {
      if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
    }
  }
  auto var_index = [&vars](const std::string& v) {
    return static_cast<std::size_t>(std::find(vars.begin(), vars.end(), v) - vars.begin());
  };
  BindingCounts out{Dense(ne, std::vector<Count>(ne, 0)), Dense(ne, std::vector<Count>(ne, 0))};
  std::vector<std::size_t> value(vars.size());
  const std::size_t hs = var_index(rule.head.subject);
  const std::size_t ho = var_index(rule.head.object);

  // An atom is checked as soon as its later variable is bound.
  auto holds = [&](const RuleAtom& a) {
    return facts.contains(Triple{entity(value[var_index(a.subject)]), *a.relation_id,
                                 entity(value[var_index(a.object)])});
  };
  std::function<void(std::size_t)> bind = [&](std::size_t depth) {
    for (const auto& a : rule.body) {
      const std::size_t last = std::max(var_index(a.subject), var_index(a.object));
      if (last + 1 == depth && !holds(a)) return;
    }
    if (depth == vars.size()) {
      const std::size_t h = value[hs], t = value[ho];
      ++out.body[h][t];
      if (facts.contains(Triple{entity(h), *rule.head.relation_id, entity(t)})) ++out.confirmed[h][t];
      return;
    }
    for (std::size_t e = 0; e < ne; ++e) {
      value[depth] = e;
      bind(depth + 1);
    }
  };
  bind(0);
  return out;
}

std::vector<Rule> PlantedKb::all_rules() const {
  std::vector<Rule> out{planted};
  out.insert(out.end(), decoys.begin(), decoys.end());
  return out;
}

PlantedKb planted_kb(std::uint64_t seed, std::size_t entities) {
  Rng rng(seed);
  // Four generations; everyone after the first has one or two parents from
  // the generation before.
  const std::size_t g0 = entities * 16 / 100, g1 = entities * 24 / 100, g2 = entities * 30 / 100;
  const std::vector<std::size_t> start{0, g0, g0 + g1, g0 + g1 + g2, entities};
  auto name = [](std::size_t i) { return "p" + std::to_string(i); };
  std::vector<std::vector<std::size_t>> parents(entities);
  std::vector<RawTriple> train, valid, test;
  for (std::size_t gen = 1; gen < 4; ++gen) {
    const std::size_t lo = start[gen - 1], width = start[gen] - start[gen - 1];
    for (std::size_t c = start[gen]; c < start[gen + 1]; ++c) {
      const std::size_t first = lo + rng.below(width);
      parents[c].push_back(first);
      if (rng.unit() < 0.6) {
        std::size_t second = lo + rng.below(width);
        if (second != first) parents[c].push_back(second);
      }
      for (std::size_t p : parents[c]) train.push_back({name(p), "parent", name(c)});
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> grand;
  for (std::size_t c = 0; c < entities; ++c)
    for (std::size_t p : parents[c])
      for (std::size_t gp : parents[p]) grand.insert({gp, c});
  std::vector<std::pair<std::size_t, std::size_t>> facts(grand.begin(), grand.end());
  rng.shuffle(facts.begin(), facts.end());
  const std::size_t n_valid = std::max<std::size_t>(1, facts.size() * 15 / 100);
  const std::size_t n_test = std::max<std::size_t>(1, facts.size() * 15 / 100);
  for (std::size_t i = 0; i < facts.size(); ++i) {
    RawTriple t{name(facts[i].first), "grandparent", name(facts[i].second)};
    if (i < n_valid) {
      valid.push_back(t);
    } else if (i < n_valid + n_test) {
      test.push_back(t);
    } else {
      train.push_back(t);
    }
  }
  PlantedKb out{KnowledgeBase::build(train, valid, test), {}, {}};
  out.planted = make_rule(out.kb, "IF (A, parent, B) AND (B, parent, C) THEN (A, grandparent, C)");
  for (const char* text : {
           "IF (A, parent, B) THEN (A, grandparent, B)",
           "IF (B, parent, A) THEN (A, grandparent, B)",
           "IF (A, parent, B) AND (C, parent, B) THEN (A, grandparent, C)",
           "IF (B, parent, A) AND (B, parent, C) THEN (A, grandparent, C)",
           "IF (A, parent, B) AND (B, parent, C) AND (C, parent, D) THEN (A, grandparent, D)",
       }) {
    out.decoys.push_back(make_rule(out.kb, text));
  }
  return out;
}

Rule make_rule(const KnowledgeBase& kb, const std::string& text) {
  auto parsed = parse_rule(text);
  if (!parsed) throw Error("bad test rule: " + parsed.error);
  TrigramSimilarity sim;
  Rule rule = classify_case(map_relations(*parsed.rule, kb, sim));
  rule.target_relation = rule.head.relation;
  if (!rule.classified()) throw Error("test rule is unclassified: " + text);
  return rule;
}

KnowledgeBase kb_from(const std::vector<RawTriple>& train, const std::vector<RawTriple>& valid,
                      const std::vector<RawTriple>& test) {
  return KnowledgeBase::build(train, valid, test);
}

std::filesystem::path toy_dir() { return LESR_TEST_DATA_DIR "/toy"; }

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "lesr-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lesr::testkit
