#include "lesr/rules.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

namespace lesr {

namespace {

constexpr std::array<std::string_view, kNumRuleCases> kCaseNames = {
    "0-1", "0-2", "1-1", "1-2", "1-3", "1-4", "2-1",
    "2-2", "2-3", "2-4", "2-5", "2-6", "2-7", "2-8"};

// Reversal flags per case, in body path order.
const std::array<std::vector<bool>, kNumRuleCases>& direction_table() {
  static const std::array<std::vector<bool>, kNumRuleCases> table = {{
      {false},
      {true},
      {false, false},
      {true, false},
      {false, true},
      {true, true},
      {false, false, false},
      {false, false, true},
      {false, true, false},
      {true, false, false},
      {false, true, true},
      {true, false, true},
      {true, true, false},
      {true, true, true},
  }};
  return table;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Drops list markers ("1.", "2)", "-", "*") and wrapping quotes that chat
// models put around rules.
std::string strip_decoration(std::string_view text) {
  std::string s = trim(text);
  if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
    s = trim(std::string_view(s).substr(1));
  } else {
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) s = trim(std::string_view(s).substr(i + 1));
  }
  auto unwrap = [&s](char open, char close) {
    if (s.size() >= 2 && s.front() == open && s.back() == close) s = trim(s.substr(1, s.size() - 2));
  };
  unwrap('"', '"');
  unwrap('`', '`');
  if (!s.empty() && s.back() == '.') s = trim(std::string_view(s).substr(0, s.size() - 1));
  return s;
}

struct Token {
  bool is_atom = false;
  std::string text;
};

std::optional<std::vector<Token>> tokenize(std::string_view s, std::string& error) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      ++i;
    } else if (c == '(') {
      const auto close = s.find(')', i + 1);
      const auto nested = s.find('(', i + 1);
      if (close == std::string_view::npos || (nested != std::string_view::npos && nested < close)) {
        error = "unbalanced parentheses";
        return std::nullopt;
      }
      out.push_back({true, std::string(s.substr(i + 1, close - i - 1))});
      i = close + 1;
    } else if (c == ')') {
      error = "unbalanced parentheses";
      return std::nullopt;
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
      out.push_back({false, upper(s.substr(i, j - i))});
      i = j;
    } else {
      error = std::string("unexpected character '") + c + "'";
      return std::nullopt;
    }
  }
  return out;
}

std::optional<RuleAtom> parse_atom(const std::string& inner, std::string& error) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= inner.size(); ++k) {
    if (k == inner.size() || inner[k] == ',') {
      parts.push_back(trim(std::string_view(inner).substr(start, k - start)));
      start = k + 1;
    }
  }
  if (parts.size() != 3 || std::any_of(parts.begin(), parts.end(), [](auto& p) { return p.empty(); })) {
    error = "atom arity must be 3: (" + inner + ")";
    return std::nullopt;
  }
  if (parts[0] == parts[2]) {
    error = "atom subject equals object: (" + inner + ")";
    return std::nullopt;
  }
  RuleAtom atom;
  atom.subject = parts[0];
  atom.relation = parts[1];
  atom.raw_relation = parts[1];
  atom.object = parts[2];
  return atom;
}

ParseResult fail(std::string why) { return {std::nullopt, std::move(why)}; }

std::string format_atom(const RuleAtom& a) {
  return "(" + a.subject + ", " + a.relation + ", " + a.object + ")";
}

std::vector<std::string> atom_variables(const Rule& rule) {
  std::vector<std::string> vars;
  auto add = [&vars](const std::string& v) {
    if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
  };
  for (const auto& a : rule.body) {
    add(a.subject);
    add(a.object);
  }
  add(rule.head.subject);
  add(rule.head.object);
  return vars;
}

Rule rename(const Rule& rule, const std::map<std::string, std::string>& names) {
  Rule out = rule;
  auto apply = [&names](RuleAtom& a) {
    a.subject = names.at(a.subject);
    a.object = names.at(a.object);
  };
  for (auto& a : out.body) apply(a);
  apply(out.head);
  return out;
}

std::string letter(std::size_t i) {
  if (i < 26) return std::string(1, static_cast<char>('A' + i));
  return "V" + std::to_string(i);
}

}  // namespace

std::string_view case_name(RuleCase c) {
  const auto i = static_cast<std::size_t>(c);
  return i < kNumRuleCases ? kCaseNames[i] : "UNCLASSIFIED";
}

std::optional<RuleCase> parse_case_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumRuleCases; ++i) {
    if (kCaseNames[i] == name) return static_cast<RuleCase>(i);
  }
  if (name == "UNCLASSIFIED") return RuleCase::kUnclassified;
  return std::nullopt;
}

std::vector<bool> case_directions(RuleCase c) {
  const auto i = static_cast<std::size_t>(c);
  if (i >= kNumRuleCases) throw Error("unclassified rule has no traversal structure");
  return direction_table()[i];
}

RuleCase case_from_directions(const std::vector<bool>& reversed) {
  const auto& table = direction_table();
  for (std::size_t i = 0; i < kNumRuleCases; ++i) {
    if (table[i] == reversed) return static_cast<RuleCase>(i);
  }
  return RuleCase::kUnclassified;
}

bool Rule::mapped() const {
  return head.relation_id.has_value() &&
         std::all_of(body.begin(), body.end(), [](const RuleAtom& a) { return a.relation_id.has_value(); });
}

ParseResult parse_rule(std::string_view text) {
  const std::string s = strip_decoration(text);
  std::string error;
  auto tokens = tokenize(s, error);
  if (!tokens) return fail(error);
  if (tokens->empty() || tokens->front().is_atom || tokens->front().text != "IF") {
    return fail("rule must start with IF");
  }
  Rule rule;
  rule.raw_text = s;
  bool saw_then = false;
  bool expect_atom = true;
  for (std::size_t i = 1; i < tokens->size(); ++i) {
    const Token& tok = (*tokens)[i];
    if (tok.is_atom) {
      if (!expect_atom) return fail("missing AND between atoms");
      auto atom = parse_atom(tok.text, error);
      if (!atom) return fail(error);
      if (saw_then) {
        if (i + 1 != tokens->size()) return fail("text after rule head");
        rule.head = std::move(*atom);
        if (rule.body.empty()) return fail("empty rule body");
        return {std::move(rule), {}};
      }
      rule.body.push_back(std::move(*atom));
      if (rule.body.size() > kMaxBodyAtoms) return fail("more than 3 body atoms");
      expect_atom = false;
      continue;
    }
    if (tok.text == "OR") return fail("disjunction (OR) is not supported");
    if (tok.text == "NOT") return fail("negation (NOT) is not supported");
    if (expect_atom) return fail("expected an atom before '" + tok.text + "'");
    if (tok.text == "AND" && !saw_then) {
      expect_atom = true;
    } else if (tok.text == "THEN" && !saw_then) {
      saw_then = true;
      expect_atom = true;
    } else {
      return fail("unexpected token '" + tok.text + "'");
    }
  }
  if (!saw_then) return fail("missing THEN clause");
  return fail("missing rule head");
}

std::string format_rule(const Rule& rule) {
  std::string out = "IF ";
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    if (i) out += " AND ";
    out += format_atom(rule.body[i]);
  }
  out += " THEN ";
  out += format_atom(rule.head);
  return out;
}

bool is_variable(std::string_view token) {
  if (token.empty() || token[0] < 'A' || token[0] > 'Z') return false;
  return std::all_of(token.begin() + 1, token.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string normalize_relation_text(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (c == '_' || std::isspace(u)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(u));
  }
  return out;
}

StageVerdict filter_stage1(const Rule& rule, std::string_view target_relation) {
  if (normalize_relation_text(rule.head.relation) != normalize_relation_text(target_relation)) {
    return {false, "irrelevant head"};
  }
  for (const auto* atom : [&rule] {
         std::vector<const RuleAtom*> all;
         for (const auto& a : rule.body) all.push_back(&a);
         all.push_back(&rule.head);
         return all;
       }()) {
    if (!is_variable(atom->subject) || !is_variable(atom->object)) {
      return {false, "not entity-agnostic"};
    }
  }
  auto in_body = [&rule](const std::string& v) {
    return std::any_of(rule.body.begin(), rule.body.end(),
                       [&v](const RuleAtom& a) { return a.subject == v || a.object == v; });
  };
  if (!in_body(rule.head.subject) || !in_body(rule.head.object)) {
    return {false, "head variable missing from body"};
  }
  return {true, {}};
}

double TrigramSimilarity::score(std::string_view a, std::string_view b) const {
  const std::string x = normalize_relation_text(a);
  const std::string y = normalize_relation_text(b);
  if (x == y) return 1.0;
  auto grams = [](const std::string& s) {
    std::unordered_map<std::string, double> counts;
    const std::string padded = "  " + s + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) counts[padded.substr(i, 3)] += 1.0;
    return counts;
  };
  const auto gx = grams(x);
  const auto gy = grams(y);
  double dot = 0, nx = 0, ny = 0;
  for (const auto& [g, c] : gx) {
    nx += c * c;
    if (auto it = gy.find(g); it != gy.end()) dot += c * it->second;
  }
  for (const auto& [g, c] : gy) ny += c * c;
  if (nx == 0 || ny == 0) return 0.0;
  return std::clamp(dot / std::sqrt(nx * ny), 0.0, 1.0);
}

std::unique_ptr<SimilarityProvider> make_similarity(std::string_view name) {
  if (name == "trigram") return std::make_unique<TrigramSimilarity>();
  throw Error("unknown similarity provider '" + std::string(name) + "'");
}

Rule map_relations(const Rule& rule, const KnowledgeBase& kb, const SimilarityProvider& sim) {
  if (kb.num_relations() == 0) throw Error("cannot map relations: empty relation vocabulary");
  Rule out = rule;
  auto map_atom = [&](RuleAtom& atom) {
    if (atom.raw_relation.empty()) atom.raw_relation = atom.relation;
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t r = 0; r < kb.num_relations(); ++r) {
      const double s = sim.score(atom.raw_relation, kb.relations().name(r));
      if (s > best_score) {
        best_score = s;
        best = r;
      }
    }
    atom.relation_id = relation(best);
    atom.relation = kb.relations().name(best);
    atom.similarity = best_score;
  };
  for (auto& a : out.body) map_atom(a);
  map_atom(out.head);
  return out;
}

Rule classify_case(const Rule& rule) {
  Rule out = rule;
  out.rule_case = RuleCase::kUnclassified;
  const std::size_t n = rule.body.size();
  const std::string& from = rule.head.subject;
  const std::string& to = rule.head.object;
  if (n == 0 || n > kMaxBodyAtoms || from == to) return out;

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    std::vector<std::string> path{from};
    std::vector<bool> reversed;
    bool ok = true;
    for (std::size_t step = 0; step < n && ok; ++step) {
      const RuleAtom& a = rule.body[perm[step]];
      std::string next;
      if (a.subject == path.back()) {
        next = a.object;
        reversed.push_back(false);
      } else if (a.object == path.back()) {
        next = a.subject;
        reversed.push_back(true);
      } else {
        ok = false;
        break;
      }
      const bool last = step + 1 == n;
      if (last) {
        ok = next == to;
      } else {
        ok = next != to && std::find(path.begin(), path.end(), next) == path.end();
      }
      path.push_back(next);
    }
    if (!ok) continue;

    const RuleCase c = case_from_directions(reversed);
    // Template letters: head subject is A except in 0-2, whose template
    // reads (A, r_i, B) => (B, r_j, A).
    std::map<std::string, std::string> names;
    for (std::size_t k = 0; k < path.size(); ++k) names[path[k]] = letter(k);
    if (c == RuleCase::k0_2) {
      names[path[0]] = "B";
      names[path[1]] = "A";
    }
    Rule ordered = rule;
    for (std::size_t step = 0; step < n; ++step) ordered.body[step] = rule.body[perm[step]];
    out = rename(ordered, names);
    out.rule_case = c;
    return out;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::string canonical_form(const Rule& rule) {
  if (rule.classified()) return format_rule(rule);
  std::map<std::string, std::string> names;
  const auto vars = atom_variables(rule);
  for (std::size_t i = 0; i < vars.size(); ++i) names[vars[i]] = letter(i);
  return format_rule(rename(rule, names));
}

std::vector<Rule> dedup(const std::vector<Rule>& rules) {
  std::vector<Rule> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const Rule& r : rules) {
    const std::string key = std::string(case_name(r.rule_case)) + "|" + canonical_form(r);
    auto [it, inserted] = seen.emplace(key, out.size());
    if (inserted) {
      out.push_back(r);
      continue;
    }
    auto& prov = out[it->second].provenance;
    for (const auto& p : r.provenance) {
      if (std::find(prov.begin(), prov.end(), p) == prov.end()) prov.push_back(p);
    }
  }
  return out;
}

void write_rule_file(std::ostream& out, const std::vector<Rule>& rules) {
  for (const Rule& r : rules) {
    nlohmann::json rec;
    rec["text"] = format_rule(r);
    rec["raw_text"] = r.raw_text;
    rec["target_relation"] = r.target_relation;
    rec["case"] = std::string(case_name(r.rule_case));
    auto mapped = nlohmann::json::array();
    auto raw = nlohmann::json::array();
    auto scores = nlohmann::json::array();
    for (const auto* a : [&r] {
           std::vector<const RuleAtom*> all;
           for (const auto& b : r.body) all.push_back(&b);
           all.push_back(&r.head);
           return all;
         }()) {
      mapped.push_back(a->relation);
      raw.push_back(a->raw_relation);
      scores.push_back(a->similarity);
    }
    rec["mapped_relations"] = mapped;
    rec["raw_relations"] = raw;
    rec["similarity_scores"] = scores;
    rec["provenance"] = r.provenance;
    out << rec.dump() << '\n';
  }
}

std::vector<Rule> read_rule_file(std::istream& in, const KnowledgeBase& kb) {
  std::vector<Rule> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto bad = [&](const std::string& why) {
      return Error("rule file line " + std::to_string(line_no) + ": " + why);
    };
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw bad(e.what());
    }
    try {
      auto parsed = parse_rule(rec.at("text").get<std::string>());
      if (!parsed) throw bad(parsed.error);
      Rule rule = std::move(*parsed.rule);
      rule.raw_text = rec.at("raw_text").get<std::string>();
      rule.target_relation = rec.at("target_relation").get<std::string>();
      auto c = parse_case_name(rec.at("case").get<std::string>());
      if (!c) throw bad("unknown case");
      rule.rule_case = *c;
      rule.provenance = rec.at("provenance").get<std::vector<std::string>>();
      const auto raw = rec.at("raw_relations").get<std::vector<std::string>>();
      const auto scores = rec.at("similarity_scores").get<std::vector<double>>();
      std::vector<RuleAtom*> atoms;
      for (auto& a : rule.body) atoms.push_back(&a);
      atoms.push_back(&rule.head);
      if (raw.size() != atoms.size() || scores.size() != atoms.size()) {
        throw bad("field lengths do not match the rule");
      }
      for (std::size_t k = 0; k < atoms.size(); ++k) {
        auto id = kb.find_relation(atoms[k]->relation);
        if (!id) throw bad("relation '" + atoms[k]->relation + "' not in the knowledge base");
        atoms[k]->relation_id = *id;
        atoms[k]->raw_relation = raw[k];
        atoms[k]->similarity = scores[k];
      }
      out.push_back(std::move(rule));
    } catch (const nlohmann::json::exception& e) {
      throw bad(e.what());
    }
  }
  return out;
}

void save_rules(const std::filesystem::path& path, const std::vector<Rule>& rules) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_rule_file(out, rules);
}

std::vector<Rule> load_rules(const std::filesystem::path& path, const KnowledgeBase& kb) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open rule file " + path.string());
  return read_rule_file(in, kb);
}

}  // namespace lesr
