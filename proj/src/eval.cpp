#include "lesr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

namespace lesr {

namespace {

using json = nlohmann::json;

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fixed(*v) : "-"; }

}  // namespace

MetricsReport compute_metrics(std::span<const double> ranks) {
  if (ranks.empty()) throw Error("cannot compute metrics over an empty rank list");
  double sum = 0.0, inv = 0.0;
  std::map<int, std::size_t> hit;
  for (double r : ranks) {
    if (!(r >= 1.0)) throw Error("ranks must be >= 1");
    sum += r;
    inv += 1.0 / r;
    for (int k : kHitsAt) hit[k] += r <= k;
  }
  const auto n = static_cast<double>(ranks.size());
  MetricsReport rep;
  rep.mr = sum / n;
  rep.mrr = inv / n;
  for (int k : kHitsAt) rep.hits[k] = static_cast<double>(hit[k]) / n;
  rep.query_count = ranks.size();
  return rep;
}

double hcr_percent(std::size_t high_conf, std::size_t learned) {
  if (learned == 0) throw Error("HCR needs at least one learned rule");
  if (high_conf > learned) throw Error("high-confidence count exceeds learned count");
  return 100.0 * static_cast<double>(high_conf) / static_cast<double>(learned);
}

double rqi_percent(double hcr, double rcs) {
  if (hcr < 0 || hcr > 100 || rcs < 0 || rcs > 1) throw Error("HCR or RCS out of range");
  const double h = hcr / 100.0;
  if (h + rcs == 0) return 0.0;
  return 100.0 * 2.0 * h * rcs / (h + rcs);
}

RuleAnnotations read_annotations(std::istream& in) {
  RuleAnnotations out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      return Error("annotation line " + std::to_string(line_no) + ": " + what);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("rule") || !j["rule"].is_string() || !j.contains("scores") ||
        !j["scores"].is_array()) {
      throw fail("expected {\"rule\": string, \"scores\": [numbers]}");
    }
    auto parsed = parse_rule(j["rule"].get<std::string>());
    if (!parsed) throw fail("unparseable rule: " + parsed.error);
    std::vector<double> scores;
    for (const auto& s : j["scores"]) {
      if (!s.is_number()) throw fail("scores must be numbers");
      const double v = s.get<double>();
      if (v != 0.0 && v != 0.5 && v != 1.0) throw fail("path score " + s.dump() + " is not 0, 0.5 or 1");
      scores.push_back(v);
    }
    auto& slot = out[canonical_form(classify_case(*parsed.rule))];
    slot.insert(slot.end(), scores.begin(), scores.end());
  }
  return out;
}

RuleAnnotations load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open annotation file " + path.string());
  return read_annotations(in);
}

RuleQualityReport compute_rule_quality(std::span<const Rule> rules, const RuleAnnotations& annotations) {
  RuleQualityReport q;
  std::set<std::string> keys;
  for (const Rule& r : rules) keys.insert(canonical_form(r));
  q.learned_count = keys.size();
  double rcs_sum = 0.0;
  for (const auto& key : keys) {
    auto it = annotations.find(key);
    if (it == annotations.end() || it->second.empty()) continue;
    ++q.high_conf_count;
    double s = 0.0;
    for (double v : it->second) s += v;
    rcs_sum += s / static_cast<double>(it->second.size());
  }
  if (q.learned_count == 0) return q;
  q.hcr = hcr_percent(q.high_conf_count, q.learned_count);
  q.rcs = q.high_conf_count ? rcs_sum / static_cast<double>(q.high_conf_count) : 0.0;
  q.rqi = rqi_percent(q.hcr, q.rcs);
  return q;
}

MetricsReport evaluate_model(const ReasonerParams& params, const KnowledgeBase& kb, const RuleBank& bank,
                             const RotatEModel* emb, Split split) {
  const auto ranks = split_ranks(params, kb, bank, emb, split);
  if (ranks.empty()) throw Error("split '" + std::string(split_name(split)) + "' has no queries");
  return compute_metrics(ranks);
}

std::string normalize_entity_name(std::string_view name) {
  std::string out;
  bool space = false;
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

MetricsReport score_candidate_lists(const KnowledgeBase& kb, std::span<const Triple> queries,
                                    const std::vector<std::optional<std::vector<std::string>>>& candidates) {
  if (queries.size() != candidates.size()) throw Error("one candidate list per query is required");
  if (queries.empty()) throw Error("cannot score an empty query list");
  MetricsReport rep;
  std::map<int, std::size_t> hit;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!candidates[i]) {
      ++rep.failed_queries;
      continue;
    }
    const std::string gold = normalize_entity_name(kb.name(queries[i].tail));
    const auto& list = *candidates[i];
    const auto limit = std::min<std::size_t>(list.size(), 10);
    for (std::size_t k = 0; k < limit; ++k) {
      if (normalize_entity_name(list[k]) == gold) {
        for (int K : kHitsAt) hit[K] += static_cast<int>(k) < K;
        break;
      }
    }
  }
  const auto n = static_cast<double>(queries.size());
  for (int k : kHitsAt) rep.hits[k] = static_cast<double>(hit[k]) / n;
  rep.query_count = queries.size();
  return rep;
}

MetricsReport evaluate_inference_baseline(const KnowledgeBase& kb, const ProposerBackend& backend, Split split,
                                          const ExtractorConfig& cfg) {
  if (backend.kind != BackendKind::kRemoteChat) {
    throw Error("the inference baseline needs a remote backend");
  }
  const auto queries = kb.triples(split);
  std::vector<std::optional<std::vector<std::string>>> lists;
  lists.reserve(queries.size());
  for (const Triple& q : queries) {
    try {
      lists.emplace_back(direct_infer_candidates(backend, kb, q.head, q.relation, cfg));
    } catch (const Error& e) {
      log_warn(std::string("inference baseline query failed: ") + e.what());
      lists.emplace_back(std::nullopt);
    }
  }
  return score_candidate_lists(kb, queries, lists);
}

std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::vector<std::vector<std::string>> cells{{"model", "queries", "MR", "MRR", "Hits@1", "Hits@3", "Hits@10"}};
  for (const auto& [label, r] : rows) {
    cells.push_back({label, std::to_string(r.query_count), cell(r.mr), cell(r.mrr), cell(r.hits.at(1)),
                     cell(r.hits.at(3)), cell(r.hits.at(10))});
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      const auto& s = cells[i][c];
      const std::string pad(width[c] - s.size(), ' ');
      out += c == 0 ? s + pad : "  " + pad + s;
    }
    out += '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

std::string render_rule_quality(const RuleQualityReport& q) {
  return "learned rules       " + std::to_string(q.learned_count) + "\n" +
         "high-confidence     " + std::to_string(q.high_conf_count) + "\n" +
         "HCR (%)             " + fixed(q.hcr, 2) + "\n" +
         "RCS                 " + fixed(q.rcs, 3) + "\n" +
         "RQI (%)             " + fixed(q.rqi, 2) + "\n";
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out = "model,queries,failed,mr,mrr,hits1,hits3,hits10\n";
  auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string(); };
  for (const auto& [label, r] : rows) {
    out += label + "," + std::to_string(r.query_count) + "," + std::to_string(r.failed_queries) + "," + opt(r.mr) +
           "," + opt(r.mrr) + "," + fixed(r.hits.at(1), 6) + "," + fixed(r.hits.at(3), 6) + "," +
           fixed(r.hits.at(10), 6) + "\n";
  }
  return out;
}

std::string report_json(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                        const std::optional<RuleQualityReport>& quality) {
  json models = json::array();
  for (const auto& [label, r] : rows) {
    json hits = json::object();
    for (const auto& [k, v] : r.hits) hits[std::to_string(k)] = v;
    models.push_back({{"model", label},
                      {"queries", r.query_count},
                      {"failed_queries", r.failed_queries},
                      {"mr", r.mr ? json(*r.mr) : json(nullptr)},
                      {"mrr", r.mrr ? json(*r.mrr) : json(nullptr)},
                      {"hits", hits}});
  }
  json doc = {{"metrics", models}};
  if (quality) {
    doc["rule_quality"] = {{"learned", quality->learned_count},
                           {"high_confidence", quality->high_conf_count},
                           {"hcr", quality->hcr},
                           {"rcs", quality->rcs},
                           {"rqi", quality->rqi}};
  }
  return doc.dump(2) + "\n";
}

}  // namespace lesr
