#include "lesr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "lesr/optim.hpp"

namespace lesr {

namespace {

using json = nlohmann::json;

double row_value(const RuleRow& row, std::uint32_t t) {
  auto it = std::lower_bound(row.tails.begin(), row.tails.end(), t);
  return it != row.tails.end() && *it == t ? row.values[static_cast<std::size_t>(it - row.tails.begin())] : 0.0;
}

std::vector<double> flatten(const RelationParams& p) {
  std::vector<double> v = p.logits;
  v.push_back(p.emb_logit);
  v.push_back(p.mix_logit);
  return v;
}

void unflatten(std::span<const double> v, RelationParams& p) {
  std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(p.logits.size()), p.logits.begin());
  p.emb_logit = v[p.logits.size()];
  p.mix_logit = v[p.logits.size() + 1];
}

std::vector<std::size_t> flat_offsets(const ReasonerParams& p) {
  std::vector<std::size_t> out;
  std::size_t at = 0;
  for (const auto& r : p.relations) {
    out.push_back(at);
    at += r.logits.size() + 2;
  }
  out.push_back(at);
  return out;
}

double mean_reciprocal(std::span<const double> ranks) {
  double s = 0.0;
  for (double r : ranks) s += 1.0 / r;
  return ranks.empty() ? 0.0 : s / static_cast<double>(ranks.size());
}

}  // namespace

std::string_view row_mode_name(RuleRowMode m) {
  return m == RuleRowMode::kEvidence ? "evidence" : "signed";
}

RuleRowMode parse_row_mode(std::string_view name) {
  if (name == "evidence") return RuleRowMode::kEvidence;
  if (name == "signed") return RuleRowMode::kSigned;
  throw Error("unknown rule row mode '" + std::string(name) + "' (expected evidence or signed)");
}

void TrainerConfig::validate() const {
  if (!(lr >= 0)) throw Error("trainer lr must be nonnegative");
  if (!(weight_decay >= 0)) throw Error("trainer weight_decay must be nonnegative");
  if (step_size == 0) throw Error("trainer step_size must be positive");
  if (!(gamma > 0)) throw Error("trainer gamma must be positive");
  if (patience == 0) throw Error("trainer patience must be positive");
  if (batch_size == 0) throw Error("trainer batch_size must be positive");
}

RuleBank RuleBank::build(std::size_t num_relations, std::vector<Grounding> groundings) {
  RuleBank bank{std::move(groundings), std::vector<std::vector<std::size_t>>(num_relations)};
  for (std::size_t i = 0; i < bank.groundings.size(); ++i) {
    const auto& head = bank.groundings[i].rule.head;
    if (!head.relation_id || index(*head.relation_id) >= num_relations) {
      throw Error("grounding with unmapped head relation");
    }
    bank.by_relation[index(*head.relation_id)].push_back(i);
  }
  return bank;
}

ReasonerParams ReasonerParams::initial(const KnowledgeBase& kb, const RuleBank& bank, bool uniform,
                                       RuleRowMode mode) {
  ReasonerParams p;
  p.uniform_weights = uniform;
  p.row_mode = mode;
  for (std::size_t r = 0; r < kb.num_relations(); ++r) {
    p.relation_names.push_back(kb.name(relation(r)));
    RelationParams rp;
    if (r < bank.by_relation.size()) {
      for (std::size_t g : bank.by_relation[r]) rp.rules.push_back(canonical_form(bank.groundings[g].rule));
    }
    rp.logits.assign(rp.rules.size(), 0.0);
    p.relations.push_back(std::move(rp));
  }
  p.adam_m.assign(p.flat_size(), 0.0);
  p.adam_v.assign(p.flat_size(), 0.0);
  return p;
}

std::size_t ReasonerParams::flat_size() const {
  std::size_t n = 0;
  for (const auto& r : relations) n += r.logits.size() + 2;
  return n;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - hi);
  for (double& x : out) x /= sum;
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> relation_weights(const RelationParams& p, bool uniform) {
  std::vector<double> z = uniform ? std::vector<double>(p.logits.size(), 0.0) : p.logits;
  z.push_back(uniform ? 0.0 : p.emb_logit);
  return softmax(z);
}

std::vector<double> normalize_min_max(std::vector<double> v) {
  if (v.empty()) return v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, span = *hi - *lo;
  for (double& x : v) x = span > 0 ? (x - a) / span : 0.0;
  return v;
}

QueryFeatures query_features(const KnowledgeBase& kb, const RuleBank& bank, const RotatEModel* emb,
                             EntityId head, RelationId r, RuleRowMode mode, const Triple* held_out) {
  if (index(head) >= kb.num_entities()) throw Error("unknown head entity id");
  if (index(r) >= kb.num_relations()) throw Error("unknown relation id");
  QueryFeatures f;
  f.num_entities = kb.num_entities();
  if (index(r) < bank.by_relation.size()) {
    const auto& ids = bank.by_relation[index(r)];
    for (std::size_t local = 0; local < ids.size(); ++local) {
      const Grounding& g = bank.groundings[ids[local]];
      const ScoreRow row = mode == RuleRowMode::kSigned ? score_row(g, head)
                           : held_out                ? evidence_row_without(kb, g, head, *held_out)
                                                     : evidence_row(g, head);
      if (row.empty()) continue;
      RuleRow rr{local, {}, {}};
      for (const auto& e : row) {
        rr.tails.push_back(static_cast<std::uint32_t>(index(e.tail)));
        rr.values.push_back(static_cast<double>(e.value));
      }
      f.rows.push_back(std::move(rr));
    }
  }
  if (emb) f.emb = normalize_min_max(emb->score_tails(head, r));
  return f;
}

MixWeights mix_weights(const RelationParams& p, const QueryFeatures& f, bool uniform) {
  std::vector<double> z;
  z.reserve(f.rows.size() + 1);
  for (const auto& row : f.rows) z.push_back(uniform ? 0.0 : p.logits.at(row.rule));
  z.push_back(uniform ? 0.0 : p.emb_logit);
  auto w = softmax(z);
  MixWeights out;
  out.emb = w.back();
  w.pop_back();
  out.rule = std::move(w);
  out.alpha = sigmoid(p.mix_logit);
  return out;
}

namespace {

// R(t) = sum_i w_i row_i(t) and the combined score.
void mix_rows(const QueryFeatures& f, const MixWeights& w, std::vector<double>& rule_part,
              std::vector<double>& score) {
  rule_part.assign(f.num_entities, 0.0);
  for (std::size_t k = 0; k < f.rows.size(); ++k) {
    const auto& row = f.rows[k];
    for (std::size_t j = 0; j < row.tails.size(); ++j) rule_part[row.tails[j]] += w.rule[k] * row.values[j];
  }
  score.resize(f.num_entities);
  for (std::size_t t = 0; t < f.num_entities; ++t) {
    const double e = f.emb.empty() ? 0.0 : f.emb[t];
    score[t] = w.alpha * rule_part[t] + (1.0 - w.alpha) * w.emb * e;
  }
}

}  // namespace

std::vector<double> combined_score(const RelationParams& p, const QueryFeatures& f, bool uniform) {
  std::vector<double> rule_part, score;
  mix_rows(f, mix_weights(p, f, uniform), rule_part, score);
  return score;
}

double query_loss(const RelationParams& p, const QueryFeatures& f, EntityId gold,
                  std::span<const EntityId> excluded, bool uniform, RelationGrad* grad) {
  const MixWeights w = mix_weights(p, f, uniform);
  std::vector<double> rule_part, score;
  mix_rows(f, w, rule_part, score);
  const std::size_t n = f.num_entities;
  const std::size_t g = index(gold);
  if (g >= n) throw Error("gold entity out of range");

  std::vector<char> candidate(n, 1);
  for (EntityId e : excluded) {
    if (index(e) < n && e != gold) candidate[index(e)] = 0;
  }
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    if (candidate[t]) hi = std::max(hi, score[t]);
  }
  double z = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (candidate[t]) z += std::exp(score[t] - hi);
  }
  const double loss = hi + std::log(z) - score[g];
  if (!grad) return loss;

  // d loss / d score(t) = p(t) - [t = gold] over candidates.
  std::vector<double> ds(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (candidate[t]) ds[t] = std::exp(score[t] - hi) / z;
  }
  ds[g] -= 1.0;

  const std::size_t m = f.rows.size();
  std::vector<double> gw(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& row = f.rows[k];
    double acc = 0.0;
    for (std::size_t j = 0; j < row.tails.size(); ++j) acc += ds[row.tails[j]] * row.values[j];
    gw[k] = w.alpha * acc;
  }
  double g_alpha = 0.0, emb_dot = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double e = f.emb.empty() ? 0.0 : f.emb[t];
    emb_dot += ds[t] * e;
    g_alpha += ds[t] * (rule_part[t] - w.emb * e);
  }
  gw[m] = (1.0 - w.alpha) * emb_dot;

  double dot = 0.0;
  for (std::size_t k = 0; k < m; ++k) dot += w.rule[k] * gw[k];
  dot += w.emb * gw[m];
  if (grad->logits.size() != p.logits.size()) grad->logits.assign(p.logits.size(), 0.0);
  if (!uniform) {
    for (std::size_t k = 0; k < m; ++k) grad->logits[f.rows[k].rule] += w.rule[k] * (gw[k] - dot);
    grad->emb_logit += w.emb * (gw[m] - dot);
  }
  grad->mix_logit += g_alpha * w.alpha * (1.0 - w.alpha);
  return loss;
}

double filtered_rank(std::span<const double> scores, EntityId gold, std::span<const EntityId> filtered) {
  const std::size_t g = index(gold);
  if (g >= scores.size()) throw Error("gold entity out of range");
  std::vector<char> skip(scores.size(), 0);
  for (EntityId e : filtered) {
    if (index(e) < scores.size()) skip[index(e)] = 1;
  }
  skip[g] = 1;
  const double s = scores[g];
  std::size_t higher = 0, tied = 0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (skip[t]) continue;
    higher += scores[t] > s;
    tied += scores[t] == s;
  }
  return 1.0 + static_cast<double>(higher) + 0.5 * static_cast<double>(tied);
}

RankingResult rank(const ReasonerParams& params, const KnowledgeBase& kb, const RuleBank& bank,
                   const RotatEModel* emb, EntityId head, RelationId r, std::optional<EntityId> gold,
                   std::size_t top_k) {
  const QueryFeatures f = query_features(kb, bank, emb, head, r, params.row_mode);
  const RelationParams& p = params.relations.at(index(r));
  const MixWeights w = mix_weights(p, f, params.uniform_weights);
  std::vector<double> rule_part, score;
  mix_rows(f, w, rule_part, score);

  RankingResult out{head, r, {}, std::nullopt};
  if (gold) out.gold_rank = filtered_rank(score, *gold, kb.known_tails(head, r));

  std::vector<std::size_t> order(score.size());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
  const std::size_t k = std::min(top_k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&score](std::size_t a, std::size_t b) {
                      return score[a] != score[b] ? score[a] > score[b] : a < b;
                    });
  const auto& ids = bank.by_relation.at(index(r));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t t = order[i];
    Candidate c{entity(t), score[t], (1.0 - w.alpha) * w.emb * (f.emb.empty() ? 0.0 : f.emb[t]), {}};
    for (std::size_t j = 0; j < f.rows.size(); ++j) {
      const double v = row_value(f.rows[j], static_cast<std::uint32_t>(t));
      if (v == 0.0) continue;
      c.rules.push_back({ids[f.rows[j].rule], w.rule[j], v, w.alpha * w.rule[j] * v});
    }
    std::stable_sort(c.rules.begin(), c.rules.end(),
                     [](const Attribution& a, const Attribution& b) { return a.contribution > b.contribution; });
    out.candidates.push_back(std::move(c));
  }
  return out;
}

std::vector<double> split_ranks(const ReasonerParams& params, const KnowledgeBase& kb,
                                const RuleBank& bank, const RotatEModel* emb, Split split) {
  const auto triples = kb.triples(split);
  std::vector<double> ranks(triples.size());
  const auto n = static_cast<std::ptrdiff_t>(triples.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Triple& t = triples[static_cast<std::size_t>(i)];
      ranks[static_cast<std::size_t>(i)] = *rank(params, kb, bank, emb, t.head, t.relation, t.tail, 0).gold_rank;
    } catch (...) {
#pragma omp critical(lesr_rank_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return ranks;
}

TrainResult train(const KnowledgeBase& kb, const RuleBank& bank, const RotatEModel* emb,
                  const TrainerConfig& cfg, const ReasonerParams* resume) {
  cfg.validate();
  if (emb && (emb->num_entities() != kb.num_entities() || emb->num_relations() != kb.num_relations())) {
    throw Error("embedding model does not match the knowledge base");
  }
  ReasonerParams params =
      resume ? *resume : ReasonerParams::initial(kb, bank, cfg.uniform_weights, cfg.row_mode);
  if (resume) {
    if (resume->uniform_weights != cfg.uniform_weights || resume->row_mode != cfg.row_mode) {
      throw Error("resume checkpoint was trained with a different weighting mode");
    }
    if (resume->relations.size() != kb.num_relations()) throw Error("resume checkpoint does not match the KB");
  }
  if (params.adam_m.size() != params.flat_size()) {
    params.adam_m.assign(params.flat_size(), 0.0);
    params.adam_v.assign(params.flat_size(), 0.0);
  }
  const auto offsets = flat_offsets(params);

  // Features depend only on (h, r); share them between queries.
  std::vector<QueryFeatures> features;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> feature_of;
  auto feature_index = [&](EntityId h, RelationId r) {
    auto [it, fresh] = feature_of.emplace(std::make_pair(index(h), index(r)), features.size());
    if (fresh) features.push_back(query_features(kb, bank, emb, h, r, params.row_mode));
    return it->second;
  };
  std::map<std::pair<std::size_t, std::size_t>, std::vector<EntityId>> train_tails;
  for (const Triple& t : kb.train()) train_tails[{index(t.head), index(t.relation)}].push_back(t.tail);
  for (auto& [key, v] : train_tails) std::sort(v.begin(), v.end());

  struct Query {
    Triple triple;
    std::size_t feature;
  };
  // Relations with a rule whose body uses the head relation itself: their
  // training queries get rows without the query fact.
  std::vector<bool> self_referencing(kb.num_relations(), false);
  for (std::size_t r = 0; r < bank.by_relation.size() && r < kb.num_relations(); ++r) {
    for (std::size_t id : bank.by_relation[r]) {
      for (const RuleAtom& a : bank.groundings[id].rule.body) self_referencing[r] = self_referencing[r] || a.relation_id == relation(r);
    }
  }
  std::vector<Query> queries;
  for (const Triple& t : kb.train()) {
    const std::size_t shared = feature_index(t.head, t.relation);
    if (params.row_mode == RuleRowMode::kEvidence && self_referencing[index(t.relation)]) {
      QueryFeatures f = query_features(kb, bank, nullptr, t.head, t.relation, params.row_mode, &t);
      f.emb = features[shared].emb;
      features.push_back(std::move(f));
      queries.push_back({t, features.size() - 1});
    } else {
      queries.push_back({t, shared});
    }
  }
  std::vector<Query> valid;
  for (const Triple& t : kb.triples(Split::kValid)) valid.push_back({t, feature_index(t.head, t.relation)});

  // Validation MRR, with the filtered validation loss to order equal MRRs.
  auto validate = [&](const ReasonerParams& p) {
    std::vector<double> ranks(valid.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      const Triple& t = valid[i].triple;
      const auto& rp = p.relations[index(t.relation)];
      const auto& f = features[valid[i].feature];
      const auto known = kb.known_tails(t.head, t.relation);
      ranks[i] = filtered_rank(combined_score(rp, f, p.uniform_weights), t.tail, known);
      loss += query_loss(rp, f, t.tail, known, p.uniform_weights);
    }
    return std::make_pair(mean_reciprocal(ranks), loss / static_cast<double>(valid.size()));
  };

  AdamConfig adam;
  adam.weight_decay = cfg.weight_decay;
  Adam opt(params.flat_size());
  opt.first_moment() = params.adam_m;
  opt.second_moment() = params.adam_v;

  TrainResult result{params, {}, false};
  double best = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(queries.size());
  const std::size_t first = params.epoch;

  for (std::size_t epoch = first; epoch < first + cfg.max_epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.gamma, static_cast<double>(epoch / cfg.step_size));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, "trainer:epoch:" + std::to_string(epoch)));
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::map<std::size_t, RelationGrad> grads;
      for (std::size_t b = start; b < end; ++b) {
        const Query& q = queries[order[b]];
        const std::size_t r = index(q.triple.relation);
        const auto& ex = train_tails[{index(q.triple.head), r}];
        total += query_loss(params.relations[r], features[q.feature], q.triple.tail, ex,
                            params.uniform_weights, &grads[r]);
      }
      ++params.step;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& [r, g] : grads) {
        RelationParams& rp = params.relations[r];
        std::vector<double> flat = flatten(rp);
        std::vector<double> gflat = g.logits;
        gflat.resize(rp.logits.size(), 0.0);
        gflat.push_back(g.emb_logit);
        gflat.push_back(g.mix_logit);
        for (double& x : gflat) x *= scale;
        if (params.uniform_weights) {
          // Rule and embedding logits stay at zero; only alpha learns.
          opt.update(std::span<double>(flat).subspan(flat.size() - 1), std::span<const double>(gflat).subspan(gflat.size() - 1),
                     offsets[r] + flat.size() - 1, params.step, lr, adam);
        } else {
          opt.update(flat, gflat, offsets[r], params.step, lr, adam);
        }
        unflatten(flat, rp);
      }
    }
    params.epoch = epoch + 1;
    params.adam_m = opt.first_moment();
    params.adam_v = opt.second_moment();
    EpochRecord rec{epoch, queries.empty() ? 0.0 : total / static_cast<double>(queries.size()), lr, std::nullopt};
    if (!valid.empty()) {
      const auto [mrr, loss] = validate(params);
      rec.valid_mrr = mrr;
      if (mrr > best || (mrr == best && loss < best_loss)) {
        best = mrr;
        best_loss = loss;
        since_best = 0;
        params.best_epoch = epoch;
        result.params = params;
      } else if (++since_best >= cfg.patience) {
        result.trace.push_back(rec);
        result.early_stopped = true;
        break;
      }
    } else {
      params.best_epoch = epoch;
      result.params = params;
    }
    result.trace.push_back(rec);
  }
  // The best snapshot keeps its weights; the epoch counter reflects all work done.
  result.params.epoch = params.epoch;
  return result;
}

void save_params(const std::filesystem::path& path, const ReasonerParams& params) {
  json rels = json::array();
  for (std::size_t r = 0; r < params.relations.size(); ++r) {
    const auto& rp = params.relations[r];
    const auto w = relation_weights(rp, params.uniform_weights);
    json rules = json::array();
    for (std::size_t i = 0; i < rp.rules.size(); ++i) {
      rules.push_back({{"rule", rp.rules[i]}, {"logit", rp.logits[i]}, {"weight", w[i]}});
    }
    rels.push_back({{"relation", params.relation_names.at(r)},
                    {"alpha", sigmoid(rp.mix_logit)},
                    {"mix_logit", rp.mix_logit},
                    {"w_emb", w.back()},
                    {"emb_logit", rp.emb_logit},
                    {"rules", std::move(rules)}});
  }
  json doc = {{"format", "lesr-params 1"},
              {"mode", params.uniform_weights ? "uniform-weights" : "weight-learning"},
              {"row_mode", row_mode_name(params.row_mode)},
              {"epoch", params.epoch},
              {"best_epoch", params.best_epoch},
              {"relations", std::move(rels)},
              {"optimizer", {{"step", params.step}, {"m", params.adam_m}, {"v", params.adam_v}}}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write params checkpoint " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("short write to " + path.string());
}

ReasonerParams load_params(const std::filesystem::path& path, const KnowledgeBase& kb,
                           const RuleBank& bank) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read params checkpoint " + path.string());
  ReasonerParams p;
  try {
    const json doc = json::parse(in);
    if (doc.at("format") != "lesr-params 1") throw Error("unknown params format");
    p.uniform_weights = doc.at("mode") == "uniform-weights";
    p.row_mode = parse_row_mode(doc.at("row_mode").get<std::string>());
    p.epoch = doc.at("epoch").get<std::size_t>();
    p.best_epoch = doc.at("best_epoch").get<std::size_t>();
    for (const auto& rel : doc.at("relations")) {
      p.relation_names.push_back(rel.at("relation").get<std::string>());
      RelationParams rp;
      rp.mix_logit = rel.at("mix_logit").get<double>();
      rp.emb_logit = rel.at("emb_logit").get<double>();
      for (const auto& rule : rel.at("rules")) {
        rp.rules.push_back(rule.at("rule").get<std::string>());
        rp.logits.push_back(rule.at("logit").get<double>());
      }
      p.relations.push_back(std::move(rp));
    }
    const auto& opt = doc.at("optimizer");
    p.step = opt.at("step").get<std::size_t>();
    p.adam_m = opt.at("m").get<std::vector<double>>();
    p.adam_v = opt.at("v").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error("malformed params checkpoint " + path.string() + ": " + e.what());
  }
  if (p.relations.size() != kb.num_relations()) {
    throw Error("params checkpoint " + path.string() + " does not match the KB relations");
  }
  const auto expected = ReasonerParams::initial(kb, bank, p.uniform_weights, p.row_mode);
  for (std::size_t r = 0; r < p.relations.size(); ++r) {
    if (p.relation_names[r] != expected.relation_names[r] || p.relations[r].rules != expected.relations[r].rules) {
      throw Error("params checkpoint " + path.string() + " does not match the rule set for relation " +
                  expected.relation_names[r]);
    }
  }
  return p;
}

}  // namespace lesr
