#include "lesr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lesr/grounding.hpp"
#include "lesr/proposer.hpp"
#include "lesr/rules.hpp"

namespace lesr {

namespace fs = std::filesystem;

std::string artifacts::params_file(bool uniform) { return uniform ? "params-uniform.json" : "params.json"; }
std::string artifacts::train_trace_file(bool uniform) {
  return uniform ? "train_trace-uniform.tsv" : "train_trace.tsv";
}
std::string artifacts::report_file(Split split, std::string_view extension) {
  return "report-" + std::string(split_name(split)) + "." + std::string(extension);
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

fs::path prepare_run(const PipelineConfig& cfg) {
  const fs::path dir = run_dir(cfg);
  fs::create_directories(dir);
  write_text(dir / artifacts::kConfig, "; effective settings of this run\n" + canonical_config(cfg));
  return dir;
}

KnowledgeBase load_run_kb(const PipelineConfig& cfg) {
  return load_kb(cfg.train_path, cfg.valid_path, cfg.test_path);
}

void require(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw Error("missing " + path.string() + "; run the '" + std::string(producer) + "' subcommand first");
  }
}

std::string relation_file(const KnowledgeBase& kb, std::size_t r) {
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%04zu_", r);
  std::string name = kb.name(relation(r));
  for (char& c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  if (name.size() > 60) name.resize(60);
  return std::string(prefix) + name + ".tsv";
}

struct Loaded {
  KnowledgeBase kb;
  std::vector<Rule> rules;  // classified rules of the rule file
  RuleBank bank;
  std::optional<RotatEModel> emb;
};

std::optional<RotatEModel> load_rotate(const PipelineConfig& cfg, const KnowledgeBase& kb, const fs::path& dir) {
  if (!cfg.rotate_enabled) return std::nullopt;
  require(dir / artifacts::kRotate, "rotate-train");
  auto model = RotatEModel::load(dir / artifacts::kRotate);
  if (model.num_entities() != kb.num_entities() || model.num_relations() != kb.num_relations()) {
    throw Error(dir.string() + "/" + artifacts::kRotate + " does not match the knowledge base");
  }
  return model;
}

Loaded load_rules_and_ground(const PipelineConfig& cfg, const fs::path& dir, std::ostream& log) {
  require(dir / artifacts::kRules, "propose");
  Loaded l{load_run_kb(cfg), {}, {}, std::nullopt};
  std::size_t unclassified = 0;
  for (Rule& r : load_rules(dir / artifacts::kRules, l.kb)) {
    if (r.classified()) {
      l.rules.push_back(std::move(r));
    } else {
      ++unclassified;
    }
  }
  if (unclassified) log << "skipping " << unclassified << " unclassified rules\n";
  const GroundingCache cache(dir / artifacts::kGroundingCache);
  l.bank = RuleBank::build(l.kb.num_relations(), ground_cached(l.kb, l.rules, &cache, cfg.count_cap));
  return l;
}

}  // namespace

std::vector<ExtractRow> cmd_extract(const PipelineConfig& cfg, std::ostream& log) {
  const auto kb = load_run_kb(cfg);
  const fs::path dir = prepare_run(cfg);
  fs::create_directories(dir / artifacts::kSubgraphDir);
  std::vector<ExtractRow> rows;
  std::string summary = "relation\ttargets\tsubgraphs\tmean_size\n";
  for (std::size_t r = 0; r < kb.num_relations(); ++r) {
    const auto targets = sample_targets(kb, relation(r), cfg.extract.max_subgraphs_per_relation, cfg.extract.seed);
    std::vector<Subgraph> sgs;
    std::size_t total = 0;
    for (const Triple& t : targets) {
      auto sg = extract_subgraph(kb, t, cfg.extract);
      if (sg.empty()) continue;
      total += sg.size();
      sgs.push_back(std::move(sg));
    }
    std::ostringstream dump;
    write_subgraphs(dump, kb, sgs);
    write_text(dir / artifacts::kSubgraphDir / relation_file(kb, r), dump.str());
    ExtractRow row{kb.name(relation(r)), targets.size(), sgs.size(),
                   sgs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(sgs.size())};
    summary += row.relation + "\t" + std::to_string(row.targets) + "\t" + std::to_string(row.subgraphs) + "\t" +
               fixed(row.mean_size, 2) + "\n";
    log << "extract " << row.relation << ": " << row.targets << " targets, " << row.subgraphs
        << " subgraphs, mean size " << fixed(row.mean_size, 2) << "\n";
    rows.push_back(std::move(row));
  }
  write_text(dir / artifacts::kExtractSummary, summary);
  log << "run directory " << dir.string() << "\n";
  return rows;
}

std::vector<ProposeStats> cmd_propose(const PipelineConfig& cfg, std::ostream& log) {
  const fs::path dir = run_dir(cfg);
  require(dir / artifacts::kExtractSummary, "extract");
  const auto kb = load_run_kb(cfg);
  prepare_run(cfg);
  const auto sim = make_similarity(cfg.similarity);

  std::vector<ProposeStats> stats(kb.num_relations());
  std::vector<Rule> accepted;
  std::ostringstream proposals;
  for (std::size_t r = 0; r < kb.num_relations(); ++r) {
    const fs::path dump = dir / artifacts::kSubgraphDir / relation_file(kb, r);
    require(dump, "extract");
    std::ifstream in(dump, std::ios::binary);
    const auto sgs = read_subgraphs(in, kb);
    const auto records = propose(cfg.backend, kb, relation(r), sgs);
    write_proposals(proposals, kb, records);

    ProposeStats& s = stats[r];
    s.relation = kb.name(relation(r));
    s.subgraphs = sgs.size();
    for (const auto& rec : records) {
      if (!rec.error.empty()) {
        ++s.backend_errors;
        log << "warning: " << rec.subgraph_id << ": " << rec.error << "\n";
      }
      s.parse_rejected += rec.rejected.size();
      s.parsed += rec.parsed_rules.size();
      for (const Rule& rule : rec.parsed_rules) {
        if (!filter_stage1(rule, s.relation).accepted) {
          ++s.stage1_rejected;
          continue;
        }
        ++s.stage1_accepted;
        Rule mapped = classify_case(map_relations(rule, kb, *sim));
        ++(mapped.classified() ? s.classified : s.unclassified);
        accepted.push_back(std::move(mapped));
      }
    }
    s.lines = s.parse_rejected + s.parsed;
  }

  const auto kept = dedup(accepted);
  for (const Rule& rule : kept) {
    if (!rule.classified()) continue;
    if (auto id = kb.find_relation(rule.target_relation)) ++stats[index(*id)].learnable;
  }
  for (auto& s : stats) s.duplicates = s.classified - s.learnable;

  write_text(dir / artifacts::kProposals, proposals.str());
  save_rules(dir / artifacts::kRules, kept);
  std::string table =
      "relation\tsubgraphs\tbackend_errors\tlines\tparse_rejected\tparsed\tstage1_rejected\tstage1_accepted\t"
      "unclassified\tclassified\tduplicates\tlearnable\n";
  for (const auto& s : stats) {
    table += s.relation;
    for (std::size_t v : {s.subgraphs, s.backend_errors, s.lines, s.parse_rejected, s.parsed, s.stage1_rejected,
                          s.stage1_accepted, s.unclassified, s.classified, s.duplicates, s.learnable}) {
      table += "\t" + std::to_string(v);
    }
    table += "\n";
    log << "propose " << s.relation << ": " << s.lines << " lines, " << s.parse_rejected << " unparseable, "
        << s.stage1_rejected << " rejected by filter, " << s.unclassified << " unclassified, " << s.duplicates
        << " duplicates, " << s.learnable << " learnable\n";
  }
  write_text(dir / artifacts::kProposeStats, table);
  return stats;
}

RotateSummary cmd_rotate_train(const PipelineConfig& cfg, std::ostream& log) {
  if (!cfg.rotate_enabled) throw Error("RotatE is disabled in this config ([rotate] enabled = false)");
  const auto kb = load_run_kb(cfg);
  const fs::path dir = prepare_run(cfg);
  const auto res = rotate_train(kb, cfg.rotate);
  res.model.save(dir / artifacts::kRotate);
  std::string trace = "epoch\tloss\n";
  for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
    trace += std::to_string(i + 1) + "\t" + fixed(res.loss_trace[i], 9) + "\n";
  }
  write_text(dir / artifacts::kRotateTrace, trace);
  RotateSummary s{res.loss_trace.size(), res.loss_trace.empty() ? 0.0 : res.loss_trace.back()};
  log << "rotate: " << s.epochs << " epochs, final loss " << fixed(s.final_loss, 6) << "\n";
  return s;
}

TrainSummary cmd_train(const PipelineConfig& cfg, bool uniform_weights, bool resume, std::ostream& log) {
  const fs::path dir = run_dir(cfg);
  auto loaded = load_rules_and_ground(cfg, dir, log);
  if (loaded.rules.empty() && !cfg.rotate_enabled) {
    throw Error("nothing to learn: the rule file has no classified rules and RotatE is disabled");
  }
  if (cfg.rotate_enabled && !fs::exists(dir / artifacts::kRotate)) cmd_rotate_train(cfg, log);
  loaded.emb = load_rotate(cfg, loaded.kb, dir);

  TrainerConfig tc = cfg.train;
  tc.uniform_weights = uniform_weights;
  const fs::path params_path = dir / artifacts::params_file(uniform_weights);
  std::optional<ReasonerParams> start;
  if (resume) {
    require(params_path, "train");
    start = load_params(params_path, loaded.kb, loaded.bank);
  }
  const auto res = train(loaded.kb, loaded.bank, loaded.emb ? &*loaded.emb : nullptr, tc, start ? &*start : nullptr);
  save_params(params_path, res.params);

  std::string trace = "epoch\tloss\tlr\tvalid_mrr\n";
  std::optional<double> best;
  for (const auto& e : res.trace) {
    trace += std::to_string(e.epoch) + "\t" + fixed(e.loss, 9) + "\t" + fixed(e.lr, 9) + "\t" +
             (e.valid_mrr ? fixed(*e.valid_mrr, 9) : std::string("-")) + "\n";
    if (e.epoch == res.params.best_epoch) best = e.valid_mrr;
  }
  write_text(dir / artifacts::train_trace_file(uniform_weights), trace);

  TrainSummary s{loaded.rules.size(), res.trace.size(), res.params.best_epoch, res.early_stopped, best};
  log << "train (" << (uniform_weights ? "uniform weights" : "weight learning") << "): " << s.rules << " rules, "
      << s.epochs_run << " epochs, best epoch " << s.best_epoch
      << (s.early_stopped ? " (early stopped)" : "") << ", validation MRR "
      << (best ? fixed(*best, 4) : std::string("-")) << "\n";
  return s;
}

EvalSummary cmd_eval(const PipelineConfig& cfg, const EvalOptions& opts, std::ostream& log) {
  const fs::path dir = run_dir(cfg);
  const bool have_wl = fs::exists(dir / artifacts::params_file(false));
  const bool have_uniform = fs::exists(dir / artifacts::params_file(true));
  if (!have_wl && !have_uniform) {
    throw Error("missing " + (dir / artifacts::params_file(false)).string() + "; run the 'train' subcommand first");
  }
  if (opts.rules_report && cfg.annotations.empty()) {
    throw Error("--rules-report needs [eval] annotations in the config");
  }
  auto loaded = load_rules_and_ground(cfg, dir, log);
  loaded.emb = load_rotate(cfg, loaded.kb, dir);
  const RotatEModel* emb = loaded.emb ? &*loaded.emb : nullptr;

  EvalSummary out;
  for (bool uniform : {false, true}) {
    if (!(uniform ? have_uniform : have_wl)) continue;
    const auto params = load_params(dir / artifacts::params_file(uniform), loaded.kb, loaded.bank);
    out.rows.emplace_back(uniform ? "LeSR-uniform" : "LeSR",
                          evaluate_model(params, loaded.kb, loaded.bank, emb, opts.split));
  }
  if (opts.inference_baseline) {
    out.rows.emplace_back("Inference", evaluate_inference_baseline(loaded.kb, cfg.backend, opts.split, cfg.extract));
  }
  if (opts.rules_report) {
    out.quality = compute_rule_quality(loaded.rules, load_annotations(cfg.annotations));
  }

  out.table = "split: " + std::string(split_name(opts.split)) + "\n" + render_metrics_table(out.rows);
  if (out.quality) out.table += "\nrule quality\n" + render_rule_quality(*out.quality);
  write_text(dir / artifacts::report_file(opts.split, "txt"), out.table);
  write_text(dir / artifacts::report_file(opts.split, "json"), report_json(out.rows, out.quality));
  if (opts.emit_csv) write_text(dir / artifacts::report_file(opts.split, "csv"), metrics_csv(out.rows));
  log << out.table;
  return out;
}

std::vector<std::string> instantiate_paths(const KnowledgeBase& kb, const Rule& rule, EntityId head, EntityId tail,
                                           std::size_t limit) {
  std::vector<std::string> out;
  std::map<std::string, EntityId> bound{{rule.head.subject, head}};
  if (auto [it, fresh] = bound.emplace(rule.head.object, tail); !fresh && it->second != tail) return out;
  std::vector<Triple> chosen;
  const auto train = kb.train();

  auto step = [&](auto&& self, std::size_t i) -> void {
    if (out.size() >= limit) return;
    if (i == rule.body.size()) {
      std::string text;
      for (std::size_t k = 0; k < chosen.size(); ++k) text += (k ? " AND " : "") + format_triple(kb, chosen[k]);
      out.push_back(std::move(text));
      return;
    }
    const RuleAtom& atom = rule.body[i];
    if (!atom.relation_id) return;
    auto s = bound.find(atom.subject);
    auto o = bound.find(atom.object);
    auto visit = [&](const Triple& t) {
      if (t.relation != *atom.relation_id) return;
      if (s != bound.end() && s->second != t.head) return;
      if (o != bound.end() && o->second != t.tail) return;
      const bool new_s = s == bound.end(), new_o = o == bound.end();
      if (new_s) bound[atom.subject] = t.head;
      if (new_o) bound[atom.object] = t.tail;
      chosen.push_back(t);
      self(self, i + 1);
      chosen.pop_back();
      if (new_s) bound.erase(atom.subject);
      if (new_o) bound.erase(atom.object);
      s = bound.find(atom.subject);
      o = bound.find(atom.object);
    };
    if (s != bound.end() || o != bound.end()) {
      const EntityId pivot = s != bound.end() ? s->second : o->second;
      for (std::uint32_t idx : kb.incident(pivot)) visit(train[idx]);
    } else {
      for (std::uint32_t idx : kb.with_relation(*atom.relation_id)) visit(train[idx]);
    }
  };
  step(step, 0);
  return out;
}

namespace {

struct Resolved {
  EntityId head;
  RelationId relation;
};

std::vector<std::string> nearest(const Vocabulary& vocab, const std::string& query, std::size_t k) {
  const TrigramSimilarity sim;
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < vocab.size(); ++i) scored.emplace_back(-sim.score(query, vocab.name(i)), i);
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(vocab.name(scored[i].second));
  return out;
}

Resolved resolve_query(const KnowledgeBase& kb, const std::string& query) {
  std::vector<std::string> tokens;
  std::istringstream in(query);
  for (std::string t; in >> t;) tokens.push_back(t);
  if (tokens.size() < 2) throw Error("query must be \"<head entity> <relation>\", got '" + query + "'");
  auto join = [&](std::size_t a, std::size_t b) {
    std::string s;
    for (std::size_t i = a; i < b; ++i) s += (i > a ? " " : "") + tokens[i];
    return s;
  };
  for (std::size_t cut = tokens.size() - 1; cut >= 1; --cut) {
    auto h = kb.find_entity(join(0, cut));
    auto r = kb.find_relation(join(cut, tokens.size()));
    if (h && r) return {*h, *r};
  }
  const std::string head_guess = join(0, tokens.size() - 1), rel_guess = tokens.back();
  std::string msg = "cannot resolve query '" + query + "'.";
  if (!kb.find_entity(head_guess)) {
    msg += " Unknown entity '" + head_guess + "'; closest: ";
    const auto near = nearest(kb.entities(), head_guess, 5);
    for (std::size_t i = 0; i < near.size(); ++i) msg += (i ? ", " : "") + near[i];
    msg += ".";
  }
  if (!kb.find_relation(rel_guess)) {
    msg += " Unknown relation '" + rel_guess + "'; closest: ";
    const auto near = nearest(kb.relations(), rel_guess, 5);
    for (std::size_t i = 0; i < near.size(); ++i) msg += (i ? ", " : "") + near[i];
    msg += ".";
  }
  throw Error(msg);
}

}  // namespace

Explanation cmd_explain(const PipelineConfig& cfg, const std::string& query, std::size_t top_k, std::ostream& log) {
  const fs::path dir = run_dir(cfg);
  const bool uniform = !fs::exists(dir / artifacts::params_file(false)) && fs::exists(dir / artifacts::params_file(true));
  require(dir / artifacts::params_file(uniform), "train");
  std::ostringstream quiet;
  auto loaded = load_rules_and_ground(cfg, dir, quiet);
  const Resolved q = resolve_query(loaded.kb, query);
  loaded.emb = load_rotate(cfg, loaded.kb, dir);
  const auto params = load_params(dir / artifacts::params_file(uniform), loaded.kb, loaded.bank);
  const auto ranking = rank(params, loaded.kb, loaded.bank, loaded.emb ? &*loaded.emb : nullptr, q.head, q.relation,
                            std::nullopt, top_k);

  Explanation ex;
  ex.head = loaded.kb.name(q.head);
  ex.relation = loaded.kb.name(q.relation);
  ex.text = "query (" + ex.head + ", " + ex.relation + ", ?)\n";
  for (std::size_t i = 0; i < ranking.candidates.size(); ++i) {
    const Candidate& c = ranking.candidates[i];
    ExplainedCandidate ec{loaded.kb.name(c.tail), c.score, c.embedding_contribution, {}};
    ex.text += std::to_string(i + 1) + ". " + ec.tail + "  score " + fixed(c.score, 8) + "\n";
    if (loaded.emb) ex.text += "     embedding  contribution " + fixed(c.embedding_contribution, 8) + "\n";
    for (const Attribution& a : c.rules) {
      const Rule& rule = loaded.bank.groundings[a.grounding].rule;
      ExplainedRule er{format_rule(rule), a.weight, a.value, a.contribution,
                       instantiate_paths(loaded.kb, rule, q.head, c.tail, 3)};
      ex.text += "     rule " + er.rule + "  weight " + fixed(a.weight, 6) + " x value " + fixed(a.value, 6) +
                 " = contribution " + fixed(a.contribution, 8) + "\n";
      for (const auto& p : er.paths) ex.text += "       via " + p + "\n";
      ec.rules.push_back(std::move(er));
    }
    ex.candidates.push_back(std::move(ec));
  }
  if (ranking.candidates.empty()) ex.text += "no candidates\n";
  log << ex.text;
  return ex;
}

}  // namespace lesr
