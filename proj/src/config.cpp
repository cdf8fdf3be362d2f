#include "lesr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace lesr {

namespace {

namespace fs = std::filesystem;

struct Context {
  PipelineConfig& cfg;
  const fs::path& base;
};

std::string fmt_double(double v) {
  // Shortest text that round-trips.
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw Error("config key " + key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("config key " + key + ": expected a number, got '" + s + "'");
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw Error("config key " + key + ": expected true or false, got '" + s + "'");
}

fs::path resolve(const fs::path& base, const std::string& s) {
  if (s.empty()) return {};
  fs::path p(s);
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

struct Key {
  std::string section;
  std::string name;
  std::string doc;
  std::function<void(Context&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
  bool hashed = true;
};

#define LESR_SIZE(sec, key, field, doc)                                                          \
  Key{sec, key, doc, [](Context& c, const std::string& v) { c.cfg.field = to_u64(sec "." key, v); }, \
      [](const PipelineConfig& c) { return std::to_string(c.field); }}
#define LESR_REAL(sec, key, field, doc)                                                             \
  Key{sec, key, doc, [](Context& c, const std::string& v) { c.cfg.field = to_double(sec "." key, v); }, \
      [](const PipelineConfig& c) { return fmt_double(c.field); }}
#define LESR_TEXT(sec, key, field, doc)                                                  \
  Key{sec, key, doc, [](Context& c, const std::string& v) { c.cfg.field = v; }, \
      [](const PipelineConfig& c) { return c.field; }}
#define LESR_PATH(sec, key, field, doc)                                                            \
  Key{sec, key, doc, [](Context& c, const std::string& v) { c.cfg.field = resolve(c.base, v); }, \
      [](const PipelineConfig& c) { return c.field.generic_string(); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k{
        LESR_PATH("kb", "train", train_path, "training triples, one 'head<TAB>relation<TAB>tail' per line (required)"),
        LESR_PATH("kb", "valid", valid_path, "validation triples (required)"),
        LESR_PATH("kb", "test", test_path, "test triples (required)"),
        LESR_PATH("run", "output_dir", output_dir, "root for run directories; each run is output_dir/run-<config hash>"),
        LESR_SIZE("run", "seed", seed, "global seed; every stage seed is derived from it"),
        LESR_SIZE("extract", "max_hops", extract.max_hops, "breadth-first hops around each target triple"),
        LESR_SIZE("extract", "max_neighbors_per_entity", extract.max_neighbors_per_entity,
                  "triples sampled per pivot entity and hop"),
        LESR_SIZE("extract", "max_subgraphs_per_relation", extract.max_subgraphs_per_relation,
                  "target triples sampled per relation"),
        Key{"propose", "backend", "offline (closed-path miner, no network) or remote (chat completion endpoint)",
            [](Context& c, const std::string& v) { c.cfg.backend.kind = parse_backend(v); },
            [](const PipelineConfig& c) { return std::string(backend_name(c.backend.kind)); }},
        LESR_TEXT("propose", "endpoint", backend.endpoint, "remote: full URL of the chat completions endpoint"),
        LESR_TEXT("propose", "model", backend.model, "remote: model name sent with each request"),
        LESR_TEXT("propose", "api_key_env", backend.api_key_env,
                  "remote: environment variable holding the bearer token"),
        LESR_REAL("propose", "timeout_seconds", backend.timeout_seconds, "remote: per-request timeout"),
        LESR_SIZE("propose", "max_retries", backend.max_retries, "remote: retries after a failed request"),
        LESR_REAL("propose", "retry_backoff_seconds", backend.retry_backoff_seconds,
                  "remote: linear backoff between retries"),
        LESR_SIZE("propose", "max_in_flight", backend.max_in_flight, "remote: concurrent requests"),
        LESR_REAL("propose", "temperature", backend.temperature, "remote: sampling temperature"),
        LESR_SIZE("propose", "max_rules_per_subgraph", backend.max_rules_per_subgraph,
                  "offline: cap on mined rules per subgraph"),
        LESR_TEXT("propose", "similarity", similarity, "relation mapping similarity provider (trigram)"),
        Key{"rotate", "enabled", "pretrain RotatE embeddings and mix them into the ranking",
            [](Context& c, const std::string& v) { c.cfg.rotate_enabled = to_bool("rotate.enabled", v); },
            [](const PipelineConfig& c) { return std::string(c.rotate_enabled ? "true" : "false"); }},
        LESR_SIZE("rotate", "dim", rotate.dim, "complex embedding dimension"),
        LESR_SIZE("rotate", "negatives", rotate.negatives, "negative tails per positive"),
        LESR_SIZE("rotate", "epochs", rotate.epochs, "training epochs"),
        LESR_SIZE("rotate", "batch_size", rotate.batch_size, "positives per batch"),
        LESR_REAL("rotate", "lr", rotate.lr, "Adam learning rate"),
        LESR_REAL("rotate", "gamma", rotate.gamma, "score margin"),
        LESR_REAL("train", "lr", train.lr, "AdamW learning rate"),
        LESR_REAL("train", "weight_decay", train.weight_decay, "AdamW decoupled weight decay"),
        LESR_SIZE("train", "step_size", train.step_size, "epochs between learning-rate decays"),
        LESR_REAL("train", "gamma", train.gamma, "learning-rate decay factor"),
        LESR_SIZE("train", "patience", train.patience, "epochs without validation improvement before stopping"),
        LESR_SIZE("train", "max_epochs", train.max_epochs, "epoch limit"),
        LESR_SIZE("train", "batch_size", train.batch_size, "queries per optimizer step"),
        Key{"train", "row_mode", "evidence (rule body counts) or signed (+A / -C scores)",
            [](Context& c, const std::string& v) { c.cfg.train.row_mode = parse_row_mode(v); },
            [](const PipelineConfig& c) { return std::string(row_mode_name(c.train.row_mode)); }},
        Key{"train", "count_cap", "saturation cap for path counts",
            [](Context& c, const std::string& v) { c.cfg.count_cap = static_cast<Count>(to_u64("train.count_cap", v)); },
            [](const PipelineConfig& c) { return std::to_string(c.count_cap); }},
        LESR_PATH("eval", "annotations", annotations,
                  "rule path annotations for the rule-quality report, JSON lines {\"rule\", \"scores\"}; empty: none"),
    };
    for (auto& key : k) {
      key.hashed = !(key.section == "run" && key.name == "output_dir") &&
                   !(key.section == "train" && key.name == "max_epochs") && key.section != "eval";
    }
    return k;
  }();
  return table;
}

#undef LESR_SIZE
#undef LESR_REAL
#undef LESR_TEXT
#undef LESR_PATH

}  // namespace

void PipelineConfig::validate() const {
  if (train_path.empty() || valid_path.empty() || test_path.empty()) {
    throw Error("config needs [kb] train, valid and test paths");
  }
  if (output_dir.empty()) throw Error("config needs a non-empty [run] output_dir");
  extract.validate();
  backend.validate();
  make_similarity(similarity);
  if (rotate_enabled) rotate.validate();
  train.validate();
  if (count_cap < 1) throw Error("train.count_cap must be positive");
}

PipelineConfig parse_config(std::istream& in, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("config syntax error: ") + e.what());
  }
  PipelineConfig cfg;
  Context ctx{cfg, base_dir};
  std::map<std::string, const Key*> lookup;
  for (const Key& k : keys()) lookup[k.section + "." + k.name] = &k;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error("config key '" + section + "' must be inside a section");
    }
    for (const auto& [name, value] : body) {
      auto it = lookup.find(section + "." + name);
      if (it == lookup.end()) throw Error("unknown config key " + section + "." + name);
      it->second->set(ctx, value.data());
    }
  }
  derive_stage_seeds(cfg);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  try {
    return parse_config(in, fs::absolute(path).parent_path());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void derive_stage_seeds(PipelineConfig& cfg) {
  cfg.extract.seed = derive_seed(cfg.seed, "stage:extract");
  cfg.rotate.seed = derive_seed(cfg.seed, "stage:rotate");
  cfg.train.seed = derive_seed(cfg.seed, "stage:train");
}

std::string canonical_config(const PipelineConfig& cfg) {
  std::vector<std::string> lines;
  for (const Key& k : keys()) {
    if (k.hashed) lines.push_back(k.section + "." + k.name + " = " + k.get(cfg));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string config_hash(const PipelineConfig& cfg) { return Fnv1a().update(canonical_config(cfg)).hex(); }

fs::path run_dir(const PipelineConfig& cfg) { return cfg.output_dir / ("run-" + config_hash(cfg)); }

std::string config_example() {
  const PipelineConfig defaults;
  std::string out = "; LeSR pipeline configuration. Relative paths resolve against this file.\n";
  std::string section;
  for (const Key& k : keys()) {
    if (k.section != section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    std::string value = k.get(defaults);
    if (k.section == "kb") value = "data/" + k.name + ".txt";
    out += "; " + k.doc + "\n" + k.name + " = " + value + "\n";
  }
  return out;
}

}  // namespace lesr
