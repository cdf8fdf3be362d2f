#include "lesr/proposer.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

namespace lesr {

const std::string_view kRulePromptTemplate =
    "A knowledge subgraph describes relationships between entities using a set of triplets. Each "
    "triplet is written in the form of triplet (SUBJ, REL, OBJ), which states that entity SUBJ is of "
    "relation REL to entity OBJ.\n"
    "\n"
    "A logic rule can be applied to known triplets to deduce new ones. Each rule is written in the "
    "form of a logical implication, which states that if the conditions on the right-hand side are "
    "satisfied, then the statement on the left-hand side holds true. Here are some example rules "
    "where A, B, C are entities:\n"
    "\n"
    "IF (A, parent, B) AND  NOT (A, father, B) THEN (A, mother, B)\n"
    "\n"
    "IF (A, father, B) OR (A, mother, B) THEN (A, parent, B)\n"
    "\n"
    "IF (A, mother, B) AND (A, sibling, C) THEN (C, mother, B)\n"
    "\n"
    "Now we have the following triplets:\n"
    "{subgraph}\n"
    "\n"
    "Please generate as many of the most important logical rules based on the above knowledge "
    "subgraph to deduce triplet {target}. The rules provide general logic implications instead of "
    "using specific entities. Return the rules only without any explanations.";

const std::string_view kInferencePromptTemplate =
    "A knowledge subgraph describes relationships between entities using a set of triplets. Each "
    "triplet is written in the form of triplet (SUBJ, REL, OBJ), which states that entity SUBJ is of "
    "relation REL to entity OBJ.\n"
    "\n"
    "Now we have the following triplets:\n"
    "\n"
    "{subgraph}\n"
    "\n"
    "Please generate 10 most likely OBJ candidates to complete {query}. Return only the entity "
    "candidates without any additional text.";

namespace {

using json = nlohmann::json;

// Single pass over the template so slot values are never re-expanded.
std::string fill(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string>>& slots) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool hit = false;
    for (const auto& [key, value] : slots) {
      if (tmpl.substr(i, key.size()) == key) {
        out += value;
        i += key.size();
        hit = true;
        break;
      }
    }
    if (!hit) out += tmpl[i++];
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> nonblank_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(start, end - start));
    if (!line.empty()) out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

std::string var(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

struct Endpoint {
  std::string base;
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || (url.compare(0, scheme, "http") != 0 && url.compare(0, scheme, "https") != 0)) {
    throw Error("endpoint must be an http:// or https:// URL: '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

std::string build_rule_prompt(const KnowledgeBase& kb, const Subgraph& sg) {
  return fill(kRulePromptTemplate, {{"{subgraph}", linearize(kb, sg)}, {"{target}", format_triple(kb, sg.target)}});
}

std::string build_inference_prompt(const KnowledgeBase& kb, const std::vector<Triple>& context,
                                   EntityId head, RelationId r) {
  const std::string query = "(" + kb.name(head) + ", " + kb.name(r) + ", ?)";
  return fill(kInferencePromptTemplate, {{"{subgraph}", linearize(kb, context)}, {"{query}", query}});
}

std::string_view backend_name(BackendKind k) {
  return k == BackendKind::kOfflineMiner ? "offline" : "remote";
}

BackendKind parse_backend(std::string_view name) {
  if (name == "offline") return BackendKind::kOfflineMiner;
  if (name == "remote") return BackendKind::kRemoteChat;
  throw Error("unknown proposer backend '" + std::string(name) + "' (expected offline or remote)");
}

void ProposerBackend::validate() const {
  if (kind == BackendKind::kRemoteChat) {
    if (endpoint.empty()) throw Error("remote backend needs an endpoint");
    split_endpoint(endpoint);
    if (model.empty()) throw Error("remote backend needs a model name");
    if (!(timeout_seconds > 0)) throw Error("timeout_seconds must be positive");
    if (max_in_flight == 0) throw Error("max_in_flight must be positive");
  }
  if (max_rules_per_subgraph == 0) throw Error("max_rules_per_subgraph must be positive");
}

void parse_response(std::string_view response, ProposalRecord& record) {
  for (const auto& line : nonblank_lines(response)) {
    auto parsed = parse_rule(line);
    if (parsed) {
      record.parsed_rules.push_back(std::move(*parsed.rule));
    } else {
      record.rejected.push_back({line, parsed.error});
    }
  }
}

std::string mine_closed_paths(const KnowledgeBase& kb, const Triple& target, std::size_t max_rules) {
  const auto train = kb.train();
  std::vector<std::string> rules;
  std::unordered_set<std::string> seen;
  std::vector<EntityId> nodes{target.head};
  std::vector<std::string> atoms;

  auto dfs = [&](auto&& self) -> void {
    if (rules.size() >= max_rules) return;
    const EntityId at = nodes.back();
    for (std::uint32_t idx : kb.incident(at)) {
      if (rules.size() >= max_rules) return;
      const Triple& t = train[idx];
      if (t == target) continue;
      const bool forward = t.head == at;
      const EntityId next = forward ? t.tail : t.head;
      if (std::find(nodes.begin(), nodes.end(), next) != nodes.end()) continue;
      const std::size_t k = nodes.size() - 1;
      const std::string from = var(k), to = var(k + 1);
      atoms.push_back(forward ? "(" + from + ", " + kb.name(t.relation) + ", " + to + ")"
                              : "(" + to + ", " + kb.name(t.relation) + ", " + from + ")");
      nodes.push_back(next);
      if (next == target.tail) {
        std::string text = "IF ";
        for (std::size_t i = 0; i < atoms.size(); ++i) text += (i ? " AND " : "") + atoms[i];
        text += " THEN (A, " + kb.name(target.relation) + ", " + to + ")";
        if (seen.insert(text).second) rules.push_back(std::move(text));
      } else if (atoms.size() < kMaxBodyAtoms) {
        self(self);
      }
      nodes.pop_back();
      atoms.pop_back();
    }
  };
  if (target.head != target.tail) dfs(dfs);

  std::string out;
  for (const auto& r : rules) out += r + "\n";
  return out;
}

ChatResult chat_complete(const ProposerBackend& backend, const std::string& prompt) {
  const Endpoint ep = split_endpoint(backend.endpoint);
  const json body = {{"model", backend.model},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", backend.temperature}};
  const std::string payload = body.dump();
  const char* key = backend.api_key_env.empty() ? nullptr : std::getenv(backend.api_key_env.c_str());

  ChatResult result;
  const std::size_t attempts = 1 + backend.max_retries;
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0 && backend.retry_backoff_seconds > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backend.retry_backoff_seconds * static_cast<double>(attempt)));
    }
    ++result.attempts;
    httplib::Client client(ep.base);
    const auto secs = static_cast<time_t>(backend.timeout_seconds);
    const auto usecs = static_cast<time_t>((backend.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    if (key && *key) client.set_bearer_token_auth(key);
    auto res = client.Post(ep.path, payload, "application/json");
    if (!res) {
      result.error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      result.error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      const json doc = json::parse(res->body);
      result.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      result.error.clear();
      return result;
    } catch (const json::exception& e) {
      result.error = std::string("malformed chat response: ") + e.what();
    }
  }
  return result;
}

std::vector<ProposalRecord> propose(const ProposerBackend& backend, const KnowledgeBase& kb,
                                    RelationId r, const std::vector<Subgraph>& subgraphs) {
  backend.validate();
  std::vector<ProposalRecord> records(subgraphs.size());
  auto work = [&](std::size_t i) {
    ProposalRecord& rec = records[i];
    rec.relation = r;
    rec.subgraph_id = kb.name(r) + ":" + std::to_string(i);
    rec.prompt = build_rule_prompt(kb, subgraphs[i]);
    if (backend.kind == BackendKind::kOfflineMiner) {
      rec.attempts = 1;
      rec.raw_response = mine_closed_paths(kb, subgraphs[i].target, backend.max_rules_per_subgraph);
    } else {
      ChatResult chat = chat_complete(backend, rec.prompt);
      rec.attempts = chat.attempts;
      if (!chat.text) {
        rec.error = chat.error;
        return;
      }
      rec.raw_response = std::move(*chat.text);
    }
    parse_response(rec.raw_response, rec);
    const std::string tag = std::string(backend_name(backend.kind)) + ":" + rec.subgraph_id;
    for (Rule& rule : rec.parsed_rules) {
      rule.provenance = {tag};
      rule.target_relation = kb.name(r);
    }
  };

  if (backend.kind == BackendKind::kOfflineMiner || subgraphs.size() <= 1) {
    for (std::size_t i = 0; i < subgraphs.size(); ++i) work(i);
    return records;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t workers = std::min(backend.max_in_flight, subgraphs.size());
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < subgraphs.size(); i = next++) work(i);
    });
  }
  for (auto& t : pool) t.join();
  return records;
}

std::vector<std::string> split_candidates(std::string_view response) {
  auto lines = nonblank_lines(response);
  if (lines.size() == 1 && lines[0].find(',') != std::string::npos) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    const std::string& s = lines[0];
    while (start <= s.size()) {
      std::size_t end = s.find(',', start);
      if (end == std::string::npos) end = s.size();
      parts.push_back(s.substr(start, end - start));
      start = end + 1;
    }
    lines = std::move(parts);
  }
  std::vector<std::string> out;
  for (std::string line : lines) {
    line = trim(line);
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = trim(std::string_view(line).substr(1));
    } else {
      std::size_t i = 0;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) line = trim(std::string_view(line).substr(i + 1));
    }
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = trim(line.substr(1, line.size() - 2));
    if (line.empty()) continue;
    out.push_back(std::move(line));
    if (out.size() == 10) break;
  }
  return out;
}

std::vector<std::string> direct_infer_candidates(const ProposerBackend& backend, const KnowledgeBase& kb,
                                                 EntityId head, RelationId r, const ExtractorConfig& cfg) {
  if (backend.kind != BackendKind::kRemoteChat) {
    throw Error("direct inference needs a remote backend; the offline miner cannot answer queries");
  }
  backend.validate();
  const auto context = extract_neighborhood(kb, head, cfg);
  const ChatResult chat = chat_complete(backend, build_inference_prompt(kb, context, head, r));
  if (!chat.text) throw Error("direct inference failed after " + std::to_string(chat.attempts) + " attempts: " + chat.error);
  return split_candidates(*chat.text);
}

void write_proposals(std::ostream& out, const KnowledgeBase& kb, const std::vector<ProposalRecord>& records) {
  for (const auto& rec : records) {
    json rules = json::array();
    for (const auto& r : rec.parsed_rules) rules.push_back(format_rule(r));
    json rejected = json::array();
    for (const auto& r : rec.rejected) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
    const json line = {{"relation", kb.name(rec.relation)},
                       {"subgraph_id", rec.subgraph_id},
                       {"prompt", rec.prompt},
                       {"raw_response", rec.raw_response},
                       {"parsed_rules", std::move(rules)},
                       {"rejected", std::move(rejected)},
                       {"error", rec.error},
                       {"attempts", rec.attempts}};
    out << line.dump() << '\n';
  }
}

}  // namespace lesr
