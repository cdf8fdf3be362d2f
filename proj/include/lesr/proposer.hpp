#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lesr/kb.hpp"
#include "lesr/rules.hpp"
#include "lesr/subgraph.hpp"

namespace lesr {

extern const std::string_view kRulePromptTemplate;
extern const std::string_view kInferencePromptTemplate;

// Rule-proposing prompt for a subgraph; the target slot gets
// "(head, relation, tail)" of sg.target.
std::string build_rule_prompt(const KnowledgeBase& kb, const Subgraph& sg);
// Direct-inference prompt for (head, relation, ?) over the given context.
std::string build_inference_prompt(const KnowledgeBase& kb, const std::vector<Triple>& context,
                                   EntityId head, RelationId r);

enum class BackendKind { kOfflineMiner, kRemoteChat };
std::string_view backend_name(BackendKind k);
BackendKind parse_backend(std::string_view name);

struct ProposerBackend {
  BackendKind kind = BackendKind::kOfflineMiner;
  // Remote only.
  std::string endpoint;
  std::string model;
  std::string api_key_env = "LESR_API_KEY";
  double timeout_seconds = 60.0;
  std::size_t max_retries = 2;
  double retry_backoff_seconds = 1.0;
  std::size_t max_in_flight = 4;
  double temperature = 0.0;
  // Offline miner: at most this many rules per subgraph.
  std::size_t max_rules_per_subgraph = 50;

  void validate() const;
};

struct RejectedLine {
  std::string line;
  std::string reason;

  friend bool operator==(const RejectedLine&, const RejectedLine&) = default;
};

struct ProposalRecord {
  RelationId relation{};
  std::string subgraph_id;
  std::string prompt;
  std::string raw_response;
  std::vector<Rule> parsed_rules;
  std::vector<RejectedLine> rejected;
  std::string error;  // transport failure after retries, else empty
  std::size_t attempts = 0;
};

// Each nonblank response line is either a parsed rule or a rejected line.
void parse_response(std::string_view response, ProposalRecord& record);

// Offline miner response: one rule per simple path of length 1-3 between
// target.head and target.tail in the train KB, target edge excluded.
std::string mine_closed_paths(const KnowledgeBase& kb, const Triple& target, std::size_t max_rules);

// Result of one chat call.
struct ChatResult {
  std::optional<std::string> text;
  std::string error;
  std::size_t attempts = 0;
};
// POST {model, messages: [{role: user, content: prompt}], temperature} with
// bearer auth; returns choices[0].message.content. Retries up to max_retries.
ChatResult chat_complete(const ProposerBackend& backend, const std::string& prompt);

// One record per subgraph, in subgraph order. Never throws for backend failures.
std::vector<ProposalRecord> propose(const ProposerBackend& backend, const KnowledgeBase& kb,
                                    RelationId r, const std::vector<Subgraph>& subgraphs);

// Splits a candidate list answer into at most 10 names.
std::vector<std::string> split_candidates(std::string_view response);

// Direct KBC inference baseline. Remote backends only.
std::vector<std::string> direct_infer_candidates(const ProposerBackend& backend, const KnowledgeBase& kb,
                                                 EntityId head, RelationId r, const ExtractorConfig& cfg);

void write_proposals(std::ostream& out, const KnowledgeBase& kb, const std::vector<ProposalRecord>& records);

}  // namespace lesr
