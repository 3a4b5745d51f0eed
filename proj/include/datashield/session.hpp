#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "datashield/detection.hpp"
#include "datashield/llm.hpp"
#include "datashield/policy.hpp"

namespace datashield {

enum class NodeKind { kUser, kGateway, kLlm, kExternalTool };
std::string_view to_string(NodeKind k);

struct FlowNode {
  std::string id;
  NodeKind kind = NodeKind::kUser;
  std::string name;
  friend bool operator==(const FlowNode&, const FlowNode&) = default;
};

struct FlowEdge {
  std::string from;
  std::string to;
  std::string payload_summary;
  bool contains_confidential = false;
  friend bool operator==(const FlowEdge&, const FlowEdge&) = default;
};

struct DataFlow {
  std::vector<FlowNode> nodes;
  std::vector<FlowEdge> edges;
  // Edges whose source is the gateway: what leaves the organization.
  std::vector<const FlowEdge*> outbound() const;
  friend bool operator==(const DataFlow&, const DataFlow&) = default;
};

// True when any direct span surface occurs verbatim in `payload`.
bool payload_has_confidential(std::string_view payload, const std::vector<DetectionSpan>& spans);

struct AnalysisOptions {
  bool redact_before_send = false;
  bool forward = false;
  friend bool operator==(const AnalysisOptions&, const AnalysisOptions&) = default;
};

struct ToolOutcome {
  std::string tool_id;
  std::optional<NutritionLabel> label;
  std::string error;
  bool stale = false;
  bool degraded = false;
  friend bool operator==(const ToolOutcome&, const ToolOutcome&) = default;
};

struct AnalysisEntry {
  Prompt prompt;
  AnalysisOptions options;
  DetectionResult detection;
  RedactedPrompt redacted;
  std::vector<ToolOutcome> tools;
  std::optional<ComplianceReport> compliance;
  DataFlow flow;
  std::vector<std::string> recommendations;
  std::string forwarded_response;
  std::vector<std::string> degradations;
  friend bool operator==(const AnalysisEntry&, const AnalysisEntry&) = default;
};

struct FeedbackEvent {
  std::string span_id;
  Verdict verdict = Verdict::kConfidential;
  std::string surface;
  Category category = Category::kGeneName;
  std::string user;
  std::int64_t at_ms = 0;
  friend bool operator==(const FeedbackEvent&, const FeedbackEvent&) = default;
};

struct AnalysisSession {
  std::string id;
  std::int64_t created_at_ms = 0;
  std::vector<AnalysisEntry> history;
  std::vector<FeedbackEvent> feedback;
  UserTermList terms;
  friend bool operator==(const AnalysisSession&, const AnalysisSession&) = default;
};

struct SessionEvent {
  std::int64_t seq = 0;
  std::string kind;  // created | analyzed | feedback | terms
  nlohmann::json payload;
};

// Applies one event. Session state is the fold of its events.
void apply_event(AnalysisSession& session, const SessionEvent& event);

// Append-only event log in an embedded SQLite database.
class SessionStore {
 public:
  // ":memory:" gives a private in-memory store.
  explicit SessionStore(const std::string& path);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  // Throws StorageError when the id already exists.
  void create(const std::string& session_id, const nlohmann::json& payload);
  std::int64_t append(const std::string& session_id, const std::string& kind,
                      const nlohmann::json& payload);
  bool exists(const std::string& session_id) const;
  std::vector<SessionEvent> events(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct GatewayConfig {
  DetectionConfig detection;
  std::int64_t retrieve_k = 5;
  bool redact_before_send_default = false;
  bool forward_default = false;
  std::string llm_node_name = "science-llm";
};

// Everything the analyze pipeline needs, shared across sessions.
struct GatewayResources {
  std::shared_ptr<const Gazetteer> gazetteer = std::make_shared<Gazetteer>();
  std::shared_ptr<const ToolBank> tools = std::make_shared<ToolBank>();
  std::shared_ptr<PolicyFetcher> fetcher;                 // optional
  std::shared_ptr<llm::Client> client;                    // optional
  std::optional<InternalPolicySummary> internal_summary;  // optional
  UserTermList initial_terms;
};

class Gateway {
 public:
  Gateway(GatewayConfig config, GatewayResources resources, std::shared_ptr<SessionStore> store,
          std::function<std::int64_t()> clock_ms = nullptr);

  std::string create_session();
  // Throws NotFoundError / ArgumentError.
  AnalysisEntry analyze(const std::string& session_id, std::string_view text,
                        std::optional<AnalysisOptions> options = std::nullopt);
  void submit_feedback(const std::string& session_id, std::string_view span_id, Verdict verdict,
                       std::string_view user = "user");
  AnalysisSession get_session(const std::string& session_id) const;
  // Duplicate adds are no-ops; removing a missing term throws NotFoundError.
  UserTermList manage_terms(const std::string& session_id, const std::vector<std::string>& add,
                            const std::vector<std::string>& remove, std::string_view user = "user");

  const GatewayConfig& config() const { return config_; }

 private:
  std::shared_ptr<std::mutex> session_lock(const std::string& session_id);
  AnalysisSession load(const std::string& session_id) const;
  std::vector<ToolOutcome> run_policies(const std::vector<std::string>& tool_ids,
                                        std::vector<std::string>& degradations);

  GatewayConfig config_;
  GatewayResources resources_;
  std::shared_ptr<SessionStore> store_;
  std::function<std::int64_t()> clock_ms_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::mutex label_cache_mutex_;
  std::map<std::string, ToolOutcome> label_cache_;  // by content hash
};

}  // namespace datashield
