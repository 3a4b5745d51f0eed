#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "datashield/detection.hpp"

namespace datashield {

namespace llm {
class Client;
}

// ---------------------------------------------------------------------------
// Tool bank

struct Tool {
  std::string id;
  std::string name;
  std::vector<std::string> tags;
  std::string policy_url;
  std::string description;
  friend bool operator==(const Tool&, const Tool&) = default;
};

class ToolBank {
 public:
  ToolBank() = default;
  // Throws ConfigError on duplicate ids or tools without tags.
  explicit ToolBank(std::vector<Tool> tools);

  // {"tools": [{"id", "name", "tags": [...], "policy_url", "description"}]}
  static ToolBank parse(std::string_view json_text);
  static ToolBank load(const std::filesystem::path& path);

  const std::vector<Tool>& tools() const { return tools_; }
  const Tool* find(std::string_view id) const;
  bool empty() const { return tools_.empty(); }

 private:
  std::vector<Tool> tools_;
};

struct ToolMatch {
  std::string tool_id;
  int relevance = 0;
};

// Stage one: tag-word overlap with prompt words. Stage two (when `client`
// is given): the model may drop candidates. Sorted by relevance, then id.
std::vector<std::string> identify_tools(const Prompt& prompt, const ToolBank& bank,
                                        llm::Client* client);
std::vector<ToolMatch> match_tool_tags(const Prompt& prompt, const ToolBank& bank);

// ---------------------------------------------------------------------------
// Policy documents and cache

struct PolicyDocument {
  std::string tool_id;
  std::string raw_text;
  std::int64_t fetched_at = 0;  // unix seconds
  std::string source_url;
  std::string content_hash;  // sha256 hex of raw_text
  bool stale = false;
  friend bool operator==(const PolicyDocument&, const PolicyDocument&) = default;
};

std::string sha256_hex(std::string_view data);

// Removes script/style blocks and tags, decodes common entities and
// collapses whitespace.
std::string strip_markup(std::string_view html);

struct HttpResponse {
  int status = 0;
  std::string content_type;
  std::string body;
};

// Performs one GET. Throws FetchError on transport failure.
using HttpTransport = std::function<HttpResponse(const std::string& url)>;

HttpTransport default_http_transport(std::chrono::milliseconds timeout = std::chrono::seconds(20));

struct FetcherConfig {
  std::filesystem::path cache_dir;
  std::chrono::seconds ttl = std::chrono::hours(24 * 7);
  bool offline = false;
  // url -> local file served instead of the network.
  std::map<std::string, std::filesystem::path> fixtures;
};

// Content-addressed cache: <cache_dir>/objects/<hash>.txt plus
// <cache_dir>/index.json mapping tool id -> {hash, fetched_at, source_url}.
class PolicyFetcher {
 public:
  explicit PolicyFetcher(FetcherConfig config, HttpTransport transport = nullptr,
                         std::function<std::int64_t()> clock = nullptr);

  // Throws NotFoundError, FetchError or ContentError.
  PolicyDocument fetch(std::string_view tool_id, const ToolBank& bank);

  std::size_t network_calls() const { return network_calls_; }

 private:
  struct IndexEntry {
    std::string hash;
    std::int64_t fetched_at = 0;
    std::string source_url;
  };

  std::optional<PolicyDocument> load_cached(const std::string& tool_id);
  void store(const PolicyDocument& doc);
  std::map<std::string, IndexEntry> read_index() const;
  void write_index(const std::map<std::string, IndexEntry>& index) const;
  std::string retrieve(const std::string& url);

  FetcherConfig config_;
  HttpTransport transport_;
  std::function<std::int64_t()> clock_;
  std::mutex mutex_;
  std::size_t network_calls_ = 0;
};

// ---------------------------------------------------------------------------
// Policy graph (first summarization layer)

enum class PolicyAction { kCollect, kUse, kShare, kRetain, kSecure };
std::string_view to_string(PolicyAction a);
std::optional<PolicyAction> parse_policy_action(std::string_view s);

struct PolicyTuple {
  std::string actor;
  PolicyAction action = PolicyAction::kCollect;
  std::string data_type;
  // Purpose for Collect/Use/Retain(period), recipient for Share, measure for Secure.
  std::string object;
  std::string source_sentence;
  friend auto operator<=>(const PolicyTuple&, const PolicyTuple&) = default;
};

enum class NoteKind { kUserRight };

struct ExtractionNote {
  NoteKind kind = NoteKind::kUserRight;
  std::string text;
  std::string source_sentence;
  friend bool operator==(const ExtractionNote&, const ExtractionNote&) = default;
};

struct PolicyGraph {
  std::vector<PolicyTuple> tuples;
  std::vector<ExtractionNote> notes;
  std::size_t dropped = 0;
  bool degraded = false;
  friend bool operator==(const PolicyGraph&, const PolicyGraph&) = default;
};

inline constexpr std::string_view kPolicyExtractTask = "policy_extract";

// True when source_sentence (whitespace-normalized) occurs in raw_text.
bool grounded(const PolicyTuple& tuple, std::string_view raw_text);

// Pattern pass only.
std::vector<PolicyTuple> extract_tuples_from_sentence(std::string_view sentence);
std::vector<std::string> policy_sentences(std::string_view raw_text);

// Ungrounded tuples are dropped and counted; `client` may be null.
PolicyGraph extract_graph(const PolicyDocument& doc, llm::Client* client);
// Validates externally produced tuples against the grounding invariant.
PolicyGraph ground_tuples(std::vector<PolicyTuple> tuples, std::string_view raw_text);

// ---------------------------------------------------------------------------
// Nutrition label (second summarization layer)

inline constexpr std::string_view kNotStated = "not stated";
inline constexpr std::string_view kLabelCondenseTask = "label_condense";

struct LabelItem {
  std::string text;
  std::vector<std::size_t> tuple_refs;  // indices into PolicyGraph::tuples
  std::vector<std::size_t> note_refs;   // indices into PolicyGraph::notes
  friend bool operator==(const LabelItem&, const LabelItem&) = default;
};

struct NutritionLabel {
  std::string tool_id;
  std::vector<LabelItem> data_types;
  std::vector<LabelItem> purposes;
  std::vector<LabelItem> retention;  // rendered as one string
  std::vector<LabelItem> security_measures;
  std::vector<LabelItem> user_rights;
  std::vector<LabelItem> third_parties;
  std::vector<std::string> caveats;
  bool degraded = false;

  std::string retention_text() const;
  std::vector<std::string> texts(const std::vector<LabelItem>& section) const;
  friend bool operator==(const NutritionLabel&, const NutritionLabel&) = default;
};

// Names of the six content sections, in display order.
const std::vector<std::string>& label_section_names();
const std::vector<LabelItem>& label_section(const NutritionLabel& label, std::string_view name);

NutritionLabel make_label(const PolicyGraph& graph, const PolicyDocument& doc, llm::Client* client);

std::string render_label_text(const NutritionLabel& label);

// Union view across several tools' labels; items keep per-tool provenance
// in their text ("item (tool)").
NutritionLabel union_label(const std::vector<NutritionLabel>& labels);

// ---------------------------------------------------------------------------
// Internal policy summary

enum class Exposure { kProtected, kExposed };
std::string_view to_string(Exposure e);

struct SummaryItem {
  std::string text;
  std::string clause;  // verbatim excerpt of the code of conduct
  friend bool operator==(const SummaryItem&, const SummaryItem&) = default;
};

struct ExposureItem {
  std::string text;
  Exposure status = Exposure::kProtected;
  std::string clause;
  friend bool operator==(const ExposureItem&, const ExposureItem&) = default;
};

struct InternalPolicySummary {
  std::vector<SummaryItem> confidential_data;
  std::vector<SummaryItem> ip_policies;
  std::vector<ExposureItem> protected_vs_exposed;
  std::vector<SummaryItem> violation_conditions;
  std::vector<SummaryItem> additional_compliance;
  std::size_t dropped = 0;
  friend bool operator==(const InternalPolicySummary&, const InternalPolicySummary&) = default;
};

inline constexpr std::string_view kInternalSummaryTask = "internal_summary";

// Section keys used in requests to the model, in display order.
const std::vector<std::string>& internal_section_keys();

// Throws ArgumentError on empty text and LlmError when the model fails.
InternalPolicySummary summarize_internal(std::string_view code_of_conduct, llm::Client& client);

// ---------------------------------------------------------------------------
// Compliance

enum class ComplianceVerdict { kCompliant, kViolation, kUnclear };
std::string_view to_string(ComplianceVerdict v);
std::optional<ComplianceVerdict> parse_compliance_verdict(std::string_view s);

struct ToolVerdict {
  std::string tool_id;
  ComplianceVerdict verdict = ComplianceVerdict::kUnclear;
  std::string internal_clause;
  std::string label_item;
  std::string explanation;
  bool rule_based = false;
  friend bool operator==(const ToolVerdict&, const ToolVerdict&) = default;
};

struct ComplianceReport {
  std::vector<ToolVerdict> verdicts;
  bool degraded = false;
  friend bool operator==(const ComplianceReport&, const ComplianceReport&) = default;
};

inline constexpr std::string_view kAdjudicationUnavailable = "adjudication unavailable";
inline constexpr std::string_view kComplianceTask = "compliance_adjudicate";

struct ForbiddenSharing {
  std::string category;  // e.g. "gene sequences"
  std::string clause;
};

// Clauses of the form "<category> must not be shared with ..." and similar.
std::vector<ForbiddenSharing> forbidden_sharing(const InternalPolicySummary& internal);

// Content-word overlap after case folding and plural stripping.
bool category_overlap(std::string_view data_type, std::string_view category);

ComplianceReport check_compliance(const std::vector<NutritionLabel>& labels,
                                  const InternalPolicySummary& internal, llm::Client* client);

std::string render_compliance_text(const ComplianceReport& report);

// ---------------------------------------------------------------------------
// Question-answer evaluation of labels

struct QaItem {
  std::string question;
  std::string gold;
};

struct QaVerdict {
  std::string question;
  std::string gold;
  std::string full_answer;
  std::string label_answer;
  bool full_correct = false;
  bool label_correct = false;
  bool agree = false;
  friend bool operator==(const QaVerdict&, const QaVerdict&) = default;
};

struct QaReport {
  std::string tool_id;
  std::vector<QaVerdict> verdicts;
  double agreement_rate = 0.0;
  bool degraded = false;
  friend bool operator==(const QaReport&, const QaReport&) = default;
};

inline constexpr std::string_view kQaTask = "qa_answer";

// Throws ArgumentError on an empty question set. With no client (or a
// failing one) the context itself is used as the answer.
QaReport evaluate_summaries(const PolicyDocument& doc, const NutritionLabel& label,
                            const std::vector<QaItem>& questions, llm::Client* client);

// question<TAB>gold answer per line.
std::vector<QaItem> load_questions(const std::filesystem::path& path);

}  // namespace datashield
