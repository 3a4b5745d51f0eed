#include "datashield/serialization.hpp"

#include "datashield/error.hpp"

namespace datashield {
namespace {

template <typename E, typename Parse>
E enum_from(const json& j, const char* key, Parse parse) {
  const auto s = j.at(key).get<std::string>();
  const auto v = parse(s);
  if (!v) throw ArgumentError(std::string("invalid ") + key + ": " + s);
  return *v;
}

std::optional<NodeKind> parse_node_kind(std::string_view s) {
  if (s == "user") return NodeKind::kUser;
  if (s == "gateway") return NodeKind::kGateway;
  if (s == "llm") return NodeKind::kLlm;
  if (s == "external_tool") return NodeKind::kExternalTool;
  return std::nullopt;
}

std::optional<Exposure> parse_exposure(std::string_view s) {
  if (s == "Protected") return Exposure::kProtected;
  if (s == "Exposed") return Exposure::kExposed;
  return std::nullopt;
}

template <typename T>
T opt(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

}  // namespace

void to_json(json& j, const Prompt& v) {
  j = {{"id", v.id}, {"text", v.text}, {"received_at_ms", v.received_at_ms}};
}
void from_json(const json& j, Prompt& v) {
  v.id = j.at("id").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.received_at_ms = opt<std::int64_t>(j, "received_at_ms", 0);
}

void to_json(json& j, const DetectionSpan& v) {
  j = {{"id", v.id},
       {"prompt_id", v.prompt_id},
       {"start", v.start},
       {"end", v.end},
       {"surface", v.surface},
       {"category", to_string(v.category)},
       {"technique", to_string(v.technique)},
       {"sensitivity", to_string(v.sensitivity)},
       {"color", to_string(v.color())},
       {"score", v.score},
       {"rationale", v.rationale},
       {"whole_prompt", v.whole_prompt}};
}
void from_json(const json& j, DetectionSpan& v) {
  v.id = opt<std::string>(j, "id", "");
  v.prompt_id = opt<std::string>(j, "prompt_id", "");
  v.start = j.at("start").get<std::size_t>();
  v.end = j.at("end").get<std::size_t>();
  v.surface = opt<std::string>(j, "surface", "");
  v.category = enum_from<Category>(j, "category", parse_category);
  v.technique = j.contains("technique") ? enum_from<Technique>(j, "technique", parse_technique)
                                        : Technique::kRule;
  v.sensitivity = j.contains("sensitivity")
                      ? enum_from<Sensitivity>(j, "sensitivity", parse_sensitivity)
                      : Sensitivity::kMedium;
  v.score = opt<double>(j, "score", 1.0);
  v.rationale = opt<std::string>(j, "rationale", "");
  v.whole_prompt = opt<bool>(j, "whole_prompt", false);
}

void to_json(json& j, const StageTiming& v) {
  j = {{"rule_us", v.rule_us},
       {"gazetteer_us", v.gazetteer_us},
       {"fuzzy_us", v.fuzzy_us},
       {"indirect_us", v.indirect_us},
       {"total_us", v.total_us}};
}
void from_json(const json& j, StageTiming& v) {
  v.rule_us = opt<std::int64_t>(j, "rule_us", 0);
  v.gazetteer_us = opt<std::int64_t>(j, "gazetteer_us", 0);
  v.fuzzy_us = opt<std::int64_t>(j, "fuzzy_us", 0);
  v.indirect_us = opt<std::int64_t>(j, "indirect_us", 0);
  v.total_us = opt<std::int64_t>(j, "total_us", 0);
}

json detection_report(const DetectionResult& v) {
  json spans = json::array();
  for (const auto& s : v.spans) spans.push_back(s);
  return {{"prompt_id", v.prompt_id},       {"spans", spans},
          {"indirect_ran", v.indirect_ran}, {"llm_degraded", v.llm_degraded},
          {"degraded_reason", v.degraded_reason}, {"blocked", v.blocked}};
}

void to_json(json& j, const DetectionResult& v) {
  j = detection_report(v);
  j["timing"] = v.timing;
}
void from_json(const json& j, DetectionResult& v) {
  v.prompt_id = opt<std::string>(j, "prompt_id", "");
  v.spans = j.at("spans").get<std::vector<DetectionSpan>>();
  v.indirect_ran = opt<bool>(j, "indirect_ran", false);
  v.llm_degraded = opt<bool>(j, "llm_degraded", false);
  v.degraded_reason = opt<std::string>(j, "degraded_reason", "");
  v.blocked = opt<bool>(j, "blocked", false);
  v.timing = j.contains("timing") ? j.at("timing").get<StageTiming>() : StageTiming{};
}

void to_json(json& j, const Replacement& v) {
  j = {{"span", v.span},
       {"placeholder", v.placeholder},
       {"redacted_start", v.redacted_start},
       {"redacted_end", v.redacted_end}};
}
void from_json(const json& j, Replacement& v) {
  v.span = j.at("span").get<DetectionSpan>();
  v.placeholder = j.at("placeholder").get<std::string>();
  v.redacted_start = j.at("redacted_start").get<std::size_t>();
  v.redacted_end = j.at("redacted_end").get<std::size_t>();
}

void to_json(json& j, const RedactedPrompt& v) {
  j = {{"text", v.text}, {"replacements", v.replacements}};
}
void from_json(const json& j, RedactedPrompt& v) {
  v.text = j.at("text").get<std::string>();
  v.replacements = j.at("replacements").get<std::vector<Replacement>>();
}

void to_json(json& j, const UserTerm& v) {
  j = {{"term", v.term}, {"added_by", v.added_by}, {"active", v.active}};
}
void from_json(const json& j, UserTerm& v) {
  v.term = j.at("term").get<std::string>();
  v.added_by = opt<std::string>(j, "added_by", "");
  v.active = opt<bool>(j, "active", true);
}

void to_json(json& j, const UserTermList& v) {
  json suppressions = json::array();
  for (const auto& s : v.suppressions()) {
    suppressions.push_back({{"surface", s.surface}, {"category", to_string(s.category)}});
  }
  j = {{"terms", v.terms()}, {"suppressions", suppressions}};
}
void from_json(const json& j, UserTermList& v) {
  v = UserTermList{};
  for (const auto& t : j.at("terms")) {
    const auto term = t.get<UserTerm>();
    v.add(term.term, term.added_by);
    if (!term.active) v.set_active(term.term, false);
  }
  if (j.contains("suppressions")) {
    for (const auto& s : j.at("suppressions")) {
      v.suppress(s.at("surface").get<std::string>(),
                 enum_from<Category>(s, "category", parse_category));
    }
  }
}

void to_json(json& j, const ConfusionCounts& v) {
  j = {{"tp", v.tp}, {"fp", v.fp}, {"fn", v.fn}};
}
void from_json(const json& j, ConfusionCounts& v) {
  v.tp = j.at("tp").get<std::size_t>();
  v.fp = j.at("fp").get<std::size_t>();
  v.fn = j.at("fn").get<std::size_t>();
}

void to_json(json& j, const MetricsReport& v) {
  j = {{"tool", v.tool},         {"counts", v.counts}, {"accuracy", v.accuracy},
       {"precision", v.precision}, {"recall", v.recall}, {"f1", v.f1},
       {"sentences", v.sentences}};
}
void from_json(const json& j, MetricsReport& v) {
  v.tool = j.at("tool").get<std::string>();
  v.counts = j.at("counts").get<ConfusionCounts>();
  v.accuracy = j.at("accuracy").get<double>();
  v.precision = j.at("precision").get<double>();
  v.recall = j.at("recall").get<double>();
  v.f1 = j.at("f1").get<double>();
  v.sentences = opt<std::size_t>(j, "sentences", 0);
}

void to_json(json& j, const Tool& v) {
  j = {{"id", v.id},
       {"name", v.name},
       {"tags", v.tags},
       {"policy_url", v.policy_url},
       {"description", v.description}};
}
void from_json(const json& j, Tool& v) {
  v.id = j.at("id").get<std::string>();
  v.name = opt<std::string>(j, "name", v.id);
  v.tags = opt<std::vector<std::string>>(j, "tags", {});
  v.policy_url = opt<std::string>(j, "policy_url", "");
  v.description = opt<std::string>(j, "description", "");
}

void to_json(json& j, const PolicyDocument& v) {
  j = {{"tool_id", v.tool_id},       {"raw_text", v.raw_text},
       {"fetched_at", v.fetched_at}, {"source_url", v.source_url},
       {"content_hash", v.content_hash}, {"stale", v.stale}};
}
void from_json(const json& j, PolicyDocument& v) {
  v.tool_id = j.at("tool_id").get<std::string>();
  v.raw_text = j.at("raw_text").get<std::string>();
  v.fetched_at = opt<std::int64_t>(j, "fetched_at", 0);
  v.source_url = opt<std::string>(j, "source_url", "");
  v.content_hash = opt<std::string>(j, "content_hash", "");
  v.stale = opt<bool>(j, "stale", false);
}

void to_json(json& j, const PolicyTuple& v) {
  j = {{"actor", v.actor},
       {"action", to_string(v.action)},
       {"data_type", v.data_type},
       {"object", v.object},
       {"source_sentence", v.source_sentence}};
}
void from_json(const json& j, PolicyTuple& v) {
  v.actor = j.at("actor").get<std::string>();
  v.action = enum_from<PolicyAction>(j, "action", parse_policy_action);
  v.data_type = j.at("data_type").get<std::string>();
  v.object = opt<std::string>(j, "object", "");
  v.source_sentence = j.at("source_sentence").get<std::string>();
}

void to_json(json& j, const ExtractionNote& v) {
  j = {{"kind", "user_right"}, {"text", v.text}, {"source_sentence", v.source_sentence}};
}
void from_json(const json& j, ExtractionNote& v) {
  if (opt<std::string>(j, "kind", "user_right") != "user_right") {
    throw ArgumentError("unknown note kind");
  }
  v.kind = NoteKind::kUserRight;
  v.text = j.at("text").get<std::string>();
  v.source_sentence = j.at("source_sentence").get<std::string>();
}

void to_json(json& j, const PolicyGraph& v) {
  j = {{"tuples", v.tuples}, {"notes", v.notes}, {"dropped", v.dropped}, {"degraded", v.degraded}};
}
void from_json(const json& j, PolicyGraph& v) {
  v.tuples = j.at("tuples").get<std::vector<PolicyTuple>>();
  v.notes = opt<std::vector<ExtractionNote>>(j, "notes", {});
  v.dropped = opt<std::size_t>(j, "dropped", 0);
  v.degraded = opt<bool>(j, "degraded", false);
}

void to_json(json& j, const LabelItem& v) {
  j = {{"text", v.text}, {"tuple_refs", v.tuple_refs}, {"note_refs", v.note_refs}};
}
void from_json(const json& j, LabelItem& v) {
  v.text = j.at("text").get<std::string>();
  v.tuple_refs = opt<std::vector<std::size_t>>(j, "tuple_refs", {});
  v.note_refs = opt<std::vector<std::size_t>>(j, "note_refs", {});
}

void to_json(json& j, const NutritionLabel& v) {
  j = {{"tool_id", v.tool_id}};
  for (const auto& name : label_section_names()) j[name] = label_section(v, name);
  j["retention_text"] = v.retention_text();
  j["caveats"] = v.caveats;
  j["degraded"] = v.degraded;
}
void from_json(const json& j, NutritionLabel& v) {
  v.tool_id = j.at("tool_id").get<std::string>();
  v.data_types = opt<std::vector<LabelItem>>(j, "data_types", {});
  v.purposes = opt<std::vector<LabelItem>>(j, "purposes", {});
  v.retention = opt<std::vector<LabelItem>>(j, "retention", {});
  v.security_measures = opt<std::vector<LabelItem>>(j, "security_measures", {});
  v.user_rights = opt<std::vector<LabelItem>>(j, "user_rights", {});
  v.third_parties = opt<std::vector<LabelItem>>(j, "third_parties", {});
  v.caveats = opt<std::vector<std::string>>(j, "caveats", {});
  v.degraded = opt<bool>(j, "degraded", false);
}

void to_json(json& j, const SummaryItem& v) { j = {{"item", v.text}, {"clause", v.clause}}; }
void from_json(const json& j, SummaryItem& v) {
  v.text = j.at("item").get<std::string>();
  v.clause = j.at("clause").get<std::string>();
}

void to_json(json& j, const ExposureItem& v) {
  j = {{"item", v.text}, {"status", to_string(v.status)}, {"clause", v.clause}};
}
void from_json(const json& j, ExposureItem& v) {
  v.text = j.at("item").get<std::string>();
  v.status = enum_from<Exposure>(j, "status", parse_exposure);
  v.clause = j.at("clause").get<std::string>();
}

void to_json(json& j, const InternalPolicySummary& v) {
  j = {{"confidential_data", v.confidential_data},
       {"ip_policies", v.ip_policies},
       {"protected_vs_exposed", v.protected_vs_exposed},
       {"violation_conditions", v.violation_conditions},
       {"additional_compliance", v.additional_compliance},
       {"dropped", v.dropped}};
}
void from_json(const json& j, InternalPolicySummary& v) {
  v.confidential_data = opt<std::vector<SummaryItem>>(j, "confidential_data", {});
  v.ip_policies = opt<std::vector<SummaryItem>>(j, "ip_policies", {});
  v.protected_vs_exposed = opt<std::vector<ExposureItem>>(j, "protected_vs_exposed", {});
  v.violation_conditions = opt<std::vector<SummaryItem>>(j, "violation_conditions", {});
  v.additional_compliance = opt<std::vector<SummaryItem>>(j, "additional_compliance", {});
  v.dropped = opt<std::size_t>(j, "dropped", 0);
}

void to_json(json& j, const ToolVerdict& v) {
  j = {{"tool_id", v.tool_id},
       {"verdict", to_string(v.verdict)},
       {"internal_clause", v.internal_clause},
       {"label_item", v.label_item},
       {"explanation", v.explanation},
       {"rule_based", v.rule_based}};
}
void from_json(const json& j, ToolVerdict& v) {
  v.tool_id = j.at("tool_id").get<std::string>();
  v.verdict = enum_from<ComplianceVerdict>(j, "verdict", parse_compliance_verdict);
  v.internal_clause = j.at("internal_clause").get<std::string>();
  v.label_item = opt<std::string>(j, "label_item", "");
  v.explanation = opt<std::string>(j, "explanation", "");
  v.rule_based = opt<bool>(j, "rule_based", false);
}

void to_json(json& j, const ComplianceReport& v) {
  j = {{"verdicts", v.verdicts}, {"degraded", v.degraded}};
}
void from_json(const json& j, ComplianceReport& v) {
  v.verdicts = j.at("verdicts").get<std::vector<ToolVerdict>>();
  v.degraded = opt<bool>(j, "degraded", false);
}

void to_json(json& j, const QaVerdict& v) {
  j = {{"question", v.question},         {"gold", v.gold},
       {"full_answer", v.full_answer},   {"label_answer", v.label_answer},
       {"full_correct", v.full_correct}, {"label_correct", v.label_correct},
       {"agree", v.agree}};
}
void from_json(const json& j, QaVerdict& v) {
  v.question = j.at("question").get<std::string>();
  v.gold = j.at("gold").get<std::string>();
  v.full_answer = opt<std::string>(j, "full_answer", "");
  v.label_answer = opt<std::string>(j, "label_answer", "");
  v.full_correct = opt<bool>(j, "full_correct", false);
  v.label_correct = opt<bool>(j, "label_correct", false);
  v.agree = opt<bool>(j, "agree", false);
}

void to_json(json& j, const QaReport& v) {
  j = {{"tool_id", v.tool_id},
       {"verdicts", v.verdicts},
       {"agreement_rate", v.agreement_rate},
       {"degraded", v.degraded}};
}
void from_json(const json& j, QaReport& v) {
  v.tool_id = j.at("tool_id").get<std::string>();
  v.verdicts = j.at("verdicts").get<std::vector<QaVerdict>>();
  v.agreement_rate = j.at("agreement_rate").get<double>();
  v.degraded = opt<bool>(j, "degraded", false);
}

void to_json(json& j, const FlowNode& v) {
  j = {{"id", v.id}, {"kind", to_string(v.kind)}, {"name", v.name}};
}
void from_json(const json& j, FlowNode& v) {
  v.id = j.at("id").get<std::string>();
  v.kind = enum_from<NodeKind>(j, "kind", parse_node_kind);
  v.name = opt<std::string>(j, "name", "");
}

void to_json(json& j, const FlowEdge& v) {
  j = {{"from", v.from},
       {"to", v.to},
       {"payload_summary", v.payload_summary},
       {"contains_confidential", v.contains_confidential}};
}
void from_json(const json& j, FlowEdge& v) {
  v.from = j.at("from").get<std::string>();
  v.to = j.at("to").get<std::string>();
  v.payload_summary = opt<std::string>(j, "payload_summary", "");
  v.contains_confidential = opt<bool>(j, "contains_confidential", false);
}

void to_json(json& j, const DataFlow& v) { j = {{"nodes", v.nodes}, {"edges", v.edges}}; }
void from_json(const json& j, DataFlow& v) {
  v.nodes = j.at("nodes").get<std::vector<FlowNode>>();
  v.edges = j.at("edges").get<std::vector<FlowEdge>>();
}

void to_json(json& j, const AnalysisOptions& v) {
  j = {{"redact_before_send", v.redact_before_send}, {"forward", v.forward}};
}
void from_json(const json& j, AnalysisOptions& v) {
  v.redact_before_send = opt<bool>(j, "redact_before_send", false);
  v.forward = opt<bool>(j, "forward", false);
}

void to_json(json& j, const ToolOutcome& v) {
  j = {{"tool_id", v.tool_id},
       {"label", v.label ? json(*v.label) : json(nullptr)},
       {"error", v.error},
       {"stale", v.stale},
       {"degraded", v.degraded}};
}
void from_json(const json& j, ToolOutcome& v) {
  v.tool_id = j.at("tool_id").get<std::string>();
  v.label.reset();
  if (j.contains("label") && !j.at("label").is_null()) v.label = j.at("label").get<NutritionLabel>();
  v.error = opt<std::string>(j, "error", "");
  v.stale = opt<bool>(j, "stale", false);
  v.degraded = opt<bool>(j, "degraded", false);
}

void to_json(json& j, const AnalysisEntry& v) {
  j = {{"prompt", v.prompt},
       {"options", v.options},
       {"detection", v.detection},
       {"redacted", v.redacted},
       {"tools", v.tools},
       {"compliance", v.compliance ? json(*v.compliance) : json(nullptr)},
       {"flow", v.flow},
       {"recommendations", v.recommendations},
       {"forwarded_response", v.forwarded_response},
       {"degradations", v.degradations}};
}
void from_json(const json& j, AnalysisEntry& v) {
  v.prompt = j.at("prompt").get<Prompt>();
  v.options = j.at("options").get<AnalysisOptions>();
  v.detection = j.at("detection").get<DetectionResult>();
  v.redacted = j.at("redacted").get<RedactedPrompt>();
  v.tools = j.at("tools").get<std::vector<ToolOutcome>>();
  v.compliance.reset();
  if (j.contains("compliance") && !j.at("compliance").is_null()) {
    v.compliance = j.at("compliance").get<ComplianceReport>();
  }
  v.flow = j.at("flow").get<DataFlow>();
  v.recommendations = opt<std::vector<std::string>>(j, "recommendations", {});
  v.forwarded_response = opt<std::string>(j, "forwarded_response", "");
  v.degradations = opt<std::vector<std::string>>(j, "degradations", {});
}

void to_json(json& j, const FeedbackEvent& v) {
  j = {{"span_id", v.span_id}, {"verdict", to_string(v.verdict)}, {"surface", v.surface},
       {"category", to_string(v.category)}, {"user", v.user},     {"at_ms", v.at_ms}};
}
void from_json(const json& j, FeedbackEvent& v) {
  v.span_id = j.at("span_id").get<std::string>();
  v.verdict = enum_from<Verdict>(j, "verdict", parse_verdict);
  v.surface = opt<std::string>(j, "surface", "");
  v.category = enum_from<Category>(j, "category", parse_category);
  v.user = opt<std::string>(j, "user", "");
  v.at_ms = opt<std::int64_t>(j, "at_ms", 0);
}

void to_json(json& j, const AnalysisSession& v) {
  j = {{"id", v.id},
       {"created_at_ms", v.created_at_ms},
       {"history", v.history},
       {"feedback", v.feedback},
       {"terms", v.terms}};
}
void from_json(const json& j, AnalysisSession& v) {
  v.id = j.at("id").get<std::string>();
  v.created_at_ms = opt<std::int64_t>(j, "created_at_ms", 0);
  v.history = j.at("history").get<std::vector<AnalysisEntry>>();
  v.feedback = opt<std::vector<FeedbackEvent>>(j, "feedback", {});
  v.terms = j.contains("terms") ? j.at("terms").get<UserTermList>() : UserTermList{};
}

}  // namespace datashield
