#pragma once

#include <nlohmann/json.hpp>

#include "datashield/detection.hpp"
#include "datashield/llm.hpp"
#include "datashield/metrics.hpp"
#include "datashield/policy.hpp"
#include "datashield/session.hpp"

// JSON forms of the public types. from_json(to_json(x)) == x for each.
namespace datashield {

using nlohmann::json;

void to_json(json& j, const Prompt& v);
void from_json(const json& j, Prompt& v);
void to_json(json& j, const DetectionSpan& v);
void from_json(const json& j, DetectionSpan& v);
void to_json(json& j, const StageTiming& v);
void from_json(const json& j, StageTiming& v);
void to_json(json& j, const DetectionResult& v);
void from_json(const json& j, DetectionResult& v);
void to_json(json& j, const Replacement& v);
void from_json(const json& j, Replacement& v);
void to_json(json& j, const RedactedPrompt& v);
void from_json(const json& j, RedactedPrompt& v);
void to_json(json& j, const UserTerm& v);
void from_json(const json& j, UserTerm& v);
void to_json(json& j, const UserTermList& v);
void from_json(const json& j, UserTermList& v);

void to_json(json& j, const ConfusionCounts& v);
void from_json(const json& j, ConfusionCounts& v);
void to_json(json& j, const MetricsReport& v);
void from_json(const json& j, MetricsReport& v);

void to_json(json& j, const Tool& v);
void from_json(const json& j, Tool& v);
void to_json(json& j, const PolicyDocument& v);
void from_json(const json& j, PolicyDocument& v);
void to_json(json& j, const PolicyTuple& v);
void from_json(const json& j, PolicyTuple& v);
void to_json(json& j, const ExtractionNote& v);
void from_json(const json& j, ExtractionNote& v);
void to_json(json& j, const PolicyGraph& v);
void from_json(const json& j, PolicyGraph& v);
void to_json(json& j, const LabelItem& v);
void from_json(const json& j, LabelItem& v);
void to_json(json& j, const NutritionLabel& v);
void from_json(const json& j, NutritionLabel& v);
void to_json(json& j, const SummaryItem& v);
void from_json(const json& j, SummaryItem& v);
void to_json(json& j, const ExposureItem& v);
void from_json(const json& j, ExposureItem& v);
void to_json(json& j, const InternalPolicySummary& v);
void from_json(const json& j, InternalPolicySummary& v);
void to_json(json& j, const ToolVerdict& v);
void from_json(const json& j, ToolVerdict& v);
void to_json(json& j, const ComplianceReport& v);
void from_json(const json& j, ComplianceReport& v);
void to_json(json& j, const QaVerdict& v);
void from_json(const json& j, QaVerdict& v);
void to_json(json& j, const QaReport& v);
void from_json(const json& j, QaReport& v);

void to_json(json& j, const FlowNode& v);
void from_json(const json& j, FlowNode& v);
void to_json(json& j, const FlowEdge& v);
void from_json(const json& j, FlowEdge& v);
void to_json(json& j, const DataFlow& v);
void from_json(const json& j, DataFlow& v);
void to_json(json& j, const AnalysisOptions& v);
void from_json(const json& j, AnalysisOptions& v);
void to_json(json& j, const ToolOutcome& v);
void from_json(const json& j, ToolOutcome& v);
void to_json(json& j, const AnalysisEntry& v);
void from_json(const json& j, AnalysisEntry& v);
void to_json(json& j, const FeedbackEvent& v);
void from_json(const json& j, FeedbackEvent& v);
void to_json(json& j, const AnalysisSession& v);
void from_json(const json& j, AnalysisSession& v);

// Detection result without timing, for reproducible reports.
json detection_report(const DetectionResult& result);

}  // namespace datashield
