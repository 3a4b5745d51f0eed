#include <gtest/gtest.h>

#include "datashield/error.hpp"
#include "datashield/serialization.hpp"

using namespace datashield;
using nlohmann::json;

namespace {

template <typename T>
T round_trip(const T& v) {
  const json j = v;
  return json::parse(j.dump()).get<T>();
}

DetectionSpan sample_span() {
  DetectionSpan s;
  s.id = "p#0";
  s.prompt_id = "p";
  s.start = 3;
  s.end = 7;
  s.surface = "NSE2";
  s.category = Category::kGeneName;
  s.technique = Technique::kFuzzy;
  s.sensitivity = Sensitivity::kHigh;
  s.score = 0.875;
  s.rationale = "fuzzy match of 'NSE1'";
  return s;
}

}  // namespace

TEST(Serialization, SpanUsesEnumNamesAndColor) {
  const json j = sample_span();
  EXPECT_EQ(j["category"], "GeneName");
  EXPECT_EQ(j["technique"], "Fuzzy");
  EXPECT_EQ(j["sensitivity"], "High");
  EXPECT_EQ(j["color"], "Red");
  EXPECT_EQ(round_trip(sample_span()), sample_span());
}

TEST(Serialization, UnknownEnumIsRejected) {
  json j = sample_span();
  j["category"] = "Nonsense";
  EXPECT_ANY_THROW(j.get<DetectionSpan>());
}

TEST(Serialization, RedactedPromptAndTerms) {
  RedactedPrompt r{"[GENE_NAME] x", {{sample_span(), "[GENE_NAME]", 0, 11}}};
  EXPECT_EQ(round_trip(r), r);

  UserTermList terms;
  terms.add("Zeta compound", "bob");
  terms.add("Other");
  terms.set_active("Other", false);
  EXPECT_EQ(round_trip(terms), terms);
}

TEST(Serialization, PolicyTypes) {
  PolicyGraph g;
  g.tuples.push_back({"we", PolicyAction::kShare, "email address", "analytics partners", "We share."});
  g.notes.push_back({NoteKind::kUserRight, "delete data", "You can delete data."});
  g.dropped = 2;
  EXPECT_EQ(round_trip(g), g);
  EXPECT_EQ(json(g)["tuples"][0]["action"], "Share");

  NutritionLabel label;
  label.tool_id = "t";
  label.data_types.push_back({"email address", {0}, {}});
  label.user_rights.push_back({"delete data", {}, {0}});
  label.caveats.push_back("c");
  EXPECT_EQ(round_trip(label), label);
  EXPECT_EQ(json(label)["retention_text"], "not stated");

  InternalPolicySummary summary;
  summary.violation_conditions.push_back({"no sharing", "Gene sequences must not be shared."});
  summary.protected_vs_exposed.push_back({"published", Exposure::kExposed, "Published results may be shared."});
  EXPECT_EQ(round_trip(summary), summary);

  ComplianceReport report{{{"t", ComplianceVerdict::kViolation, "clause", "item", "why", true}}, false};
  EXPECT_EQ(round_trip(report), report);
}

TEST(Serialization, SessionTypes) {
  AnalysisEntry e;
  e.prompt = {"s-1", "text NSE2", 5};
  e.options = {true, false};
  e.detection.prompt_id = "s-1";
  e.detection.spans.push_back(sample_span());
  e.redacted = {"text [GENE_NAME]", {}};
  e.tools.push_back({"seqalign", std::nullopt, "fetch failed", false, false});
  e.flow.nodes.push_back({"user", NodeKind::kUser, "user"});
  e.flow.edges.push_back({"user", "gateway", "text NSE2", true});
  e.recommendations.push_back("r");
  e.degradations.push_back("d");
  const json j = e;
  EXPECT_TRUE(j["tools"][0]["label"].is_null());
  EXPECT_TRUE(j["compliance"].is_null());
  EXPECT_EQ(j["flow"]["nodes"][0]["kind"], "user");
  auto back = j.get<AnalysisEntry>();
  // Timing is not part of the persisted form.
  back.detection.timing = e.detection.timing;
  EXPECT_EQ(back, e);

  AnalysisSession s;
  s.id = "s";
  s.created_at_ms = 7;
  s.history.push_back(e);
  s.feedback.push_back({"p#0", Verdict::kNotConfidential, "NSE2", Category::kGeneName, "u", 9});
  EXPECT_EQ(json(round_trip(s)), json(s));
}

TEST(Serialization, MetricsReport) {
  const auto r = metrics_from_counts("x", {3, 1, 1});
  EXPECT_EQ(round_trip(r), r);
}
