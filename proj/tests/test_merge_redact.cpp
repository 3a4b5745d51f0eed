#include <gtest/gtest.h>

#include <algorithm>

#include "datashield/error.hpp"
#include "support/redaction_runs.hpp"
#include "test_paths.hpp"

using namespace datashield;

namespace {

std::vector<DetectionSpan> random_spans(std::mt19937_64& rng, std::size_t n) {
  std::vector<DetectionSpan> out;
  for (std::size_t i = 0; i < n; ++i) {
    DetectionSpan s;
    s.prompt_id = "p";
    s.id = "x" + std::to_string(i);
    s.start = rng() % 30;
    s.end = s.start + 1 + rng() % 8;
    s.surface = std::string(s.end - s.start, static_cast<char>('a' + rng() % 3));
    s.category = static_cast<Category>(rng() % 4);
    s.technique = static_cast<Technique>(rng() % 4);
    s.sensitivity = static_cast<Sensitivity>(rng() % 3);
    s.score = static_cast<double>(rng() % 4) / 4.0;
    if (rng() % 10 == 0) {
      s.whole_prompt = true;
      s.category = Category::kIndirectInference;
      s.technique = Technique::kLlm;
      s.start = s.end = 0;
      s.surface.clear();
      s.rationale = "inferred " + std::to_string(rng() % 3);
    }
    out.push_back(s);
  }
  return out;
}

bool no_overlaps(const std::vector<DetectionSpan>& spans) {
  std::vector<const DetectionSpan*> direct;
  for (const auto& s : spans) {
    if (!s.whole_prompt) direct.push_back(&s);
  }
  for (std::size_t i = 1; i < direct.size(); ++i) {
    if (direct[i]->start < direct[i - 1]->end) return false;
  }
  return true;
}

}  // namespace

TEST(Merge, PermutationInvariantIdempotentNonOverlapping) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 500; ++i) {
    auto spans = random_spans(rng, 1 + rng() % 12);
    const auto merged = merge_spans(spans);
    std::shuffle(spans.begin(), spans.end(), rng);
    EXPECT_EQ(merge_spans(spans), merged);
    EXPECT_EQ(merge_spans(merged), merged);
    EXPECT_TRUE(no_overlaps(merged));
  }
}

TEST(Merge, HigherSensitivityWinsThenLonger) {
  DetectionSpan a, b, c;
  a.prompt_id = b.prompt_id = c.prompt_id = "p";
  a.start = 0, a.end = 10, a.sensitivity = Sensitivity::kMedium, a.surface = "aaaaaaaaaa";
  b.start = 5, b.end = 8, b.sensitivity = Sensitivity::kHigh, b.surface = "bbb";
  c.start = 9, c.end = 12, c.sensitivity = Sensitivity::kLow, c.surface = "ccc";
  const auto merged = merge_spans({a, b, c});
  ASSERT_EQ(merged.size(), 2u);
  EXPECT_EQ(merged[0].surface, "bbb");
  EXPECT_EQ(merged[1].surface, "ccc");
}

TEST(Merge, MixedPromptsRejected) {
  DetectionSpan a, b;
  a.prompt_id = "p";
  b.prompt_id = "q";
  EXPECT_THROW(merge_spans({a, b}), ArgumentError);
}

TEST(Redaction, RoundTripOnRandomPrompts) {
  const auto gaz = Gazetteer::load(test_paths::fixture("gazetteer.tsv"));
  const auto r = oracle::run_redaction_cases(31, 1000, gaz);
  EXPECT_EQ(r.mismatches, 0u) << r.first_failure;
  EXPECT_GT(r.with_findings, 500u);
}

TEST(Redaction, NumberedPlaceholdersInTextOrder) {
  const Prompt p{"p", "TP53 and BRCA1 and MAAPVVSGLSRQVRSFSTSVARPF", 0};
  const auto gaz = Gazetteer::load(test_paths::fixture("gazetteer.tsv"));
  const auto result = scan_full(p, gaz, {}, nullptr, DetectionConfig{});
  const auto red = redact(p, result.spans);
  EXPECT_EQ(red.text, "[GENE_NAME_1] and [GENE_NAME_2] and [PROTEIN_SEQUENCE]");
  EXPECT_EQ(restore(red), p.text);
}

TEST(Redaction, NoSpansIsIdentity) {
  const Prompt p{"p", "nothing to see here ω", 0};
  const auto red = redact(p, {});
  EXPECT_EQ(red.text, p.text);
  EXPECT_TRUE(red.replacements.empty());
}

TEST(Redaction, OverlapAndOutOfRangeRejected) {
  DetectionSpan a, b;
  a.start = 0, a.end = 4, b.start = 2, b.end = 5;
  EXPECT_THROW(redact({"p", "abcdefg", 0}, {a, b}), ArgumentError);
  DetectionSpan c;
  c.start = 3, c.end = 99;
  EXPECT_THROW(redact({"p", "abcdefg", 0}, {c}), ArgumentError);
}
