#include <gtest/gtest.h>

#include <sstream>

#include "datashield/error.hpp"
#include "datashield/metrics.hpp"
#include "test_paths.hpp"

using namespace datashield;

TEST(Metrics, ThreeOneOneGivesThreeQuarters) {
  const auto r = metrics_from_counts("t", {3, 1, 1});
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.75);
  EXPECT_DOUBLE_EQ(r.f1, 0.75);
  EXPECT_DOUBLE_EQ(r.accuracy, r.recall);
}

TEST(Metrics, EmptyCountsAreOne) {
  const auto r = metrics_from_counts("t", {0, 0, 0});
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
}

TEST(Metrics, NoTruePositivesGivesZeroF1) {
  const auto r = metrics_from_counts("t", {0, 2, 3});
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
  EXPECT_DOUBLE_EQ(r.f1, 0.0);
}

TEST(Metrics, UnevenCounts) {
  // 2/(2+6) and 2/(2+2), F1 = 2pr/(p+r) = 1/3
  const auto r = metrics_from_counts("t", {2, 6, 2});
  EXPECT_DOUBLE_EQ(r.precision, 0.25);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_NEAR(r.f1, 1.0 / 3.0, 1e-15);
}

TEST(Matching, ExactOffsetsAndFoldedSurface) {
  std::vector<GoldMention> gold{{0, 4, "TP53"}, {10, 14, "KRAS"}};
  DetectionSpan a;
  a.start = 0;
  a.end = 4;
  a.surface = "tp53";
  DetectionSpan b;
  b.start = 10;
  b.end = 13;
  b.surface = "KRA";
  const auto c = count_matches(gold, {a, b});
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1}));
}

// Counted by hand over the 20 fixture sentences.
TEST(Evaluation, FixtureCorpusCounts) {
  const auto corpus = load_corpus(test_paths::fixture("corpus_20.tsv"));
  ASSERT_EQ(corpus.size(), 20u);
  const auto gaz = Gazetteer::load(test_paths::fixture("gazetteer.tsv"));
  DetectorSetup setup;
  setup.gazetteer = &gaz;
  const auto r = evaluate_detection(corpus, setup);
  EXPECT_EQ(r.counts, (ConfusionCounts{18, 4, 5}));
  EXPECT_NEAR(r.precision, 18.0 / 22.0, 1e-12);
  EXPECT_NEAR(r.recall, 18.0 / 23.0, 1e-12);
  EXPECT_NEAR(r.f1, 0.8, 1e-12);
  EXPECT_EQ(r.sentences, 20u);
}

TEST(Corpus, NativeFormat) {
  std::istringstream in("# comment\n\nThe TP53 gene\t4|8|TP53\nNo genes here\t\n");
  const auto c = parse_native_corpus(in);
  ASSERT_EQ(c.size(), 2u);
  ASSERT_EQ(c[0].gold.size(), 1u);
  EXPECT_EQ(c[0].gold[0], (GoldMention{4, 8, "TP53"}));
  EXPECT_TRUE(c[1].gold.empty());
}

TEST(Corpus, NativeRejectsMismatchedSurface) {
  std::istringstream in("The TP53 gene\t4|8|KRAS\n");
  EXPECT_THROW(parse_native_corpus(in), ParseError);
}

TEST(Corpus, Bc2gmNonSpaceOffsets) {
  // Non-space indices: The=0..2, TP53=3..6, gene=7..10, binds=11..15, MDM2.=16..20
  std::istringstream sentences("P1 The TP53 gene binds MDM2.\nP2  é KRAS\n");
  std::istringstream mentions("P1|3 6|TP53\nP1|16 19|MDM2\nP2|1 4|KRAS\n");
  const auto c = parse_bc2gm_corpus(sentences, mentions);
  ASSERT_EQ(c.size(), 2u);
  ASSERT_EQ(c[0].gold.size(), 2u);
  EXPECT_EQ(c[0].gold[0], (GoldMention{4, 8, "TP53"}));
  EXPECT_EQ(c[0].gold[1], (GoldMention{20, 24, "MDM2"}));
  ASSERT_EQ(c[1].gold.size(), 1u);
  // text is " é KRAS": scalar offsets, not bytes
  EXPECT_EQ(c[1].gold[0], (GoldMention{3, 7, "KRAS"}));
}

TEST(Corpus, Bc2gmErrors) {
  std::istringstream s1("P1 text\n");
  std::istringstream m1("P9|0 1|te\n");
  EXPECT_THROW(parse_bc2gm_corpus(s1, m1), ParseError);
  std::istringstream s2("P1 text\n");
  std::istringstream m2("P1|0 40|text\n");
  EXPECT_THROW(parse_bc2gm_corpus(s2, m2), ParseError);
}

TEST(Table, HasHeaderAndPercentages) {
  const auto t = render_metrics_table({metrics_from_counts("datashield", {3, 1, 1})});
  EXPECT_NE(t.find("F1 Score (%)"), std::string::npos);
  EXPECT_NE(t.find("75.00"), std::string::npos);
}
