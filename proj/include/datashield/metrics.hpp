#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "datashield/detection.hpp"

namespace datashield {

struct GoldMention {
  std::size_t start = 0;  // scalar offsets, end exclusive
  std::size_t end = 0;
  std::string surface;
  friend bool operator==(const GoldMention&, const GoldMention&) = default;
};

struct AnnotatedSentence {
  std::string id;
  std::string text;
  std::vector<GoldMention> gold;
  friend bool operator==(const AnnotatedSentence&, const AnnotatedSentence&) = default;
};

using AnnotatedCorpus = std::vector<AnnotatedSentence>;

// Native format: sentence<TAB>start|end|surface;start|end|surface
// Offsets are scalar values, end exclusive. Blank and '#' lines skipped.
AnnotatedCorpus parse_native_corpus(std::istream& in);

// BC2GM layout: a sentence file ("<id> <text>" per line) and a mention file
// ("<id>|<first> <last>|<mention>"), offsets counting non-space characters
// with inclusive ends.
AnnotatedCorpus parse_bc2gm_corpus(std::istream& sentences, std::istream& mentions);

AnnotatedCorpus load_corpus(const std::filesystem::path& path);
AnnotatedCorpus load_bc2gm_corpus(const std::filesystem::path& sentences,
                                  const std::filesystem::path& mentions);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  std::string tool;
  ConfusionCounts counts;
  double accuracy = 0.0;  // always equal to recall
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t sentences = 0;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// 0/0 precision or recall counts as 1; F1 of two zeros is 0.
MetricsReport metrics_from_counts(std::string tool, ConfusionCounts counts);

// Exact (start, end) plus case-folded surface matching.
ConfusionCounts count_matches(const std::vector<GoldMention>& gold,
                              const std::vector<DetectionSpan>& predicted);

struct DetectorSetup {
  std::string tool_name = "datashield";
  const Gazetteer* gazetteer = nullptr;
  const UserTermList* terms = nullptr;
  llm::Client* client = nullptr;
  DetectionConfig config;
};

MetricsReport evaluate_detection(const AnnotatedCorpus& corpus, const DetectorSetup& setup);

// Columns: Tool, Accuracy (%), Precision (%), Recall (%), F1 Score (%).
std::string render_metrics_table(const std::vector<MetricsReport>& reports);

}  // namespace datashield
