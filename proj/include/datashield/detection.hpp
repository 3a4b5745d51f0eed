#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "datashield/aho_corasick.hpp"
#include "datashield/text.hpp"
#include "datashield/types.hpp"

namespace datashield {

namespace llm {
class Client;
}

struct Prompt {
  std::string id;
  std::string text;  // UTF-8
  std::int64_t received_at_ms = 0;
  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct DetectionSpan {
  std::string id;
  std::string prompt_id;
  std::size_t start = 0;  // scalar offset, inclusive
  std::size_t end = 0;    // scalar offset, exclusive
  std::string surface;
  Category category = Category::kGeneName;
  Technique technique = Technique::kRule;
  Sensitivity sensitivity = Sensitivity::kMedium;
  double score = 1.0;
  std::string rationale;
  bool whole_prompt = false;

  std::size_t length() const { return end - start; }
  Color color() const { return color_of(sensitivity); }
  friend bool operator==(const DetectionSpan&, const DetectionSpan&) = default;
};

// ---------------------------------------------------------------------------
// Gazetteer

struct GazetteerEntry {
  std::string name;
  EntryKind kind = EntryKind::kGene;
  CitationTier tier = CitationTier::kOrdinary;
};

class Gazetteer {
 public:
  struct Match {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t entry = 0;
  };

  Gazetteer() = default;
  // Throws ConfigError on names shorter than two scalars or duplicates
  // after case folding.
  explicit Gazetteer(std::vector<GazetteerEntry> entries);

  // name<TAB>GENE|PROTEIN<TAB>WELL_CITED|ORDINARY, '#' comments.
  static Gazetteer parse(std::istream& in);
  static Gazetteer load(const std::filesystem::path& path);

  const std::vector<GazetteerEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  const GazetteerEntry* lookup(std::string_view name) const;

  // Case-folded, word-bounded, leftmost-longest matches over `text`.
  std::vector<Match> find(std::u32string_view text) const;

 private:
  std::vector<GazetteerEntry> entries_;
  std::vector<std::size_t> lengths_;
  std::unordered_map<std::u32string, std::size_t> by_folded_name_;
  std::shared_ptr<const AhoCorasick> index_ = std::make_shared<AhoCorasick>();
};

// Keeps the leftmost match at each position, preferring the longest, and
// drops anything overlapping an already-kept match. Input need not be sorted.
template <typename M>
std::vector<M> leftmost_longest(std::vector<M> matches);

// ---------------------------------------------------------------------------
// Rule-based scanning

inline constexpr std::u32string_view kAminoAcidAlphabet = U"ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kDefaultMinSequenceLength = 20;
inline constexpr std::string_view kProteinSequenceRule = "protein_sequence";

struct Rule {
  enum class Kind { kAlphabetRun, kRegex };

  std::string name;
  Category category = Category::kProteinSequence;
  Kind kind = Kind::kAlphabetRun;
  std::u32string alphabet;  // kAlphabetRun
  std::string pattern;      // kRegex, ECMAScript syntax over UTF-8
  std::shared_ptr<const std::regex> compiled;
  std::size_t min_length = 1;
};

class RuleConfig {
 public:
  // Just the built-in protein-sequence rule.
  static RuleConfig defaults(std::size_t min_sequence_length = kDefaultMinSequenceLength);

  // Key-value file:  rule.<name>.<key> = <value>
  // keys: kind (alphabet|regex), category, alphabet, pattern, min_length.
  // The protein_sequence rule is always present; its keys may be overridden.
  static RuleConfig parse(std::istream& in);
  static RuleConfig load(const std::filesystem::path& path);

  const std::vector<Rule>& rules() const { return rules_; }
  const Rule* find(std::string_view name) const;

 private:
  std::vector<Rule> rules_;
};

// ---------------------------------------------------------------------------
// User-defined terms and feedback suppressions

struct UserTerm {
  std::string term;
  std::string added_by;
  bool active = true;
  friend bool operator==(const UserTerm&, const UserTerm&) = default;
};

struct Suppression {
  std::string surface;  // case-folded
  Category category = Category::kGeneName;
  friend auto operator<=>(const Suppression&, const Suppression&) = default;
};

class UserTermList {
 public:
  // Returns false when an equal term (after case folding) already exists;
  // an inactive duplicate is reactivated.
  bool add(std::string_view term, std::string_view added_by = {});
  // Throws NotFoundError.
  void remove(std::string_view term);
  void set_active(std::string_view term, bool active);
  bool contains(std::string_view term) const;

  void suppress(std::string_view surface, Category category);
  bool is_suppressed(std::string_view surface, Category category) const;

  const std::vector<UserTerm>& terms() const { return terms_; }
  const std::set<Suppression>& suppressions() const { return suppressions_; }

  // One term per line, '#' comments.
  static UserTermList load(const std::filesystem::path& path, std::string_view added_by = "file");

  friend bool operator==(const UserTermList&, const UserTermList&) = default;

 private:
  std::vector<UserTerm> terms_;
  std::set<Suppression> suppressions_;
};

// ---------------------------------------------------------------------------
// Scanners

inline constexpr double kDefaultFuzzyThreshold = 0.85;

std::vector<DetectionSpan> scan_rule_based(const Prompt& prompt, const RuleConfig& rules);
std::vector<DetectionSpan> scan_gazetteer(const Prompt& prompt, const Gazetteer& gazetteer);
// Throws ArgumentError when threshold is outside (0, 1].
std::vector<DetectionSpan> scan_fuzzy(const Prompt& prompt, const UserTermList& terms,
                                      double threshold = kDefaultFuzzyThreshold);

double normalized_similarity(std::u32string_view a, std::u32string_view b);

struct IndirectResult {
  std::vector<DetectionSpan> spans;
  bool degraded = false;
  std::string error;
};

inline constexpr std::string_view kIndirectTask = "indirect_scan";

// Never throws for backend failures; they set `degraded`.
IndirectResult detect_indirect(const Prompt& prompt, llm::Client& client);

// ---------------------------------------------------------------------------
// Sensitivity

struct ClassificationContext {
  std::optional<CitationTier> citation_tier;  // set when the surface is a gazetteer entry
  bool novelty = false;
};

const std::vector<std::string>& default_novelty_lexicon();

// True when a lexicon word occurs in the sentence containing `span`.
bool novelty_in_sentence(std::u32string_view text, text::Range span,
                         const std::vector<std::string>& lexicon);

Sensitivity classify_sensitivity(const DetectionSpan& span, const ClassificationContext& ctx);

// ---------------------------------------------------------------------------
// Merging and redaction

// Throws ArgumentError when spans reference different prompts.
std::vector<DetectionSpan> merge_spans(std::vector<DetectionSpan> spans);

struct Replacement {
  DetectionSpan span;
  std::string placeholder;
  std::size_t redacted_start = 0;  // scalar offsets into the redacted text
  std::size_t redacted_end = 0;
  friend bool operator==(const Replacement&, const Replacement&) = default;
};

struct RedactedPrompt {
  std::string text;
  std::vector<Replacement> replacements;
  friend bool operator==(const RedactedPrompt&, const RedactedPrompt&) = default;
};

// Throws ArgumentError on overlapping direct spans.
RedactedPrompt redact(const Prompt& prompt, const std::vector<DetectionSpan>& spans);
// Substitutes originals back, last replacement first.
std::string restore(const RedactedPrompt& redacted);

// ---------------------------------------------------------------------------
// Full pipeline

struct DetectionConfig {
  RuleConfig rules = RuleConfig::defaults();
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  std::vector<std::string> novelty_lexicon = default_novelty_lexicon();
  bool enable_rules = true;
  bool enable_gazetteer = true;
  bool enable_fuzzy = true;
  bool enable_indirect = true;
  bool block_on_high = false;
};

struct StageTiming {
  std::int64_t rule_us = 0;
  std::int64_t gazetteer_us = 0;
  std::int64_t fuzzy_us = 0;
  std::int64_t indirect_us = 0;
  std::int64_t total_us = 0;
  friend bool operator==(const StageTiming&, const StageTiming&) = default;
};

struct DetectionResult {
  std::string prompt_id;
  std::vector<DetectionSpan> spans;  // merged direct spans, then whole-prompt findings
  bool indirect_ran = false;
  bool llm_degraded = false;
  std::string degraded_reason;
  bool blocked = false;
  StageTiming timing;

  bool has_high() const;
  std::size_t direct_count() const;
  const DetectionSpan* find_span(std::string_view span_id) const;
  friend bool operator==(const DetectionResult&, const DetectionResult&) = default;
};

// `client` may be null; indirect detection is then skipped.
DetectionResult scan_full(const Prompt& prompt, const Gazetteer& gazetteer,
                          const UserTermList& terms, llm::Client* client,
                          const DetectionConfig& config);

// Spans surviving suppression, classified, before merge. Exposed for the
// composition check in tests.
std::vector<DetectionSpan> classify_all(const Prompt& prompt, std::vector<DetectionSpan> spans,
                                        const Gazetteer& gazetteer, const UserTermList& terms,
                                        const DetectionConfig& config);

// ---------------------------------------------------------------------------
// Feedback

enum class Verdict { kConfidential, kNotConfidential };
std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);

// Throws NotFoundError when span_id is not in `result`.
void record_feedback(const DetectionResult& result, std::string_view span_id, Verdict verdict,
                     UserTermList& terms, std::string_view user = "user");

}  // namespace datashield

#include "datashield/detail/leftmost_longest.hpp"
