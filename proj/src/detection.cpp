#include "datashield/detection.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "datashield/error.hpp"
#include "datashield/llm.hpp"

namespace datashield {
namespace {

std::string folded(std::string_view s) { return text::fold_case_utf8(s); }

// Suppression key: the surface, or the rationale for whole-prompt findings.
std::string suppression_key(const DetectionSpan& span) {
  return span.whole_prompt ? span.rationale : span.surface;
}

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int sensitivity_rank(Sensitivity s) {
  switch (s) {
    case Sensitivity::kHigh: return 0;
    case Sensitivity::kMedium: return 1;
    case Sensitivity::kLow: return 2;
  }
  return 1;
}

int technique_rank(Technique t) {
  switch (t) {
    case Technique::kFuzzy: return 0;
    case Technique::kGazetteer: return 1;
    case Technique::kRule: return 2;
    case Technique::kLlm: return 3;
  }
  return 4;
}

// Total order used for overlap resolution; the winner sorts first.
bool merge_priority(const DetectionSpan& a, const DetectionSpan& b) {
  const auto key = [](const DetectionSpan& s) {
    return std::make_tuple(sensitivity_rank(s.sensitivity), -static_cast<long long>(s.length()),
                           technique_rank(s.technique), -s.score, s.start,
                           static_cast<int>(s.category), std::cref(s.surface),
                           std::cref(s.rationale), std::cref(s.id));
  };
  return key(a) < key(b);
}

bool span_order(const DetectionSpan& a, const DetectionSpan& b) {
  return std::tie(a.start, a.end) < std::tie(b.start, b.end) ||
         (std::tie(a.start, a.end) == std::tie(b.start, b.end) && merge_priority(a, b));
}

std::int64_t micros_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                               t0)
      .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// UserTermList

bool UserTermList::add(std::string_view term, std::string_view added_by) {
  const auto t = text::trim(term);
  if (t.empty()) throw ArgumentError("term must not be empty");
  const auto key = folded(t);
  for (auto& existing : terms_) {
    if (folded(existing.term) == key) {
      if (existing.active) return false;
      existing.active = true;
      return true;
    }
  }
  terms_.push_back({t, std::string(added_by), true});
  return true;
}

void UserTermList::remove(std::string_view term) {
  const auto key = folded(text::trim(term));
  const auto it = std::find_if(terms_.begin(), terms_.end(),
                               [&](const UserTerm& t) { return folded(t.term) == key; });
  if (it == terms_.end()) throw NotFoundError("term '" + std::string(term) + "' not found");
  terms_.erase(it);
}

void UserTermList::set_active(std::string_view term, bool active) {
  const auto key = folded(text::trim(term));
  for (auto& t : terms_) {
    if (folded(t.term) == key) {
      t.active = active;
      return;
    }
  }
  throw NotFoundError("term '" + std::string(term) + "' not found");
}

bool UserTermList::contains(std::string_view term) const {
  const auto key = folded(text::trim(term));
  return std::any_of(terms_.begin(), terms_.end(),
                     [&](const UserTerm& t) { return folded(t.term) == key; });
}

void UserTermList::suppress(std::string_view surface, Category category) {
  suppressions_.insert({folded(surface), category});
}

bool UserTermList::is_suppressed(std::string_view surface, Category category) const {
  return suppressions_.count({folded(surface), category}) > 0;
}

UserTermList UserTermList::load(const std::filesystem::path& path, std::string_view added_by) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open terms file " + path.string());
  UserTermList list;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    list.add(t, added_by);
  }
  return list;
}

// ---------------------------------------------------------------------------
// Fuzzy scanning

double normalized_similarity(std::u32string_view a, std::u32string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

std::vector<DetectionSpan> scan_fuzzy(const Prompt& prompt, const UserTermList& terms,
                                      double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ArgumentError("fuzzy threshold must be in (0, 1]");
  }
  const auto original = text::decode_utf8(prompt.text);
  const auto scalars = text::fold_case(original);
  const std::size_t n = scalars.size();

  // Windows start at a word start and end at a word end.
  std::vector<std::size_t> starts;
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < n; ++i) {
    const bool w = text::is_word_char(scalars[i]);
    if (w && (i == 0 || !text::is_word_char(scalars[i - 1]))) starts.push_back(i);
    if (w && (i + 1 == n || !text::is_word_char(scalars[i + 1]))) ends.push_back(i + 1);
  }

  std::vector<DetectionSpan> spans;
  for (const auto& term : terms.terms()) {
    if (!term.active) continue;
    const auto needle = text::fold_case(text::decode_utf8(term.term));
    const std::size_t len = needle.size();
    if (len == 0) continue;
    const std::size_t lo = len > 2 ? len - 2 : 1;
    const std::size_t hi = len + 2;
    for (const std::size_t s : starts) {
      auto it = std::lower_bound(ends.begin(), ends.end(), s + lo);
      for (; it != ends.end() && *it - s <= hi; ++it) {
        const std::u32string_view window = std::u32string_view(scalars).substr(s, *it - s);
        const double sim = normalized_similarity(window, needle);
        if (sim < threshold) continue;
        DetectionSpan span;
        span.prompt_id = prompt.id;
        span.start = s;
        span.end = *it;
        span.surface = text::encode_utf8(std::u32string_view(original).substr(s, *it - s));
        span.category = Category::kUserTerm;
        span.technique = Technique::kFuzzy;
        span.score = sim;
        span.rationale = "user-defined term '" + term.term + "'";
        spans.push_back(std::move(span));
      }
    }
  }
  std::stable_sort(spans.begin(), spans.end(), [](const DetectionSpan& a, const DetectionSpan& b) {
    return std::tie(a.start, a.end) < std::tie(b.start, b.end);
  });
  return spans;
}

// ---------------------------------------------------------------------------
// Indirect inference

IndirectResult detect_indirect(const Prompt& prompt, llm::Client& client) {
  IndirectResult result;
  std::string response;
  try {
    response = client.complete(kIndirectTask, {{"prompt", prompt.text}});
  } catch (const Error& e) {
    result.degraded = true;
    result.error = e.what();
    return result;
  }

  const auto trimmed = text::trim(response);
  if (trimmed.empty() || text::fold_case_utf8(trimmed) == "none") return result;

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(trimmed);
  } catch (const nlohmann::json::exception&) {
    result.degraded = true;
    result.error = "unparseable indirect-scan response";
    return result;
  }
  if (parsed.is_object() && parsed.contains("findings")) parsed = parsed["findings"];
  if (!parsed.is_array()) {
    result.degraded = true;
    result.error = "indirect-scan response is not a list";
    return result;
  }
  for (const auto& item : parsed) {
    if (!item.is_object()) continue;
    const auto entity = item.value("entity", std::string{});
    auto explanation = item.value("rationale", std::string{});
    double confidence = 0.5;
    if (item.contains("confidence") && item["confidence"].is_number()) {
      confidence = item["confidence"].get<double>();
    }
    if (entity.empty() && explanation.empty()) continue;
    DetectionSpan span;
    span.prompt_id = prompt.id;
    span.category = Category::kIndirectInference;
    span.technique = Technique::kLlm;
    span.whole_prompt = true;
    span.score = std::clamp(confidence, 0.0, 1.0);
    if (!entity.empty() && explanation.find(entity) == std::string::npos) {
      explanation = explanation.empty() ? entity : entity + ": " + explanation;
    }
    span.rationale = explanation;
    result.spans.push_back(std::move(span));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sensitivity

const std::vector<std::string>& default_novelty_lexicon() {
  static const std::vector<std::string> kLexicon{"novel", "unpublished", "proprietary",
                                                 "unreleased"};
  return kLexicon;
}

bool novelty_in_sentence(std::u32string_view text, text::Range span,
                         const std::vector<std::string>& lexicon) {
  if (lexicon.empty()) return false;
  std::vector<std::u32string> markers;
  for (const auto& word : lexicon) markers.push_back(text::fold_case(text::decode_utf8(word)));
  const auto folded_text = text::fold_case(text);
  for (const auto& sentence : text::sentence_ranges(text)) {
    const bool overlaps = span.begin < sentence.end && sentence.begin < std::max(span.end, span.begin + 1);
    if (!overlaps) continue;
    const auto body =
        std::u32string_view(folded_text).substr(sentence.begin, sentence.end - sentence.begin);
    for (const auto& w : text::word_ranges(body)) {
      const auto word = body.substr(w.begin, w.end - w.begin);
      if (std::find(markers.begin(), markers.end(), word) != markers.end()) return true;
    }
  }
  return false;
}

Sensitivity classify_sensitivity(const DetectionSpan& span, const ClassificationContext& ctx) {
  if (span.technique == Technique::kFuzzy || span.category == Category::kUserTerm) {
    return Sensitivity::kHigh;
  }
  if (span.category == Category::kIndirectInference) return Sensitivity::kMedium;
  if (span.category == Category::kProteinSequence && !ctx.citation_tier) return Sensitivity::kHigh;
  if (ctx.novelty) return Sensitivity::kHigh;
  if (span.technique == Technique::kGazetteer && ctx.citation_tier) {
    return *ctx.citation_tier == CitationTier::kOrdinary ? Sensitivity::kMedium : Sensitivity::kLow;
  }
  return Sensitivity::kMedium;
}

// ---------------------------------------------------------------------------
// Merge

std::vector<DetectionSpan> merge_spans(std::vector<DetectionSpan> spans) {
  if (spans.empty()) return spans;
  const auto& prompt_id = spans.front().prompt_id;
  for (const auto& s : spans) {
    if (s.prompt_id != prompt_id) throw ArgumentError("spans reference different prompts");
  }

  std::vector<DetectionSpan> direct;
  std::vector<DetectionSpan> whole;
  for (auto& s : spans) (s.whole_prompt ? whole : direct).push_back(std::move(s));

  std::sort(direct.begin(), direct.end(), merge_priority);
  std::vector<DetectionSpan> kept;
  for (auto& candidate : direct) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const DetectionSpan& k) {
      return candidate.start < k.end && k.start < candidate.end;
    });
    if (!overlaps) kept.push_back(std::move(candidate));
  }
  std::sort(kept.begin(), kept.end(), span_order);

  std::sort(whole.begin(), whole.end(), span_order);
  whole.erase(std::unique(whole.begin(), whole.end()), whole.end());
  for (auto& w : whole) kept.push_back(std::move(w));
  return kept;
}

// ---------------------------------------------------------------------------
// Redaction

RedactedPrompt redact(const Prompt& prompt, const std::vector<DetectionSpan>& spans) {
  const auto scalars = text::decode_utf8(prompt.text);
  std::vector<const DetectionSpan*> direct;
  for (const auto& s : spans) {
    if (s.whole_prompt) continue;
    if (s.start >= s.end || s.end > scalars.size()) {
      throw ArgumentError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                          ") is outside the prompt");
    }
    direct.push_back(&s);
  }
  std::sort(direct.begin(), direct.end(),
            [](const DetectionSpan* a, const DetectionSpan* b) { return a->start < b->start; });
  for (std::size_t i = 1; i < direct.size(); ++i) {
    if (direct[i]->start < direct[i - 1]->end) throw ArgumentError("overlapping spans");
  }

  std::map<Category, std::size_t> totals;
  for (const auto* s : direct) ++totals[s->category];
  std::map<Category, std::size_t> seen;

  RedactedPrompt out;
  std::u32string result;
  std::size_t cursor = 0;
  for (const auto* s : direct) {
    result.append(scalars, cursor, s->start - cursor);
    std::string token = "[" + std::string(placeholder_stem(s->category));
    if (totals[s->category] > 1) token += "_" + std::to_string(++seen[s->category]);
    token += "]";
    Replacement rep;
    rep.span = *s;
    rep.placeholder = token;
    rep.redacted_start = result.size();
    result += text::decode_utf8(token);
    rep.redacted_end = result.size();
    out.replacements.push_back(std::move(rep));
    cursor = s->end;
  }
  result.append(scalars, cursor, std::u32string::npos);
  out.text = text::encode_utf8(result);
  return out;
}

std::string restore(const RedactedPrompt& redacted) {
  auto scalars = text::decode_utf8(redacted.text);
  for (auto it = redacted.replacements.rbegin(); it != redacted.replacements.rend(); ++it) {
    if (it->redacted_end > scalars.size() || it->redacted_start > it->redacted_end) {
      throw ArgumentError("replacement outside redacted text");
    }
    scalars.replace(it->redacted_start, it->redacted_end - it->redacted_start,
                    text::decode_utf8(it->span.surface));
  }
  return text::encode_utf8(scalars);
}

// ---------------------------------------------------------------------------
// Full scan

bool DetectionResult::has_high() const {
  return std::any_of(spans.begin(), spans.end(),
                     [](const DetectionSpan& s) { return s.sensitivity == Sensitivity::kHigh; });
}

std::size_t DetectionResult::direct_count() const {
  return static_cast<std::size_t>(std::count_if(
      spans.begin(), spans.end(), [](const DetectionSpan& s) { return !s.whole_prompt; }));
}

const DetectionSpan* DetectionResult::find_span(std::string_view span_id) const {
  for (const auto& s : spans) {
    if (s.id == span_id) return &s;
  }
  return nullptr;
}

std::vector<DetectionSpan> classify_all(const Prompt& prompt, std::vector<DetectionSpan> spans,
                                        const Gazetteer& gazetteer, const UserTermList& terms,
                                        const DetectionConfig& config) {
  const auto scalars = text::decode_utf8(prompt.text);
  std::vector<DetectionSpan> out;
  out.reserve(spans.size());
  for (auto& span : spans) {
    if (terms.is_suppressed(suppression_key(span), span.category)) continue;
    ClassificationContext ctx;
    if (!span.whole_prompt) {
      if (const auto* entry = gazetteer.lookup(span.surface)) ctx.citation_tier = entry->tier;
      ctx.novelty = novelty_in_sentence(scalars, {span.start, span.end}, config.novelty_lexicon);
    }
    span.sensitivity = classify_sensitivity(span, ctx);
    out.push_back(std::move(span));
  }
  return out;
}

DetectionResult scan_full(const Prompt& prompt, const Gazetteer& gazetteer,
                          const UserTermList& terms, llm::Client* client,
                          const DetectionConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  DetectionResult result;
  result.prompt_id = prompt.id;

  std::vector<DetectionSpan> found;
  auto t0 = std::chrono::steady_clock::now();
  if (config.enable_rules) {
    auto spans = scan_rule_based(prompt, config.rules);
    found.insert(found.end(), spans.begin(), spans.end());
  }
  result.timing.rule_us = micros_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (config.enable_gazetteer) {
    auto spans = scan_gazetteer(prompt, gazetteer);
    found.insert(found.end(), spans.begin(), spans.end());
  }
  result.timing.gazetteer_us = micros_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (config.enable_fuzzy) {
    auto spans = scan_fuzzy(prompt, terms, config.fuzzy_threshold);
    found.insert(found.end(), spans.begin(), spans.end());
  }
  result.timing.fuzzy_us = micros_since(t0);

  t0 = std::chrono::steady_clock::now();
  if (config.enable_indirect && client != nullptr && !text::trim(prompt.text).empty()) {
    auto indirect = detect_indirect(prompt, *client);
    result.indirect_ran = true;
    result.llm_degraded = indirect.degraded;
    result.degraded_reason = indirect.error;
    found.insert(found.end(), indirect.spans.begin(), indirect.spans.end());
  }
  result.timing.indirect_us = micros_since(t0);

  result.spans = merge_spans(classify_all(prompt, std::move(found), gazetteer, terms, config));
  for (std::size_t i = 0; i < result.spans.size(); ++i) {
    result.spans[i].id = prompt.id + "#" + std::to_string(i);
  }
  result.blocked = config.block_on_high && result.has_high();
  result.timing.total_us = micros_since(t_start);
  return result;
}

// ---------------------------------------------------------------------------
// Feedback

std::string_view to_string(Verdict v) {
  return v == Verdict::kConfidential ? "Confidential" : "NotConfidential";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "Confidential") return Verdict::kConfidential;
  if (s == "NotConfidential") return Verdict::kNotConfidential;
  return std::nullopt;
}

void record_feedback(const DetectionResult& result, std::string_view span_id, Verdict verdict,
                     UserTermList& terms, std::string_view user) {
  const auto* span = result.find_span(span_id);
  if (span == nullptr) throw NotFoundError("span '" + std::string(span_id) + "' not found");
  if (verdict == Verdict::kConfidential) {
    if (span->whole_prompt) {
      throw ArgumentError("whole-prompt findings have no surface to add as a term");
    }
    terms.add(span->surface, user);
  } else {
    terms.suppress(suppression_key(*span), span->category);
  }
}

}  // namespace datashield
