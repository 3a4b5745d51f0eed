#include <algorithm>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "datashield/error.hpp"
#include "datashield/llm.hpp"
#include "datashield/policy.hpp"

namespace datashield {
namespace {

struct VerbInfo {
  const char* lemma;
  PolicyAction action;
};

constexpr VerbInfo kVerbs[] = {
    {"collect", PolicyAction::kCollect},  {"gather", PolicyAction::kCollect},
    {"obtain", PolicyAction::kCollect},   {"receive", PolicyAction::kCollect},
    {"record", PolicyAction::kCollect},   {"use", PolicyAction::kUse},
    {"process", PolicyAction::kUse},      {"analyze", PolicyAction::kUse},
    {"analyse", PolicyAction::kUse},      {"share", PolicyAction::kShare},
    {"disclose", PolicyAction::kShare},   {"sell", PolicyAction::kShare},
    {"transfer", PolicyAction::kShare},   {"retain", PolicyAction::kRetain},
    {"store", PolicyAction::kRetain},     {"keep", PolicyAction::kRetain},
    {"protect", PolicyAction::kSecure},   {"secure", PolicyAction::kSecure},
    {"encrypt", PolicyAction::kSecure},   {"safeguard", PolicyAction::kSecure},
};

const std::string& verb_alternation() {
  static const std::string alt = [] {
    std::string s;
    for (const auto& v : kVerbs) {
      if (!s.empty()) s += "|";
      s += v.lemma;
    }
    return "(?:" + s + ")(?:s|d|ed|es)?";
  }();
  return alt;
}

std::optional<PolicyAction> verb_action(std::string_view word) {
  for (const auto& v : kVerbs) {
    const std::string_view lemma = v.lemma;
    if (!word.starts_with(lemma)) continue;
    const auto rest = word.substr(lemma.size());
    if (rest.empty() || rest == "s" || rest == "d" || rest == "ed" || rest == "es") return v.action;
  }
  return std::nullopt;
}

const std::set<std::string>& determiners() {
  static const std::set<std::string> kWords{"your", "the", "a", "an", "our", "any", "all",
                                            "some", "certain", "such", "this", "these", "those",
                                            "their", "its", "my", "of"};
  return kWords;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Lower-cases, trims punctuation and leading determiners.
std::string clean_phrase(std::string_view phrase) {
  auto s = lower_ascii(text::normalize_space(phrase));
  while (!s.empty() && std::string_view(".,;:!?\"'()").find(s.back()) != std::string_view::npos) {
    s.pop_back();
  }
  while (!s.empty() && std::string_view("\"'(").find(s.front()) != std::string_view::npos) {
    s.erase(s.begin());
  }
  while (true) {
    const auto space = s.find(' ');
    if (space == std::string::npos) break;
    if (!determiners().count(s.substr(0, space))) break;
    s.erase(0, space + 1);
  }
  return text::trim(s);
}

bool is_pronoun(const std::string& phrase) {
  static const std::set<std::string> kPronouns{"it", "them", "this", "that", "this information",
                                               "this data", "such information", "that information",
                                               "such data", "these data", "they"};
  return kPronouns.count(phrase) > 0;
}

std::vector<std::string> split_list(const std::string& phrase) {
  static const std::regex kSep(R"(\s*,\s*(?:and\s+|or\s+)?|\s+and\s+|\s+or\s+)");
  std::vector<std::string> parts;
  std::sregex_token_iterator it(phrase.begin(), phrase.end(), kSep, -1), end;
  for (; it != end; ++it) {
    auto p = clean_phrase(it->str());
    if (!p.empty()) parts.push_back(std::move(p));
  }
  return parts;
}

// Splits `body` at the first of `markers` (as whole words). Returns
// {before, after}; `after` is empty when no marker occurs.
std::pair<std::string, std::string> split_at(const std::string& body,
                                             std::initializer_list<const char*> markers,
                                             std::string* marker_found = nullptr) {
  std::size_t best = std::string::npos;
  std::string best_marker;
  for (const char* m : markers) {
    const std::string needle = std::string(" ") + m + " ";
    const auto pos = (" " + body + " ").find(needle);
    if (pos != std::string::npos && pos < best) {
      best = pos;
      best_marker = m;
    }
  }
  if (best == std::string::npos) return {body, {}};
  if (marker_found) *marker_found = best_marker;
  const auto before = best == 0 ? std::string{} : body.substr(0, best - 1);
  const auto after_pos = best + best_marker.size() + 1;
  return {before, after_pos >= body.size() ? std::string{} : body.substr(after_pos)};
}

std::string purpose_phrase(const std::string& after, const std::string& marker) {
  std::string rest = after;
  if (marker == "to" || marker == "in order to") {
    // "to provide customer support" -> "customer support"
    const auto space = rest.find(' ');
    rest = space == std::string::npos ? rest : rest.substr(space + 1);
  } else if (marker == "for the purpose of" || marker == "for purposes of") {
    // already positioned
  }
  return clean_phrase(rest);
}

std::vector<PolicyTuple> clause_tuples(PolicyAction action, const std::string& verb,
                                       const std::string& body, const std::string& sentence,
                                       std::string& last_data_type) {
  std::vector<PolicyTuple> out;
  std::string data_part;
  std::string object;
  std::string marker;

  switch (action) {
    case PolicyAction::kCollect:
    case PolicyAction::kUse: {
      auto [before, after] =
          split_at(body, {"in order to", "for the purpose of", "for purposes of", "to", "for"},
                   &marker);
      data_part = before;
      if (!after.empty()) object = purpose_phrase(after, marker);
      break;
    }
    case PolicyAction::kShare: {
      auto [before, after] = split_at(body, {"with", "to"});
      data_part = before;
      object = clean_phrase(after);
      break;
    }
    case PolicyAction::kRetain: {
      auto [before, after] = split_at(body, {"for", "until"}, &marker);
      data_part = before;
      if (!after.empty()) object = clean_phrase(marker == "until" ? "until " + after : after);
      break;
    }
    case PolicyAction::kSecure: {
      auto [before, after] = split_at(body, {"using", "with", "through", "by"});
      data_part = before;
      object = clean_phrase(after);
      if (object.empty() && verb.starts_with("encrypt")) object = "encryption";
      break;
    }
  }

  auto data_types = split_list(data_part);
  if (data_types.size() == 1 && is_pronoun(data_types.front())) {
    if (last_data_type.empty()) return out;
    data_types = {last_data_type};
  }
  for (auto& dt : data_types) {
    if (dt.empty() || is_pronoun(dt)) continue;
    out.push_back({"we", action, dt, object, sentence});
    last_data_type = dt;
  }
  return out;
}

}  // namespace

std::string_view to_string(PolicyAction a) {
  switch (a) {
    case PolicyAction::kCollect: return "Collect";
    case PolicyAction::kUse: return "Use";
    case PolicyAction::kShare: return "Share";
    case PolicyAction::kRetain: return "Retain";
    case PolicyAction::kSecure: return "Secure";
  }
  return "?";
}

std::optional<PolicyAction> parse_policy_action(std::string_view s) {
  const auto l = lower_ascii(s);
  if (l == "collect") return PolicyAction::kCollect;
  if (l == "use") return PolicyAction::kUse;
  if (l == "share") return PolicyAction::kShare;
  if (l == "retain") return PolicyAction::kRetain;
  if (l == "secure") return PolicyAction::kSecure;
  return std::nullopt;
}

std::vector<std::string> policy_sentences(std::string_view raw_text) {
  std::vector<std::string> out;
  const auto scalars = text::decode_utf8(raw_text);
  const std::u32string_view view(scalars);
  // Paragraphs are separated by blank lines.
  std::size_t para_begin = 0;
  const auto flush = [&](std::size_t para_end) {
    const auto para = view.substr(para_begin, para_end - para_begin);
    for (const auto& r : text::sentence_ranges(para)) {
      auto s = text::normalize_space(text::encode_utf8(para.substr(r.begin, r.end - r.begin)));
      if (!s.empty()) out.push_back(std::move(s));
    }
  };
  for (std::size_t i = 0; i < view.size(); ++i) {
    if (view[i] != U'\n') continue;
    std::size_t j = i + 1;
    while (j < view.size() && (view[j] == U' ' || view[j] == U'\t' || view[j] == U'\r')) ++j;
    if (j < view.size() && view[j] == U'\n') {
      flush(i);
      while (j < view.size() && text::is_space(view[j])) ++j;
      para_begin = j;
      i = j == 0 ? 0 : j - 1;
    }
  }
  if (para_begin < view.size()) flush(view.size());
  return out;
}

std::vector<PolicyTuple> extract_tuples_from_sentence(std::string_view sentence_in) {
  const auto sentence = text::normalize_space(sentence_in);
  std::vector<PolicyTuple> out;
  auto lower = lower_ascii(sentence);
  while (!lower.empty() && std::string_view(".!?;").find(lower.back()) != std::string_view::npos) {
    lower.pop_back();
  }
  std::string last_data_type;

  // Active voice: "we [may|will|also ...] <verb> ...".
  static const std::regex kSubject(R"((?:^|[^a-z])we\s+(?:(?:may|will|also|can|do|might|only|might also|may also)\s+)*)");
  std::smatch subject;
  if (std::regex_search(lower, subject, kSubject)) {
    const auto remainder = lower.substr(static_cast<std::size_t>(subject.position() + subject.length()));
    const std::regex split_re("(?:,\\s*and\\s+|,\\s+|\\s+and\\s+)(?=(?:(?:also|may|will|then)\\s+)*" +
                              verb_alternation() + "\\b)");
    std::sregex_token_iterator it(remainder.begin(), remainder.end(), split_re, -1), end;
    for (; it != end; ++it) {
      auto clause = text::trim(it->str());
      static const std::regex kModal(R"(^(?:(?:also|may|will|then)\s+)+)");
      clause = std::regex_replace(clause, kModal, "");
      const auto space = clause.find(' ');
      const auto verb = clause.substr(0, space);
      const auto action = verb_action(verb);
      if (!action || space == std::string::npos) continue;
      auto tuples = clause_tuples(*action, verb, clause.substr(space + 1), sentence, last_data_type);
      out.insert(out.end(), tuples.begin(), tuples.end());
    }
  }

  // Passive voice: "<data> is/are <verb>ed ...".
  if (out.empty()) {
    static const std::regex kPassive(
        R"(^(.*?)\s+(?:is|are|will be|may be|is only|are only)\s+(collected|gathered|obtained|used|processed|shared|disclosed|sold|transferred|retained|stored|kept|protected|secured|encrypted|safeguarded)\b\s*(.*)$)");
    std::smatch m;
    if (std::regex_match(lower, m, kPassive)) {
      const auto verb = m[2].str();
      std::optional<PolicyAction> action;
      if (verb == "sold") {
        action = PolicyAction::kShare;
      } else if (verb == "kept") {
        action = PolicyAction::kRetain;
      } else {
        action = verb_action(verb);
      }
      if (action) {
        auto body = m[1].str() + " " + m[3].str();
        auto tuples = clause_tuples(*action, verb, text::trim(body), sentence, last_data_type);
        out.insert(out.end(), tuples.begin(), tuples.end());
      }
    }
  }

  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool grounded(const PolicyTuple& tuple, std::string_view raw_text) {
  const auto needle = text::normalize_space(tuple.source_sentence);
  if (needle.empty()) return false;
  return text::normalize_space(raw_text).find(needle) != std::string::npos;
}

PolicyGraph ground_tuples(std::vector<PolicyTuple> tuples, std::string_view raw_text) {
  PolicyGraph graph;
  const auto haystack = text::normalize_space(raw_text);
  for (auto& t : tuples) {
    const auto needle = text::normalize_space(t.source_sentence);
    const bool ok = !needle.empty() && !text::trim(t.actor).empty() &&
                    !text::trim(t.data_type).empty() &&
                    haystack.find(needle) != std::string::npos;
    if (!ok) {
      ++graph.dropped;
      continue;
    }
    t.source_sentence = needle;
    if (std::find(graph.tuples.begin(), graph.tuples.end(), t) == graph.tuples.end()) {
      graph.tuples.push_back(std::move(t));
    }
  }
  return graph;
}

namespace {

std::optional<ExtractionNote> user_right_note(const std::string& sentence) {
  static const std::regex kRight(
      R"(\byou\s+(?:have\s+(?:the\s+)?rights?\s+to|can|may|are\s+entitled\s+to)\s+((?:access|delete|correct|rectify|request|opt\s+out|withdraw|object|export|download|update|restrict|erase)\b.*)$)",
      std::regex::icase);
  std::smatch m;
  if (!std::regex_search(sentence, m, kRight)) return std::nullopt;
  auto text = m[1].str();
  while (!text.empty() && std::string_view(".!?;").find(text.back()) != std::string_view::npos) {
    text.pop_back();
  }
  return ExtractionNote{NoteKind::kUserRight, lower_ascii(text::trim(text)), sentence};
}

}  // namespace

PolicyGraph extract_graph(const PolicyDocument& doc, llm::Client* client) {
  PolicyGraph graph;
  if (text::trim(doc.raw_text).empty()) return graph;

  std::vector<PolicyTuple> candidates;
  std::vector<std::string> leftover;
  for (const auto& sentence : policy_sentences(doc.raw_text)) {
    auto tuples = extract_tuples_from_sentence(sentence);
    if (auto note = user_right_note(sentence)) graph.notes.push_back(std::move(*note));
    if (tuples.empty()) {
      leftover.push_back(sentence);
    } else {
      candidates.insert(candidates.end(), tuples.begin(), tuples.end());
    }
  }

  std::size_t llm_dropped = 0;
  if (client != nullptr && !leftover.empty()) {
    std::string listing;
    for (std::size_t i = 0; i < leftover.size(); ++i) {
      listing += std::to_string(i + 1) + ". " + leftover[i] + "\n";
    }
    try {
      const auto response = text::trim(client->complete(kPolicyExtractTask, {{"sentences", listing}}));
      if (!response.empty() && text::fold_case_utf8(response) != "none") {
        const auto parsed = nlohmann::json::parse(response);
        if (!parsed.is_array()) throw LlmError("policy extraction response is not a list");
        for (const auto& item : parsed) {
          PolicyTuple t;
          const auto action = item.is_object()
                                  ? parse_policy_action(item.value("action", std::string{}))
                                  : std::nullopt;
          if (!action) {
            ++llm_dropped;
            continue;
          }
          t.actor = lower_ascii(text::trim(item.value("actor", std::string{})));
          t.action = *action;
          t.data_type = clean_phrase(item.value("data_type", std::string{}));
          t.object = clean_phrase(item.value("object", std::string{}));
          t.source_sentence = item.value("source_sentence", std::string{});
          candidates.push_back(std::move(t));
        }
      }
    } catch (const Error&) {
      graph.degraded = true;
    } catch (const nlohmann::json::exception&) {
      graph.degraded = true;
    }
  }

  auto grounded_graph = ground_tuples(std::move(candidates), doc.raw_text);
  graph.tuples = std::move(grounded_graph.tuples);
  graph.dropped = grounded_graph.dropped + llm_dropped;
  return graph;
}

}  // namespace datashield
