#include <algorithm>
#include <fstream>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "datashield/error.hpp"
#include "datashield/llm.hpp"
#include "datashield/policy.hpp"

namespace datashield {
namespace {

struct SectionSpec {
  const char* key;
  const char* query;
};

constexpr SectionSpec kSections[] = {
    {"confidential_data", "confidential data categories that must be protected"},
    {"ip_policies", "intellectual property ownership inventions patents publication"},
    {"protected_vs_exposed",
     "protected information versus information that may be exposed or shared publicly"},
    {"violation_conditions",
     "violations of confidentiality: sharing or disclosure that is prohibited or must not happen"},
    {"additional_compliance", "additional compliance requirements approval review training"},
};

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string stem(std::string w) {
  if (w.size() > 4 && w.ends_with("ies")) return w.substr(0, w.size() - 3) + "y";
  if (w.size() > 3 && w.ends_with('s') && !w.ends_with("ss")) w.pop_back();
  return w;
}

std::set<std::string> content_words(std::string_view phrase) {
  static const std::set<std::string> kStop{
      "the",  "a",     "an",    "of",       "and",      "or",       "your",  "our",
      "their", "any",  "all",   "data",     "information", "info",  "personal", "user",
      "users", "to",   "with",  "for",      "in",       "on",       "by",    "such",
      "other", "must", "not",   "be",       "external", "third",    "parties", "party",
      "no",    "its",  "this",  "these",    "those",    "outside",  "company", "organization"};
  std::set<std::string> out;
  for (const auto& w : text::words(phrase)) {
    if (kStop.count(w)) continue;
    out.insert(stem(w));
  }
  return out;
}

// Strips leading quantifiers from an extracted category phrase.
std::string clean_category(std::string s) {
  static const std::regex kLead(R"(^(?:(?:all|any|no|the|our|company|internal|confidential)\s+)+)");
  s = std::regex_replace(text::trim(s), kLead, "");
  return text::trim(s);
}

std::vector<std::pair<std::string, std::string>> compliance_clauses(
    const InternalPolicySummary& internal) {
  std::vector<std::pair<std::string, std::string>> out;  // (item text, clause)
  std::set<std::string> seen;
  for (const auto* section : {&internal.violation_conditions, &internal.additional_compliance}) {
    for (const auto& item : *section) {
      if (seen.insert(item.clause).second) out.emplace_back(item.text, item.clause);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Exposure e) { return e == Exposure::kProtected ? "Protected" : "Exposed"; }

std::string_view to_string(ComplianceVerdict v) {
  switch (v) {
    case ComplianceVerdict::kCompliant: return "Compliant";
    case ComplianceVerdict::kViolation: return "Violation";
    case ComplianceVerdict::kUnclear: return "Unclear";
  }
  return "Unclear";
}

std::optional<ComplianceVerdict> parse_compliance_verdict(std::string_view s) {
  if (s == "Compliant") return ComplianceVerdict::kCompliant;
  if (s == "Violation") return ComplianceVerdict::kViolation;
  if (s == "Unclear") return ComplianceVerdict::kUnclear;
  return std::nullopt;
}

const std::vector<std::string>& internal_section_keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> keys;
    for (const auto& s : kSections) keys.emplace_back(s.key);
    return keys;
  }();
  return kKeys;
}

InternalPolicySummary summarize_internal(std::string_view code_of_conduct, llm::Client& client) {
  if (text::trim(code_of_conduct).empty()) throw ArgumentError("code of conduct is empty");

  llm::RetrievalIndex index;
  const auto clauses = policy_sentences(code_of_conduct);
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "c%03zu", i + 1);
    index.add(id, clauses[i]);
  }
  const auto source = text::normalize_space(code_of_conduct);
  const auto verbatim = [&](const std::string& clause) {
    const auto norm = text::normalize_space(clause);
    return !norm.empty() && source.find(norm) != std::string::npos;
  };

  InternalPolicySummary summary;
  for (const auto& section : kSections) {
    const auto response = text::trim(llm::augment(client, kInternalSummaryTask, section.query,
                                                  index, 8, {{"section", section.key}}));
    if (response.empty() || text::fold_case_utf8(response) == "none") continue;
    const auto parsed = nlohmann::json::parse(response, nullptr, false);
    if (!parsed.is_array()) {
      throw LlmError(std::string("unparseable internal-summary response for ") + section.key);
    }
    for (const auto& item : parsed) {
      if (!item.is_object()) {
        ++summary.dropped;
        continue;
      }
      const auto text_value = text::trim(item.value("item", std::string{}));
      const auto clause = text::normalize_space(item.value("clause", std::string{}));
      if (text_value.empty() || !verbatim(clause)) {
        ++summary.dropped;
        continue;
      }
      const std::string_view key = section.key;
      if (key == "protected_vs_exposed") {
        const auto status = item.value("status", std::string{});
        if (status != "Protected" && status != "Exposed") {
          ++summary.dropped;
          continue;
        }
        summary.protected_vs_exposed.push_back(
            {text_value, status == "Protected" ? Exposure::kProtected : Exposure::kExposed, clause});
        continue;
      }
      SummaryItem entry{text_value, clause};
      if (key == "confidential_data") summary.confidential_data.push_back(entry);
      if (key == "ip_policies") summary.ip_policies.push_back(entry);
      if (key == "violation_conditions") summary.violation_conditions.push_back(entry);
      if (key == "additional_compliance") summary.additional_compliance.push_back(entry);
    }
  }
  return summary;
}

std::vector<ForbiddenSharing> forbidden_sharing(const InternalPolicySummary& internal) {
  static const std::vector<std::regex> kPatterns{
      std::regex(R"(^(.*?)\s+(?:must|may|shall|should|can)\s+(?:not|never)\s+be\s+(?:shared|disclosed|uploaded|transferred|sent|provided|submitted)\b)"),
      std::regex(R"((?:do\s+not|never|must\s+not|may\s+not|shall\s+not)\s+(?:share|disclose|upload|transfer|send|submit)\s+(.*?)\s+(?:with|to|into)\b)"),
      std::regex(R"((?:sharing|disclosure|uploading|transfer)\s+of\s+(.*?)\s+(?:with|to)\s+.*?\s+is\s+(?:prohibited|forbidden|not\s+permitted|not\s+allowed))"),
  };
  std::vector<ForbiddenSharing> out;
  for (const auto& [item, clause] : compliance_clauses(internal)) {
    const auto lower = lower_ascii(clause);
    for (const auto& re : kPatterns) {
      std::smatch m;
      if (!std::regex_search(lower, m, re)) continue;
      auto category = clean_category(m[1].str());
      if (category.empty()) continue;
      const bool dup = std::any_of(out.begin(), out.end(), [&](const ForbiddenSharing& f) {
        return f.category == category && f.clause == clause;
      });
      if (!dup) out.push_back({category, clause});
      break;
    }
  }
  return out;
}

bool category_overlap(std::string_view data_type, std::string_view category) {
  const auto a = content_words(data_type);
  const auto b = content_words(category);
  return std::any_of(a.begin(), a.end(), [&](const std::string& w) { return b.count(w) > 0; });
}

ComplianceReport check_compliance(const std::vector<NutritionLabel>& labels,
                                  const InternalPolicySummary& internal, llm::Client* client) {
  ComplianceReport report;
  const auto clauses = compliance_clauses(internal);
  const auto forbidden = forbidden_sharing(internal);

  for (const auto& label : labels) {
    const auto label_text = render_label_text(label);
    for (const auto& [item, clause] : clauses) {
      ToolVerdict verdict;
      verdict.tool_id = label.tool_id;
      verdict.internal_clause = clause;

      // Rule pass: forbidden category shared with third parties.
      bool decided = false;
      if (!label.third_parties.empty()) {
        for (const auto& f : forbidden) {
          if (f.clause != clause) continue;
          for (const auto& dt : label.data_types) {
            if (!category_overlap(dt.text, f.category)) continue;
            std::string recipients;
            for (const auto& tp : label.third_parties) {
              recipients += (recipients.empty() ? "" : ", ") + tp.text;
            }
            verdict.verdict = ComplianceVerdict::kViolation;
            verdict.label_item = dt.text;
            verdict.rule_based = true;
            verdict.explanation = "the tool shares '" + dt.text + "' with third parties (" +
                                  recipients + ") while internal policy forbids sharing " +
                                  f.category;
            decided = true;
            break;
          }
          if (decided) break;
        }
      }

      if (!decided) {
        verdict.verdict = ComplianceVerdict::kUnclear;
        if (client == nullptr) {
          verdict.explanation = std::string(kAdjudicationUnavailable);
        } else {
          try {
            const auto response = text::trim(
                client->complete(kComplianceTask, {{"clause", clause}, {"label", label_text}}));
            const auto parsed = nlohmann::json::parse(response, nullptr, false);
            const auto v = parsed.is_object()
                               ? parse_compliance_verdict(parsed.value("verdict", std::string{}))
                               : std::nullopt;
            if (!v) {
              verdict.explanation = "unparseable adjudication";
            } else {
              const auto cited = text::trim(parsed.value("label_item", std::string{}));
              const auto explanation = text::trim(parsed.value("explanation", std::string{}));
              bool cited_exists = false;
              for (const auto& name : label_section_names()) {
                for (const auto& li : label_section(label, name)) {
                  if (!cited.empty() && text::fold_case_utf8(li.text) == text::fold_case_utf8(cited)) {
                    cited_exists = true;
                  }
                }
              }
              if (*v == ComplianceVerdict::kViolation && !cited_exists) {
                verdict.explanation = "adjudication did not cite a label item";
              } else {
                verdict.verdict = *v;
                verdict.label_item = cited_exists ? cited : std::string{};
                verdict.explanation =
                    explanation.empty() ? (*v == ComplianceVerdict::kUnclear
                                               ? std::string("model could not decide")
                                               : std::string{})
                                        : explanation;
              }
            }
          } catch (const Error&) {
            verdict.explanation = std::string(kAdjudicationUnavailable);
            report.degraded = true;
          }
        }
      }
      report.verdicts.push_back(std::move(verdict));
    }
  }
  return report;
}

std::string render_compliance_text(const ComplianceReport& report) {
  if (report.verdicts.empty()) return "No compliance checks (no tools or no internal clauses).\n";
  std::string out;
  for (const auto& v : report.verdicts) {
    out += "[" + std::string(to_string(v.verdict)) + "] " + v.tool_id + "\n";
    out += "    clause: " + v.internal_clause + "\n";
    if (!v.label_item.empty()) out += "    label item: " + v.label_item + "\n";
    if (!v.explanation.empty()) out += "    " + v.explanation + "\n";
  }
  return out;
}

QaReport evaluate_summaries(const PolicyDocument& doc, const NutritionLabel& label,
                            const std::vector<QaItem>& questions, llm::Client* client) {
  if (questions.empty()) throw ArgumentError("question set is empty");
  QaReport report;
  report.tool_id = label.tool_id.empty() ? doc.tool_id : label.tool_id;
  const auto label_text = render_label_text(label);

  const auto answer = [&](const std::string& question, const std::string& context) {
    if (client == nullptr) return context;
    try {
      return client->complete(kQaTask, {{"question", question}, {"context", context}});
    } catch (const Error&) {
      report.degraded = true;
      return context;
    }
  };

  std::size_t agreed = 0;
  for (const auto& q : questions) {
    QaVerdict v;
    v.question = q.question;
    v.gold = q.gold;
    v.full_answer = answer(q.question, doc.raw_text);
    v.label_answer = answer(q.question, label_text);
    v.full_correct = text::contains_ci(v.full_answer, q.gold);
    v.label_correct = text::contains_ci(v.label_answer, q.gold);
    v.agree = v.full_correct && v.label_correct;
    if (v.agree) ++agreed;
    report.verdicts.push_back(std::move(v));
  }
  report.agreement_rate = static_cast<double>(agreed) / static_cast<double>(questions.size());
  return report;
}

std::vector<QaItem> load_questions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open question set " + path.string());
  std::vector<QaItem> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "expected question<TAB>answer");
    out.push_back({text::trim(line.substr(0, tab)), text::trim(line.substr(tab + 1))});
  }
  return out;
}

}  // namespace datashield
