#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "datashield/error.hpp"
#include "datashield/llm.hpp"
#include "datashield/policy.hpp"

namespace datashield {
namespace {

void add_item(std::vector<LabelItem>& section, const std::string& text, std::size_t tuple_ref) {
  if (text.empty()) return;
  const auto key = text::fold_case_utf8(text);
  for (auto& item : section) {
    if (text::fold_case_utf8(item.text) == key) {
      if (std::find(item.tuple_refs.begin(), item.tuple_refs.end(), tuple_ref) ==
          item.tuple_refs.end()) {
        item.tuple_refs.push_back(tuple_ref);
      }
      return;
    }
  }
  section.push_back({text, {tuple_ref}, {}});
}

std::vector<LabelItem>* mutable_section(NutritionLabel& label, std::string_view name) {
  if (name == "data_types") return &label.data_types;
  if (name == "purposes") return &label.purposes;
  if (name == "retention") return &label.retention;
  if (name == "security_measures") return &label.security_measures;
  if (name == "user_rights") return &label.user_rights;
  if (name == "third_parties") return &label.third_parties;
  return nullptr;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& label_section_names() {
  static const std::vector<std::string> kNames{"data_types",        "purposes",
                                               "retention",         "security_measures",
                                               "user_rights",       "third_parties"};
  return kNames;
}

const std::vector<LabelItem>& label_section(const NutritionLabel& label, std::string_view name) {
  auto* section = mutable_section(const_cast<NutritionLabel&>(label), name);
  if (section == nullptr) throw ArgumentError("unknown label section '" + std::string(name) + "'");
  return *section;
}

std::string NutritionLabel::retention_text() const {
  if (retention.empty()) return std::string(kNotStated);
  return join(texts(retention), "; ");
}

std::vector<std::string> NutritionLabel::texts(const std::vector<LabelItem>& section) const {
  std::vector<std::string> out;
  out.reserve(section.size());
  for (const auto& item : section) out.push_back(item.text);
  return out;
}

NutritionLabel make_label(const PolicyGraph& graph, const PolicyDocument& doc,
                          llm::Client* client) {
  NutritionLabel label;
  label.tool_id = doc.tool_id;

  for (std::size_t i = 0; i < graph.tuples.size(); ++i) {
    const auto& t = graph.tuples[i];
    switch (t.action) {
      case PolicyAction::kCollect:
      case PolicyAction::kUse:
        add_item(label.data_types, t.data_type, i);
        add_item(label.purposes, t.object, i);
        break;
      case PolicyAction::kShare:
        add_item(label.data_types, t.data_type, i);
        add_item(label.third_parties, t.object, i);
        break;
      case PolicyAction::kRetain:
        add_item(label.retention, t.object, i);
        break;
      case PolicyAction::kSecure:
        add_item(label.security_measures, t.object.empty() ? t.data_type : t.object, i);
        break;
    }
  }
  for (std::size_t i = 0; i < graph.notes.size(); ++i) {
    const auto& note = graph.notes[i];
    if (note.kind != NoteKind::kUserRight) continue;
    const auto key = text::fold_case_utf8(note.text);
    auto it = std::find_if(label.user_rights.begin(), label.user_rights.end(),
                           [&](const LabelItem& item) { return text::fold_case_utf8(item.text) == key; });
    if (it == label.user_rights.end()) {
      label.user_rights.push_back({note.text, {}, {i}});
    } else {
      it->note_refs.push_back(i);
    }
  }

  if (graph.degraded) label.caveats.push_back("policy extraction ran on patterns only");
  if (graph.dropped > 0) {
    label.caveats.push_back(std::to_string(graph.dropped) +
                            " extracted statement(s) failed source grounding and were dropped");
  }
  if (doc.stale) label.caveats.push_back("policy served from a stale cache copy");

  if (client != nullptr) {
    for (const auto& name : label_section_names()) {
      auto& section = *mutable_section(label, name);
      if (section.empty()) continue;
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : section) items.push_back(item.text);
      try {
        const auto response = text::trim(
            client->complete(kLabelCondenseTask, {{"section", name}, {"items", items.dump()}}));
        const auto parsed = nlohmann::json::parse(response, nullptr, false);
        if (parsed.is_array() && parsed.size() == section.size() &&
            std::all_of(parsed.begin(), parsed.end(), [](const auto& v) {
              return v.is_string() && !text::trim(v.template get<std::string>()).empty();
            })) {
          for (std::size_t k = 0; k < section.size(); ++k) {
            section[k].text = text::trim(parsed[k].get<std::string>());
          }
        }
      } catch (const Error&) {
        if (!label.degraded) label.caveats.push_back("condensation unavailable; raw extracted phrases shown");
        label.degraded = true;
      }
    }
  }
  return label;
}

std::string render_label_text(const NutritionLabel& label) {
  static const std::map<std::string, std::string> kTitles{
      {"data_types", "Data types"},         {"purposes", "Purposes"},
      {"retention", "Retention"},           {"security_measures", "Security measures"},
      {"user_rights", "User rights"},       {"third_parties", "Third parties"}};
  std::string out = "Privacy label: " + label.tool_id + "\n";
  for (const auto& name : label_section_names()) {
    const auto& section = label_section(label, name);
    std::string value = name == "retention"
                            ? label.retention_text()
                            : (section.empty() ? std::string(kNotStated)
                                               : join(label.texts(section), "; "));
    std::string title = kTitles.at(name) + ":";
    title.resize(20, ' ');
    out += "  " + title + value + "\n";
  }
  for (const auto& c : label.caveats) out += "  Caveat: " + c + "\n";
  return out;
}

NutritionLabel union_label(const std::vector<NutritionLabel>& labels) {
  NutritionLabel out;
  out.tool_id = "all-tools";
  for (const auto& name : label_section_names()) {
    auto& target = *mutable_section(out, name);
    std::vector<std::pair<std::string, std::vector<std::string>>> merged;
    for (const auto& label : labels) {
      for (const auto& item : label_section(label, name)) {
        const auto key = text::fold_case_utf8(item.text);
        auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& m) {
          return text::fold_case_utf8(m.first) == key;
        });
        if (it == merged.end()) {
          merged.push_back({item.text, {label.tool_id}});
        } else if (std::find(it->second.begin(), it->second.end(), label.tool_id) ==
                   it->second.end()) {
          it->second.push_back(label.tool_id);
        }
      }
    }
    for (const auto& [text, tools] : merged) target.push_back({text + " (" + join(tools, ", ") + ")", {}, {}});
  }
  for (const auto& label : labels) {
    for (const auto& c : label.caveats) out.caveats.push_back(label.tool_id + ": " + c);
    out.degraded = out.degraded || label.degraded;
  }
  out.caveats.push_back("union view: items are not reconciled across tools");
  return out;
}

}  // namespace datashield
