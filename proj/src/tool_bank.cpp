#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "datashield/error.hpp"
#include "datashield/llm.hpp"
#include "datashield/policy.hpp"

namespace datashield {
namespace {

bool word_match(const std::string& a, const std::string& b) {
  if (a == b) return true;
  if (std::min(a.size(), b.size()) < 4) return false;
  return a.starts_with(b) || b.starts_with(a);
}

}  // namespace

ToolBank::ToolBank(std::vector<Tool> tools) : tools_(std::move(tools)) {
  std::set<std::string> ids;
  for (const auto& t : tools_) {
    if (t.id.empty()) throw ConfigError("tool without id");
    if (!ids.insert(t.id).second) throw ConfigError("duplicate tool id '" + t.id + "'");
    if (t.tags.empty()) throw ConfigError("tool '" + t.id + "' has no capability tags");
  }
}

ToolBank ToolBank::parse(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("tool bank is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("tools") || !j["tools"].is_array()) {
    throw ConfigError("tool bank must be an object with a \"tools\" array");
  }
  std::vector<Tool> tools;
  for (const auto& item : j["tools"]) {
    try {
      Tool t;
      t.id = item.at("id").get<std::string>();
      t.name = item.value("name", t.id);
      t.tags = item.at("tags").get<std::vector<std::string>>();
      t.policy_url = item.value("policy_url", std::string{});
      t.description = item.value("description", std::string{});
      tools.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid tool entry: ") + e.what());
    }
  }
  return ToolBank(std::move(tools));
}

ToolBank ToolBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tool bank " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const Tool* ToolBank::find(std::string_view id) const {
  for (const auto& t : tools_) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

std::vector<ToolMatch> match_tool_tags(const Prompt& prompt, const ToolBank& bank) {
  const auto prompt_words = text::words(prompt.text);
  std::vector<ToolMatch> matches;
  for (const auto& tool : bank.tools()) {
    std::set<std::string> tag_words;
    for (const auto& tag : tool.tags) {
      for (auto& w : text::words(tag)) tag_words.insert(std::move(w));
    }
    int relevance = 0;
    for (const auto& tw : tag_words) {
      if (std::any_of(prompt_words.begin(), prompt_words.end(),
                      [&](const std::string& pw) { return word_match(pw, tw); })) {
        ++relevance;
      }
    }
    if (relevance > 0) matches.push_back({tool.id, relevance});
  }
  std::sort(matches.begin(), matches.end(), [](const ToolMatch& a, const ToolMatch& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    return a.tool_id < b.tool_id;
  });
  return matches;
}

std::vector<std::string> identify_tools(const Prompt& prompt, const ToolBank& bank,
                                        llm::Client* client) {
  auto candidates = match_tool_tags(prompt, bank);
  if (client != nullptr && !candidates.empty() &&
      client->templates().contains("tool_rank")) {
    std::string listing;
    for (const auto& c : candidates) {
      const auto* tool = bank.find(c.tool_id);
      listing += c.tool_id + ": " + tool->name + " - " + tool->description + "\n";
    }
    try {
      const auto response = client->complete("tool_rank", {{"prompt", prompt.text},
                                                           {"candidates", listing}});
      const auto parsed = nlohmann::json::parse(text::trim(response));
      if (parsed.is_array()) {
        std::set<std::string> keep;
        for (const auto& id : parsed) {
          if (id.is_string()) keep.insert(id.get<std::string>());
        }
        std::erase_if(candidates, [&](const ToolMatch& c) { return !keep.count(c.tool_id); });
      }
    } catch (const Error&) {
      // Stage one stands when the model is unavailable.
    } catch (const nlohmann::json::exception&) {
    }
  }
  std::vector<std::string> ids;
  for (const auto& c : candidates) ids.push_back(c.tool_id);
  return ids;
}

}  // namespace datashield
