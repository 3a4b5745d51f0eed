#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>

#include "datashield/detection.hpp"
#include "datashield/error.hpp"

namespace datashield {
namespace {

Rule builtin_protein_rule(std::size_t min_length) {
  Rule rule;
  rule.name = std::string(kProteinSequenceRule);
  rule.category = Category::kProteinSequence;
  rule.kind = Rule::Kind::kAlphabetRun;
  rule.alphabet = std::u32string(kAminoAcidAlphabet);
  rule.min_length = min_length;
  return rule;
}

bool valid_rule_name(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

std::size_t parse_length(const std::string& value, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size() || v < 1) throw std::invalid_argument("range");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": min_length must be a positive integer");
  }
}

// Byte offset -> scalar offset for every lead-byte position (and the end).
std::vector<std::ptrdiff_t> scalar_index(std::string_view utf8) {
  std::vector<std::ptrdiff_t> index(utf8.size() + 1, -1);
  std::ptrdiff_t scalar = 0;
  for (std::size_t i = 0; i < utf8.size(); ++i) {
    if ((static_cast<unsigned char>(utf8[i]) & 0xC0) != 0x80) index[i] = scalar++;
  }
  index[utf8.size()] = scalar;
  return index;
}

}  // namespace

RuleConfig RuleConfig::defaults(std::size_t min_sequence_length) {
  if (min_sequence_length < 1) throw ConfigError("minimum sequence length must be >= 1");
  RuleConfig config;
  config.rules_.push_back(builtin_protein_rule(min_sequence_length));
  return config;
}

const Rule* RuleConfig::find(std::string_view name) const {
  for (const auto& r : rules_) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

RuleConfig RuleConfig::parse(std::istream& in) {
  struct Pending {
    std::map<std::string, std::pair<std::string, std::size_t>> fields;  // key -> (value, line)
  };
  std::vector<std::string> order;
  std::map<std::string, Pending> pending;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = text::trim(std::string_view(trimmed).substr(0, eq));
    const auto value = text::trim(std::string_view(trimmed).substr(eq + 1));
    const auto parts = text::split(key, '.');
    if (parts.size() != 3 || parts[0] != "rule" || !valid_rule_name(parts[1])) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    static const std::vector<std::string> kFields{"kind", "category", "alphabet", "pattern",
                                                  "min_length"};
    if (std::find(kFields.begin(), kFields.end(), parts[2]) == kFields.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown rule field '" + parts[2] +
                        "'");
    }
    if (!pending.count(parts[1])) order.push_back(parts[1]);
    pending[parts[1]].fields[parts[2]] = {value, line_no};
  }

  RuleConfig config;
  if (!pending.count(std::string(kProteinSequenceRule))) {
    config.rules_.push_back(builtin_protein_rule(kDefaultMinSequenceLength));
  }
  for (const auto& name : order) {
    const auto& fields = pending[name].fields;
    const auto get = [&](const std::string& k) -> const std::pair<std::string, std::size_t>* {
      auto it = fields.find(k);
      return it == fields.end() ? nullptr : &it->second;
    };
    const std::size_t first_line = fields.begin()->second.second;
    const auto where = [&](const std::pair<std::string, std::size_t>* f) {
      return "line " + std::to_string(f ? f->second : first_line) + ": rule '" + name + "': ";
    };

    Rule rule = name == kProteinSequenceRule ? builtin_protein_rule(kDefaultMinSequenceLength)
                                             : Rule{};
    rule.name = name;
    if (name != kProteinSequenceRule) rule.min_length = 1;

    if (const auto* f = get("category")) {
      const auto cat = parse_category(f->first);
      if (!cat || *cat == Category::kIndirectInference) {
        throw ConfigError(where(f) + "invalid category '" + f->first + "'");
      }
      rule.category = *cat;
    } else if (name != kProteinSequenceRule) {
      throw ConfigError(where(nullptr) + "missing category");
    }

    const auto* kind = get("kind");
    const auto* pattern = get("pattern");
    const auto* alphabet = get("alphabet");
    std::string kind_name;
    if (kind) {
      kind_name = kind->first;
    } else if (pattern) {
      kind_name = "regex";
    } else if (alphabet || name == kProteinSequenceRule) {
      kind_name = "alphabet";
    } else {
      throw ConfigError(where(nullptr) + "needs an alphabet or a pattern");
    }

    if (kind_name == "alphabet") {
      rule.kind = Rule::Kind::kAlphabetRun;
      if (alphabet) {
        try {
          rule.alphabet = text::decode_utf8(alphabet->first);
        } catch (const ArgumentError& e) {
          throw ConfigError(where(alphabet) + e.what());
        }
      }
      if (rule.alphabet.empty()) throw ConfigError(where(alphabet) + "empty alphabet");
      if (pattern) throw ConfigError(where(pattern) + "pattern given for an alphabet rule");
    } else if (kind_name == "regex") {
      rule.kind = Rule::Kind::kRegex;
      if (!pattern || pattern->first.empty()) throw ConfigError(where(pattern) + "missing pattern");
      rule.pattern = pattern->first;
      try {
        rule.compiled = std::make_shared<const std::regex>(rule.pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw ConfigError(where(pattern) + "malformed pattern: " + e.what());
      }
      rule.alphabet.clear();
    } else {
      throw ConfigError(where(kind) + "unknown kind '" + kind_name + "'");
    }

    if (const auto* f = get("min_length")) rule.min_length = parse_length(f->first, f->second);

    if (name == kProteinSequenceRule) {
      config.rules_.insert(config.rules_.begin(), std::move(rule));
    } else {
      config.rules_.push_back(std::move(rule));
    }
  }
  return config;
}

RuleConfig RuleConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rule file " + path.string());
  return parse(in);
}

std::vector<DetectionSpan> scan_rule_based(const Prompt& prompt, const RuleConfig& rules) {
  const auto scalars = text::decode_utf8(prompt.text);
  const std::u32string_view view(scalars);
  std::vector<DetectionSpan> spans;

  const auto emit = [&](const Rule& rule, std::size_t start, std::size_t end) {
    DetectionSpan span;
    span.prompt_id = prompt.id;
    span.start = start;
    span.end = end;
    span.surface = text::encode_utf8(view.substr(start, end - start));
    span.category = rule.category;
    span.technique = Technique::kRule;
    span.score = 1.0;
    span.rationale = "matched rule '" + rule.name + "'";
    spans.push_back(std::move(span));
  };

  std::vector<std::ptrdiff_t> byte_to_scalar;
  for (const auto& rule : rules.rules()) {
    if (rule.kind == Rule::Kind::kAlphabetRun) {
      std::size_t i = 0;
      while (i < view.size()) {
        if (rule.alphabet.find(view[i]) == std::u32string::npos) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j < view.size() && rule.alphabet.find(view[j]) != std::u32string::npos) ++j;
        if (j - i >= rule.min_length) emit(rule, i, j);
        i = j;
      }
    } else if (rule.compiled) {
      if (byte_to_scalar.empty()) byte_to_scalar = scalar_index(prompt.text);
      for (auto it = std::sregex_iterator(prompt.text.begin(), prompt.text.end(), *rule.compiled);
           it != std::sregex_iterator(); ++it) {
        const auto b = static_cast<std::size_t>(it->position());
        const auto e = b + static_cast<std::size_t>(it->length());
        const auto s0 = byte_to_scalar[b];
        const auto s1 = byte_to_scalar[e];
        if (s0 < 0 || s1 < 0 || s1 <= s0) continue;
        if (static_cast<std::size_t>(s1 - s0) < rule.min_length) continue;
        emit(rule, static_cast<std::size_t>(s0), static_cast<std::size_t>(s1));
      }
    }
  }
  std::stable_sort(spans.begin(), spans.end(), [](const DetectionSpan& a, const DetectionSpan& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  return spans;
}

}  // namespace datashield
