#include "datashield/types.hpp"

#include <array>
#include <utility>

#include "datashield/error.hpp"

namespace datashield {
namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view s) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Category, std::string_view>, 5> kCategories{{
    {Category::kGeneName, "GeneName"},
    {Category::kProteinName, "ProteinName"},
    {Category::kProteinSequence, "ProteinSequence"},
    {Category::kUserTerm, "UserTerm"},
    {Category::kIndirectInference, "IndirectInference"},
}};

constexpr std::array<std::pair<Technique, std::string_view>, 4> kTechniques{{
    {Technique::kRule, "Rule"},
    {Technique::kGazetteer, "Gazetteer"},
    {Technique::kFuzzy, "Fuzzy"},
    {Technique::kLlm, "LLM"},
}};

constexpr std::array<std::pair<Sensitivity, std::string_view>, 3> kSensitivities{{
    {Sensitivity::kHigh, "High"},
    {Sensitivity::kMedium, "Medium"},
    {Sensitivity::kLow, "Low"},
}};

constexpr std::array<std::pair<Color, std::string_view>, 3> kColors{{
    {Color::kRed, "Red"},
    {Color::kYellow, "Yellow"},
    {Color::kBlue, "Blue"},
}};

}  // namespace

std::string_view to_string(Category c) { return name_of(kCategories, c); }
std::string_view to_string(Technique t) { return name_of(kTechniques, t); }
std::string_view to_string(Sensitivity s) { return name_of(kSensitivities, s); }
std::string_view to_string(Color c) { return name_of(kColors, c); }

std::string_view to_string(EntryKind k) { return k == EntryKind::kGene ? "GENE" : "PROTEIN"; }
std::string_view to_string(CitationTier t) {
  return t == CitationTier::kWellCited ? "WELL_CITED" : "ORDINARY";
}

std::optional<Category> parse_category(std::string_view s) { return lookup(kCategories, s); }
std::optional<Technique> parse_technique(std::string_view s) { return lookup(kTechniques, s); }
std::optional<Sensitivity> parse_sensitivity(std::string_view s) {
  return lookup(kSensitivities, s);
}
std::optional<Color> parse_color(std::string_view s) { return lookup(kColors, s); }

std::string_view placeholder_stem(Category c) {
  switch (c) {
    case Category::kGeneName: return "GENE_NAME";
    case Category::kProteinName: return "PROTEIN_NAME";
    case Category::kProteinSequence: return "PROTEIN_SEQUENCE";
    case Category::kUserTerm: return "CONFIDENTIAL_TERM";
    case Category::kIndirectInference: return "INFERRED_ENTITY";
  }
  return "REDACTED";
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kArgument: return "invalid_argument";
    case ErrorCode::kConfig: return "configuration_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kLlm: return "llm_error";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kReplay: return "replay_error";
    case ErrorCode::kFetch: return "fetch_error";
    case ErrorCode::kContent: return "content_error";
    case ErrorCode::kStorage: return "storage_error";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "internal_error";
}

}  // namespace datashield
