#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace datashield {

enum class Category { kGeneName, kProteinName, kProteinSequence, kUserTerm, kIndirectInference };
enum class Technique { kRule, kGazetteer, kFuzzy, kLlm };
enum class Sensitivity { kHigh, kMedium, kLow };
enum class Color { kRed, kYellow, kBlue };
enum class EntryKind { kGene, kProtein };
enum class CitationTier { kWellCited, kOrdinary };

std::string_view to_string(Category c);
std::string_view to_string(Technique t);
std::string_view to_string(Sensitivity s);
std::string_view to_string(Color c);
std::string_view to_string(EntryKind k);
std::string_view to_string(CitationTier t);

std::optional<Category> parse_category(std::string_view s);
std::optional<Technique> parse_technique(std::string_view s);
std::optional<Sensitivity> parse_sensitivity(std::string_view s);
std::optional<Color> parse_color(std::string_view s);

// High<->Red, Medium<->Yellow, Low<->Blue.
constexpr Color color_of(Sensitivity s) {
  switch (s) {
    case Sensitivity::kHigh: return Color::kRed;
    case Sensitivity::kMedium: return Color::kYellow;
    case Sensitivity::kLow: return Color::kBlue;
  }
  return Color::kYellow;
}

constexpr Sensitivity sensitivity_of(Color c) {
  switch (c) {
    case Color::kRed: return Sensitivity::kHigh;
    case Color::kYellow: return Sensitivity::kMedium;
    case Color::kBlue: return Sensitivity::kLow;
  }
  return Sensitivity::kMedium;
}

// Redaction token for a category, without brackets or suffix.
std::string_view placeholder_stem(Category c);

}  // namespace datashield
