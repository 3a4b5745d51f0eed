#include <fstream>
#include <istream>
#include <sstream>

#include "datashield/detection.hpp"
#include "datashield/error.hpp"

namespace datashield {

Gazetteer::Gazetteer(std::vector<GazetteerEntry> entries) : entries_(std::move(entries)) {
  std::vector<std::u32string> folded;
  folded.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto name = text::fold_case(text::decode_utf8(entries_[i].name));
    if (name.size() < 2) {
      throw ConfigError("gazetteer entry '" + entries_[i].name + "' is shorter than 2 characters");
    }
    if (!by_folded_name_.emplace(name, i).second) {
      throw ConfigError("duplicate gazetteer entry '" + entries_[i].name + "'");
    }
    lengths_.push_back(name.size());
    folded.push_back(std::move(name));
  }
  index_ = std::make_shared<AhoCorasick>(folded);
}

Gazetteer Gazetteer::parse(std::istream& in) {
  std::vector<GazetteerEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto fields = text::split(line, '\t');
    if (fields.size() != 3) throw ParseError(line_no, "expected name<TAB>kind<TAB>tier");
    GazetteerEntry entry;
    entry.name = text::trim(fields[0]);
    const auto kind = text::trim(fields[1]);
    const auto tier = text::trim(fields[2]);
    if (kind == "GENE") {
      entry.kind = EntryKind::kGene;
    } else if (kind == "PROTEIN") {
      entry.kind = EntryKind::kProtein;
    } else {
      throw ParseError(line_no, "unknown kind '" + kind + "'");
    }
    if (tier == "WELL_CITED") {
      entry.tier = CitationTier::kWellCited;
    } else if (tier == "ORDINARY") {
      entry.tier = CitationTier::kOrdinary;
    } else {
      throw ParseError(line_no, "unknown tier '" + tier + "'");
    }
    try {
      text::decode_utf8(entry.name);
    } catch (const ArgumentError& e) {
      throw ParseError(line_no, e.what());
    }
    entries.push_back(std::move(entry));
  }
  return Gazetteer(std::move(entries));
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gazetteer file " + path.string());
  return parse(in);
}

const GazetteerEntry* Gazetteer::lookup(std::string_view name) const {
  std::u32string key;
  try {
    key = text::fold_case(text::decode_utf8(name));
  } catch (const ArgumentError&) {
    return nullptr;
  }
  const auto it = by_folded_name_.find(key);
  return it == by_folded_name_.end() ? nullptr : &entries_[it->second];
}

std::vector<Gazetteer::Match> Gazetteer::find(std::u32string_view text) const {
  if (entries_.empty() || text.empty()) return {};
  const auto folded = text::fold_case(text);
  std::vector<Match> candidates;
  for (const auto& hit : index_->find_all(folded)) {
    const bool left_ok = hit.start == 0 || !text::is_word_char(folded[hit.start - 1]);
    const bool right_ok = hit.end == folded.size() || !text::is_word_char(folded[hit.end]);
    if (left_ok && right_ok) candidates.push_back({hit.start, hit.end, hit.pattern});
  }
  return leftmost_longest(std::move(candidates));
}

std::vector<DetectionSpan> scan_gazetteer(const Prompt& prompt, const Gazetteer& gazetteer) {
  const auto scalars = text::decode_utf8(prompt.text);
  const std::u32string_view view(scalars);
  std::vector<DetectionSpan> spans;
  for (const auto& m : gazetteer.find(view)) {
    const auto& entry = gazetteer.entries()[m.entry];
    DetectionSpan span;
    span.prompt_id = prompt.id;
    span.start = m.start;
    span.end = m.end;
    span.surface = text::encode_utf8(view.substr(m.start, m.end - m.start));
    span.category = entry.kind == EntryKind::kGene ? Category::kGeneName : Category::kProteinName;
    span.technique = Technique::kGazetteer;
    span.score = 1.0;
    span.rationale = "knowledge-base entry '" + entry.name + "' (" +
                     std::string(to_string(entry.tier)) + ")";
    spans.push_back(std::move(span));
  }
  return spans;
}

}  // namespace datashield
