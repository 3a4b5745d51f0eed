#include "datashield/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <tuple>

#include "datashield/error.hpp"

namespace datashield {
namespace {

std::size_t parse_offset(const std::string& s, std::size_t line) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParseError(line, "offset '" + s + "' is not a non-negative integer");
  }
  try {
    return static_cast<std::size_t>(std::stoull(s));
  } catch (const std::exception&) {
    throw ParseError(line, "offset '" + s + "' out of range");
  }
}

std::u32string decode_line(const std::string& s, std::size_t line) {
  try {
    return text::decode_utf8(s);
  } catch (const ArgumentError& e) {
    throw ParseError(line, e.what());
  }
}

std::string without_spaces(std::u32string_view s) {
  std::u32string out;
  for (char32_t c : s) {
    if (!text::is_space(c)) out.push_back(c);
  }
  return text::encode_utf8(out);
}

}  // namespace

AnnotatedCorpus parse_native_corpus(std::istream& in) {
  AnnotatedCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    AnnotatedSentence sentence;
    sentence.id = "s" + std::to_string(corpus.size() + 1);
    sentence.text = line.substr(0, tab);
    const auto scalars = decode_line(sentence.text, line_no);
    if (tab != std::string::npos) {
      const auto rest = line.substr(tab + 1);
      if (rest.find('\t') != std::string::npos) throw ParseError(line_no, "too many fields");
      for (const auto& item : text::split(rest, ';')) {
        if (text::trim(item).empty()) continue;
        const auto bar1 = item.find('|');
        const auto bar2 = bar1 == std::string::npos ? bar1 : item.find('|', bar1 + 1);
        if (bar2 == std::string::npos) throw ParseError(line_no, "mention must be start|end|surface");
        GoldMention m;
        m.start = parse_offset(item.substr(0, bar1), line_no);
        m.end = parse_offset(item.substr(bar1 + 1, bar2 - bar1 - 1), line_no);
        m.surface = item.substr(bar2 + 1);
        if (m.start >= m.end || m.end > scalars.size()) {
          throw ParseError(line_no, "mention offsets outside the sentence");
        }
        const auto slice = text::encode_utf8(
            std::u32string_view(scalars).substr(m.start, m.end - m.start));
        if (slice != m.surface) {
          throw ParseError(line_no, "mention '" + m.surface + "' does not match text '" + slice +
                                        "'");
        }
        sentence.gold.push_back(std::move(m));
      }
    }
    corpus.push_back(std::move(sentence));
  }
  return corpus;
}

AnnotatedCorpus parse_bc2gm_corpus(std::istream& sentences, std::istream& mentions) {
  AnnotatedCorpus corpus;
  std::map<std::string, std::size_t> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(sentences, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0) {
      throw ParseError(line_no, "expected '<id> <sentence>'");
    }
    AnnotatedSentence s;
    s.id = line.substr(0, space);
    s.text = line.substr(space + 1);
    decode_line(s.text, line_no);
    if (!by_id.emplace(s.id, corpus.size()).second) {
      throw ParseError(line_no, "duplicate sentence id '" + s.id + "'");
    }
    corpus.push_back(std::move(s));
  }

  line_no = 0;
  while (std::getline(mentions, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto bar1 = line.find('|');
    const auto bar2 = bar1 == std::string::npos ? bar1 : line.find('|', bar1 + 1);
    if (bar2 == std::string::npos) throw ParseError(line_no, "expected '<id>|<first> <last>|<mention>'");
    const auto id = line.substr(0, bar1);
    const auto offsets = text::split(line.substr(bar1 + 1, bar2 - bar1 - 1), ' ');
    if (offsets.size() != 2) throw ParseError(line_no, "expected two offsets");
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ParseError(line_no, "unknown sentence id '" + id + "'");
    auto& sentence = corpus[it->second];
    const auto scalars = text::decode_utf8(sentence.text);

    std::vector<std::size_t> position;  // non-space index -> scalar offset
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (!text::is_space(scalars[i])) position.push_back(i);
    }
    const auto first = parse_offset(offsets[0], line_no);
    const auto last = parse_offset(offsets[1], line_no);
    if (first > last || last >= position.size()) {
      throw ParseError(line_no, "mention offsets outside the sentence");
    }
    GoldMention m;
    m.start = position[first];
    m.end = position[last] + 1;
    m.surface = text::encode_utf8(std::u32string_view(scalars).substr(m.start, m.end - m.start));
    const auto expected = decode_line(line.substr(bar2 + 1), line_no);
    if (without_spaces(expected) != without_spaces(text::decode_utf8(m.surface))) {
      throw ParseError(line_no, "mention text does not match the sentence");
    }
    sentence.gold.push_back(std::move(m));
  }
  return corpus;
}

AnnotatedCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  return parse_native_corpus(in);
}

AnnotatedCorpus load_bc2gm_corpus(const std::filesystem::path& sentences,
                                  const std::filesystem::path& mentions) {
  std::ifstream s(sentences);
  if (!s) throw IoError("cannot open " + sentences.string());
  std::ifstream m(mentions);
  if (!m) throw IoError("cannot open " + mentions.string());
  return parse_bc2gm_corpus(s, m);
}

MetricsReport metrics_from_counts(std::string tool, ConfusionCounts counts) {
  MetricsReport r;
  r.tool = std::move(tool);
  r.counts = counts;
  const auto tp = static_cast<double>(counts.tp);
  r.precision = counts.tp + counts.fp == 0 ? 1.0 : tp / static_cast<double>(counts.tp + counts.fp);
  r.recall = counts.tp + counts.fn == 0 ? 1.0 : tp / static_cast<double>(counts.tp + counts.fn);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0
                                       : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  r.accuracy = r.recall;
  return r;
}

ConfusionCounts count_matches(const std::vector<GoldMention>& gold,
                              const std::vector<DetectionSpan>& predicted) {
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  std::map<Key, std::size_t> remaining;
  for (const auto& g : gold) ++remaining[{g.start, g.end, text::fold_case_utf8(g.surface)}];
  ConfusionCounts c;
  for (const auto& p : predicted) {
    if (p.whole_prompt) continue;
    auto it = remaining.find({p.start, p.end, text::fold_case_utf8(p.surface)});
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = gold.size() - c.tp;
  return c;
}

MetricsReport evaluate_detection(const AnnotatedCorpus& corpus, const DetectorSetup& setup) {
  static const Gazetteer kEmptyGazetteer;
  static const UserTermList kNoTerms;
  const Gazetteer& gazetteer = setup.gazetteer ? *setup.gazetteer : kEmptyGazetteer;
  const UserTermList& terms = setup.terms ? *setup.terms : kNoTerms;

  ConfusionCounts total;
  for (const auto& sentence : corpus) {
    const Prompt prompt{sentence.id, sentence.text, 0};
    const auto result = scan_full(prompt, gazetteer, terms, setup.client, setup.config);
    const auto c = count_matches(sentence.gold, result.spans);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  auto report = metrics_from_counts(setup.tool_name, total);
  report.sentences = corpus.size();
  return report;
}

std::string render_metrics_table(const std::vector<MetricsReport>& reports) {
  std::size_t width = 4;
  for (const auto& r : reports) width = std::max(width, r.tool.size());
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %12s  %13s  %10s  %12s\n", static_cast<int>(width),
                "Tool", "Accuracy (%)", "Precision (%)", "Recall (%)", "F1 Score (%)");
  out += buf;
  out += std::string(width + 2 + 12 + 2 + 13 + 2 + 10 + 2 + 12, '-') + "\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %12.2f  %13.2f  %10.2f  %12.2f\n",
                  static_cast<int>(width), r.tool.c_str(), 100.0 * r.accuracy,
                  100.0 * r.precision, 100.0 * r.recall, 100.0 * r.f1);
    out += buf;
  }
  return out;
}

}  // namespace datashield
