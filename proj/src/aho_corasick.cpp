#include "datashield/aho_corasick.hpp"

#include <algorithm>
#include <queue>

namespace datashield {

AhoCorasick::AhoCorasick(const std::vector<std::u32string>& patterns) {
  pattern_lengths_.reserve(patterns.size());
  for (std::size_t p = 0; p < patterns.size(); ++p) {
    const auto& pat = patterns[p];
    pattern_lengths_.push_back(pat.size());
    if (pat.empty()) continue;
    std::int32_t node = 0;
    for (char32_t c : pat) {
      std::int32_t next = child(node, c);
      if (next < 0) {
        next = static_cast<std::int32_t>(nodes_.size());
        nodes_.emplace_back();
        auto& edges = nodes_[node].next;
        auto it = std::lower_bound(edges.begin(), edges.end(), c,
                                   [](const auto& e, char32_t v) { return e.first < v; });
        edges.insert(it, {c, next});
      }
      node = next;
    }
    nodes_[node].outputs.push_back(p);
  }

  // Breadth-first failure links.
  std::queue<std::int32_t> pending;
  for (const auto& [c, next] : nodes_[0].next) {
    nodes_[next].fail = 0;
    pending.push(next);
  }
  while (!pending.empty()) {
    const std::int32_t node = pending.front();
    pending.pop();
    for (const auto& [c, next] : nodes_[node].next) {
      std::int32_t f = nodes_[node].fail;
      while (f != 0 && child(f, c) < 0) f = nodes_[f].fail;
      const std::int32_t target = child(f, c);
      nodes_[next].fail = (target >= 0 && target != next) ? target : 0;
      const auto& fail_node = nodes_[nodes_[next].fail];
      nodes_[next].output_link =
          fail_node.outputs.empty() ? fail_node.output_link : nodes_[next].fail;
      pending.push(next);
    }
  }
}

std::int32_t AhoCorasick::child(std::int32_t node, char32_t c) const {
  const auto& edges = nodes_[node].next;
  auto it = std::lower_bound(edges.begin(), edges.end(), c,
                             [](const auto& e, char32_t v) { return e.first < v; });
  if (it == edges.end() || it->first != c) return -1;
  return it->second;
}

std::int32_t AhoCorasick::step(std::int32_t node, char32_t c) const {
  while (true) {
    const std::int32_t next = child(node, c);
    if (next >= 0) return next;
    if (node == 0) return 0;
    node = nodes_[node].fail;
  }
}

std::vector<AhoCorasick::Hit> AhoCorasick::find_all(std::u32string_view text) const {
  std::vector<Hit> hits;
  std::int32_t node = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    node = step(node, text[i]);
    const std::size_t end = i + 1;
    std::size_t first = hits.size();
    for (std::int32_t out = nodes_[node].outputs.empty() ? nodes_[node].output_link : node;
         out > 0; out = nodes_[out].output_link) {
      for (std::size_t p : nodes_[out].outputs) {
        hits.push_back({end - pattern_lengths_[p], end, p});
      }
    }
    // Longest first among hits ending here.
    std::sort(hits.begin() + static_cast<std::ptrdiff_t>(first), hits.end(),
              [](const Hit& a, const Hit& b) {
                if (a.start != b.start) return a.start < b.start;
                return a.pattern < b.pattern;
              });
  }
  return hits;
}

}  // namespace datashield
