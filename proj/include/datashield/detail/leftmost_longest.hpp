#pragma once

#include <algorithm>
#include <vector>

namespace datashield {

template <typename M>
std::vector<M> leftmost_longest(std::vector<M> matches) {
  std::sort(matches.begin(), matches.end(), [](const M& a, const M& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end > b.end;
  });
  std::vector<M> kept;
  std::size_t frontier = 0;
  for (const auto& m : matches) {
    if (!kept.empty() && m.start < frontier) continue;
    kept.push_back(m);
    frontier = m.end;
  }
  return kept;
}

}  // namespace datashield
