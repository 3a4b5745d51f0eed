#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace datashield {

// Multi-pattern matcher over Unicode scalar strings. Immutable once built;
// concurrent find() calls are safe.
class AhoCorasick {
 public:
  struct Hit {
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // exclusive
    std::size_t pattern = 0;
  };

  AhoCorasick() = default;
  explicit AhoCorasick(const std::vector<std::u32string>& patterns);

  // Every occurrence of every pattern, ordered by end offset then by
  // descending length.
  std::vector<Hit> find_all(std::u32string_view text) const;

  std::size_t pattern_count() const { return pattern_lengths_.size(); }

 private:
  struct Node {
    std::vector<std::pair<char32_t, std::int32_t>> next;  // sorted by symbol
    std::int32_t fail = 0;
    std::int32_t output_link = -1;  // nearest proper suffix node with outputs
    std::vector<std::size_t> outputs;
  };

  std::int32_t child(std::int32_t node, char32_t c) const;
  std::int32_t step(std::int32_t node, char32_t c) const;

  std::vector<Node> nodes_{Node{}};
  std::vector<std::size_t> pattern_lengths_;
};

}  // namespace datashield
