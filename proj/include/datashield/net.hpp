#pragma once

#include <cstddef>
#include <string_view>

namespace datashield::net {

// Every outbound connection the library makes goes through
// note_outbound(). Tests arm the guard to turn any attempt into an error.
void note_outbound(std::string_view target);
std::size_t outbound_attempts();
void reset_outbound_attempts();

class Guard {
 public:
  Guard();
  ~Guard();
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;
};

bool guard_armed();

}  // namespace datashield::net
