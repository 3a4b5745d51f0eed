#include "datashield/net.hpp"

#include <atomic>
#include <string>

#include "datashield/error.hpp"

namespace datashield::net {
namespace {
std::atomic<std::size_t> g_attempts{0};
std::atomic<int> g_guards{0};
}  // namespace

void note_outbound(std::string_view target) {
  ++g_attempts;
  if (g_guards.load() > 0) {
    throw Error(ErrorCode::kInternal,
                "network guard: outbound connection to " + std::string(target) + " blocked");
  }
}

std::size_t outbound_attempts() { return g_attempts.load(); }
void reset_outbound_attempts() { g_attempts = 0; }

Guard::Guard() { ++g_guards; }
Guard::~Guard() { --g_guards; }

bool guard_armed() { return g_guards.load() > 0; }

}  // namespace datashield::net
