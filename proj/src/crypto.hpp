#pragma once

#include <string>
#include <string_view>

namespace datashield::crypto {

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);
// Throws ParseError(0, ...) on malformed input.
std::string base64_decode(std::string_view data);

}  // namespace datashield::crypto
