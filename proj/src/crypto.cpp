#include "crypto.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <vector>

#include "datashield/error.hpp"
#include "datashield/policy.hpp"

namespace datashield::crypto {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0F]);
  }
  return out;
}

std::string base64_encode(std::string_view data) {
  if (data.empty()) return {};
  std::vector<unsigned char> out(4 * ((data.size() + 2) / 3) + 1);
  const int n = EVP_EncodeBlock(out.data(), reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  return std::string(reinterpret_cast<const char*>(out.data()), static_cast<std::size_t>(n));
}

std::string base64_decode(std::string_view data) {
  if (data.empty()) return {};
  if (data.size() % 4 != 0) throw ParseError(0, "base64 length is not a multiple of 4");
  std::vector<unsigned char> out(3 * (data.size() / 4) + 1);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  if (n < 0) throw ParseError(0, "malformed base64");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the bytes produced by '=' padding.
  if (data.size() >= 1 && data[data.size() - 1] == '=') --len;
  if (data.size() >= 2 && data[data.size() - 2] == '=') --len;
  return std::string(reinterpret_cast<const char*>(out.data()), len);
}

}  // namespace datashield::crypto

namespace datashield {
std::string sha256_hex(std::string_view data) { return crypto::sha256_hex(data); }
}  // namespace datashield
