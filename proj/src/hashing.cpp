#include "statprec/hashing.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <openssl/evp.h>

namespace statprec {

namespace {

std::string to_hex(const unsigned char* data, std::size_t size) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * size);
  for (std::size_t i = 0; i < size; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xF]);
  }
  return out;
}

std::string sha1(std::span<const unsigned char> prefix, std::span<const unsigned char> body) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha1: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, prefix.data(), prefix.size()) == 1 &&
                  EVP_DigestUpdate(ctx, body.data(), body.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &length) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  return to_hex(digest, length);
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string scenario_hash(const std::vector<Scenario>& scenarios) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : scenarios)
    for (const auto& u : s.users) {
      const auto* data = reinterpret_cast<const unsigned char*>(u.channel.data());
      h = fnv1a64({data, static_cast<std::size_t>(u.channel.size()) * sizeof(cplx)}, h);
    }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string git_blob_sha1(std::span<const unsigned char> content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  return sha1({reinterpret_cast<const unsigned char*>(header.data()), header.size()}, content);
}

std::string git_blob_sha1_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for hashing");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  return git_blob_sha1(bytes);
}

std::string sha1_hex(const std::string& text) {
  return sha1({}, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

}  // namespace statprec
