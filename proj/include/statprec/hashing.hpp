#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "statprec/channels.hpp"

namespace statprec {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// FNV-1a over the raw channel coefficients of every user, as 16 hex digits.
std::string scenario_hash(const std::vector<Scenario>& scenarios);

// SHA-1 of "blob <size>\0<content>", the way git names file contents.
std::string git_blob_sha1(std::span<const unsigned char> content);
std::string git_blob_sha1_file(const std::string& path);

std::string sha1_hex(const std::string& text);

}  // namespace statprec
