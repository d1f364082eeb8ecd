#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace molllama {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Chains mix64 over a word sequence, starting from the FNV-1a offset basis.
constexpr std::uint64_t hash_words(std::span<const std::uint64_t> words) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint64_t w : words) h = mix64(h ^ w);
  return h;
}

constexpr std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

// Git blob object id: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);

}  // namespace molllama
