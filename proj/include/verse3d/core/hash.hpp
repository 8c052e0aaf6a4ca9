#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verse3d {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

std::string base64_encode(std::string_view bytes);
/// Throws ParseError on malformed input.
std::string base64_decode(std::string_view text);

/// SplitMix64 finalizer; the building block of every seeded mock.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ mix64(value));
}

/// 64-bit FNV-1a folded through mix64, stable across platforms.
std::uint64_t hash_string(std::string_view text) noexcept;
std::uint64_t hash_doubles(std::span<const double> values) noexcept;

/// Maps 64 random bits to [0, 1) with 53-bit resolution.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace verse3d
