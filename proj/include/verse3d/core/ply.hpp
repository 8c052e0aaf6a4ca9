#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace verse3d {

enum class PlyType { kFloat32, kFloat64, kUint8 };

/// A single-element ("vertex") binary little-endian PLY table. Values are held
/// as double row-major, `values[row * names.size() + col]`, and converted to
/// each property's declared type on write.
struct PlyTable {
  std::vector<std::string> names;
  std::vector<PlyType> types;
  std::vector<double> values;
  std::vector<std::string> comments;

  std::size_t columns() const noexcept { return names.size(); }
  std::size_t rows() const noexcept { return names.empty() ? 0 : values.size() / names.size(); }
  void add_property(std::string name, PlyType type);
  /// Column index by name; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
  double at(std::size_t row, std::size_t col) const { return values[row * columns() + col]; }
};

std::string encode_ply(const PlyTable& table);
/// Accepts binary_little_endian 1.0 files with one element of scalar
/// float/double/uchar properties (plus ignored trailing elements of count 0).
PlyTable decode_ply(std::string_view bytes);

void write_ply(const std::filesystem::path& path, const PlyTable& table);
PlyTable read_ply(const std::filesystem::path& path);

}  // namespace verse3d
