#include "verse3d/core/ply.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"

namespace verse3d {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
    case PlyType::kUint8: return 1;
  }
  return 0;
}

const char* type_name(PlyType t) {
  switch (t) {
    case PlyType::kFloat32: return "float";
    case PlyType::kFloat64: return "double";
    case PlyType::kUint8: return "uchar";
  }
  return "";
}

PlyType parse_type(const std::string& s) {
  if (s == "float" || s == "float32") return PlyType::kFloat32;
  if (s == "double" || s == "float64") return PlyType::kFloat64;
  if (s == "uchar" || s == "uint8") return PlyType::kUint8;
  throw ParseError("PLY: unsupported property type '" + s + "'");
}

}  // namespace

void PlyTable::add_property(std::string name, PlyType type) {
  names.push_back(std::move(name));
  types.push_back(type);
}

std::size_t PlyTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ParseError("PLY: missing property '" + std::string(name) + "'");
}

std::string encode_ply(const PlyTable& table) {
  if (table.names.size() != table.types.size()) throw DomainError("PLY: names/types mismatch");
  if (!table.names.empty() && table.values.size() % table.names.size() != 0) {
    throw DomainError("PLY: value count is not a multiple of the column count");
  }
  std::ostringstream out;
  out << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : table.comments) out << "comment " << c << "\n";
  out << "element vertex " << table.rows() << "\n";
  for (std::size_t i = 0; i < table.names.size(); ++i) {
    out << "property " << type_name(table.types[i]) << " " << table.names[i] << "\n";
  }
  out << "end_header\n";
  std::string bytes = out.str();
  std::size_t row_size = 0;
  for (PlyType t : table.types) row_size += type_size(t);
  const std::size_t header = bytes.size();
  bytes.resize(header + row_size * table.rows());
  char* p = bytes.data() + header;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t c = 0; c < table.columns(); ++c) {
      const double v = table.at(r, c);
      switch (table.types[c]) {
        case PlyType::kFloat32: {
          const float f = static_cast<float>(v);
          std::memcpy(p, &f, 4);
          p += 4;
          break;
        }
        case PlyType::kFloat64:
          std::memcpy(p, &v, 8);
          p += 8;
          break;
        case PlyType::kUint8: {
          const double clamped = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
          *p++ = static_cast<char>(static_cast<std::uint8_t>(clamped + 0.5));
          break;
        }
      }
    }
  }
  return bytes;
}

PlyTable decode_ply(std::string_view bytes) {
  const std::size_t end = bytes.find("end_header\n");
  if (bytes.substr(0, 4) != "ply\n" || end == std::string_view::npos) {
    throw ParseError("PLY: missing magic or header terminator");
  }
  std::istringstream header(std::string(bytes.substr(0, end)));
  PlyTable table;
  std::string line;
  std::size_t count = 0;
  int elements = 0;
  bool format_ok = false;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      format_ok = fmt == "binary_little_endian";
    } else if (kw == "comment") {
      table.comments.push_back(line.size() > 8 ? line.substr(8) : "");
    } else if (kw == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (++elements == 1) {
        count = n;
      } else if (n != 0) {
        throw ParseError("PLY: only a single non-empty element is supported");
      }
    } else if (kw == "property" && elements == 1) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw ParseError("PLY: list properties are not supported");
      table.add_property(name, parse_type(type));
    }
  }
  if (!format_ok) throw ParseError("PLY: only binary_little_endian is supported");
  std::size_t row_size = 0;
  for (PlyType t : table.types) row_size += type_size(t);
  const std::size_t body = end + std::strlen("end_header\n");
  if (bytes.size() < body + row_size * count) throw ParseError("PLY: truncated body");
  table.values.resize(count * table.columns());
  const char* p = bytes.data() + body;
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < table.columns(); ++c) {
      double v = 0.0;
      switch (table.types[c]) {
        case PlyType::kFloat32: {
          float f;
          std::memcpy(&f, p, 4);
          v = f;
          p += 4;
          break;
        }
        case PlyType::kFloat64:
          std::memcpy(&v, p, 8);
          p += 8;
          break;
        case PlyType::kUint8:
          v = static_cast<std::uint8_t>(*p++);
          break;
      }
      table.values[r * table.columns() + c] = v;
    }
  }
  return table;
}

void write_ply(const std::filesystem::path& path, const PlyTable& table) {
  write_file(path, encode_ply(table));
}

PlyTable read_ply(const std::filesystem::path& path) { return decode_ply(read_file(path)); }

}  // namespace verse3d
