#include "verse3d/core/image_io.hpp"

#include <ImfChannelList.h>
#include <ImfFrameBuffer.h>
#include <ImfHeader.h>
#include <ImfInputFile.h>
#include <ImfOutputFile.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "verse3d/core/errors.hpp"

namespace verse3d {

namespace {

constexpr char kDepthScaleKey[] = "depth_scale";

struct WriteTarget {
  std::string* bytes;
};

struct ReadSource {
  const unsigned char* data;
  std::size_t size;
  std::size_t offset;
};

struct PngError {
  char message[256];
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::strncpy(err->message, msg, sizeof(err->message) - 1);
  err->message[sizeof(err->message) - 1] = '\0';
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void on_png_write(png_structp png, png_bytep data, png_size_t length) {
  auto* target = static_cast<WriteTarget*>(png_get_io_ptr(png));
  target->bytes->append(reinterpret_cast<const char*>(data), length);
}

void on_png_flush(png_structp) {}

void on_png_read(png_structp png, png_bytep data, png_size_t length) {
  auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
  if (src->offset + length > src->size) png_error(png, "truncated PNG stream");
  std::memcpy(data, src->data + src->offset, length);
  src->offset += length;
}

// Only trivially destructible locals live in the setjmp frames below.
bool write_png_raw(std::uint32_t width, std::uint32_t height, int channels, int bit_depth,
                   const unsigned char* rows, std::size_t stride, const char* text_key,
                   const char* text_value, std::string* out, PngError* err) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, err, on_png_error, on_png_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  WriteTarget target{out};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &target, on_png_write, on_png_flush);
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_text text;
  if (text_key != nullptr) {
    std::memset(&text, 0, sizeof text);
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>(text_key);
    text.text = const_cast<char*>(text_value);
    png_set_text(png, info, &text, 1);
  }
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // rows are little-endian in memory
  for (std::uint32_t y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rows + y * stride));
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct DecodedRaw {
  std::uint32_t width;
  std::uint32_t height;
  int channels;   // after transforms: 1 or 3
  int bit_depth;  // 8 or 16
  char text_value[64];
  bool has_text;
};

bool read_png_raw(ReadSource* src, DecodedRaw* meta, std::vector<unsigned char>* pixels,
                  PngError* err) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, err, on_png_error, on_png_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, src, on_png_read);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  meta->width = png_get_image_width(png, info);
  meta->height = png_get_image_height(png, info);
  meta->channels = png_get_channels(png, info);
  meta->bit_depth = png_get_bit_depth(png, info);
  bit_depth = meta->bit_depth;
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels->resize(stride * meta->height);
  for (std::uint32_t y = 0; y < meta->height; ++y) {
    png_read_row(png, pixels->data() + y * stride, nullptr);
  }
  png_read_end(png, info);
  png_textp texts = nullptr;
  int num_text = 0;
  meta->has_text = false;
  if (png_get_text(png, info, &texts, &num_text) > 0) {
    for (int i = 0; i < num_text; ++i) {
      if (std::strcmp(texts[i].key, kDepthScaleKey) == 0) {
        std::strncpy(meta->text_value, texts[i].text, sizeof(meta->text_value) - 1);
        meta->text_value[sizeof(meta->text_value) - 1] = '\0';
        meta->has_text = true;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

std::string encode_samples(const ImageBuffer& img, int bit_depth, const char* text_key,
                           const char* text_value, const std::vector<std::uint16_t>* raw16) {
  if (bit_depth != 8 && bit_depth != 16) throw DomainError("PNG bit depth must be 8 or 16");
  const int ch = img.channels();
  const std::size_t stride = static_cast<std::size_t>(img.width()) * ch * (bit_depth / 8);
  std::vector<unsigned char> rows(stride * img.height());
  const auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (bit_depth == 8) {
      rows[i] = static_cast<unsigned char>(std::lround(std::clamp(data[i], 0.0, 1.0) * 255.0));
    } else {
      const std::uint16_t v =
          raw16 != nullptr
              ? (*raw16)[i]
              : static_cast<std::uint16_t>(std::lround(std::clamp(data[i], 0.0, 1.0) * 65535.0));
      rows[2 * i] = static_cast<unsigned char>(v & 0xff);
      rows[2 * i + 1] = static_cast<unsigned char>(v >> 8);
    }
  }
  std::string out;
  PngError err{};
  if (!write_png_raw(static_cast<std::uint32_t>(img.width()),
                     static_cast<std::uint32_t>(img.height()), ch, bit_depth, rows.data(),
                     stride, text_key, text_value, &out, &err)) {
    throw Error(std::string("PNG encode failed: ") + err.message);
  }
  return out;
}

struct Decoded {
  DecodedRaw meta;
  std::vector<unsigned char> pixels;
};

Decoded decode_raw(std::string_view bytes) {
  if (bytes.size() < 8 ||
      png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw ParseError("not a PNG stream");
  }
  Decoded d{};
  ReadSource src{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
  PngError err{};
  if (!read_png_raw(&src, &d.meta, &d.pixels, &err)) {
    throw ParseError(std::string("PNG decode failed: ") + err.message);
  }
  if (d.meta.channels != 1 && d.meta.channels != 3) {
    throw ParseError("unsupported PNG channel layout");
  }
  return d;
}

std::vector<double> samples_of(const Decoded& d) {
  const std::size_t n = static_cast<std::size_t>(d.meta.width) * d.meta.height * d.meta.channels;
  std::vector<double> out(n);
  if (d.meta.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = d.pixels[2 * i] | (static_cast<unsigned>(d.pixels[2 * i + 1]) << 8);
      out[i] = v / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = d.pixels[i] / 255.0;
  }
  return out;
}

}  // namespace

std::string encode_png(const ImageBuffer& img, int bit_depth) {
  return encode_samples(img, bit_depth, nullptr, nullptr, nullptr);
}

ImageBuffer decode_png(std::string_view bytes) {
  const Decoded d = decode_raw(bytes);
  return ImageBuffer(static_cast<int>(d.meta.width), static_cast<int>(d.meta.height),
                     d.meta.channels, samples_of(d));
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img, int bit_depth) {
  write_file(path, encode_png(img, bit_depth));
}

ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

EncodedDepth encode_depth_png16(const ImageBuffer& depth) {
  if (depth.channels() != 1) throw DomainError("depth raster must be single-channel");
  depth.validate_depth();
  double max_depth = 0.0;
  for (double v : depth.data()) max_depth = std::max(max_depth, v);
  EncodedDepth out;
  out.scale = max_depth > 0.0 ? max_depth : 1.0;
  std::vector<std::uint16_t> raw(depth.data().size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<std::uint16_t>(std::lround(depth.data()[i] / out.scale * 65535.0));
  }
  char scale_text[64];
  std::snprintf(scale_text, sizeof scale_text, "%.17g", out.scale);
  out.png = encode_samples(depth, 16, kDepthScaleKey, scale_text, &raw);
  return out;
}

ImageBuffer decode_depth_png16(std::string_view bytes, double scale) {
  const Decoded d = decode_raw(bytes);
  if (d.meta.channels != 1 || d.meta.bit_depth != 16) {
    throw ParseError("depth PNG must be 16-bit single-channel");
  }
  std::vector<double> samples = samples_of(d);
  for (double& v : samples) v *= scale;
  return ImageBuffer(static_cast<int>(d.meta.width), static_cast<int>(d.meta.height), 1,
                     std::move(samples));
}

ImageBuffer decode_depth_png16(std::string_view bytes) {
  const Decoded d = decode_raw(bytes);
  if (!d.meta.has_text) throw ParseError("depth PNG lacks a depth_scale text chunk");
  return decode_depth_png16(bytes, std::strtod(d.meta.text_value, nullptr));
}

void write_depth_exr(const std::filesystem::path& path, const ImageBuffer& depth) {
  if (depth.channels() != 1) throw DomainError("depth raster must be single-channel");
  const int w = depth.width();
  const int h = depth.height();
  std::vector<float> values(depth.data().begin(), depth.data().end());
  Imf::Header header(w, h);
  header.channels().insert("Z", Imf::Channel(Imf::FLOAT));
  Imf::OutputFile file(path.string().c_str(), header);
  Imf::FrameBuffer fb;
  fb.insert("Z", Imf::Slice(Imf::FLOAT, reinterpret_cast<char*>(values.data()), sizeof(float),
                            sizeof(float) * w));
  file.setFrameBuffer(fb);
  file.writePixels(h);
}

ImageBuffer read_depth_exr(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("cannot open " + path.string());
  Imf::InputFile file(path.string().c_str());
  const auto dw = file.header().dataWindow();
  const int w = dw.max.x - dw.min.x + 1;
  const int h = dw.max.y - dw.min.y + 1;
  const char* channel = file.header().channels().findChannel("Z") != nullptr ? "Z" : "Y";
  if (file.header().channels().findChannel(channel) == nullptr) {
    throw ParseError("EXR file has neither a Z nor a Y channel");
  }
  std::vector<float> values(static_cast<std::size_t>(w) * h);
  Imf::FrameBuffer fb;
  char* base = reinterpret_cast<char*>(values.data()) -
               (static_cast<std::ptrdiff_t>(dw.min.x) + static_cast<std::ptrdiff_t>(dw.min.y) * w) *
                   static_cast<std::ptrdiff_t>(sizeof(float));
  fb.insert(channel, Imf::Slice(Imf::FLOAT, base, sizeof(float), sizeof(float) * w));
  file.setFrameBuffer(fb);
  file.readPixels(dw.min.y, dw.max.y);
  return ImageBuffer(w, h, 1, std::vector<double>(values.begin(), values.end()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace verse3d
