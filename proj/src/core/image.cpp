#include "verse3d/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "verse3d/core/errors.hpp"

namespace verse3d {

namespace {

// Half-sample symmetric extension: -1 -> 0, -2 -> 1, n -> n-1.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

int wrap_index(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

double keys_cubic(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
  if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
  return 0.0;
}

struct Taps {
  std::vector<int> first;   // per output sample: offset into index/weight
  std::vector<int> count;
  std::vector<int> index;
  std::vector<double> weight;
};

Taps cubic_taps(int in_size, int out_size) {
  Taps taps;
  const double scale = static_cast<double>(out_size) / in_size;
  const double kernel_scale = std::min(1.0, scale);
  const double support = 2.0 / kernel_scale;
  taps.first.resize(out_size);
  taps.count.resize(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    taps.first[o] = static_cast<int>(taps.index.size());
    double sum = 0.0;
    const std::size_t start = taps.weight.size();
    for (int i = lo; i <= hi; ++i) {
      const double w = keys_cubic((center - i) * kernel_scale) * kernel_scale;
      if (w == 0.0) continue;
      taps.index.push_back(reflect_index(i, in_size));
      taps.weight.push_back(w);
      sum += w;
    }
    for (std::size_t k = start; k < taps.weight.size(); ++k) taps.weight[k] /= sum;
    taps.count[o] = static_cast<int>(taps.weight.size() - start);
  }
  return taps;
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 1 || height < 1) throw DomainError("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw DomainError("image must have 1 or 3 channels");
  data_.assign(pixel_count() * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 1 || height < 1) throw DomainError("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw DomainError("image must have 1 or 3 channels");
  if (data_.size() != pixel_count() * channels) {
    throw DomainError("image data length " + std::to_string(data_.size()) +
                      " does not match " + std::to_string(width) + "x" +
                      std::to_string(height) + "x" + std::to_string(channels));
  }
}

void ImageBuffer::validate_color() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DomainError("color sample outside [0,1]: " + std::to_string(v));
    }
  }
}

void ImageBuffer::validate_depth() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("depth sample not finite and nonnegative: " + std::to_string(v));
    }
  }
}

PanoImage::PanoImage(ImageBuffer buffer) : buffer_(std::move(buffer)) {
  if (buffer_.width() != 2 * buffer_.height()) {
    throw DomainError("panorama width must be twice its height, got " +
                      std::to_string(buffer_.width()) + "x" +
                      std::to_string(buffer_.height()));
  }
}

void sample_bilinear(const ImageBuffer& img, double x, double y, WrapMode horizontal,
                     WrapMode vertical, std::span<double> out) {
  const int w = img.width();
  const int h = img.height();
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double tx = x - fx0;
  const double ty = y - fy0;
  int x0 = static_cast<int>(fx0);
  int y0 = static_cast<int>(fy0);
  int x1 = x0 + 1;
  int y1 = y0 + 1;
  if (horizontal == WrapMode::kWrap) {
    x0 = wrap_index(x0, w);
    x1 = wrap_index(x1, w);
  } else {
    x0 = std::clamp(x0, 0, w - 1);
    x1 = std::clamp(x1, 0, w - 1);
  }
  if (vertical == WrapMode::kWrap) {
    y0 = wrap_index(y0, h);
    y1 = wrap_index(y1, h);
  } else {
    y0 = std::clamp(y0, 0, h - 1);
    y1 = std::clamp(y1, 0, h - 1);
  }
  for (int c = 0; c < img.channels(); ++c) {
    const double top = img.at(x0, y0, c) * (1.0 - tx) + img.at(x1, y0, c) * tx;
    const double bottom = img.at(x0, y1, c) * (1.0 - tx) + img.at(x1, y1, c) * tx;
    out[c] = top * (1.0 - ty) + bottom * ty;
  }
}

ImageBuffer resize_bicubic(const ImageBuffer& img, int width, int height) {
  if (width < 1 || height < 1) throw DomainError("resize target must be positive");
  if (width == img.width() && height == img.height()) return img;
  const int ch = img.channels();
  const Taps tx = cubic_taps(img.width(), width);
  const Taps ty = cubic_taps(img.height(), height);

  ImageBuffer horizontal(width, img.height(), ch);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < tx.count[x]; ++k) {
          const int t = tx.first[x] + k;
          acc += tx.weight[t] * img.at(tx.index[t], y, c);
        }
        horizontal.at(x, y, c) = acc;
      }
    }
  }
  ImageBuffer out(width, height, ch);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < ty.count[y]; ++k) {
          const int t = ty.first[y] + k;
          acc += ty.weight[t] * horizontal.at(x, ty.index[t], c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
  if (sigma <= 0.0) return img;
  const std::vector<double> k = gaussian_kernel_1d(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();
  ImageBuffer tmp(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * img.at(reflect_index(x + i, w), y, c);
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  ImageBuffer out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * tmp.at(x, reflect_index(y + i, h), c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer luminance(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(x, y) =
          0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

ImageBuffer flip_horizontal(const ImageBuffer& img) {
  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        out.at(x, y, c) = img.at(img.width() - 1 - x, y, c);
      }
    }
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > img.width() || y0 + height > img.height()) {
    throw DomainError("crop window outside image");
  }
  ImageBuffer out(width, height, img.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

ImageBuffer clamp01(ImageBuffer img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw DomainError("mean_squared_error: shape mismatch");
  double acc = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace verse3d
