#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace verse3d {

/// Row-major raster with 1 or 3 interleaved channels.
///
/// Color rasters hold samples in [0,1]; depth rasters hold finite nonnegative
/// values. Storage is 64-bit so that the 32-bit renderer output and the 64-bit
/// verification path share one type without loss.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0);
  ImageBuffer(int width, int height, int channels, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  bool same_shape(const ImageBuffer& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  /// Throws DomainError unless every sample is finite and in [0,1].
  void validate_color() const;
  /// Throws DomainError unless every sample is finite and >= 0.
  void validate_depth() const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Equirectangular raster; width is always twice the height.
class PanoImage {
 public:
  PanoImage() = default;
  explicit PanoImage(ImageBuffer buffer);

  const ImageBuffer& buffer() const noexcept { return buffer_; }
  ImageBuffer& buffer() noexcept { return buffer_; }
  int width() const noexcept { return buffer_.width(); }
  int height() const noexcept { return buffer_.height(); }
  int channels() const noexcept { return buffer_.channels(); }

  friend bool operator==(const PanoImage&, const PanoImage&) = default;

 private:
  ImageBuffer buffer_;
};

enum class WrapMode { kClamp, kWrap };

/// Bilinear sample at continuous pixel-index coordinates: sample (x, y) = (i, j)
/// returns pixel (i, j) exactly. `out` receives `img.channels()` values.
void sample_bilinear(const ImageBuffer& img, double x, double y, WrapMode horizontal,
                     WrapMode vertical, std::span<double> out);

/// Bicubic (Keys, a = -0.5) resampling with kernel widening on downscale and
/// half-sample symmetric borders.
ImageBuffer resize_bicubic(const ImageBuffer& img, int width, int height);

/// Separable Gaussian blur, radius ceil(3 sigma), symmetric borders.
/// sigma <= 0 returns the input.
ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma);

/// Rec. 601 luma of an RGB image (single-channel input returned unchanged).
ImageBuffer luminance(const ImageBuffer& img);

ImageBuffer flip_horizontal(const ImageBuffer& img);
ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int width, int height);
ImageBuffer clamp01(ImageBuffer img);

double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b);
/// PSNR in dB for signals with peak 1. Identical images give +infinity.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace verse3d
