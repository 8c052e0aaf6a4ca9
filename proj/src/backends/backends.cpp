#include "verse3d/backends/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "verse3d/core/errors.hpp"
#include "verse3d/geometry/panorama.hpp"

namespace verse3d {

int LocalTokenEstimate::count_tokens(const std::string& text) const {
  int tokens = 0;
  int letters = 0;
  auto flush = [&] {
    tokens += (letters + 2) / 3;
    letters = 0;
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 0x80) {
      ++letters;
    } else {
      flush();
      ++tokens;
    }
  }
  flush();
  return tokens;
}

void OutpaintRequest::validate() const {
  if (central_face.empty() || central_face.width() != central_face.height()) {
    throw DomainError("outpaint: central face must be a non-empty square image");
  }
  if (central_face.channels() != 3) throw DomainError("outpaint: central face must be RGB");
  if (height < 1 || width != 2 * height) throw DomainError("outpaint: panorama must be 2:1");
  if (mask.width() != width || mask.height() != height || mask.channels() != 1) {
    throw DomainError("outpaint: mask must be single-channel with the panorama's dimensions");
  }
  // All-ones is the degenerate "synthesize everything" mask.
  const bool all_ones =
      std::all_of(mask.data().begin(), mask.data().end(), [](double v) { return v == 1.0; });
  if (!all_ones && !(mask == central_face_mask(width, height))) {
    throw DomainError("outpaint: mask must be zero exactly on the central face");
  }
}

std::string VqaQuery::question() const {
  return "Does this image show '" + statement + "'? Please answer 'yes' or 'no'.";
}

void VqaQuery::validate() const {
  if (statement.empty()) throw DomainError("vqa: statement must be non-empty");
  if (image.empty()) throw DomainError("vqa: image must be non-empty");
}

void check_enhance_scale(int scale) {
  if (scale != 2 && scale != 4) {
    throw DomainError("enhance: scale must be 2 or 4 (got " + std::to_string(scale) + ")");
  }
}

double check_probability(double p) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
    throw ProtocolError("vqa: backend returned a non-probability " + std::to_string(p));
  }
  return p;
}

}  // namespace verse3d
