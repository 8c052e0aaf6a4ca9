#include "verse3d/backends/mock.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/core/parallel.hpp"
#include "verse3d/geometry/panorama.hpp"

namespace verse3d {

namespace {

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  return unit_from_bits(hash_combine(hash_combine(seed, static_cast<std::uint64_t>(ix)),
                                     static_cast<std::uint64_t>(iy)));
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

std::string between(const std::string& text, const std::string& open, const std::string& close) {
  const auto a = text.find(open);
  if (a == std::string::npos) return {};
  const auto start = a + open.size();
  const auto b = text.find(close, start);
  if (b == std::string::npos) return {};
  return text.substr(start, b - start);
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> verse_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  auto push = [&] {
    std::string t = trim(cur);
    if (!t.empty()) lines.push_back(t);
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') {
      push();
    } else if (text[i] == '/') {
      push();
    } else {
      cur += text[i];
    }
  }
  push();
  return lines;
}

std::string phrase_of(const std::string& line) {
  std::string out;
  for (unsigned char c : line) {
    if (std::isalnum(c) || c == ' ' || c == '\'' || c == '-' || c >= 0x80) {
      out += static_cast<char>(std::tolower(c));
    }
  }
  out = trim(out);
  for (const char* article : {"the ", "a ", "an "}) {
    if (out.rfind(article, 0) == 0) out = out.substr(std::strlen(article));
  }
  return trim(out);
}

std::string fenced(const std::string& tag, const nlohmann::json& body) {
  return "```" + tag + "\n" + body.dump(2) + "\n```\n";
}

const char* const kThemes[] = {"stillness",  "impermanence", "solitude", "renewal",
                               "longing",    "quiet wonder", "transience", "harmony"};

}  // namespace

double value_noise(std::uint64_t seed, double x, double y, double cell, int octaves) {
  double sum = 0.0;
  double norm = 0.0;
  double amp = 1.0;
  for (int o = 0; o < octaves; ++o) {
    const std::uint64_t s = hash_combine(seed, static_cast<std::uint64_t>(o));
    const double fx = x / cell;
    const double fy = y / cell;
    const double x0 = std::floor(fx);
    const double y0 = std::floor(fy);
    const double tx = smoothstep(fx - x0);
    const double ty = smoothstep(fy - y0);
    const auto ix = static_cast<std::int64_t>(x0);
    const auto iy = static_cast<std::int64_t>(y0);
    const double top = lattice(s, ix, iy) * (1 - tx) + lattice(s, ix + 1, iy) * tx;
    const double bottom = lattice(s, ix, iy + 1) * (1 - tx) + lattice(s, ix + 1, iy + 1) * tx;
    sum += amp * (top * (1 - ty) + bottom * ty);
    norm += amp;
    amp *= 0.5;
    cell *= 0.5;
  }
  return std::min(sum / norm, std::nextafter(1.0, 0.0));
}

ImageBuffer procedural_image(std::uint64_t seed, int width, int height, double cell) {
  if (width < 1 || height < 1) throw DomainError("procedural_image: dimensions must be positive");
  ImageBuffer img(width, height, 3);
  parallel_for_each_index(height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = value_noise(hash_combine(seed, c), x + 0.5, y + 0.5, cell);
      }
    }
  });
  return img;
}

std::string llm_request_key(const std::vector<ChatMessage>& messages) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ChatMessage& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return sha256_hex(arr.dump());
}

ScriptedLlm::ScriptedLlm(std::map<std::string, std::string> transcript,
                         std::shared_ptr<const LlmBackend> fallback)
    : transcript_(std::move(transcript)), fallback_(std::move(fallback)) {}

ScriptedLlm ScriptedLlm::from_file(const std::filesystem::path& path,
                                   std::shared_ptr<const LlmBackend> fallback) {
  if (!std::filesystem::exists(path)) throw NotFoundError("transcript not found: " + path.string());
  std::map<std::string, std::string> t;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    if (j.at("format") != "verse3d-llm-transcript-1") throw ParseError("unknown transcript format");
    for (const auto& e : j.at("entries")) t[e.at("key").get<std::string>()] = e.at("response");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("transcript " + path.string() + ": " + e.what());
  }
  return ScriptedLlm(std::move(t), std::move(fallback));
}

std::string ScriptedLlm::complete(const std::vector<ChatMessage>& messages) const {
  if (messages.empty()) throw DomainError("llm: empty message list");
  const std::string key = llm_request_key(messages);
  const auto it = transcript_.find(key);
  if (it != transcript_.end()) return it->second;
  if (fallback_) return fallback_->complete(messages);
  throw NotFoundError("scripted llm: no transcript entry for request " + key);
}

void save_transcript(const std::filesystem::path& path,
                     const std::map<std::string, std::string>& transcript) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [k, v] : transcript) entries.push_back({{"key", k}, {"response", v}});
  const nlohmann::json j = {{"format", "verse3d-llm-transcript-1"}, {"entries", entries}};
  write_file(path, j.dump(2) + "\n");
}

std::string ProceduralLlm::complete(const std::vector<ChatMessage>& messages) const {
  if (messages.empty()) throw DomainError("llm: empty message list");
  const std::string& msg = messages.back().content;
  const std::uint64_t h = hash_combine(seed_, hash_string(msg));
  if (msg.find("verse3d:stage1") != std::string::npos) {
    const std::vector<std::string> lines = verse_lines(between(msg, "<haiku>", "</haiku>"));
    std::string translation;
    for (std::size_t i = 0; i < lines.size(); ++i) translation += (i ? " / " : "") + lines[i];
    if (translation.empty()) translation = "(untitled verse)";
    const std::string first = lines.empty() ? "the scene" : phrase_of(lines.front());
    const std::string last = lines.empty() ? "the moment" : phrase_of(lines.back());
    return fenced("verse3d:stage1",
                  {{"translation", translation},
                   {"cultural_context", "A seasonal verse whose imagery centers on " + first + "."},
                   {"appreciation", "The verse sets " + first + " against " + last + ", evoking " +
                                        kThemes[h % 8] + "."},
                   {"attributed_poet", nullptr}});
  }
  if (msg.find("verse3d:stage2") != std::string::npos) {
    nlohmann::json elements = nlohmann::json::array();
    int k = 0;
    for (const std::string& line : verse_lines(between(msg, "<translation>", "</translation>"))) {
      const std::string p = phrase_of(line);
      if (p.empty()) continue;
      elements.push_back({{"phrase", p}, {"symbolic_note", "image carried by line " + std::to_string(++k)}});
    }
    if (elements.empty()) elements.push_back({{"phrase", "empty landscape"}, {"symbolic_note", "placeholder"}});
    return fenced("verse3d:stage2",
                  {{"elements", elements}, {"emotional_themes", {kThemes[h % 8], kThemes[(h >> 8) % 8]}}});
  }
  if (msg.find("verse3d:stage3") != std::string::npos) {
    std::ostringstream p;
    p << "A wide panoramic landscape in soft natural light, painted with quiet detail.";
    const std::string list = between(msg, "<elements>", "</elements>");
    for (const std::string& e : verse_lines(list)) {
      std::string t = e;
      if (!t.empty() && t.front() == '-') t = trim(t.substr(1));
      if (!t.empty()) p << " The scene shows " << t << ".";
    }
    p << " The mood is one of " << kThemes[h % 8] << ".";
    return fenced("verse3d:stage3", {{"prompt", p.str()}});
  }
  return "I can only answer the verse3d parsing templates.";
}

std::string RecordingLlm::complete(const std::vector<ChatMessage>& messages) const {
  std::string response = inner_->complete(messages);
  std::lock_guard lock(mutex_);
  transcript_[llm_request_key(messages)] = response;
  return response;
}

std::map<std::string, std::string> RecordingLlm::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

int mock_token_count(const std::string& text) {
  int tokens = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      if (!in_word) ++tokens;
      in_word = true;
    } else {
      in_word = false;
      if (!std::isspace(c)) ++tokens;
    }
  }
  return tokens;
}

ImageResult MockTextToImage::text_to_image(const std::string& prompt, std::uint64_t seed,
                                           int width, int height) const {
  if (width != height) throw DomainError("t2i: only square outputs are supported");
  if (width < 1) throw DomainError("t2i: dimensions must be positive");
  ImageResult r;
  r.image = procedural_image(hash_combine(seed, hash_string(prompt)), width, height, width / 8.0);
  r.metadata = {{"upscale_stages", "0"}, {"backend", "mock"}};
  return r;
}

PanoImage MockOutpaint::outpaint(const OutpaintRequest& req) const {
  req.validate();
  const int w = req.width;
  const int h = req.height;
  const int fs = req.central_face.width();
  const std::uint64_t seed = hash_combine(req.seed, hash_string(req.prompt));
  ImageBuffer out(w, h, 3);
  parallel_for_each_index(h, [&](int y) {
    double sample[3];
    for (int x = 0; x < w; ++x) {
      if (req.mask.at(x, y) == 0.0) {
        const CubeCoord cc = direction_to_cube(pixel_to_ray(w, h, x, y), fs);
        sample_bilinear(req.central_face, cc.x, cc.y, WrapMode::kClamp, WrapMode::kClamp,
                        std::span<double>(sample, 3));
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample[c];
      } else {
        for (int c = 0; c < 3; ++c) {
          out.at(x, y, c) = value_noise(hash_combine(seed, c), x + 0.5, y + 0.5, h / 8.0);
        }
      }
    }
  });
  return PanoImage(std::move(out));
}

PanoImage MockDepth::estimate_depth(const PanoImage& pano) const {
  const int w = pano.width();
  const int h = pano.height();
  if (w < 1) throw DomainError("depth: empty panorama");
  ImageBuffer out(w, h, 1);
  parallel_for_each_index(h, [&](int y) {
    const double phi = 0.5 * std::numbers::pi - std::numbers::pi * (y + 0.5) / h;
    const double band = std::pow(std::cos(phi), 4.0);
    for (int x = 0; x < w; ++x) {
      const double n = value_noise(seed_, x + 0.5, y + 0.5, h / 4.0, 3);
      out.at(x, y) = 1.0 + 4.0 * band + 0.5 * n;
    }
  });
  return PanoImage(std::move(out));
}

ImageBuffer MockEnhance::enhance(const ImageBuffer& image, int scale) const {
  check_enhance_scale(scale);
  const ImageBuffer up = resize_bicubic(image, image.width() * scale, image.height() * scale);
  const ImageBuffer blur = gaussian_blur(up, 1.0);
  ImageBuffer out = up;
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    out.data()[i] = up.data()[i] + 0.5 * (up.data()[i] - blur.data()[i]);
  }
  return clamp01(std::move(out));
}

double MockVqa::yes_probability(const VqaQuery& q) const {
  q.validate();
  const std::uint64_t h =
      hash_combine(hash_combine(seed_, hash_string(q.question())), hash_doubles(q.image.data()));
  return unit_from_bits(h);
}

double MockQalign::quality(const ImageBuffer& image) const {
  if (image.empty()) throw DomainError("qalign: empty image");
  return 1.0 + 4.0 * unit_from_bits(hash_combine(seed_, hash_doubles(image.data())));
}

}  // namespace verse3d
