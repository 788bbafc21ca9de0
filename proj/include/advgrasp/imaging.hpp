#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "advgrasp/error.hpp"
#include "advgrasp/geometry.hpp"
#include "advgrasp/rng.hpp"

namespace advgrasp {

struct PixelPoint {
  int col = 0;
  int row = 0;
  friend bool operator==(PixelPoint, PixelPoint) = default;
};

struct ImageConfig {
  int size_px = 64;
  int patch_px = 32;
  double meters_per_pixel = 0.005;
};

inline void to_json(nlohmann::json& j, const ImageConfig& c) {
  j = {{"size_px", c.size_px}, {"patch_px", c.patch_px}, {"meters_per_pixel", c.meters_per_pixel}};
}

inline void from_json(const nlohmann::json& j, ImageConfig& c) {
  c = ImageConfig{};
  c.size_px = j.value("size_px", c.size_px);
  c.patch_px = j.value("patch_px", c.patch_px);
  c.meters_per_pixel = j.value("meters_per_pixel", c.meters_per_pixel);
}

inline void validate(const ImageConfig& c) {
  if (c.size_px < 2 || c.patch_px < 2 || c.patch_px > c.size_px || c.patch_px % 2 != 0 || !(c.meters_per_pixel > 0))
    throw Error(ErrorCode::INVALID_CONFIG, "imaging parameters out of range");
}

// Row-major grayscale raster with intensities in [0, 1].
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Grid() = default;
  Grid(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int col, int row) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool in_bounds(int col, int row) const { return col >= 0 && row >= 0 && col < width && row < height; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

struct Image : Grid {
  double meters_per_pixel = 0.005;

  Image() = default;
  Image(int w, int h, double mpp) : Grid(w, h), meters_per_pixel(mpp) {}
};

struct Patch : Grid {
  PixelPoint center;

  int size_px() const { return width; }
};

// Image center maps to the world origin; rows grow downward, world y grows upward.
inline Vec2 pixel_to_world(const Image& img, PixelPoint p) {
  if (!img.in_bounds(p.col, p.row)) throw Error(ErrorCode::OUT_OF_BOUNDS, "pixel outside image");
  return {(p.col - img.width / 2) * img.meters_per_pixel, (img.height / 2 - p.row) * img.meters_per_pixel};
}

inline PixelPoint world_to_pixel(const Image& img, Vec2 w) {
  const PixelPoint p{static_cast<int>(std::lround(w.x / img.meters_per_pixel)) + img.width / 2,
                     img.height / 2 - static_cast<int>(std::lround(w.y / img.meters_per_pixel))};
  if (!img.in_bounds(p.col, p.row)) throw Error(ErrorCode::OUT_OF_BOUNDS, "world point outside image");
  return p;
}

// Continuous pixel coordinates, no bounds check.
inline Vec2 world_to_pixel_coords(const Image& img, Vec2 w) {
  return {w.x / img.meters_per_pixel + img.width / 2, img.height / 2 - w.y / img.meters_per_pixel};
}

inline Image render_scene(const ObjectShape& object, const Pose2& pose, const ImageConfig& cfg = {}) {
  validate(object);
  Image img(cfg.size_px, cfg.size_px, cfg.meters_per_pixel);
  const ObjectShape world = transformed(object, pose);
  for (const Polygon& poly : world.parts) {
    for (const Vec2& v : poly) {
      const Vec2 uv = world_to_pixel_coords(img, v);
      if (uv.x < -0.5 || uv.y < -0.5 || uv.x > img.width - 0.5 || uv.y > img.height - 0.5)
        throw Error(ErrorCode::OUT_OF_FRAME, "'" + object.name + "' does not fit in the camera frame");
    }
  }
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      img.at(col, row) = contains(world, pixel_to_world(img, {col, row})) ? 1.0 : 0.0;
    }
  }
  return img;
}

inline bool patch_fits(const Grid& img, PixelPoint center, int size_px) {
  const int half = size_px / 2;
  return center.col - half >= 0 && center.row - half >= 0 && center.col + half <= img.width &&
         center.row + half <= img.height;
}

// Window [center - size/2, center + size/2) in both axes.
inline Patch extract_patch(const Image& img, PixelPoint center, int size_px) {
  if (!patch_fits(img, center, size_px)) throw Error(ErrorCode::OUT_OF_BOUNDS, "patch outside image");
  Patch patch;
  patch.width = patch.height = size_px;
  patch.center = center;
  patch.pixels.resize(static_cast<std::size_t>(size_px) * size_px);
  const int half = size_px / 2;
  for (int r = 0; r < size_px; ++r) {
    for (int c = 0; c < size_px; ++c) patch.at(c, r) = img.at(center.col - half + c, center.row - half + r);
  }
  return patch;
}

inline void embed_patch(Grid& img, const Patch& patch) {
  if (!patch_fits(img, patch.center, patch.width)) throw Error(ErrorCode::OUT_OF_BOUNDS, "patch outside image");
  const int half = patch.width / 2;
  for (int r = 0; r < patch.height; ++r) {
    for (int c = 0; c < patch.width; ++c) img.at(patch.center.col - half + c, patch.center.row - half + r) = patch.at(c, r);
  }
}

// Rejection-samples patch centers that land on an object pixel with the whole
// patch inside the image; after 1000*n_g rejections the remaining centers are
// drawn from the object pixels inside the valid center range.
inline std::vector<PixelPoint> sample_patch_centers(const Image& img, std::size_t n_g, Rng& rng, int patch_px = 32) {
  const int half = patch_px / 2;
  const int lo_c = half, hi_c = img.width - half;
  const int lo_r = half, hi_r = img.height - half;
  if (hi_c < lo_c || hi_r < lo_r) throw Error(ErrorCode::OUT_OF_BOUNDS, "patch larger than image");

  std::vector<PixelPoint> centers;
  centers.reserve(n_g);
  std::size_t rejections = 0;
  const std::size_t budget = 1000 * n_g;
  while (centers.size() < n_g && rejections < budget) {
    const PixelPoint p{lo_c + static_cast<int>(rng.index(static_cast<std::size_t>(hi_c - lo_c + 1))),
                       lo_r + static_cast<int>(rng.index(static_cast<std::size_t>(hi_r - lo_r + 1)))};
    if (img.at(p.col, p.row) > 0.5) {
      centers.push_back(p);
    } else {
      ++rejections;
    }
  }
  if (centers.size() == n_g) return centers;

  std::vector<PixelPoint> candidates;
  int min_c = img.width, max_c = -1, min_r = img.height, max_r = -1;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (img.at(c, r) <= 0.5) continue;
      min_c = std::min(min_c, c), max_c = std::max(max_c, c);
      min_r = std::min(min_r, r), max_r = std::max(max_r, r);
      if (c >= lo_c && c <= hi_c && r >= lo_r && r <= hi_r) candidates.push_back({c, r});
    }
  }
  if (candidates.empty()) {
    // No object pixel admits a full patch: clamp the bounding-box center into range.
    const int c = max_c < 0 ? img.width / 2 : (min_c + max_c) / 2;
    const int r = max_r < 0 ? img.height / 2 : (min_r + max_r) / 2;
    candidates.push_back({std::clamp(c, lo_c, hi_c), std::clamp(r, lo_r, hi_r)});
  }
  while (centers.size() < n_g) centers.push_back(candidates[rng.index(candidates.size())]);
  return centers;
}

// ---- Serialization: binary PGM (P5) and base64 ----

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::string encode_pgm(const Grid& g) {
  std::string out = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  out.reserve(out.size() + g.pixels.size());
  for (double v : g.pixels) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

inline Grid decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (next_token() != "P5") throw Error(ErrorCode::PARSE, "not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::PARSE, "bad PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::PARSE, "unsupported PGM header");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + n) throw Error(ErrorCode::PARSE, "truncated PGM payload");
  Grid g(w, h);
  for (std::size_t i = 0; i < n; ++i) g.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return g;
}

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::PARSE, "base64 length not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::PARSE, "invalid base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

}  // namespace advgrasp
