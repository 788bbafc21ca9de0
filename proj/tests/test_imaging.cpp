#include <gtest/gtest.h>

#include <cmath>

#include "advgrasp/imaging.hpp"
#include "advgrasp/rng.hpp"
#include "expect.hpp"
#include "support.hpp"

using namespace advgrasp;
using testing_support::box;
using testing_support::expect_code;

namespace {

const ImageConfig kCfg{};

int count_on(const Grid& g) {
  int n = 0;
  for (double v : g.pixels) n += v > 0.5;
  return n;
}

}  // namespace

TEST(Render, CenteredSquarePixelCount) {
  for (double side : {0.0525, 0.03, 0.011, 0.1}) {
    const Image img = render_scene(box(side, side), Pose2{}, kCfg);
    // Pixel centres sit on multiples of the pixel pitch around the origin.
    const int k = static_cast<int>(std::floor(side / 2 / kCfg.meters_per_pixel + 1e-9));
    EXPECT_EQ(count_on(img), (2 * k + 1) * (2 * k + 1)) << "side " << side;
    EXPECT_EQ(img.at(32, 32), 1.0);
    EXPECT_EQ(img.at(32 + k + 1, 32), 0.0);
  }
  EXPECT_EQ(count_on(render_scene(box(0.0525, 0.0525), Pose2{}, kCfg)), 121);
}

TEST(Render, PixelsAreBinaryAndSized) {
  const Image img = render_scene(testing_support::load("t_shape"), Pose2(0.01, 0.02, 0.7), kCfg);
  EXPECT_EQ(img.width, 64);
  EXPECT_EQ(img.height, 64);
  EXPECT_EQ(img.meters_per_pixel, 0.005);
  for (double v : img.pixels) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Render, TranslationByWholePixelsShiftsRaster) {
  const ObjectShape o{"odd", 0.5, 0.1, {{{-0.0213, -0.0117}, {0.0191, -0.0171}, {0.0237, 0.0143}, {-0.0089, 0.0213}}}};
  const Image base = render_scene(o, Pose2{}, kCfg);
  for (auto [dc, dr] : {std::pair{3, 2}, std::pair{-5, 4}, std::pair{0, -7}}) {
    const Pose2 shift(dc * kCfg.meters_per_pixel, -dr * kCfg.meters_per_pixel, 0.0);
    const Image moved = render_scene(o, shift, kCfg);
    EXPECT_EQ(count_on(moved), count_on(base));
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (!base.in_bounds(c - dc, r - dr)) continue;
        ASSERT_EQ(moved.at(c, r), base.at(c - dc, r - dr)) << c << "," << r;
      }
    }
  }
}

TEST(Render, Deterministic) {
  const ObjectShape stick = testing_support::load("stick");
  EXPECT_EQ(render_scene(stick, Pose2(0.01, 0, 1.0), kCfg), render_scene(stick, Pose2(0.01, 0, 1.0), kCfg));
}

TEST(Render, ObjectOutsideFrame) {
  expect_code([] { render_scene(box(0.4, 0.02), Pose2{}, kCfg); }, ErrorCode::OUT_OF_FRAME);
  expect_code([] { render_scene(box(0.02, 0.02), Pose2(0.2, 0, 0), kCfg); }, ErrorCode::OUT_OF_FRAME);
  expect_code([] { render_scene(ObjectShape{"empty", 0.5, 0.1, {}}, Pose2{}, kCfg); }, ErrorCode::INVALID_SHAPE);
}

TEST(Render, ShippedObjectsFitAtAnyRotation) {
  for (const std::string& name : testing_support::object_names()) {
    for (double t = 0; t < 6.3; t += 0.5) {
      EXPECT_GT(count_on(render_scene(testing_support::load(name), Pose2(0, 0, t), kCfg)), 20) << name;
    }
  }
}

TEST(PatchCenters, AllPatchesCoverTheStick) {
  const Image img = render_scene(testing_support::load("stick"), Pose2(0, 0, 0.4), kCfg);
  Rng rng(21);
  const auto centers = sample_patch_centers(img, 20, rng, 32);
  ASSERT_EQ(centers.size(), 20u);
  for (const PixelPoint& c : centers) {
    ASSERT_TRUE(patch_fits(img, c, 32));
    EXPECT_GT(count_on(extract_patch(img, c, 32)), 0);
  }
}

TEST(PatchCenters, SingleCenterAndDeterminism) {
  const Image img = render_scene(testing_support::load("round_nut"), Pose2{}, kCfg);
  Rng a(5), b(5);
  const auto one = sample_patch_centers(img, 1, a, 32);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_GT(count_on(extract_patch(img, one[0], 32)), 0);
  Rng c(8), d(8);
  const auto x = sample_patch_centers(img, 12, c, 32);
  const auto y = sample_patch_centers(img, 12, d, 32);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].col, y[i].col);
    EXPECT_EQ(x[i].row, y[i].row);
  }
}

TEST(PatchCenters, FallbackWhenObjectNearEdge) {
  // Object sits outside the valid centre range, so every patch comes from the fallback.
  const Image img = render_scene(box(0.01, 0.01), Pose2(0.145, 0.145, 0), kCfg);
  Rng rng(1);
  const auto centers = sample_patch_centers(img, 3, rng, 32);
  ASSERT_EQ(centers.size(), 3u);
  for (const PixelPoint& c : centers) {
    ASSERT_TRUE(patch_fits(img, c, 32));
    EXPECT_GT(count_on(extract_patch(img, c, 32)), 0);
  }
}

TEST(Patch, CenterWindowIsMiddleQuadrant) {
  Image img(64, 64, 0.005);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) img.at(c, r) = (r * 64 + c) / 4096.0;
  const Patch p = extract_patch(img, {32, 32}, 32);
  EXPECT_EQ(p.size_px(), 32);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) EXPECT_EQ(p.at(c, r), img.at(c + 16, r + 16));
  EXPECT_EQ(extract_patch(img, {16, 16}, 32).at(0, 0), img.at(0, 0));
  EXPECT_EQ(extract_patch(img, {48, 48}, 32).at(31, 31), img.at(63, 63));
}

TEST(Patch, ZeroImageGivesZeroPatch) {
  const Image img(64, 64, 0.005);
  const Patch p = extract_patch(img, {20, 40}, 32);
  for (double v : p.pixels) EXPECT_EQ(v, 0.0);
}

TEST(Patch, EmbedRoundTrip) {
  Image img = render_scene(testing_support::load("bottle"), Pose2(0, 0, 0.3), kCfg);
  const Image original = img;
  const Patch p = extract_patch(img, {30, 37}, 32);
  Grid blank(64, 64);
  embed_patch(blank, p);
  for (int r = 21; r < 53; ++r)
    for (int c = 14; c < 46; ++c) EXPECT_EQ(blank.at(c, r), original.at(c, r));
  embed_patch(img, p);
  EXPECT_EQ(img, original);
}

TEST(Patch, OutOfBounds) {
  const Image img(64, 64, 0.005);
  expect_code([&] { extract_patch(img, {15, 32}, 32); }, ErrorCode::OUT_OF_BOUNDS);
  expect_code([&] { extract_patch(img, {32, 49}, 32); }, ErrorCode::OUT_OF_BOUNDS);
  Grid g(64, 64);
  Patch p = extract_patch(img, {32, 32}, 32);
  p.center = {60, 60};
  expect_code([&] { embed_patch(g, p); }, ErrorCode::OUT_OF_BOUNDS);
}

TEST(PixelMap, CenterAndUnitStep) {
  const Image img(64, 64, 0.005);
  const Vec2 c = pixel_to_world(img, {32, 32});
  EXPECT_EQ(c.x, 0.0);
  EXPECT_EQ(c.y, 0.0);
  const Vec2 right = pixel_to_world(img, {33, 32});
  EXPECT_DOUBLE_EQ(right.x, 0.005);
  EXPECT_EQ(right.y, 0.0);
  EXPECT_DOUBLE_EQ(pixel_to_world(img, {32, 31}).y, 0.005);
}

TEST(PixelMap, RoundTrip) {
  const Image img(64, 64, 0.005);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const PixelPoint p{static_cast<int>(rng.index(64)), static_cast<int>(rng.index(64))};
    const PixelPoint q = world_to_pixel(img, pixel_to_world(img, p));
    EXPECT_EQ(p.col, q.col);
    EXPECT_EQ(p.row, q.row);
  }
}

TEST(PixelMap, OutOfBounds) {
  const Image img(64, 64, 0.005);
  expect_code([&] { pixel_to_world(img, {64, 0}); }, ErrorCode::OUT_OF_BOUNDS);
  expect_code([&] { pixel_to_world(img, {0, -1}); }, ErrorCode::OUT_OF_BOUNDS);
  expect_code([&] { world_to_pixel(img, {1.0, 0.0}); }, ErrorCode::OUT_OF_BOUNDS);
}

TEST(Encoding, PgmRoundTrip) {
  const Image img = render_scene(testing_support::load("half_nut"), Pose2{}, kCfg);
  const std::string pgm = encode_pgm(img);
  EXPECT_EQ(pgm.rfind("P5\n64 64\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), 13u + 64 * 64);
  const Grid back = decode_pgm(pgm);
  EXPECT_EQ(back.width, 64);
  EXPECT_EQ(back.pixels, img.pixels);
  expect_code([&] { decode_pgm(pgm.substr(0, pgm.size() - 1)); }, ErrorCode::PARSE);
  expect_code([] { decode_pgm("P2\n1 1\n255\n0"); }, ErrorCode::PARSE);
}

TEST(Encoding, Base64) {
  EXPECT_EQ(base64_encode("hello"), "aGVsbG8=");
  EXPECT_EQ(base64_decode("aGVsbG8="), "hello");
  EXPECT_EQ(base64_encode(""), "");
  const std::string bytes("\x00\xff\x10\x80z", 5);
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  expect_code([] { base64_decode("a$=="); }, ErrorCode::PARSE);
}

TEST(ImageConfig, Validation) {
  EXPECT_NO_THROW(validate(ImageConfig{}));
  ImageConfig bad;
  bad.patch_px = 80;
  expect_code([&] { validate(bad); }, ErrorCode::INVALID_CONFIG);
}
