#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace ecnn;
using ecnn::test::single_channel;

constexpr double kPi = std::numbers::pi;

TEST(CanonicalizeTheta, Examples) {
  EXPECT_EQ(canonicalize_theta(0.0), 0.0);
  EXPECT_EQ(canonicalize_theta(kPi), 0.0);
  EXPECT_NEAR(canonicalize_theta(-kPi / 4), 3 * kPi / 4, 1e-15);
}

TEST(CanonicalizeTheta, RangeAndCongruence) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> any(-50.0, 50.0);
  for (int i = 0; i < 20000; ++i) {
    const double t = any(gen);
    const double c = canonicalize_theta(t);
    ASSERT_GE(c, 0.0);
    ASSERT_LT(c, kPi);
    const double k = (t - c) / kPi;
    ASSERT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(CanonicalizeTheta, RejectsNonFinite) {
  EXPECT_THROW(canonicalize_theta(std::nan("")), Error);
  EXPECT_THROW(canonicalize_theta(INFINITY), Error);
}

TEST(GraspSpec, ConstructionChecks) {
  EXPECT_THROW(make_grasp(1, 1, 0.5, 0.0, 0), Error);
  EXPECT_THROW(make_grasp(1, 1, -0.1, 3.0, 0), Error);
  EXPECT_EQ(make_grasp(1, 1, 0.5, 3.0, kPi).theta, 0.0);
  EXPECT_THROW(make_labeled(make_grasp(1, 1, 0.5, 3.0, 0), 2), Error);
}

TEST(GraspToWorld, IdentityCamera) {
  const CameraModel cam;
  const auto a = grasp_to_world(make_grasp(0, 0, 1, 1, 0), cam);
  EXPECT_EQ(a.position, (Vec3{0, 0, 1}));
  EXPECT_EQ(a.width, 1.0);
  const auto b = grasp_to_world(make_grasp(2, 3, 2, 1, 0), cam);
  EXPECT_EQ(b.position, (Vec3{4, 6, 2}));
}

TEST(GraspToWorld, IdentityCameraReducesToScaledPixel) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> px(0, 300), depth(0.1, 3);
  for (int i = 0; i < 1000; ++i) {
    const double u = px(gen), v = px(gen), d = depth(gen);
    const auto w = grasp_to_world(make_grasp(u, v, d, 5, 0.3), CameraModel{});
    ASSERT_EQ(w.position, (Vec3{u * d, v * d, d}));
  }
}

TEST(GraspToWorld, PrincipalRay) {
  CameraModel cam;
  cam.fx = 520;
  cam.fy = 515;
  cam.cx = 151.5;
  cam.cy = 149.25;
  const auto w = grasp_to_world(make_grasp(cam.cx, cam.cy, 0.7, 10, 0), cam);
  EXPECT_EQ(w.position, (Vec3{0, 0, 0.7}));
  EXPECT_NEAR(w.width, 10 * 0.7 / 520, 1e-15);
}

TEST(GraspToWorld, ExtrinsicRotationAndTranslation) {
  CameraModel cam;
  cam.rotation = {0, -1, 0, 1, 0, 0, 0, 0, 1};  // 90 degrees about z
  cam.translation = {1, 2, 3};
  const auto w = grasp_to_world(make_grasp(2, 0, 1, 1, 0), cam);
  EXPECT_NEAR(w.position[0], 1, 1e-15);
  EXPECT_NEAR(w.position[1], 4, 1e-15);
  EXPECT_NEAR(w.position[2], 4, 1e-15);
  EXPECT_NEAR(w.yaw, kPi / 2, 1e-12);
}

TEST(GraspToWorld, Errors) {
  GraspSpec g = make_grasp(1, 1, 0, 1, 0);
  EXPECT_THROW(grasp_to_world(g, CameraModel{}), Error);
  try {
    grasp_to_world(g, CameraModel{});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_depth);
  }
  CameraModel bad;
  bad.rotation = {1, 0, 0, 0, 1, 0, 0, 0, -1};
  EXPECT_THROW(grasp_to_world(make_grasp(1, 1, 1, 1, 0), bad), Error);
  bad = CameraModel{};
  bad.fx = 0;
  EXPECT_THROW(grasp_to_world(make_grasp(1, 1, 1, 1, 0), bad), Error);
}

TEST(Image, Invariants) {
  EXPECT_THROW(Image(2, 2, ChannelSet::depth(), {1, 2, 3}), Error);
  EXPECT_THROW(Image(1, 1, ChannelSet::rgb(), {0.1, 1.2, 0.3}), Error);
  EXPECT_THROW(Image(1, 1, ChannelSet::depth(), {-0.1}), Error);
  EXPECT_THROW(Image(1, 1, ChannelSet::depth(), {NAN}), Error);
  EXPECT_THROW(Image(1, 1, ChannelSet{}, {}), Error);
  const Image ok(1, 1, ChannelSet::rgbd(), {0.1, 0.2, 0.3, 0.8});
  EXPECT_EQ(ok.at(0, 0, Channel::B), 0.3);
  EXPECT_EQ(ChannelSet::parse("DBGR"), ChannelSet::rgbd());
  EXPECT_EQ(ChannelSet::rgbd().to_string(), "RGBD");
}

TEST(ExtractChannels, Examples) {
  const Image img = test::flat_rgbd(5, 4, 0.1, 0.2, 0.3, 0.75);
  const Image d = extract_channels(img, ChannelSet::depth());
  EXPECT_EQ(d.width(), 5u);
  EXPECT_EQ(d.height(), 4u);
  EXPECT_EQ(d.channels(), ChannelSet::depth());
  EXPECT_EQ(d.at(3, 2, Channel::D), 0.75);
  const Image rgb = extract_channels(img, ChannelSet::rgb());
  EXPECT_EQ(rgb.channels(), ChannelSet::rgb());
  EXPECT_EQ(rgb.at(1, 1, Channel::G), 0.2);
  EXPECT_EQ(extract_channels(img, ChannelSet::rgbd()), img);
  try {
    extract_channels(d, ChannelSet::rgb());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_channel);
    EXPECT_NE(std::string(e.what()).find('R'), std::string::npos);
  }
}

TEST(ExtractChannels, RetainsValuesBitwise) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<double> data(7 * 6 * 4);
  for (auto& v : data) v = unit(gen);
  const Image img(7, 6, ChannelSet::rgbd(), data);
  const Image gd = extract_channels(img, ChannelSet{Channel::G, Channel::D});
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 7; ++x) {
      ASSERT_EQ(gd.at(x, y, Channel::G), img.at(x, y, Channel::G));
      ASSERT_EQ(gd.at(x, y, Channel::D), img.at(x, y, Channel::D));
    }
}

namespace {

Image pattern(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<double> data(w * h);
  for (auto& v : data) v = unit(gen);
  return single_channel(w, h, data);
}

}  // namespace

TEST(CropRotate, IdentityAtCentre) {
  const Image img = pattern(8, 8, 1);
  EXPECT_EQ(crop_rotate(img, 3.5, 3.5, 0.0, 8), img);
}

TEST(CropRotate, QuarterTurnOnFourByFour) {
  const Image img = pattern(4, 4, 2);
  const Image out = crop_rotate(img, 1.5, 1.5, kPi / 2, 4);
  // Output column x, row y reads input column 3 - y, row x.
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(x, y, Channel::D), img.at(3 - y, x, Channel::D));
}

TEST(CropRotate, RightAnglesMatchIndexPermutation) {
  const std::size_t n = 9;
  const Image img = pattern(20, 17, 4);
  const long c = static_cast<long>(n / 2);
  for (int q = 0; q < 4; ++q) {
    const Image out = crop_rotate(img, 10, 7, q * kPi / 2, n);
    for (long y = 0; y < static_cast<long>(n); ++y)
      for (long x = 0; x < static_cast<long>(n); ++x) {
        const long dx = x - c, dy = y - c;
        long sx = 0, sy = 0;
        switch (q) {
          case 0: sx = dx, sy = dy; break;
          case 1: sx = -dy, sy = dx; break;
          case 2: sx = -dx, sy = -dy; break;
          case 3: sx = dy, sy = -dx; break;
        }
        ASSERT_EQ(out.at(x, y, Channel::D), img.at(10 + sx, 7 + sy, Channel::D)) << q << " " << x << " " << y;
      }
  }
}

TEST(CropRotate, FullyOutsideIsZero) {
  const Image img = test::flat_rgbd(10, 10, 0.5, 0.5, 0.5, 0.9);
  const Image out = crop_rotate(img, 500, -300, 0.7, 6);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(CropRotate, TwoPiPeriodicAndIdempotent) {
  const Image img = pattern(40, 30, 5);
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> pos(0, 30), ang(0, 2 * kPi);
  for (int i = 0; i < 200; ++i) {
    const double u = pos(gen), v = pos(gen), t = ang(gen);
    const Image a = crop_rotate(img, u, v, t, 11);
    ASSERT_EQ(a, crop_rotate(img, u, v, t + 2 * kPi, 11));
    ASSERT_EQ(crop_rotate(a, 5.0, 5.0, 0.0, 11), a);
  }
}

TEST(CropRotate, Preconditions) {
  const Image img = pattern(4, 4, 7);
  EXPECT_THROW(crop_rotate(img, 1, 1, 0, 0), Error);
  EXPECT_THROW(crop_rotate(Image{}, 1, 1, 0, 3), Error);
  EXPECT_THROW(crop_rotate(img, NAN, 1, 0, 3), Error);
}

TEST(ResizeNearest, DownAndUp) {
  const Image img = pattern(6, 6, 8);
  const Image half = resize_nearest(img, 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(half.at(x, y, Channel::D), img.at(2 * x + 1, 2 * y + 1, Channel::D));
  EXPECT_EQ(resize_nearest(img, 6), img);
}
