#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fd_check.hpp"
#include "support.hpp"

using namespace ecnn;

namespace {

/// Deterministic pseudo-random RGBD texture defined on every integer pixel.
double texture(long x, long y, int k) {
  const auto h = detail::splitmix64(static_cast<std::uint64_t>(x * 73856093L) ^ static_cast<std::uint64_t>(y * 19349663L) ^
                                    static_cast<std::uint64_t>(k * 83492791L));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return k == 3 ? 0.7 + 0.1 * u : u;
}

Image textured(std::size_t w, std::size_t h, long dx, long dy) {
  std::vector<double> data;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (int k = 0; k < 4; ++k) data.push_back(texture(static_cast<long>(x) - dx, static_cast<long>(y) - dy, k));
  return Image(w, h, ChannelSet::rgbd(), std::move(data));
}

}  // namespace

TEST(Softmax, Examples) {
  const std::vector<double> zero{0, 0, 0};
  for (double w : softmax(zero).weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  const std::vector<double> one{4.2};
  EXPECT_EQ(softmax(one).weights, std::vector<double>{1.0});
  const std::vector<double> ln2{std::log(2.0), 0};
  EXPECT_NEAR(softmax(ln2).weights[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(softmax(ln2).weights[1], 1.0 / 3.0, 1e-15);
  const std::vector<double> five{5, 0, 0};
  const auto w = softmax(five).weights;
  EXPECT_NEAR(w[0], 0.9867, 1e-4);
  EXPECT_NEAR(w[1], 0.0067, 1e-4);
  EXPECT_NEAR(w[2], 0.0067, 1e-4);
  EXPECT_THROW(softmax(std::vector<double>{}), Error);
  EXPECT_THROW(softmax(std::vector<double>{1, NAN}), Error);
}

TEST(Softmax, ShiftInvarianceAndLargeLogits) {
  detail::Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> z(1 + rng.below(6));
    for (double& v : z) v = rng.uniform(-20, 20);
    const double c = rng.uniform(-500, 500);
    std::vector<double> shifted = z;
    for (double& v : shifted) v += c;
    const auto a = softmax(z).weights, b = softmax(shifted).weights;
    double total = 0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      ASSERT_NEAR(a[k], b[k], 1e-12);
      ASSERT_GE(a[k], 0.0);
      total += a[k];
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
  }
  const auto big = softmax(std::vector<double>{1000, 999}).weights;
  EXPECT_TRUE(std::isfinite(big[0]));
  EXPECT_NEAR(big[0], 1 / (1 + std::exp(-1.0)), 1e-12);
}

TEST(GateParams, LayoutAndInit) {
  const GateParams p = init_params(GateVariant::grasp_image, 3, 64, ChannelSet::rgbd(), 9);
  ASSERT_EQ(p.tensors.size(), 8u);
  EXPECT_EQ(p.tensors[0].name, "conv1.w");
  EXPECT_EQ(p.tensors[0].shape, (std::vector<std::size_t>{5, 5, 4, 8}));
  EXPECT_EQ(p.tensors[2].shape, (std::vector<std::size_t>{5, 5, 8, 16}));
  EXPECT_EQ(p.tensors[4].shape, (std::vector<std::size_t>{13 * 13 * 16, 32}));
  EXPECT_EQ(p.tensors[6].shape, (std::vector<std::size_t>{32, 3}));
  for (double v : p.tensors[1].data) EXPECT_EQ(v, 0.0);
  const double limit = std::sqrt(6.0 / (5 * 5 * 4));
  for (double v : p.tensors[0].data) {
    ASSERT_LE(std::abs(v), limit);
  }
  EXPECT_EQ(p, init_params(GateVariant::grasp_image, 3, 64, ChannelSet::rgbd(), 9));
  EXPECT_NE(p, init_params(GateVariant::grasp_image, 3, 64, ChannelSet::rgbd(), 10));
  const GateParams c = init_params(GateVariant::constant, 4);
  ASSERT_EQ(c.tensors.size(), 1u);
  EXPECT_EQ(c.tensors[0].data, std::vector<double>(4, 0.0));
  EXPECT_EQ(init_params(GateVariant::image, 2, 80, ChannelSet::depth()).tensors[0].shape,
            (std::vector<std::size_t>{5, 5, 1, 8}));
}

TEST(GateParams, Validation) {
  EXPECT_THROW(init_params(GateVariant::image, 3, 63), Error);
  EXPECT_THROW(init_params(GateVariant::image, 3, 129), Error);
  EXPECT_THROW(init_params(GateVariant::image, 0, 64), Error);
  EXPECT_NO_THROW(init_params(GateVariant::grasp_image, 3, 128));
  EXPECT_THROW(parse_variant("cnn"), Error);
  EXPECT_EQ(parse_variant("grasp-image"), GateVariant::grasp_image);
  GateParams p = init_params(GateVariant::image, 3);
  p.tensors[3].data.pop_back();
  EXPECT_THROW(validate_params(p), Error);
}

TEST(GateForward, ZeroParamsGiveUniformWeights) {
  const Image img = test::small_dataset().scenes[0].image;
  const GraspSpec g = test::small_dataset().scenes[0].grasps[0].grasp;
  for (GateVariant v : {GateVariant::constant, GateVariant::image, GateVariant::grasp_image}) {
    GateParams p = init_params(v, 3);
    for (auto& t : p.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
    for (double w : gate_forward(p, img, g).first.weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  }
  for (double w : gate_constant(init_params(GateVariant::constant, 5)).weights) EXPECT_NEAR(w, 0.2, 1e-15);
}

TEST(GateForward, WeightsFormADistribution) {
  const auto& ds = test::small_dataset();
  for (GateVariant v : {GateVariant::image, GateVariant::grasp_image}) {
    const GateParams p = init_params(v, 3, 64, ChannelSet::rgbd(), 3);
    for (std::size_t s = 0; s < ds.scenes.size(); s += 3)
      for (std::size_t k = 0; k < 5; ++k) {
        const auto w = gate_forward(p, ds.scenes[s].image, ds.scenes[s].grasps[k].grasp).first.weights;
        double total = 0;
        for (double x : w) {
          ASSERT_GE(x, 0.0);
          total += x;
        }
        ASSERT_NEAR(total, 1.0, 1e-12);
      }
  }
}

TEST(GateForward, ImageGateIgnoresTheGrasp) {
  const auto& entry = test::small_dataset().scenes[2];
  const GateParams p = init_params(GateVariant::image, 3, 64, ChannelSet::rgbd(), 5);
  const auto first = gate_forward(p, entry.image, entry.grasps[0].grasp).first;
  for (const auto& g : entry.grasps) EXPECT_EQ(gate_forward(p, entry.image, g.grasp).first, first);
  EXPECT_EQ(gate_forward(p, entry.image).first, first);
}

TEST(GateForward, GraspImageGateNeedsAGrasp) {
  const auto& entry = test::small_dataset().scenes[2];
  const GateParams p = init_params(GateVariant::grasp_image, 3);
  EXPECT_THROW(gate_forward(p, entry.image), Error);
  GraspSpec bad = entry.grasps[0].grasp;
  bad.u = NAN;
  EXPECT_THROW(gate_forward(p, entry.image, bad), Error);
}

TEST(GateForward, GraspImageTranslationEquivariance) {
  const GateParams p = init_params(GateVariant::grasp_image, 3, 64, ChannelSet::rgbd(), 8);
  const Image base = textured(160, 150, 0, 0);
  const GraspSpec g = make_grasp(70, 75, 0.75, 20, 0.6);
  const auto w0 = gate_forward(p, base, g).first;
  for (auto [dx, dy] : {std::pair<long, long>{7, -3}, {-11, 5}, {1, 1}, {-20, -25}}) {
    const Image moved = textured(160, 150, dx, dy);
    const GraspSpec mg = make_grasp(g.u + static_cast<double>(dx), g.v + static_cast<double>(dy), g.d, g.w, g.theta);
    EXPECT_EQ(gate_forward(p, moved, mg).first, w0) << dx << "," << dy;
  }
}

TEST(GateForward, MissingChannel) {
  const GateParams p = init_params(GateVariant::image, 3, 64, ChannelSet::rgbd());
  const Image depth = extract_channels(test::small_dataset().scenes[0].image, ChannelSet::depth());
  try {
    gate_forward(p, depth);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_channel);
  }
  const GateParams d = init_params(GateVariant::image, 3, 64, ChannelSet::depth());
  EXPECT_NO_THROW(gate_forward(d, depth));
}

TEST(GateForward, BatchMatchesSingle) {
  const auto& ds = test::small_dataset();
  const GateParams p = init_params(GateVariant::grasp_image, 3, 72, ChannelSet::rgbd(), 2);
  std::vector<GateInput> inputs;
  std::vector<GateWeights> single;
  for (std::size_t k = 0; k < 9; ++k) {
    const auto& g = ds.scenes[k].grasps[k].grasp;
    inputs.push_back(make_gate_input(p, ds.scenes[k].image, g));
    single.push_back(gate_forward(p, ds.scenes[k].image, g).first);
  }
  const GateTape tape = gate_forward_batch(p, inputs);
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(tape.weights[k].weights[i], single[k].weights[i], 1e-12);
}

TEST(GateInputTest, Normalisation) {
  const GateParams p = init_params(GateVariant::image, 1, 64, ChannelSet::rgbd());
  const Image img = test::flat_rgbd(64, 64, 0.25, 0.5, 1.0, 0.8);
  const GateInput in = make_gate_input(p, img, std::nullopt);
  ASSERT_EQ(in.values.size(), 64u * 64u * 4u);
  EXPECT_EQ(in.values[0], -0.25);
  EXPECT_EQ(in.values[1], 0.0);
  EXPECT_EQ(in.values[2], 0.5);
  EXPECT_EQ(in.values[3], 0.0);
  EXPECT_TRUE(make_gate_input(init_params(GateVariant::constant, 2), img, std::nullopt).values.empty());
}

TEST(GateBackward, ConstantClosedFormForTwoExperts) {
  GateParams p = init_params(GateVariant::constant, 2);
  p.tensors[0].data = {0.3, -0.4};
  const auto [w, tape] = gate_forward(p, Image{}, std::nullopt);
  const std::vector<double> g{0.8, -0.5};
  const auto grads = gate_backward(p, tape, g);
  const double expected = w.weights[0] * w.weights[1] * (g[0] - g[1]);
  EXPECT_NEAR(grads.tensors[0].data[0], expected, 1e-15);
  EXPECT_NEAR(grads.tensors[0].data[1], -expected, 1e-15);
}

TEST(GateBackward, ZeroUpstreamGivesZeroGradients) {
  const auto& entry = test::small_dataset().scenes[1];
  for (GateVariant v : {GateVariant::constant, GateVariant::image, GateVariant::grasp_image}) {
    const GateParams p = init_params(v, 3, 64, ChannelSet::rgbd(), 4);
    const auto [w, tape] = gate_forward(p, entry.image, entry.grasps[0].grasp);
    const auto grads = gate_backward(p, tape, std::vector<double>(3, 0.0));
    for (const auto& t : grads.tensors)
      for (double x : t.data) ASSERT_EQ(x, 0.0);
  }
}

TEST(GateBackward, UniformUpstreamGivesZeroGradients) {
  const auto& entry = test::small_dataset().scenes[1];
  const GateParams p = init_params(GateVariant::grasp_image, 3, 64, ChannelSet::rgbd(), 4);
  const auto [w, tape] = gate_forward(p, entry.image, entry.grasps[0].grasp);
  const auto grads = gate_backward(p, tape, std::vector<double>(3, 0.7));
  for (const auto& t : grads.tensors)
    for (double x : t.data) ASSERT_NEAR(x, 0.0, 1e-14);
}

TEST(GateBackward, TapeMismatch) {
  const GateParams a = init_params(GateVariant::constant, 3);
  const GateParams b = init_params(GateVariant::image, 3);
  const auto [w, tape] = gate_forward(a, Image{}, std::nullopt);
  EXPECT_THROW(gate_backward(b, tape, std::vector<double>(3, 1.0)), Error);
  EXPECT_THROW(gate_backward(a, tape, std::vector<double>(2, 1.0)), Error);
}

class GateGradientCheck : public ::testing::TestWithParam<GateVariant> {};

TEST_P(GateGradientCheck, MatchesFiniteDifferences) {
  // Conv biases touch every pixel, so some of their coordinates sit within a step of a kink
  // and get skipped; coverage is counted over all seeds.
  const auto& ds = test::small_dataset();
  std::vector<std::size_t> covered;
  GateParams p;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    p = init_params(GetParam(), 3, 64, ChannelSet::rgbd(), seed);
    test::randomize_biases(p, seed);
    const auto [inputs, upstream] = test::fd_batch(p, ds, 2, seed);
    const auto r = test::fd_check(p, inputs, upstream, 12, seed);
    EXPECT_LT(r.worst, 1e-4);
    covered.resize(r.per_tensor.size());
    for (std::size_t t = 0; t < covered.size(); ++t) covered[t] += r.per_tensor[t];
  }
  for (std::size_t t = 0; t < p.tensors.size(); ++t) EXPECT_GE(covered[t], std::min<std::size_t>(12, p.tensors[t].size()));
}

INSTANTIATE_TEST_SUITE_P(AllVariants, GateGradientCheck,
                         ::testing::Values(GateVariant::constant, GateVariant::image, GateVariant::grasp_image),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(GateFile, RoundTrip) {
  const auto dir = test::scratch_dir("gate");
  for (GateVariant v : {GateVariant::constant, GateVariant::image, GateVariant::grasp_image}) {
    const GateParams p = init_params(v, 3, 80, ChannelSet{Channel::G, Channel::D}, 6);
    save_gate(p, dir / "g.bin");
    EXPECT_EQ(load_gate(dir / "g.bin"), p);
  }
  std::stringstream ss;
  write_gate(init_params(GateVariant::image, 3), ss);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 5);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_gate(cut), Error);
  std::stringstream junk("ECNNGATX");
  EXPECT_THROW(read_gate(junk), Error);
  EXPECT_THROW(load_gate(dir / "missing.bin"), Error);
}
