#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecnn/detail/binary_io.hpp"
#include "ecnn/detail/rng.hpp"
#include "ecnn/error.hpp"
#include "ecnn/grasp.hpp"
#include "ecnn/image.hpp"

namespace ecnn {

enum class GateVariant : std::uint8_t { constant = 0, image = 1, grasp_image = 2 };

inline const char* to_string(GateVariant v) noexcept {
  switch (v) {
    case GateVariant::constant: return "constant";
    case GateVariant::image: return "image";
    case GateVariant::grasp_image: return "grasp_image";
  }
  return "?";
}

inline GateVariant parse_variant(const std::string& s) {
  if (s == "constant") return GateVariant::constant;
  if (s == "image") return GateVariant::image;
  if (s == "grasp_image" || s == "grasp-image") return GateVariant::grasp_image;
  throw Error(ErrorCode::invalid_argument, "unknown gate variant '" + s + "'");
}

struct GateWeights {
  std::vector<double> weights;

  friend bool operator==(const GateWeights&, const GateWeights&) = default;
};

/// Flat row-major tensor with shape metadata.
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor zeros(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return Tensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
  }
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline constexpr std::size_t kMinCrop = 64;
inline constexpr std::size_t kMaxCrop = 128;
inline constexpr std::size_t kKernel = 5;
inline constexpr std::size_t kStride = 2;
inline constexpr std::size_t kConv1 = 8;
inline constexpr std::size_t kConv2 = 16;
inline constexpr std::size_t kHidden = 32;

/// Spatial size after one valid 5x5 stride-2 convolution.
constexpr std::size_t conv_out(std::size_t in) noexcept { return (in - kKernel) / kStride + 1; }

/// Tensor order for CNN variants: conv1.w (5,5,C,8), conv1.b, conv2.w (5,5,8,16), conv2.b,
/// dense1.w (F,32), dense1.b, dense2.w (32,n), dense2.b. The constant variant holds "logits" (n).
struct GateParams {
  GateVariant variant = GateVariant::constant;
  std::size_t n_experts = 0;
  std::size_t crop_size = 64;
  ChannelSet channels = ChannelSet::rgbd();
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  friend bool operator==(const GateParams&, const GateParams&) = default;
};

/// Gradients share the layout of GateParams::tensors.
struct GateGradients {
  std::vector<Tensor> tensors;

  friend bool operator==(const GateGradients&, const GateGradients&) = default;
};

/// Expected tensor names and shapes for a configuration.
inline std::vector<Tensor> gate_layout(GateVariant variant, std::size_t n_experts, std::size_t crop_size,
                                       ChannelSet channels) {
  if (variant == GateVariant::constant) return {Tensor::zeros("logits", {n_experts})};
  const std::size_t c = channels.size();
  const std::size_t s2 = conv_out(conv_out(crop_size));
  return {Tensor::zeros("conv1.w", {kKernel, kKernel, c, kConv1}),
          Tensor::zeros("conv1.b", {kConv1}),
          Tensor::zeros("conv2.w", {kKernel, kKernel, kConv1, kConv2}),
          Tensor::zeros("conv2.b", {kConv2}),
          Tensor::zeros("dense1.w", {s2 * s2 * kConv2, kHidden}),
          Tensor::zeros("dense1.b", {kHidden}),
          Tensor::zeros("dense2.w", {kHidden, n_experts}),
          Tensor::zeros("dense2.b", {n_experts})};
}

inline void validate_config(GateVariant variant, std::size_t n_experts, std::size_t crop_size, ChannelSet channels) {
  if (n_experts == 0) throw Error(ErrorCode::invalid_argument, "gate needs at least one expert");
  if (variant != GateVariant::constant) {
    if (crop_size < kMinCrop || crop_size > kMaxCrop)
      throw Error(ErrorCode::invalid_argument,
                  "crop size " + std::to_string(crop_size) + " outside [" + std::to_string(kMinCrop) + ", " +
                      std::to_string(kMaxCrop) + "]");
    if (channels.empty()) throw Error(ErrorCode::invalid_argument, "gate needs at least one input channel");
  }
}

inline void validate_params(const GateParams& p) {
  validate_config(p.variant, p.n_experts, p.crop_size, p.channels);
  const auto layout = gate_layout(p.variant, p.n_experts, p.crop_size, p.channels);
  if (p.tensors.size() != layout.size()) throw Error(ErrorCode::shape_mismatch, "gate tensor count mismatch");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& t = p.tensors[i];
    if (t.name != layout[i].name || t.shape != layout[i].shape || t.data.size() != layout[i].data.size())
      throw Error(ErrorCode::shape_mismatch, "gate tensor '" + layout[i].name + "' has the wrong shape");
  }
}

/// He-uniform weights (limit sqrt(6 / fan_in)), zero biases; constant logits start at 0.
inline GateParams init_params(GateVariant variant, std::size_t n_experts, std::size_t crop_size = 64,
                              ChannelSet channels = ChannelSet::rgbd(), std::uint64_t seed = 0) {
  validate_config(variant, n_experts, crop_size, channels);
  GateParams p{variant, n_experts, crop_size, channels, gate_layout(variant, n_experts, crop_size, channels)};
  if (variant == GateVariant::constant) return p;
  detail::Rng rng(detail::derive_seed(seed, 0x6a7e));
  for (auto& t : p.tensors) {
    if (t.shape.size() == 1) continue;
    const std::size_t fan_out = t.shape.back();
    const double limit = std::sqrt(6.0 / static_cast<double>(t.size() / fan_out));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
  }
  return p;
}

inline GateGradients zero_gradients(const GateParams& p) {
  GateGradients g;
  for (const auto& t : p.tensors) g.tensors.push_back(Tensor::zeros(t.name, t.shape));
  return g;
}

/// Numerically stable softmax; non-finite logits are rejected.
inline GateWeights softmax(std::span<const double> z) {
  if (z.empty()) throw Error(ErrorCode::invalid_argument, "softmax of an empty vector");
  for (double v : z)
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "non-finite logit");
  const double m = *std::max_element(z.begin(), z.end());
  GateWeights w;
  w.weights.resize(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += w.weights[i] = std::exp(z[i] - m);
  for (double& v : w.weights) v /= total;
  return w;
}

inline GateWeights gate_constant(const GateParams& params) {
  if (params.variant != GateVariant::constant) throw Error(ErrorCode::invalid_argument, "not a constant gate");
  validate_params(params);
  return softmax(params.tensors[0].data);
}

/// Normalised crop_size x crop_size network input, interleaved [y][x][channel].
struct GateInput {
  std::vector<double> values;
};

/// Builds the network input: the full image resized (image variant) or the grasp-aligned crop
/// (grasp_image variant). Color is shifted to [-0.5, 0.5]; depth becomes height above the
/// deepest sample of the patch in decimeters, capped at 1.
inline GateInput make_gate_input(const GateParams& params, const Image& image, const std::optional<GraspSpec>& grasp) {
  if (params.variant == GateVariant::constant) return {};
  for (Channel c : params.channels.list())
    if (!image.channels().contains(c))
      throw Error(ErrorCode::missing_channel, std::string("gate input needs channel ") + channel_name(c));
  std::vector<std::size_t> slots;
  for (Channel c : params.channels.list()) slots.push_back(static_cast<std::size_t>(image.channels().slot(c)));
  const std::size_t s = params.crop_size, n = slots.size();
  std::vector<double> src(s * s * n);
  if (params.variant == GateVariant::image) {
    detail::resize_nearest_samples(image, s, slots, src.data());
  } else {
    if (!grasp) throw Error(ErrorCode::invalid_argument, "grasp_image gate needs a grasp");
    if (!std::isfinite(grasp->u) || !std::isfinite(grasp->v) || !std::isfinite(grasp->theta))
      throw Error(ErrorCode::invalid_argument, "grasp must be finite");
    detail::crop_rotate_samples(image, grasp->u, grasp->v, grasp->theta, s, slots, src.data());
  }
  const int depth_slot = params.channels.slot(Channel::D);
  double ref = 0.0;
  if (depth_slot >= 0)
    for (std::size_t i = static_cast<std::size_t>(depth_slot); i < src.size(); i += n) ref = std::max(ref, src[i]);
  GateInput in;
  in.values = std::move(src);
  for (std::size_t at = 0; at < in.values.size(); at += n)
    for (std::size_t k = 0; k < n; ++k) {
      double& x = in.values[at + k];
      x = static_cast<int>(k) == depth_slot ? std::min(1.0, (ref - x) * 10.0) : x - 0.5;
    }
  return in;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

/// Direct valid 5x5 stride-2 convolution with F filters, bias and ReLU over HWC maps of size
/// s x s x c (one pointer per sample). Rows of `out` are (sample, oy, ox); the kernel is laid
/// out (ky, kx, channel, filter).
template <int F>
void conv_forward(std::span<const double* const> maps, std::size_t s, std::size_t c, const double* w,
                  const double* bias, RowMatrix& out) {
  using Vec = Eigen::Matrix<double, F, 1>;
  const std::size_t o = conv_out(s);
  const std::size_t run = kKernel * c;
  out.resize(static_cast<Eigen::Index>(maps.size() * o * o), F);
  double* dst = out.data();
  for (const double* map : maps)
    for (std::size_t oy = 0; oy < o; ++oy)
      for (std::size_t ox = 0; ox < o; ++ox, dst += F) {
        Vec acc = Vec::Map(bias);
        const double* wk = w;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          const double* src = map + ((oy * kStride + ky) * s + ox * kStride) * c;
          for (std::size_t k = 0; k < run; ++k, wk += F) acc.noalias() += src[k] * Vec::Map(wk);
        }
        Vec::Map(dst) = acc.cwiseMax(0.0);
      }
}

/// Backward of conv_forward given the gradient `dout` with respect to the post-ReLU output,
/// already masked by the ReLU. Accumulates into dw and db, and into dmaps when non-null.
template <int F>
void conv_backward(std::span<const double* const> maps, std::size_t s, std::size_t c, const double* w,
                   const RowMatrix& dout, double* dw, double* db, std::span<double* const> dmaps) {
  using Vec = Eigen::Matrix<double, F, 1>;
  const std::size_t o = conv_out(s);
  const std::size_t run = kKernel * c;
  const double* d = dout.data();
  for (std::size_t b = 0; b < maps.size(); ++b)
    for (std::size_t oy = 0; oy < o; ++oy)
      for (std::size_t ox = 0; ox < o; ++ox, d += F) {
        const Vec dv = Vec::Map(d);
        if ((dv.array() == 0.0).all()) continue;
        Vec::Map(db) += dv;
        double* wk = dw;
        const double* wr = w;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          const std::size_t at = ((oy * kStride + ky) * s + ox * kStride) * c;
          const double* src = maps[b] + at;
          for (std::size_t k = 0; k < run; ++k, wk += F) Vec::Map(wk) += src[k] * dv;
          if (!dmaps.empty()) {
            double* dsrc = dmaps[b] + at;
            for (std::size_t k = 0; k < run; ++k, wr += F) dsrc[k] += Vec::Map(wr).dot(dv);
          }
        }
      }
}

/// Accumulates column sums row by row, in a fixed order.
inline void column_sums(const RowMatrix& m, double* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] += m(r, c);
}

inline ConstRowMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstRowMap(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline RowMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return RowMap(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace detail

/// Intermediate activations of a (batched) forward pass, consumed by gate_backward. A tape
/// passed back into gate_forward_batch keeps its buffers.
struct GateTape {
  GateVariant variant = GateVariant::constant;
  std::size_t batch = 0;
  std::vector<double> input;   // stacked (B, s, s, C) network inputs
  detail::RowMatrix act1;      // (B*o1*o1, 8) after ReLU
  detail::RowMatrix act2;      // (B*o2*o2, 16) after ReLU; row-major flatten per sample
  detail::RowMatrix hidden;    // (B, 32) after ReLU
  detail::RowMatrix logits;    // (B, n)
  std::vector<GateWeights> weights;
  // backward scratch
  mutable detail::RowMatrix dact1, dact2;
};

/// Runs the gate on a batch of prepared inputs (ignored for the constant variant, where
/// `batch` copies of the constant weights are produced).
inline void gate_forward_batch(const GateParams& params, std::span<const GateInput> inputs, GateTape& tape) {
  validate_params(params);
  tape.variant = params.variant;
  tape.batch = inputs.size();
  tape.weights.clear();
  const std::size_t n = params.n_experts;
  const auto B = static_cast<Eigen::Index>(tape.batch);
  if (params.variant == GateVariant::constant) {
    const GateWeights w = softmax(params.tensors[0].data);
    tape.logits.resize(B, static_cast<Eigen::Index>(n));
    for (Eigen::Index b = 0; b < B; ++b)
      for (std::size_t i = 0; i < n; ++i) tape.logits(b, static_cast<Eigen::Index>(i)) = params.tensors[0].data[i];
    tape.weights.assign(tape.batch, w);
    return;
  }

  const std::size_t s = params.crop_size, c = params.channels.size();
  const std::size_t o1 = conv_out(s), o2 = conv_out(o1);
  const std::size_t per = s * s * c;
  tape.input.resize(tape.batch * per);
  std::vector<const double*> maps(tape.batch);
  for (std::size_t b = 0; b < tape.batch; ++b) {
    if (inputs[b].values.size() != per) throw Error(ErrorCode::shape_mismatch, "gate input has the wrong size");
    std::copy(inputs[b].values.begin(), inputs[b].values.end(), tape.input.begin() + static_cast<std::ptrdiff_t>(b * per));
    maps[b] = tape.input.data() + b * per;
  }
  const auto& T = params.tensors;
  detail::conv_forward<kConv1>(maps, s, c, T[0].data.data(), T[1].data.data(), tape.act1);
  for (std::size_t b = 0; b < tape.batch; ++b) maps[b] = tape.act1.data() + b * o1 * o1 * kConv1;
  detail::conv_forward<kConv2>(maps, o1, kConv1, T[2].data.data(), T[3].data.data(), tape.act2);

  const std::size_t flat = o2 * o2 * kConv2;
  const detail::ConstRowMap features(tape.act2.data(), B, static_cast<Eigen::Index>(flat));
  tape.hidden.noalias() = features * detail::as_matrix(T[4], flat, kHidden);
  tape.hidden.rowwise() += detail::as_matrix(T[5], 1, kHidden).row(0);
  tape.hidden = tape.hidden.cwiseMax(0.0);

  tape.logits.noalias() = tape.hidden * detail::as_matrix(T[6], kHidden, n);
  tape.logits.rowwise() += detail::as_matrix(T[7], 1, n).row(0);
  tape.weights.reserve(tape.batch);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto row = tape.logits.row(b);
    std::vector<double> z(row.data(), row.data() + n);
    tape.weights.push_back(softmax(z));
  }
}

inline GateTape gate_forward_batch(const GateParams& params, std::span<const GateInput> inputs) {
  GateTape tape;
  gate_forward_batch(params, inputs, tape);
  return tape;
}

/// Exact gradients of sum_b upstream[b] . weights[b] with respect to every parameter.
inline GateGradients gate_backward_batch(const GateParams& params, const GateTape& tape,
                                         std::span<const std::vector<double>> upstream) {
  validate_params(params);
  if (tape.variant != params.variant || upstream.size() != tape.batch || tape.weights.size() != tape.batch)
    throw Error(ErrorCode::shape_mismatch, "tape does not match the gate parameters");
  const std::size_t n = params.n_experts;
  const std::size_t B = tape.batch;
  // Softmax Jacobian: dz = w * (g - <w, g>).
  detail::RowMatrix dz(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(n));
  for (std::size_t b = 0; b < B; ++b) {
    if (upstream[b].size() != n) throw Error(ErrorCode::shape_mismatch, "upstream gradient length mismatch");
    const auto& w = tape.weights[b].weights;
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i) inner += w[i] * upstream[b][i];
    for (std::size_t i = 0; i < n; ++i)
      dz(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = w[i] * (upstream[b][i] - inner);
  }
  GateGradients grads = zero_gradients(params);
  auto& G = grads.tensors;
  if (params.variant == GateVariant::constant) {
    detail::column_sums(dz, G[0].data.data());
    return grads;
  }

  const auto& T = params.tensors;
  const std::size_t s = params.crop_size, c = params.channels.size();
  const std::size_t o1 = conv_out(s), o2 = conv_out(o1);
  const std::size_t flat = o2 * o2 * kConv2;

  detail::as_matrix(G[6], kHidden, n).noalias() = tape.hidden.transpose() * dz;
  detail::column_sums(dz, G[7].data.data());
  detail::RowMatrix dh = dz * detail::as_matrix(T[6], kHidden, n).transpose();
  dh = dh.cwiseProduct((tape.hidden.array() > 0.0).cast<double>().matrix());

  const detail::ConstRowMap features(tape.act2.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(flat));
  detail::as_matrix(G[4], flat, kHidden).noalias() = features.transpose() * dh;
  detail::column_sums(dh, G[5].data.data());
  detail::RowMatrix dfeat = dh * detail::as_matrix(T[4], flat, kHidden).transpose();
  detail::RowMap da2(dfeat.data(), static_cast<Eigen::Index>(B * o2 * o2), static_cast<Eigen::Index>(kConv2));
  tape.dact2 = da2.cwiseProduct((tape.act2.array() > 0.0).cast<double>().matrix());

  tape.dact1.setZero(tape.act1.rows(), tape.act1.cols());
  std::vector<const double*> maps(B);
  std::vector<double*> dmaps(B);
  for (std::size_t b = 0; b < B; ++b) {
    maps[b] = tape.act1.data() + b * o1 * o1 * kConv1;
    dmaps[b] = tape.dact1.data() + b * o1 * o1 * kConv1;
  }
  detail::conv_backward<kConv2>(maps, o1, kConv1, T[2].data.data(), tape.dact2, G[2].data.data(), G[3].data.data(),
                                dmaps);
  tape.dact1.array() *= (tape.act1.array() > 0.0).cast<double>();
  for (std::size_t b = 0; b < B; ++b) maps[b] = tape.input.data() + b * s * s * c;
  detail::conv_backward<kConv1>(maps, s, c, T[0].data.data(), tape.dact1, G[0].data.data(), G[1].data.data(), {});
  return grads;
}

/// Single-sample forward pass from an image (and the grasp for the grasp_image variant).
inline std::pair<GateWeights, GateTape> gate_forward(const GateParams& params, const Image& image,
                                                     const std::optional<GraspSpec>& grasp = std::nullopt) {
  if (params.variant == GateVariant::grasp_image && !grasp)
    throw Error(ErrorCode::invalid_argument, "grasp_image gate needs a grasp");
  const GateInput in = make_gate_input(params, image, grasp);
  GateTape tape = gate_forward_batch(params, std::span<const GateInput>(&in, 1));
  GateWeights w = tape.weights.front();
  return {std::move(w), std::move(tape)};
}

inline GateGradients gate_backward(const GateParams& params, const GateTape& tape, std::span<const double> upstream) {
  const std::vector<double> up(upstream.begin(), upstream.end());
  return gate_backward_batch(params, tape, std::span<const std::vector<double>>(&up, 1));
}

// ---------------------------------------------------------------------------------------------
// Serialization

inline constexpr std::uint32_t kGateFormatVersion = 1;

inline void write_gate(const GateParams& p, std::ostream& out) {
  validate_params(p);
  out.write("ECNNGATE", 8);
  detail::put_u32(out, kGateFormatVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(p.variant));
  detail::put_u32(out, static_cast<std::uint32_t>(p.n_experts));
  detail::put_u32(out, static_cast<std::uint32_t>(p.crop_size));
  detail::put_u8(out, p.channels.bits());
  detail::put_u32(out, static_cast<std::uint32_t>(p.tensors.size()));
  for (const auto& t : p.tensors) {
    detail::put_string(out, t.name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) detail::put_f64(out, v);
  }
}

inline GateParams read_gate(std::istream& in) {
  detail::expect_magic(in, "ECNNGATE", "gate params");
  const std::uint32_t version = detail::get_u32(in, "gate params");
  if (version != kGateFormatVersion)
    throw Error(ErrorCode::format, "unsupported gate params version " + std::to_string(version));
  GateParams p;
  const std::uint8_t tag = detail::get_u8(in, "gate params");
  if (tag > 2) throw Error(ErrorCode::format, "unknown gate variant tag");
  p.variant = static_cast<GateVariant>(tag);
  p.n_experts = detail::get_u32(in, "gate params");
  p.crop_size = detail::get_u32(in, "gate params");
  p.channels = ChannelSet::from_bits(detail::get_u8(in, "gate params"));
  try {
    validate_config(p.variant, p.n_experts, p.crop_size, p.channels);
  } catch (const Error& e) {
    throw Error(ErrorCode::format, e.what());
  }
  const auto layout = gate_layout(p.variant, p.n_experts, p.crop_size, p.channels);
  const std::uint32_t count = detail::get_u32(in, "gate params");
  if (count != layout.size()) throw Error(ErrorCode::format, "gate params tensor count mismatch");
  for (const auto& expected : layout) {
    Tensor t;
    t.name = detail::get_string(in, "gate params");
    const std::uint32_t rank = detail::get_u32(in, "gate params");
    if (t.name != expected.name || rank != expected.shape.size())
      throw Error(ErrorCode::format, "unexpected gate tensor '" + t.name + "'");
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(detail::get_u32(in, "gate params"));
    if (t.shape != expected.shape) throw Error(ErrorCode::format, "gate tensor '" + t.name + "' has the wrong shape");
    t.data.resize(expected.data.size());
    for (double& v : t.data) v = detail::get_f64(in, "gate params");
    p.tensors.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::format, "trailing bytes after gate params");
  return p;
}

inline void save_gate(const GateParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  write_gate(p, out);
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline GateParams load_gate(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_gate(in);
}

}  // namespace ecnn
