#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <memory>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "ecnn/detail/geometry.hpp"
#include "ecnn/error.hpp"
#include "ecnn/grasp.hpp"
#include "ecnn/image.hpp"

namespace ecnn {

enum class ExpertKind { discriminative, generative };

struct ExpertDescriptor {
  std::string id;
  ExpertKind kind = ExpertKind::discriminative;
  ChannelSet required_channels;
  bool consumes_grasp = true;  // false for generative experts, whose adapter drops the grasp
};

struct ExpertOpinion {
  std::string expert_id;
  double quality = 0.0;  // in [0, 1]

  friend bool operator==(const ExpertOpinion&, const ExpertOpinion&) = default;
};

/// Per-pixel grasp quality plane emitted by a generative expert.
class QualityMap {
 public:
  QualityMap() = default;
  QualityMap(std::size_t width, std::size_t height, std::vector<double> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (values_.size() != width_ * height_) throw Error(ErrorCode::invalid_argument, "quality map length mismatch");
    for (double v : values_)
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::invalid_argument, "quality map value outside [0, 1]");
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::span<const double> values() const noexcept { return values_; }
  double at(std::size_t row, std::size_t col) const { return values_.at(row * width_ + col); }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> values_;
};

/// Output of the input data adapter: the expert-specific image plus the grasp when consumed.
struct AdaptedInput {
  Image image;
  std::optional<GraspSpec> grasp;
};

using RawOutput = std::variant<double, QualityMap>;

/// A frozen grasp-quality estimator. Implementations are stateless and thread-safe.
class Expert {
 public:
  virtual ~Expert() = default;
  virtual const ExpertDescriptor& descriptor() const noexcept = 0;
  /// Native evaluation on adapted input; discriminative experts return a scalar,
  /// generative ones a QualityMap.
  virtual RawOutput run(const AdaptedInput& input) const = 0;
};

using ExpertPtr = std::shared_ptr<const Expert>;

inline AdaptedInput input_adapter(const ExpertDescriptor& expert, const Image& image, const GraspSpec& grasp) {
  AdaptedInput in{extract_channels(image, expert.required_channels), std::nullopt};
  if (expert.consumes_grasp) in.grasp = grasp;
  return in;
}

enum class MapLookup { nearest, bilinear };

inline ExpertOpinion output_adapter(const ExpertDescriptor& expert, const RawOutput& raw, const GraspSpec& grasp,
                                    MapLookup lookup = MapLookup::nearest) {
  if (expert.kind == ExpertKind::discriminative) {
    const double* q = std::get_if<double>(&raw);
    if (!q) throw Error(ErrorCode::invalid_argument, "discriminative expert must return a scalar");
    if (std::isnan(*q)) throw Error(ErrorCode::invalid_argument, "expert returned NaN");
    return {expert.id, std::clamp(*q, 0.0, 1.0)};
  }
  const QualityMap* map = std::get_if<QualityMap>(&raw);
  if (!map) throw Error(ErrorCode::invalid_argument, "generative expert must return a quality map");
  const long col = detail::nearest_index(grasp.u);
  const long row = detail::nearest_index(grasp.v);
  if (col < 0 || row < 0 || col >= static_cast<long>(map->width()) || row >= static_cast<long>(map->height()))
    throw Error(ErrorCode::out_of_bounds, "grasp centre outside the quality map");
  if (lookup == MapLookup::nearest)
    return {expert.id, map->at(static_cast<std::size_t>(row), static_cast<std::size_t>(col))};

  const double x = std::clamp(grasp.u, 0.0, static_cast<double>(map->width() - 1));
  const double y = std::clamp(grasp.v, 0.0, static_cast<double>(map->height() - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x)), y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, map->width() - 1), y1 = std::min(y0 + 1, map->height() - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = map->at(y0, x0) * (1 - fx) + map->at(y0, x1) * fx;
  const double bottom = map->at(y1, x0) * (1 - fx) + map->at(y1, x1) * fx;
  return {expert.id, std::clamp(top * (1 - fy) + bottom * fy, 0.0, 1.0)};
}

/// output_adapter . run . input_adapter, with failures re-raised as ExpertError.
inline ExpertOpinion evaluate_expert(const Expert& expert, const Image& image, const GraspSpec& grasp) {
  const auto& desc = expert.descriptor();
  try {
    return output_adapter(desc, expert.run(input_adapter(desc, image, grasp)), grasp);
  } catch (const ExpertError&) {
    throw;
  } catch (const Error& e) {
    throw ExpertError(desc.id, e.code(), e.what());
  }
}

/// Same opinions as calling evaluate_expert per grasp; experts that ignore the grasp run once.
inline std::vector<ExpertOpinion> evaluate_expert_batch(const Expert& expert, const Image& image,
                                                        std::span<const GraspSpec> grasps) {
  const auto& desc = expert.descriptor();
  std::vector<ExpertOpinion> out;
  out.reserve(grasps.size());
  if (desc.consumes_grasp || grasps.empty()) {
    for (const auto& g : grasps) out.push_back(evaluate_expert(expert, image, g));
    return out;
  }
  try {
    const RawOutput raw = expert.run(input_adapter(desc, image, grasps.front()));
    for (const auto& g : grasps) out.push_back(output_adapter(desc, raw, g));
  } catch (const ExpertError&) {
    throw;
  } catch (const Error& e) {
    throw ExpertError(desc.id, e.code(), e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Synthetic experts

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline constexpr double kLowQuality = 0.02;
inline constexpr double kHighQuality = 0.98;

/// Binary object mask in pixel space; out-of-image pixels are background.
template <class Pred>
struct PixelMask {
  long width;
  long height;
  Pred pred;

  bool operator()(long x, long y) const { return x >= 0 && y >= 0 && x < width && y < height && pred(x, y); }
  bool at(double x, double y) const { return (*this)(nearest_index(x), nearest_index(y)); }
};

template <class Pred>
PixelMask<Pred> make_mask(const Image& image, Pred pred) {
  return {static_cast<long>(image.width()), static_cast<long>(image.height()), std::move(pred)};
}

struct AxisRules {
  bool reject_other_objects = true;  // other objects on the closing line or in the jaw sweep
  double assumed_mu = 0.5;
  double plate_half = 3.0;  // pixels
};

/// Outward normal estimate at `p`: negated first moment of the mask over a radius-3 disc.
template <class Mask>
Vec2 mask_normal(const Mask& mask, double x, double y) {
  const long cx = nearest_index(x), cy = nearest_index(y);
  double gx = 0.0, gy = 0.0;
  for (long dy = -3; dy <= 3; ++dy)
    for (long dx = -3; dx <= 3; ++dx) {
      if (dx * dx + dy * dy > 9 || !mask(cx + dx, cy + dy)) continue;
      gx += static_cast<double>(dx);
      gy += static_cast<double>(dy);
    }
  return normalized(Vec2{-gx, -gy});
}

/// Scores a grasp from an object mask sampled on a grasp-aligned grid: the closing line must
/// meet a single object strictly between the jaws, with contact normals inside an assumed
/// friction cone, and (optionally) nothing else in the jaw sweep.
template <class Mask>
double score_axis(const Mask& mask, const GraspSpec& g, const AxisRules& rules) {
  const Vec2 c{g.u, g.v};
  const Vec2 a{std::cos(g.theta), std::sin(g.theta)};
  const Vec2 across{-a.y, a.x};
  const double half = g.w / 2.0;
  const long reach = static_cast<long>(std::ceil(half)) + 2;
  const long rows = 2 * static_cast<long>(std::ceil(rules.plate_half)) + 1;
  const long cols = 2 * reach + 1;
  const long mid_row = rows / 2;

  std::vector<int> label(static_cast<std::size_t>(rows * cols), -1);  // -1 background, else component id
  std::vector<char> raised(label.size(), 0);
  for (long r = 0; r < rows; ++r)
    for (long k = 0; k < cols; ++k) {
      const Vec2 p = c + static_cast<double>(k - reach) * a + static_cast<double>(r - mid_row) * across;
      raised[static_cast<std::size_t>(r * cols + k)] = mask.at(p.x, p.y) ? 1 : 0;
    }
  int components = 0;
  std::vector<long> stack;
  for (long start = 0; start < rows * cols; ++start) {
    if (!raised[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    stack.assign(1, start);
    label[static_cast<std::size_t>(start)] = components;
    while (!stack.empty()) {
      const long idx = stack.back();
      stack.pop_back();
      const long r = idx / cols, k = idx % cols;
      const long nb[4][2] = {{r - 1, k}, {r + 1, k}, {r, k - 1}, {r, k + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= rows || n[1] < 0 || n[1] >= cols) continue;
        const auto j = static_cast<std::size_t>(n[0] * cols + n[1]);
        if (raised[j] && label[j] < 0) {
          label[j] = components;
          stack.push_back(n[0] * cols + n[1]);
        }
      }
    }
    ++components;
  }

  auto cell = [&](long r, long k) { return label[static_cast<std::size_t>(r * cols + k)]; };
  auto t_of = [reach](long k) { return static_cast<double>(k - reach); };
  auto inside_span = [half](double t) { return t > -half && t < half; };

  // Components met by the closing line between the jaws.
  std::vector<int> on_axis;
  for (long k = 0; k < cols; ++k) {
    const int id = cell(mid_row, k);
    if (id >= 0 && inside_span(t_of(k)) && std::find(on_axis.begin(), on_axis.end(), id) == on_axis.end())
      on_axis.push_back(id);
  }
  if (on_axis.empty()) return kLowQuality;
  int object = on_axis.front();
  if (on_axis.size() > 1) {
    if (rules.reject_other_objects) return kLowQuality;
    double best = std::numeric_limits<double>::infinity();
    for (long k = 0; k < cols; ++k) {
      const int id = cell(mid_row, k);
      if (id >= 0 && std::abs(t_of(k)) < best) best = std::abs(t_of(k)), object = id;
    }
  }
  double t_in = std::numeric_limits<double>::infinity(), t_out = -t_in;
  for (long k = 0; k < cols; ++k)
    if (cell(mid_row, k) == object) t_in = std::min(t_in, t_of(k)), t_out = std::max(t_out, t_of(k));

  const double margin = std::min(t_in + half, half - t_out);
  if (margin <= 0.0) return kLowQuality;

  if (rules.reject_other_objects) {
    for (long r = 0; r < rows; ++r)
      for (long k = 0; k < cols; ++k) {
        const int id = cell(r, k);
        const double t = t_of(k);
        if (id >= 0 && id != object && t >= -half && t <= half) return kLowQuality;
      }
  }

  const Vec2 entry = c + (t_in - 0.5) * a;
  const Vec2 exit = c + (t_out + 0.5) * a;
  const Vec2 n_in = mask_normal(mask, entry.x, entry.y);
  const Vec2 n_out = mask_normal(mask, exit.x, exit.y);
  auto angle = [](Vec2 p, Vec2 q) { return std::acos(std::clamp(dot(p, q), -1.0, 1.0)); };
  const double worst = std::max(angle(n_in, -1.0 * a), angle(n_out, a));
  const double cone = std::atan(rules.assumed_mu);
  const double friction = sigmoid((cone - worst) / (2.0 * std::numbers::pi / 180.0));
  const double width = sigmoid((margin - 0.5) / 0.75);
  return kLowQuality + (kHighQuality - kLowQuality) * friction * width;
}

}  // namespace detail

/// Discriminative, depth only. Segments raised regions by their height above the deepest
/// sample around the grasp and scores antipodal opposition of the depth edges along the axis.
/// Objects lower than `sensitivity` are invisible to it, so grasps on them are scored as misses.
class DepthRidgeExpert final : public Expert {
 public:
  explicit DepthRidgeExpert(double sensitivity = 0.02) : sensitivity_(sensitivity) {}

  const ExpertDescriptor& descriptor() const noexcept override { return desc_; }

  RawOutput run(const AdaptedInput& input) const override {
    if (!input.grasp) throw Error(ErrorCode::invalid_argument, "depth_ridge needs a grasp");
    const Image& img = input.image;
    const GraspSpec& g = *input.grasp;
    const long w = static_cast<long>(img.width()), h = static_cast<long>(img.height());
    auto depth = [&img](long x, long y) {
      return img.data()[static_cast<std::size_t>(y) * img.width() + static_cast<std::size_t>(x)];
    };
    // Reference: deepest sample in the window spanned by the jaws.
    const double reach = g.w / 2.0 + 4.0;
    double ref = 0.0;
    const Vec2 a{std::cos(g.theta), std::sin(g.theta)};
    for (double t = -reach; t <= reach; t += 1.0)
      for (double s = -4.0; s <= 4.0; s += 1.0) {
        const long x = detail::nearest_index(g.u + t * a.x - s * a.y);
        const long y = detail::nearest_index(g.v + t * a.y + s * a.x);
        if (x >= 0 && y >= 0 && x < w && y < h) ref = std::max(ref, depth(x, y));
      }
    const double limit = ref - sensitivity_;
    auto mask = detail::make_mask(img, [&](long x, long y) { return depth(x, y) < limit; });
    return detail::score_axis(mask, g, detail::AxisRules{});
  }

 private:
  double sensitivity_;
  ExpertDescriptor desc_{"depth_ridge", ExpertKind::discriminative, ChannelSet::depth(), true};
};

/// Discriminative, RGB only. Segments the object by color contrast against the table color
/// (estimated from the image corners) and scores the contrast edges across the grasp axis.
/// It only inspects the object nearest the grasp centre and ignores neighbours, and answers
/// 0.5 when the neighbourhood shows no usable contrast.
class ColorContrastExpert final : public Expert {
 public:
  ColorContrastExpert(double edge_contrast = 0.08, double min_contrast = 0.1)
      : edge_contrast_(edge_contrast), min_contrast_(min_contrast) {}

  const ExpertDescriptor& descriptor() const noexcept override { return desc_; }

  RawOutput run(const AdaptedInput& input) const override {
    if (!input.grasp) throw Error(ErrorCode::invalid_argument, "color_contrast needs a grasp");
    const Image& img = input.image;
    const GraspSpec& g = *input.grasp;
    const std::size_t W = img.width(), H = img.height();
    const auto data = img.data();
    std::array<double, 3> bg{0.0, 0.0, 0.0};
    const std::array<std::pair<std::size_t, std::size_t>, 4> corners{{{0, 0}, {W - 1, 0}, {0, H - 1}, {W - 1, H - 1}}};
    for (auto [x, y] : corners)
      for (int k = 0; k < 3; ++k) bg[k] += data[(y * W + x) * 3 + k] / 4.0;
    auto contrast = [&](long x, long y) {
      const double* p = &data[(static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * 3];
      return std::sqrt((p[0] - bg[0]) * (p[0] - bg[0]) + (p[1] - bg[1]) * (p[1] - bg[1]) +
                       (p[2] - bg[2]) * (p[2] - bg[2]));
    };
    const long w = static_cast<long>(W), h = static_cast<long>(H);
    const Vec2 a{std::cos(g.theta), std::sin(g.theta)};
    const double reach = g.w / 2.0 + 4.0;
    double local = 0.0;
    for (double t = -reach; t <= reach; t += 1.0)
      for (double s = -4.0; s <= 4.0; s += 1.0) {
        const long x = detail::nearest_index(g.u + t * a.x - s * a.y);
        const long y = detail::nearest_index(g.v + t * a.y + s * a.x);
        if (x >= 0 && y >= 0 && x < w && y < h) local = std::max(local, contrast(x, y));
      }
    if (local < min_contrast_) return 0.5;
    auto mask = detail::make_mask(img, [&](long x, long y) { return contrast(x, y) > edge_contrast_; });
    detail::AxisRules rules;
    rules.reject_other_objects = false;
    return detail::score_axis(mask, g, rules);
  }

 private:
  double edge_contrast_;
  double min_contrast_;
  ExpertDescriptor desc_{"color_contrast", ExpertKind::discriminative, ChannelSet::rgb(), true};
};

/// Generative, depth only. For every raised pixel it tries `angles` closing directions, opens the
/// jaws just past the object and reports the fraction where a single object fits between clear jaws with
/// both contact normals inside the assumed friction cone; a quarter of the directions fitting
/// already counts as graspable. The query angle and width are never seen.
class WidthFitExpert final : public Expert {
 public:
  WidthFitExpert(double sensitivity = 0.02, double max_opening = 120.0, int angles = 16, double assumed_mu = 0.5,
                 int clearance = 6)
      : sensitivity_(sensitivity),
        max_opening_(max_opening),
        angles_(angles),
        assumed_mu_(assumed_mu),
        clearance_(clearance) {}

  const ExpertDescriptor& descriptor() const noexcept override { return desc_; }

  RawOutput run(const AdaptedInput& input) const override { return quality_map(input.image); }

  QualityMap quality_map(const Image& img) const {
    const long w = static_cast<long>(img.width()), h = static_cast<long>(img.height());
    const auto depth = img.data();
    double ref = 0.0;
    for (double d : depth) ref = std::max(ref, d);
    std::vector<char> raised(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) raised[i] = depth[i] < ref - sensitivity_ ? 1 : 0;
    auto mask = [&](long x, long y) {
      return x >= 0 && y >= 0 && x < w && y < h && raised[static_cast<std::size_t>(y * w + x)];
    };
    std::vector<Vec2> dirs;
    for (int k = 0; k < angles_; ++k) {
      const double phi = std::numbers::pi * k / angles_;
      dirs.push_back({std::cos(phi), std::sin(phi)});
    }
    const int reach = static_cast<int>(max_opening_ / 2.0);
    const double cos_cone = std::cos(std::atan(assumed_mu_));
    std::vector<double> values(depth.size(), detail::kLowQuality);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        if (!mask(x, y)) continue;
        int fits = 0;
        for (const Vec2& d : dirs) {
          auto probe = [&](int j) {
            return mask(detail::nearest_index(static_cast<double>(x) + j * d.x),
                        detail::nearest_index(static_cast<double>(y) + j * d.y));
          };
          int ends[2] = {-1, -1};
          for (int side = 0; side < 2; ++side) {
            const int sign = side == 0 ? 1 : -1;
            for (int j = 1; j <= reach; ++j)
              if (!probe(sign * j)) {
                ends[side] = j;
                break;
              }
          }
          if (ends[0] < 0 || ends[1] < 0) continue;
          // Jaws open symmetrically just past the farther contact and must sweep free space.
          const int jaw = std::max(ends[0], ends[1]) + clearance_;
          bool ok = true;
          for (int side = 0; side < 2 && ok; ++side) {
            const int sign = side == 0 ? 1 : -1;
            for (int j = ends[side] + 1; j <= jaw && ok; ++j) ok = !probe(sign * j);
          }
          if (!ok) continue;
          const Vec2 fwd = Vec2{static_cast<double>(x), static_cast<double>(y)} + (ends[0] - 0.5) * d;
          const Vec2 back = Vec2{static_cast<double>(x), static_cast<double>(y)} - (ends[1] - 0.5) * d;
          if (dot(detail::mask_normal(mask, fwd.x, fwd.y), d) >= cos_cone &&
              dot(detail::mask_normal(mask, back.x, back.y), -1.0 * d) >= cos_cone)
            ++fits;
        }
        values[static_cast<std::size_t>(y * w + x)] =
            detail::kLowQuality + (detail::kHighQuality - detail::kLowQuality) * std::min(1.0, 2.0 * fits / angles_);
      }
    return QualityMap(img.width(), img.height(), std::move(values));
  }

 private:
  double sensitivity_;
  double max_opening_;
  int angles_;
  double assumed_mu_;
  int clearance_;
  ExpertDescriptor desc_{"width_fit", ExpertKind::generative, ChannelSet::depth(), false};
};

/// Discriminative stand-in that answers a fixed quality after a fixed delay (latency benchmarks).
class DelayExpert final : public Expert {
 public:
  DelayExpert(std::string id, std::chrono::milliseconds delay, double quality = 0.5,
              ChannelSet channels = ChannelSet::depth())
      : delay_(delay), quality_(quality), desc_{std::move(id), ExpertKind::discriminative, channels, true} {}

  const ExpertDescriptor& descriptor() const noexcept override { return desc_; }

  RawOutput run(const AdaptedInput&) const override {
    std::this_thread::sleep_for(delay_);
    return quality_;
  }

 private:
  std::chrono::milliseconds delay_;
  double quality_;
  ExpertDescriptor desc_;
};

/// The three benchmark experts, in ensemble order: depth_ridge, color_contrast, width_fit.
inline std::vector<ExpertPtr> make_synthetic_experts() {
  return {std::make_shared<DepthRidgeExpert>(), std::make_shared<ColorContrastExpert>(),
          std::make_shared<WidthFitExpert>()};
}

/// Looks an expert up by id among `experts`.
inline ExpertPtr find_expert(const std::vector<ExpertPtr>& experts, const std::string& id) {
  for (const auto& e : experts)
    if (e->descriptor().id == id) return e;
  throw Error(ErrorCode::invalid_argument, "unknown expert id '" + id + "'");
}

}  // namespace ecnn
