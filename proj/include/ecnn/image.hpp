#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecnn/error.hpp"

namespace ecnn {

enum class Channel : std::uint8_t { R = 0, G = 1, B = 2, D = 3 };

inline constexpr std::array<Channel, 4> kAllChannels{Channel::R, Channel::G, Channel::B, Channel::D};

inline constexpr char channel_name(Channel c) noexcept {
  constexpr char names[] = {'R', 'G', 'B', 'D'};
  return names[static_cast<int>(c)];
}

/// Ordered set of channel tags. Iteration order is always R < G < B < D.
class ChannelSet {
 public:
  constexpr ChannelSet() noexcept = default;
  constexpr ChannelSet(std::initializer_list<Channel> channels) noexcept {
    for (Channel c : channels) bits_ |= bit(c);
  }

  static constexpr ChannelSet from_bits(std::uint8_t bits) noexcept {
    ChannelSet s;
    s.bits_ = bits & 0x0F;
    return s;
  }
  static constexpr ChannelSet rgbd() noexcept { return {Channel::R, Channel::G, Channel::B, Channel::D}; }
  static constexpr ChannelSet rgb() noexcept { return {Channel::R, Channel::G, Channel::B}; }
  static constexpr ChannelSet depth() noexcept { return {Channel::D}; }

  constexpr std::uint8_t bits() const noexcept { return bits_; }
  constexpr bool contains(Channel c) const noexcept { return (bits_ & bit(c)) != 0; }
  constexpr bool contains(ChannelSet other) const noexcept { return (bits_ & other.bits_) == other.bits_; }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr std::size_t size() const noexcept {
    std::size_t n = 0;
    for (Channel c : kAllChannels) n += contains(c) ? 1 : 0;
    return n;
  }

  /// Position of `c` within a pixel, or -1 when absent.
  constexpr int slot(Channel c) const noexcept {
    if (!contains(c)) return -1;
    int s = 0;
    for (Channel o : kAllChannels) {
      if (o == c) return s;
      if (contains(o)) ++s;
    }
    return -1;
  }

  std::vector<Channel> list() const {
    std::vector<Channel> out;
    for (Channel c : kAllChannels)
      if (contains(c)) out.push_back(c);
    return out;
  }

  std::string to_string() const {
    std::string s;
    for (Channel c : kAllChannels)
      if (contains(c)) s.push_back(channel_name(c));
    return s;
  }

  /// Parses a tag string such as "RGBD" or "D".
  static ChannelSet parse(const std::string& text) {
    ChannelSet s;
    for (char ch : text) {
      switch (ch) {
        case 'R': s.bits_ |= bit(Channel::R); break;
        case 'G': s.bits_ |= bit(Channel::G); break;
        case 'B': s.bits_ |= bit(Channel::B); break;
        case 'D': s.bits_ |= bit(Channel::D); break;
        default: throw Error(ErrorCode::invalid_argument, std::string("unknown channel tag '") + ch + "'");
      }
    }
    return s;
  }

  friend constexpr bool operator==(ChannelSet, ChannelSet) noexcept = default;

 private:
  static constexpr std::uint8_t bit(Channel c) noexcept {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(c));
  }

  std::uint8_t bits_ = 0;
};

/// W x H x N image, interleaved row-major: sample (x, y, k) lives at (y * W + x) * N + k.
/// R/G/B samples are in [0, 1]; D is depth in meters, finite and >= 0. Immutable once built.
class Image {
 public:
  Image() = default;

  Image(std::size_t width, std::size_t height, ChannelSet channels, std::vector<double> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (channels_.empty()) throw Error(ErrorCode::invalid_argument, "image needs at least one channel");
    if (data_.size() != width_ * height_ * channels_.size())
      throw Error(ErrorCode::invalid_argument,
                  "image data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(width_ * height_ * channels_.size()));
    validate_samples();
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  ChannelSet channels() const noexcept { return channels_; }
  std::size_t channel_count() const noexcept { return channels_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::span<const double> data() const noexcept { return data_; }

  std::span<const double> pixel(std::size_t x, std::size_t y) const noexcept {
    const std::size_t n = channel_count();
    return std::span<const double>(data_).subspan((y * width_ + x) * n, n);
  }

  double at(std::size_t x, std::size_t y, Channel c) const {
    const int s = channels_.slot(c);
    if (s < 0) throw Error(ErrorCode::missing_channel, std::string("channel ") + channel_name(c) + " not present");
    return data_[(y * width_ + x) * channel_count() + static_cast<std::size_t>(s)];
  }

  bool contains(double x, double y) const noexcept {
    return x >= 0.0 && y >= 0.0 && x <= static_cast<double>(width_) - 1.0 &&
           y <= static_cast<double>(height_) - 1.0;
  }

  friend bool operator==(const Image& a, const Image& b) noexcept {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  void validate_samples() const {
    const std::size_t n = channel_count();
    const auto tags = channels_.list();
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double v = data_[i];
      if (tags[i % n] == Channel::D) {
        if (!std::isfinite(v) || v < 0.0)
          throw Error(ErrorCode::invalid_argument, "depth sample must be finite and >= 0");
      } else if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "color sample outside [0, 1]");
      }
    }
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  ChannelSet channels_{};
  std::vector<double> data_;
};

/// Restricts `image` to `wanted`; retained samples are copied bit-for-bit.
inline Image extract_channels(const Image& image, ChannelSet wanted) {
  for (Channel c : wanted.list())
    if (!image.channels().contains(c))
      throw Error(ErrorCode::missing_channel, std::string("channel ") + channel_name(c) + " not present in image");
  if (wanted == image.channels()) return image;
  if (wanted.empty()) throw Error(ErrorCode::invalid_argument, "no channels requested");

  std::vector<std::size_t> slots;
  for (Channel c : wanted.list()) slots.push_back(static_cast<std::size_t>(image.channels().slot(c)));
  const std::size_t n_in = image.channel_count();
  const std::size_t pixels = image.width() * image.height();
  const auto src = image.data();
  std::vector<double> out;
  out.reserve(pixels * slots.size());
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t s : slots) out.push_back(src[p * n_in + s]);
  return Image(image.width(), image.height(), wanted, std::move(out));
}

namespace detail {

// cos/sin with values within 1e-12 of {-1, 0, 1} snapped, so right-angle rotations permute indices exactly.
inline std::pair<double, double> snapped_cos_sin(double theta) {
  const double t = std::remainder(theta, 2.0 * std::numbers::pi);
  auto snap = [](double v) {
    if (std::abs(v) < 1e-12) return 0.0;
    if (std::abs(v - 1.0) < 1e-12) return 1.0;
    if (std::abs(v + 1.0) < 1e-12) return -1.0;
    return v;
  };
  return {snap(std::cos(t)), snap(std::sin(t))};
}

inline long nearest_index(double coordinate) { return static_cast<long>(std::floor(coordinate + 0.5)); }

}  // namespace detail

namespace detail {

/// Samples of the channels at `slots` (positions within a source pixel) for a rotated
/// nearest-neighbour crop, written interleaved in slot order; out-of-image samples are 0.
inline void crop_rotate_samples(const Image& image, double u, double v, double theta, std::size_t size,
                                std::span<const std::size_t> slots, double* out) {
  const auto [cs, sn] = snapped_cos_sin(theta);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const std::size_t n = image.channel_count();
  const std::size_t m = slots.size();
  const auto src = image.data();
  const long w = static_cast<long>(image.width());
  const long h = static_cast<long>(image.height());
  for (std::size_t y = 0; y < size; ++y) {
    const double dy = static_cast<double>(y) - c;
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - c;
      const long sx = nearest_index(u + dx * cs - dy * sn);
      const long sy = nearest_index(v + dx * sn + dy * cs);
      double* to = out + (y * size + x) * m;
      if (sx < 0 || sy < 0 || sx >= w || sy >= h) {
        std::fill(to, to + m, 0.0);
        continue;
      }
      const std::size_t from = (static_cast<std::size_t>(sy) * image.width() + static_cast<std::size_t>(sx)) * n;
      for (std::size_t k = 0; k < m; ++k) to[k] = src[from + slots[k]];
    }
  }
}

inline void resize_nearest_samples(const Image& image, std::size_t size, std::span<const std::size_t> slots,
                                   double* out) {
  const std::size_t n = image.channel_count();
  const std::size_t m = slots.size();
  const auto src = image.data();
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t sy = std::min(image.height() - 1, (2 * y + 1) * image.height() / (2 * size));
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t sx = std::min(image.width() - 1, (2 * x + 1) * image.width() / (2 * size));
      const std::size_t from = (sy * image.width() + sx) * n;
      for (std::size_t k = 0; k < m; ++k) out[(y * size + x) * m + k] = src[from + slots[k]];
    }
  }
}

inline std::vector<std::size_t> all_slots(const Image& image) {
  std::vector<std::size_t> slots(image.channel_count());
  for (std::size_t k = 0; k < slots.size(); ++k) slots[k] = k;
  return slots;
}

}  // namespace detail

/// Square `size` x `size` patch centred on (u, v) whose horizontal axis follows the direction
/// theta (clockwise from the image horizontal, v pointing down). Nearest-neighbour sampling;
/// samples falling outside the source are 0 in every channel.
inline Image crop_rotate(const Image& image, double u, double v, double theta, std::size_t size) {
  if (size == 0) throw Error(ErrorCode::invalid_argument, "crop size must be positive");
  if (image.empty()) throw Error(ErrorCode::invalid_argument, "cannot crop an empty image");
  if (!std::isfinite(u) || !std::isfinite(v) || !std::isfinite(theta))
    throw Error(ErrorCode::invalid_argument, "crop centre and angle must be finite");
  std::vector<double> out(size * size * image.channel_count());
  detail::crop_rotate_samples(image, u, v, theta, size, detail::all_slots(image), out.data());
  return Image(size, size, image.channels(), std::move(out));
}

/// Nearest-neighbour resize to `size` x `size`.
inline Image resize_nearest(const Image& image, std::size_t size) {
  if (size == 0 || image.empty()) throw Error(ErrorCode::invalid_argument, "resize needs a non-empty image and size");
  std::vector<double> out(size * size * image.channel_count());
  detail::resize_nearest_samples(image, size, detail::all_slots(image), out.data());
  return Image(size, size, image.channels(), std::move(out));
}

}  // namespace ecnn
