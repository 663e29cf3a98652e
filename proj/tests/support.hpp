#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>

#include "ecnn/ecnn.hpp"

namespace ecnn::test {

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() /
             ("ecnn_" + tag + "_" + std::string(info ? info->name() : "x") + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// w x h image with one channel whose samples are given row-major.
inline Image single_channel(std::size_t w, std::size_t h, std::vector<double> values, Channel c = Channel::D) {
  return Image(w, h, ChannelSet{c}, std::move(values));
}

inline Image flat_rgbd(std::size_t w, std::size_t h, double r, double g, double b, double d) {
  std::vector<double> data;
  data.reserve(w * h * 4);
  for (std::size_t i = 0; i < w * h; ++i) data.insert(data.end(), {r, g, b, d});
  return Image(w, h, ChannelSet::rgbd(), std::move(data));
}

/// Small seeded benchmark, cached per process.
inline const GraspDataset& small_dataset() {
  static const GraspDataset ds = [] {
    DatasetConfig dc;
    dc.seed = 11;
    dc.scenes = 12;
    dc.grasps_per_scene = 20;
    return generate_dataset(dc);
  }();
  return ds;
}

inline const OpinionCache& small_cache() {
  static const OpinionCache cache = cache_opinions(make_synthetic_experts(), small_dataset());
  return cache;
}

}  // namespace ecnn::test
