#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ecnn/detail/binary_io.hpp"
#include "ecnn/detail/rng.hpp"
#include "ecnn/ensemble.hpp"
#include "ecnn/error.hpp"
#include "ecnn/experts.hpp"
#include "ecnn/gating.hpp"
#include "ecnn/synthbench.hpp"

namespace ecnn {

// ---------------------------------------------------------------------------------------------
// Opinion cache

struct CacheRecord {
  std::uint64_t image_id = 0;
  GraspSpec grasp;
  int label = 0;
  std::vector<double> opinions;

  friend bool operator==(const CacheRecord&, const CacheRecord&) = default;
};

struct OpinionCache {
  std::vector<std::string> expert_ids;
  std::vector<CacheRecord> records;

  std::size_t n_experts() const noexcept { return expert_ids.size(); }
  friend bool operator==(const OpinionCache&, const OpinionCache&) = default;
};

inline constexpr std::uint32_t kCacheFormatVersion = 1;

inline void write_cache(const OpinionCache& cache, std::ostream& out) {
  out.write("ECNNCACH", 8);
  detail::put_u32(out, kCacheFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(cache.n_experts()));
  for (const auto& id : cache.expert_ids) detail::put_string(out, id);
  detail::put_u64(out, cache.records.size());
  for (const auto& r : cache.records) {
    if (r.opinions.size() != cache.n_experts()) throw Error(ErrorCode::shape_mismatch, "cache record arity mismatch");
    detail::put_u64(out, r.image_id);
    for (double v : {r.grasp.u, r.grasp.v, r.grasp.d, r.grasp.w, r.grasp.theta}) detail::put_f64(out, v);
    detail::put_u8(out, static_cast<std::uint8_t>(r.label));
    for (double q : r.opinions) detail::put_f64(out, q);
  }
}

inline OpinionCache read_cache(std::istream& in) {
  constexpr const char* what = "opinion cache";
  detail::expect_magic(in, "ECNNCACH", what);
  const std::uint32_t version = detail::get_u32(in, what);
  if (version != kCacheFormatVersion) throw Error(ErrorCode::format, "unsupported cache version " + std::to_string(version));
  OpinionCache cache;
  const std::uint32_t n = detail::get_u32(in, what);
  if (n == 0 || n > 1024) throw Error(ErrorCode::format, "implausible expert count in cache");
  for (std::uint32_t i = 0; i < n; ++i) cache.expert_ids.push_back(detail::get_string(in, what));
  const std::uint64_t count = detail::get_u64(in, what);
  for (std::uint64_t k = 0; k < count; ++k) {
    CacheRecord r;
    r.image_id = detail::get_u64(in, what);
    r.grasp.u = detail::get_f64(in, what);
    r.grasp.v = detail::get_f64(in, what);
    r.grasp.d = detail::get_f64(in, what);
    r.grasp.w = detail::get_f64(in, what);
    r.grasp.theta = detail::get_f64(in, what);
    const std::uint8_t label = detail::get_u8(in, what);
    if (label > 1) throw Error(ErrorCode::format, "cache label must be 0 or 1");
    r.label = label;
    r.opinions.resize(n);
    for (double& q : r.opinions) {
      q = detail::get_f64(in, what);
      if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::format, "cached opinion outside [0, 1]");
    }
    cache.records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::format, "trailing bytes after cache records");
  return cache;
}

inline void save_cache(const OpinionCache& cache, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  write_cache(cache, out);
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline OpinionCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_cache(in);
}

/// One pass of every expert over every labeled grasp, in dataset order; image_id is the scene
/// index. Scenes may be evaluated on `jobs` threads; the result does not depend on it.
inline OpinionCache cache_opinions(const std::vector<ExpertPtr>& experts, const GraspDataset& dataset,
                                   std::size_t jobs = 1) {
  OpinionCache cache;
  for (const auto& e : experts) cache.expert_ids.push_back(e->descriptor().id);
  std::vector<std::vector<CacheRecord>> per_scene(dataset.scenes.size());
  std::vector<std::size_t> first_record(dataset.scenes.size(), 0);
  for (std::size_t s = 1; s < dataset.scenes.size(); ++s)
    first_record[s] = first_record[s - 1] + dataset.scenes[s - 1].grasps.size();

  detail::parallel_for(dataset.scenes.size(), jobs, [&](std::size_t s) {
    const auto& entry = dataset.scenes[s];
    std::vector<GraspSpec> grasps;
    for (const auto& g : entry.grasps) grasps.push_back(g.grasp);
    std::vector<std::vector<ExpertOpinion>> columns;
    for (const auto& e : experts) {
      try {
        columns.push_back(evaluate_expert_batch(*e, entry.image, grasps));
      } catch (const ExpertError& err) {
        throw Error(ErrorCode::expert, "record " + std::to_string(first_record[s]) + " (scene " + std::to_string(s) +
                                           "): " + err.what());
      }
    }
    auto& out = per_scene[s];
    for (std::size_t i = 0; i < grasps.size(); ++i) {
      CacheRecord r{s, grasps[i], entry.grasps[i].label, {}};
      for (const auto& col : columns) r.opinions.push_back(col[i].quality);
      out.push_back(std::move(r));
    }
  });
  for (auto& recs : per_scene)
    for (auto& r : recs) cache.records.push_back(std::move(r));
  return cache;
}

// ---------------------------------------------------------------------------------------------
// Loss

inline constexpr double kBceEpsilon = 1e-7;

inline double bce_loss(double predicted, int label) {
  const double p = std::clamp(predicted, kBceEpsilon, 1.0 - kBceEpsilon);
  const double q = static_cast<double>(label);
  return -(q * std::log(p) + (1.0 - q) * std::log(1.0 - p));
}

/// d bce / d predicted; zero where the clamp is active.
inline double bce_gradient(double predicted, int label) {
  if (predicted < kBceEpsilon || predicted > 1.0 - kBceEpsilon) return 0.0;
  const double q = static_cast<double>(label);
  return (predicted - q) / (predicted * (1.0 - predicted));
}

// ---------------------------------------------------------------------------------------------
// Training

enum class OptimizerKind { adam, sgd_momentum };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd_momentum only
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{};
  double validation_fraction = 0.2;
  std::size_t crop_size = 64;
  ChannelSet channels = ChannelSet::rgbd();
  bool track_validation = true;  // per-epoch validation accuracy

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
    if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw Error(ErrorCode::invalid_argument, "validation fraction must be in (0, 1)");
  }
};

inline std::string train_config_text(const TrainConfig& c) {
  std::ostringstream out;
  char lr[32];
  std::snprintf(lr, sizeof lr, "%.17g", c.learning_rate);
  out << "lr=" << lr << " batch=" << c.batch_size << " epochs=" << c.epochs << " seed=" << c.seed
      << " optimizer=" << (c.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd_momentum")
      << " val_fraction=" << c.validation_fraction << " crop=" << c.crop_size << " channels=" << c.channels.to_string();
  return out.str();
}

/// Seeded scene-level split: returns the sorted validation image ids.
inline std::set<std::uint64_t> split_scenes(std::vector<std::uint64_t> image_ids, std::uint64_t seed,
                                            double validation_fraction) {
  std::sort(image_ids.begin(), image_ids.end());
  image_ids.erase(std::unique(image_ids.begin(), image_ids.end()), image_ids.end());
  detail::Rng rng(detail::derive_seed(seed, 0x5b117));
  rng.shuffle(image_ids.begin(), image_ids.end());
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(image_ids.size())));
  return std::set<std::uint64_t>(image_ids.begin(), image_ids.begin() + static_cast<std::ptrdiff_t>(n_val));
}

struct DataSplit {
  std::vector<std::size_t> train;       // record indices
  std::vector<std::size_t> validation;  // record indices
};

inline DataSplit split_records(const OpinionCache& cache, std::uint64_t seed, double validation_fraction) {
  std::vector<std::uint64_t> ids;
  for (const auto& r : cache.records) ids.push_back(r.image_id);
  const auto val = split_scenes(ids, seed, validation_fraction);
  DataSplit split;
  for (std::size_t i = 0; i < cache.records.size(); ++i)
    (val.count(cache.records[i].image_id) ? split.validation : split.train).push_back(i);
  return split;
}

/// Opinions straight from an OpinionCache.
class CachedOpinions {
 public:
  explicit CachedOpinions(const OpinionCache& cache) : cache_(&cache) {}
  std::vector<std::vector<double>> operator()(std::span<const std::size_t> records) const {
    std::vector<std::vector<double>> out;
    out.reserve(records.size());
    for (std::size_t r : records) out.push_back(cache_->records.at(r).opinions);
    return out;
  }

 private:
  const OpinionCache* cache_;
};

/// Opinions from running the experts on demand; records of one image share an expert call batch.
class LiveOpinions {
 public:
  LiveOpinions(const std::vector<ExpertPtr>& experts, const GraspDataset& dataset, const OpinionCache& index)
      : experts_(&experts), dataset_(&dataset), index_(&index) {}

  std::vector<std::vector<double>> operator()(std::span<const std::size_t> records) const {
    std::map<std::uint64_t, std::vector<std::size_t>> by_image;
    for (std::size_t k = 0; k < records.size(); ++k) by_image[index_->records.at(records[k]).image_id].push_back(k);
    std::vector<std::vector<double>> out(records.size(), std::vector<double>(experts_->size()));
    for (const auto& [image_id, slots] : by_image) {
      const Image& image = dataset_->scenes.at(image_id).image;
      std::vector<GraspSpec> grasps;
      for (std::size_t k : slots) grasps.push_back(index_->records[records[k]].grasp);
      for (std::size_t e = 0; e < experts_->size(); ++e) {
        const auto ops = evaluate_expert_batch(*(*experts_)[e], image, grasps);
        for (std::size_t j = 0; j < slots.size(); ++j) out[slots[j]][e] = ops[j].quality;
      }
    }
    return out;
  }

 private:
  const std::vector<ExpertPtr>* experts_;
  const GraspDataset* dataset_;
  const OpinionCache* index_;  // supplies image ids, grasps and labels; its opinions are ignored
};

struct TrainResult {
  GateParams params;
  std::vector<double> step_loss;   // mean batch loss per optimizer step
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::vector<double> validation_accuracy;
  DataSplit split;
};

namespace detail {

class Optimizer {
 public:
  Optimizer(const GateParams& p, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& t : p.tensors) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step(GateParams& p, const GateGradients& g) {
    ++t_;
    const auto& o = cfg_.optimizer;
    const double lr = cfg_.learning_rate;
    if (o.kind == OptimizerKind::adam) {
      const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t_));
      for (std::size_t k = 0; k < p.tensors.size(); ++k) {
        auto& w = p.tensors[k].data;
        const auto& gr = g.tensors[k].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
          m_[k][i] = o.beta1 * m_[k][i] + (1.0 - o.beta1) * gr[i];
          v_[k][i] = o.beta2 * v_[k][i] + (1.0 - o.beta2) * gr[i] * gr[i];
          w[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + o.epsilon);
        }
      }
    } else {
      for (std::size_t k = 0; k < p.tensors.size(); ++k) {
        auto& w = p.tensors[k].data;
        const auto& gr = g.tensors[k].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
          m_[k][i] = o.momentum * m_[k][i] + gr[i];
          w[i] -= lr * m_[k][i];
        }
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

inline std::vector<GateInput> gate_inputs(const GateParams& params, const OpinionCache& cache, const GraspDataset& dataset,
                                          std::span<const std::size_t> records,
                                          std::vector<GateInput>* per_image = nullptr) {
  std::vector<GateInput> inputs(records.size());
  if (params.variant == GateVariant::constant) return inputs;
  const bool memo = per_image && params.variant == GateVariant::image;
  if (memo) per_image->resize(dataset.scenes.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = cache.records.at(records[k]);
    if (r.image_id >= dataset.scenes.size())
      throw Error(ErrorCode::shape_mismatch, "cache image id " + std::to_string(r.image_id) + " not in dataset");
    if (memo) {
      auto& slot = (*per_image)[r.image_id];
      if (slot.values.empty()) slot = make_gate_input(params, dataset.scenes[r.image_id].image, r.grasp);
      inputs[k] = slot;
    } else {
      inputs[k] = make_gate_input(params, dataset.scenes[r.image_id].image, r.grasp);
    }
  }
  return inputs;
}

}  // namespace detail

/// Combined qualities of `records` under `params` given their opinions.
template <class OpinionSource>
std::vector<double> ensemble_qualities(const GateParams& params, const OpinionCache& cache, const GraspDataset& dataset,
                                       std::span<const std::size_t> records, const OpinionSource& opinions,
                                       std::size_t chunk = 256) {
  std::vector<double> out;
  out.reserve(records.size());
  std::vector<GateInput> per_image;
  GateTape tape;
  for (std::size_t at = 0; at < records.size(); at += chunk) {
    const auto part = records.subspan(at, std::min(chunk, records.size() - at));
    const auto inputs = detail::gate_inputs(params, cache, dataset, part, &per_image);
    gate_forward_batch(params, inputs, tape);
    const auto ops = opinions(part);
    for (std::size_t k = 0; k < part.size(); ++k) out.push_back(combine(ops[k], tape.weights[k]));
  }
  return out;
}

/// Mini-batch BCE training of the gate on combine(opinions, gate(x)). The opinion source is
/// either CachedOpinions or LiveOpinions; both yield the same trajectory.
template <class OpinionSource>
TrainResult train_gate_with(GateVariant variant, const OpinionCache& cache, const GraspDataset& dataset,
                            const OpinionSource& opinions, const TrainConfig& config,
                            std::optional<DataSplit> split = std::nullopt) {
  config.validate();
  if (cache.n_experts() == 0) throw Error(ErrorCode::shape_mismatch, "cache has no experts");
  TrainResult result;
  result.params = init_params(variant, cache.n_experts(), config.crop_size, config.channels, config.seed);
  result.split = split ? *split : split_records(cache, config.seed, config.validation_fraction);
  if (result.split.train.empty()) throw Error(ErrorCode::training, "no training records");

  detail::Optimizer optimizer(result.params, config);
  detail::Rng rng(detail::derive_seed(config.seed, 0x5bff1e));
  std::vector<std::size_t> order = result.split.train;
  const std::size_t B = config.batch_size;
  std::vector<GateInput> per_image;
  GateTape tape;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_total = 0.0;
    for (std::size_t at = 0, batch = 0; at < order.size(); at += B, ++batch) {
      const std::span<const std::size_t> part(order.data() + at, std::min(B, order.size() - at));
      const auto inputs = detail::gate_inputs(result.params, cache, dataset, part, &per_image);
      gate_forward_batch(result.params, inputs, tape);
      const auto ops = opinions(part);
      if (ops.size() != part.size()) throw Error(ErrorCode::shape_mismatch, "opinion source returned a short batch");
      std::vector<std::vector<double>> upstream(part.size());
      double batch_total = 0.0;
      const double scale = 1.0 / static_cast<double>(part.size());
      for (std::size_t k = 0; k < part.size(); ++k) {
        if (ops[k].size() != cache.n_experts()) throw Error(ErrorCode::shape_mismatch, "opinion arity mismatch");
        const int label = cache.records[part[k]].label;
        const double p = combine(ops[k], tape.weights[k]);
        batch_total += bce_loss(p, label);
        const double dp = bce_gradient(p, label) * scale;
        upstream[k].resize(ops[k].size());
        for (std::size_t i = 0; i < ops[k].size(); ++i) upstream[k][i] = dp * ops[k][i];
      }
      if (!std::isfinite(batch_total))
        throw Error(ErrorCode::training,
                    "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
      const GateGradients grads = gate_backward_batch(result.params, tape, upstream);
      optimizer.step(result.params, grads);
      result.step_loss.push_back(batch_total * scale);
      epoch_total += batch_total;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
    if (config.track_validation && !result.split.validation.empty()) {
      const auto q = ensemble_qualities(result.params, cache, dataset, result.split.validation, opinions);
      std::size_t correct = 0;
      for (std::size_t k = 0; k < q.size(); ++k)
        correct += classify(q[k], 0.5) == cache.records[result.split.validation[k]].label ? 1 : 0;
      result.validation_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(q.size()));
    }
  }
  return result;
}

inline TrainResult train_gate(GateVariant variant, const OpinionCache& cache, const GraspDataset& dataset,
                              const TrainConfig& config, std::optional<DataSplit> split = std::nullopt) {
  return train_gate_with(variant, cache, dataset, CachedOpinions(cache), config, std::move(split));
}

inline TrainResult train_gate_live(GateVariant variant, const std::vector<ExpertPtr>& experts,
                                   const OpinionCache& index, const GraspDataset& dataset, const TrainConfig& config,
                                   std::optional<DataSplit> split = std::nullopt) {
  if (experts.size() != index.n_experts()) throw Error(ErrorCode::shape_mismatch, "expert count != cache arity");
  return train_gate_with(variant, index, dataset, LiveOpinions(experts, dataset, index), config, std::move(split));
}

// ---------------------------------------------------------------------------------------------
// Evaluation

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  friend bool operator==(const AccuracyCount&, const AccuracyCount&) = default;
};

/// Fraction of records whose thresholded quality (ties positive) equals the label.
inline AccuracyCount evaluate_accuracy(std::span<const double> qualities, std::span<const int> labels,
                                       double threshold = 0.5) {
  if (qualities.empty()) throw Error(ErrorCode::invalid_argument, "cannot evaluate an empty dataset");
  if (qualities.size() != labels.size()) throw Error(ErrorCode::shape_mismatch, "quality/label count mismatch");
  AccuracyCount c{0, qualities.size()};
  for (std::size_t i = 0; i < qualities.size(); ++i) c.correct += classify(qualities[i], threshold) == labels[i] ? 1 : 0;
  return c;
}

inline AccuracyCount expert_accuracy(const OpinionCache& cache, std::size_t expert, std::span<const std::size_t> records,
                                     double threshold = 0.5) {
  std::vector<double> q;
  std::vector<int> labels;
  for (std::size_t r : records) {
    q.push_back(cache.records.at(r).opinions.at(expert));
    labels.push_back(cache.records[r].label);
  }
  return evaluate_accuracy(q, labels, threshold);
}

inline AccuracyCount ensemble_accuracy(const GateParams& params, const OpinionCache& cache, const GraspDataset& dataset,
                                       std::span<const std::size_t> records, double threshold = 0.5) {
  if (params.n_experts != cache.n_experts()) throw Error(ErrorCode::shape_mismatch, "gate/cache expert count mismatch");
  const auto q = ensemble_qualities(params, cache, dataset, records, CachedOpinions(cache));
  std::vector<int> labels;
  for (std::size_t r : records) labels.push_back(cache.records[r].label);
  return evaluate_accuracy(q, labels, threshold);
}

struct ReportRow {
  std::string name;
  std::string kind;  // "expert" or "ensemble"
  AccuracyCount count;
  std::map<std::uint64_t, AccuracyCount> per_scene;  // filled only on request
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;
  std::string config_echo;
  std::string split = "validation";

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["config"] = config_echo;
    j["split"] = split;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"name", r.name},
                         {"kind", r.kind},
                         {"correct", r.count.correct},
                         {"total", r.count.total},
                         {"accuracy", r.count.accuracy()}};
      if (!r.per_scene.empty()) {
        row["per_scene"] = nlohmann::json::array();
        for (const auto& [scene, c] : r.per_scene)
          row["per_scene"].push_back({{"scene", scene}, {"correct", c.correct}, {"total", c.total}});
      }
      j["rows"].push_back(std::move(row));
    }
    return j;
  }

  std::string to_table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %-9s %9s %7s %9s\n", "model", "kind", "correct", "total", "accuracy");
    out << line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-22s %-9s %9zu %7zu %9.4f\n", r.name.c_str(), r.kind.c_str(), r.count.correct,
                    r.count.total, r.count.accuracy());
      out << line;
    }
    if (!rows.empty() && !rows.front().per_scene.empty()) {
      out << "\nsuccess per scene (correct/total)\n" << "scene ";
      for (const auto& r : rows) out << ' ' << r.name;
      out << '\n';
      for (const auto& [scene, c] : rows.front().per_scene) {
        out << scene_stem(scene);
        for (const auto& r : rows) {
          const auto& k = r.per_scene.at(scene);
          out << ' ' << k.correct << '/' << k.total;
        }
        out << '\n';
      }
    }
    out << "seed " << seed << "  config " << config_echo << "\n";
    return out.str();
  }
};

inline const char* ensemble_row_name(GateVariant v) {
  switch (v) {
    case GateVariant::constant: return "ECNN(constant)";
    case GateVariant::image: return "ImECNN";
    case GateVariant::grasp_image: return "GrImECNN";
  }
  return "?";
}

namespace detail {

inline ReportRow report_row(std::string name, std::string kind, std::span<const double> q, const OpinionCache& cache,
                            std::span<const std::size_t> records, double threshold, bool per_scene) {
  std::vector<int> labels;
  for (std::size_t r : records) labels.push_back(cache.records.at(r).label);
  ReportRow row{std::move(name), std::move(kind), evaluate_accuracy(q, labels, threshold), {}};
  if (per_scene)
    for (std::size_t k = 0; k < records.size(); ++k) {
      auto& c = row.per_scene[cache.records[records[k]].image_id];
      c.total += 1;
      c.correct += classify(q[k], threshold) == labels[k] ? 1 : 0;
    }
  return row;
}

}  // namespace detail

/// One row per expert followed by one per gate, all scored on the same records.
inline EvalReport build_report(const OpinionCache& cache, const GraspDataset& dataset, std::span<const GateParams> gates,
                               std::span<const std::size_t> records, std::uint64_t seed, std::string config_echo,
                               double threshold = 0.5, bool per_scene = false) {
  EvalReport report;
  report.seed = seed;
  report.config_echo = std::move(config_echo);
  for (std::size_t e = 0; e < cache.n_experts(); ++e) {
    std::vector<double> q;
    for (std::size_t r : records) q.push_back(cache.records.at(r).opinions.at(e));
    report.rows.push_back(detail::report_row(cache.expert_ids[e], "expert", q, cache, records, threshold, per_scene));
  }
  for (const auto& p : gates) {
    if (p.n_experts != cache.n_experts()) throw Error(ErrorCode::shape_mismatch, "gate/cache expert count mismatch");
    const auto q = ensemble_qualities(p, cache, dataset, records, CachedOpinions(cache));
    report.rows.push_back(detail::report_row(ensemble_row_name(p.variant), "ensemble", q, cache, records, threshold,
                                             per_scene));
  }
  return report;
}

/// Every expert plus the three ensemble variants (in constant, image, grasp_image order).
inline EvalReport compare_report(const OpinionCache& cache, const GraspDataset& dataset,
                                 std::span<const GateParams> variants, std::span<const std::size_t> records,
                                 std::uint64_t seed, std::string config_echo, double threshold = 0.5) {
  std::set<GateVariant> seen;
  for (const auto& p : variants) seen.insert(p.variant);
  if (variants.size() != 3 || seen.size() != 3)
    throw Error(ErrorCode::invalid_argument, "compare_report needs one gate of each variant");
  std::vector<GateParams> ordered;
  for (GateVariant v : {GateVariant::constant, GateVariant::image, GateVariant::grasp_image})
    for (const auto& p : variants)
      if (p.variant == v) ordered.push_back(p);
  return build_report(cache, dataset, ordered, records, seed, std::move(config_echo), threshold);
}

}  // namespace ecnn
