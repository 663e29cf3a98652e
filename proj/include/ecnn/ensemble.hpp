#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "ecnn/error.hpp"
#include "ecnn/experts.hpp"
#include "ecnn/gating.hpp"
#include "ecnn/hash.hpp"

namespace ecnn {

inline void validate_weights(const GateWeights& w) {
  double total = 0.0;
  for (double v : w.weights) {
    if (!(v >= 0.0)) throw Error(ErrorCode::invalid_argument, "gate weight is negative or NaN");
    total += v;
  }
  if (w.weights.empty() || std::abs(total - 1.0) > 1e-9)
    throw Error(ErrorCode::invalid_argument, "gate weights do not sum to 1");
}

/// Weighted opinion combination: sum_i weights_i * opinions_i.
inline double combine(std::span<const double> opinions, const GateWeights& weights) {
  if (opinions.size() != weights.weights.size())
    throw Error(ErrorCode::shape_mismatch, "opinion count " + std::to_string(opinions.size()) + " != weight count " +
                                               std::to_string(weights.weights.size()));
  validate_weights(weights);
  double q = 0.0;
  for (std::size_t i = 0; i < opinions.size(); ++i) q += weights.weights[i] * opinions[i];
  return q;
}

/// Binary decision; a quality equal to the threshold counts as positive.
inline int classify(double quality, double threshold) { return quality >= threshold ? 1 : 0; }

class EnsembleModel {
 public:
  EnsembleModel(std::vector<ExpertPtr> experts, GateParams gate, double threshold = 0.5)
      : experts_(std::move(experts)), gate_(std::move(gate)), threshold_(threshold) {
    validate_params(gate_);
    if (experts_.size() != gate_.n_experts)
      throw Error(ErrorCode::shape_mismatch, "gate expects " + std::to_string(gate_.n_experts) + " experts, got " +
                                                 std::to_string(experts_.size()));
    std::set<std::string> ids;
    for (const auto& e : experts_) {
      if (!e) throw Error(ErrorCode::invalid_argument, "null expert");
      if (!ids.insert(e->descriptor().id).second)
        throw Error(ErrorCode::invalid_argument, "duplicate expert id '" + e->descriptor().id + "'");
    }
    if (!(threshold_ > 0.0 && threshold_ < 1.0)) throw Error(ErrorCode::invalid_argument, "threshold must be in (0, 1)");
  }

  const std::vector<ExpertPtr>& experts() const noexcept { return experts_; }
  const GateParams& gate() const noexcept { return gate_; }
  double threshold() const noexcept { return threshold_; }
  std::vector<std::string> expert_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : experts_) ids.push_back(e->descriptor().id);
    return ids;
  }

 private:
  std::vector<ExpertPtr> experts_;
  GateParams gate_;
  double threshold_;
};

struct EnsemblePrediction {
  double quality = 0.0;
  GateWeights weights;
  std::vector<ExpertOpinion> opinions;
  int label = 0;

  friend bool operator==(const EnsemblePrediction&, const EnsemblePrediction&) = default;
};

enum class ExecutionMode { parallel, sequential };

/// Gate weights for one query, whatever the variant.
inline GateWeights gate_weights(const GateParams& gate, const Image& image, const GraspSpec& grasp) {
  if (gate.variant == GateVariant::constant) return gate_constant(gate);
  return gate_forward(gate, image, grasp).first;
}

/// Evaluates every expert and the gate, then combines. In parallel mode each expert and the
/// gate run as their own task; results land in index slots so the outcome is bit-identical to
/// sequential mode. The first failing expert (by index) aborts the prediction.
inline EnsemblePrediction predict(const EnsembleModel& model, const Image& image, const GraspSpec& grasp,
                                  ExecutionMode mode = ExecutionMode::parallel) {
  const auto& experts = model.experts();
  const std::size_t n = experts.size();
  std::vector<ExpertOpinion> opinions(n);
  GateWeights weights;

  if (mode == ExecutionMode::sequential) {
    for (std::size_t i = 0; i < n; ++i) opinions[i] = evaluate_expert(*experts[i], image, grasp);
    weights = gate_weights(model.gate(), image, grasp);
  } else {
    std::vector<std::future<ExpertOpinion>> tasks;
    tasks.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      tasks.push_back(std::async(std::launch::async, [&, i] { return evaluate_expert(*experts[i], image, grasp); }));
    auto gate_task = std::async(std::launch::async, [&] { return gate_weights(model.gate(), image, grasp); });

    std::exception_ptr failure;
    for (std::size_t i = 0; i < n; ++i) {
      try {
        opinions[i] = tasks[i].get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    try {
      weights = gate_task.get();
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = opinions[i].quality;
  EnsemblePrediction out;
  out.quality = combine(q, weights);
  out.weights = std::move(weights);
  out.opinions = std::move(opinions);
  out.label = classify(out.quality, model.threshold());
  return out;
}

/// Highest combined quality among the candidates; ties go to the lowest index.
inline std::pair<std::size_t, EnsemblePrediction> predict_best_grasp(const EnsembleModel& model, const Image& image,
                                                                     std::span<const GraspSpec> candidates,
                                                                     ExecutionMode mode = ExecutionMode::parallel) {
  if (candidates.empty()) throw Error(ErrorCode::invalid_argument, "no candidate grasps");
  std::size_t best = 0;
  EnsemblePrediction best_pred = predict(model, image, candidates[0], mode);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    EnsemblePrediction p = predict(model, image, candidates[i], mode);
    if (p.quality > best_pred.quality) {
      best = i;
      best_pred = std::move(p);
    }
  }
  return {best, std::move(best_pred)};
}

struct LatencyReport {
  std::vector<double> parallel_ms;
  std::vector<double> sequential_ms;

  static double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  }
  double parallel_median() const { return median(parallel_ms); }
  double sequential_median() const { return median(sequential_ms); }
};

/// Wall-clock predict latency with `n_experts` mock experts sleeping `delay` each and an
/// instant constant gate, alternating parallel and sequential trials.
inline LatencyReport measure_latency(std::size_t n_experts, std::chrono::milliseconds delay, std::size_t trials) {
  if (n_experts == 0) throw Error(ErrorCode::invalid_argument, "need at least one expert");
  std::vector<ExpertPtr> experts;
  for (std::size_t i = 0; i < n_experts; ++i)
    experts.push_back(std::make_shared<DelayExpert>("mock" + std::to_string(i), delay, 0.25 + 0.5 * static_cast<double>(i % 2)));
  const EnsembleModel model(experts, init_params(GateVariant::constant, n_experts));
  const Image image(8, 8, ChannelSet::depth(), std::vector<double>(64, 0.8));
  const GraspSpec grasp = make_grasp(4, 4, 0.8, 4, 0);
  using clock = std::chrono::steady_clock;
  LatencyReport report;
  for (std::size_t t = 0; t < trials; ++t)
    for (ExecutionMode mode : {ExecutionMode::parallel, ExecutionMode::sequential}) {
      const auto start = clock::now();
      predict(model, image, grasp, mode);
      const double ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
      (mode == ExecutionMode::parallel ? report.parallel_ms : report.sequential_ms).push_back(ms);
    }
  return report;
}

// ---------------------------------------------------------------------------------------------
// Manifest: "key value" lines closed by a hash line over everything before it.

struct EnsembleManifest {
  std::vector<std::string> expert_ids;
  std::string gate_path;
  GateVariant variant = GateVariant::constant;
  std::size_t crop_size = 64;
  double threshold = 0.5;
  std::string config_echo;  // free-form single line; optional

  friend bool operator==(const EnsembleManifest&, const EnsembleManifest&) = default;
};

inline std::string manifest_text(const EnsembleManifest& m) {
  std::ostringstream body;
  body << "ecnn-ensemble 1\n";
  body << "experts";
  for (const auto& id : m.expert_ids) body << ' ' << id;
  body << "\ngate " << m.gate_path << "\nvariant " << to_string(m.variant) << "\ncrop_size " << m.crop_size << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", m.threshold);
  body << "threshold " << buf << '\n';
  if (!m.config_echo.empty()) body << "config " << m.config_echo << '\n';
  const std::string text = body.str();
  return text + "hash " + hex64(hash_bytes(text)) + '\n';
}

inline EnsembleManifest parse_manifest(const std::string& text) {
  const auto hash_at = text.rfind("hash ");
  if (hash_at == std::string::npos || (hash_at > 0 && text[hash_at - 1] != '\n'))
    throw Error(ErrorCode::format, "manifest has no hash line");
  const std::string body = text.substr(0, hash_at);
  std::string stated = text.substr(hash_at + 5);
  while (!stated.empty() && (stated.back() == '\n' || stated.back() == '\r')) stated.pop_back();
  if (stated != hex64(hash_bytes(body))) throw Error(ErrorCode::format, "manifest hash mismatch");

  std::istringstream in(body);
  std::string line;
  std::getline(in, line);
  if (line != "ecnn-ensemble 1") throw Error(ErrorCode::format, "not an ensemble manifest");
  EnsembleManifest m;
  bool have_experts = false, have_gate = false;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "experts") {
      std::istringstream ids(value);
      for (std::string id; ids >> id;) m.expert_ids.push_back(id);
      have_experts = true;
    } else if (key == "gate") {
      m.gate_path = value;
      have_gate = true;
    } else if (key == "variant") {
      m.variant = parse_variant(value);
    } else if (key == "crop_size") {
      m.crop_size = std::stoul(value);
    } else if (key == "threshold") {
      m.threshold = std::stod(value);
    } else if (key == "config") {
      m.config_echo = value;
    } else {
      throw Error(ErrorCode::format, "unknown manifest key '" + key + "'");
    }
  }
  if (!have_experts || !have_gate || m.expert_ids.empty())
    throw Error(ErrorCode::format, "manifest lacks experts or gate");
  return m;
}

inline void write_manifest(const EnsembleManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << manifest_text(m);
}

inline EnsembleManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_manifest(s.str());
}

/// Rebuilds a model from a manifest; experts are looked up by id in `registry` and the gate
/// path is resolved relative to the manifest's directory.
inline EnsembleModel load_ensemble(const std::filesystem::path& manifest_path, const std::vector<ExpertPtr>& registry) {
  const EnsembleManifest m = read_manifest(manifest_path);
  std::vector<ExpertPtr> experts;
  for (const auto& id : m.expert_ids) experts.push_back(find_expert(registry, id));
  std::filesystem::path gate_path(m.gate_path);
  if (gate_path.is_relative()) gate_path = manifest_path.parent_path() / gate_path;
  GateParams gate = load_gate(gate_path);
  if (gate.variant != m.variant || (gate.variant != GateVariant::constant && gate.crop_size != m.crop_size))
    throw Error(ErrorCode::format, "gate params disagree with the manifest");
  return EnsembleModel(std::move(experts), std::move(gate), m.threshold);
}

}  // namespace ecnn
