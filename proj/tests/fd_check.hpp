#pragma once

// Central finite-difference check of gate_backward_batch shared by the unit tests and the
// acceptance run.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ecnn/ecnn.hpp"
#include "ecnn/detail/rng.hpp"

namespace ecnn::test {

struct FdResult {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation flipped a ReLU; the loss is not differentiable there
  double worst = 0.0;       // max |analytic - fd| / max(1, |analytic|)
  std::vector<std::size_t> per_tensor;
};

inline double upstream_loss(const GateTape& tape, const std::vector<std::vector<double>>& upstream) {
  double total = 0.0;
  for (std::size_t b = 0; b < tape.batch; ++b)
    for (std::size_t i = 0; i < upstream[b].size(); ++i) total += upstream[b][i] * tape.weights[b].weights[i];
  return total;
}

inline bool same_masks(const GateTape& a, const GateTape& b) {
  if (a.variant == GateVariant::constant) return true;
  return ((a.act1.array() > 0.0) == (b.act1.array() > 0.0)).all() &&
         ((a.act2.array() > 0.0) == (b.act2.array() > 0.0)).all() &&
         ((a.hidden.array() > 0.0) == (b.hidden.array() > 0.0)).all();
}

/// Checks up to `per_tensor` distinct coordinates of every tensor (all of them for smaller tensors).
inline FdResult fd_check(GateParams params, const std::vector<GateInput>& inputs,
                         const std::vector<std::vector<double>>& upstream, std::size_t per_tensor,
                         std::uint64_t seed, double step = 1e-4) {
  const GateTape base = gate_forward_batch(params, inputs);
  const GateGradients grads = gate_backward_batch(params, base, upstream);
  detail::Rng rng(seed);
  FdResult out;
  GateTape tape;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    const std::size_t size = params.tensors[t].size();
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    rng.shuffle(coords.begin(), coords.end());
    std::size_t done = 0;
    for (std::size_t k = 0; k < size && done < std::min(per_tensor, size); ++k) {
      double& w = params.tensors[t].data[coords[k]];
      const double keep = w;
      w = keep + step;
      gate_forward_batch(params, inputs, tape);
      const bool plus_ok = same_masks(base, tape);
      const double lp = upstream_loss(tape, upstream);
      w = keep - step;
      gate_forward_batch(params, inputs, tape);
      const bool minus_ok = same_masks(base, tape);
      const double lm = upstream_loss(tape, upstream);
      w = keep;
      if (!plus_ok || !minus_ok) {
        ++out.skipped;
        continue;
      }
      const double fd = (lp - lm) / (2.0 * step);
      const double a = grads.tensors[t].data[coords[k]];
      out.worst = std::max(out.worst, std::abs(a - fd) / std::max(1.0, std::abs(a)));
      ++done;
    }
    out.per_tensor.push_back(done);
    out.checked += done;
  }
  return out;
}

/// Moves a fresh initialisation off the ReLU kinks: zero biases put every pre-activation over
/// an all-zero patch exactly at 0. Constant logits are drawn as well.
inline void randomize_biases(GateParams& p, std::uint64_t seed) {
  detail::Rng rng(detail::derive_seed(seed, 0xfd));
  for (auto& t : p.tensors)
    if (t.shape.size() == 1)
      for (double& v : t.data) v = rng.uniform(-0.1, 0.1) * (p.variant == GateVariant::constant ? 20.0 : 1.0);
}

/// Gate inputs from real scenes plus random upstream gradients in [-1, 1].
inline std::pair<std::vector<GateInput>, std::vector<std::vector<double>>> fd_batch(const GateParams& params,
                                                                                  const GraspDataset& ds,
                                                                                  std::size_t batch,
                                                                                  std::uint64_t seed) {
  detail::Rng rng(seed);
  std::vector<GateInput> inputs;
  std::vector<std::vector<double>> upstream;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& entry = ds.scenes[rng.below(ds.scenes.size())];
    const auto& g = entry.grasps[rng.below(entry.grasps.size())];
    inputs.push_back(make_gate_input(params, entry.image, g.grasp));
    std::vector<double> up(params.n_experts);
    for (double& v : up) v = rng.uniform(-1.0, 1.0);
    upstream.push_back(std::move(up));
  }
  return {std::move(inputs), std::move(upstream)};
}

}  // namespace ecnn::test
