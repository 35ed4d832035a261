#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "zcpt/graph.hpp"
#include "zcpt/rng.hpp"
#include "zcpt/tensor.hpp"

namespace zcpt::testing {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline Tensor random_tensor(const std::vector<int>& shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Random tensor kept away from zero (finite differences across a ReLU kink
// would otherwise be meaningless).
inline Tensor random_tensor_off_zero(const std::vector<int>& shape, std::uint64_t seed,
                                     double margin = 0.05) {
  Tensor t = random_tensor(shape, seed);
  for (double& v : t.data)
    if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
  return t;
}

// Scalarizes a graph's output as dot(output, w) so a single backward pass
// yields every gradient; w is drawn from `seed`.
struct LossProbe {
  Tensor w;
  explicit LossProbe(const std::vector<int>& out_shape, std::uint64_t seed)
      : w(random_tensor(out_shape, hash64(seed, 0x77ULL))) {}
  double loss(const Tensor& out) const {
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * w.data[i];
    return s;
  }
};

// Max relative error between reverse-mode and central-difference gradients,
// over all parameters and (optionally) all input entries.
inline double gradcheck(Graph& g, const Tensor& input, std::uint64_t seed,
                        bool check_input = true, double h = 1e-5) {
  const Tensor& out0 = g.forward(input);
  LossProbe probe(out0.shape, seed);
  g.backward(probe.w, check_input);
  const std::vector<double> ad = g.flat_grads();
  Tensor input_ad;
  if (check_input) input_ad = g.input_grad();

  double worst = 0.0;
  std::vector<double> theta = g.flat_params();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    g.set_flat_params(theta);
    const double lp = probe.loss(g.forward(input));
    theta[i] = orig - h;
    g.set_flat_params(theta);
    const double lm = probe.loss(g.forward(input));
    theta[i] = orig;
    worst = std::max(worst, rel_err(ad[i], (lp - lm) / (2.0 * h)));
  }
  g.set_flat_params(theta);

  if (check_input) {
    Tensor x = input;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double orig = x.data[i];
      x.data[i] = orig + h;
      const double lp = probe.loss(g.forward(x));
      x.data[i] = orig - h;
      const double lm = probe.loss(g.forward(x));
      x.data[i] = orig;
      worst = std::max(worst, rel_err(input_ad.data[i], (lp - lm) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace zcpt::testing
