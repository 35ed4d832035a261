#include "zcpt/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "zcpt/rng.hpp"

namespace zcpt {

namespace {

Batch gather(const Dataset& data, const std::vector<int>& idx) {
  const int C = data.images.dim(1), H = data.images.dim(2), W = data.images.dim(3);
  const std::size_t row = static_cast<std::size_t>(C * H * W);
  Batch b;
  b.inputs = Tensor({static_cast<int>(idx.size()), C, H, W});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(idx[i]) * row;
    std::copy(data.images.data.begin() + static_cast<std::ptrdiff_t>(src),
              data.images.data.begin() + static_cast<std::ptrdiff_t>(src + row),
              b.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * row));
    b.labels.push_back(data.labels[static_cast<std::size_t>(idx[i])]);
  }
  return b;
}

// softmax cross-entropy on raw logits; fills dlogits with dL/dlogits if given
double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("label count does not match batch");
  double loss = 0.0;
  if (dlogits) *dlogits = Tensor(logits.shape);
  for (int i = 0; i < N; ++i) {
    double mx = logits.at2(i, 0);
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.at2(i, k));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(logits.at2(i, k) - mx);
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= K) throw std::invalid_argument("label out of range");
    loss -= logits.at2(i, y) - mx - std::log(z);
    if (dlogits)
      for (int k = 0; k < K; ++k) {
        double d = std::exp(logits.at2(i, k) - mx) / z;
        if (k == y) d -= 1.0;
        dlogits->at2(i, k) = d / static_cast<double>(N);
      }
  }
  return loss / static_cast<double>(N);
}

}  // namespace

Batch make_batch(const Dataset& data, int batch_size, std::uint64_t seed) {
  if (data.train_idx.empty()) throw std::invalid_argument("empty training split");
  Rng rng(hash64(seed, 0x6261746368ULL));
  // Without replacement while the split lasts (duplicate samples would
  // collapse activation-kernel ranks); wrap around for oversized batches.
  std::vector<int> order = data.train_idx;
  rng.shuffle(order);
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i)
    idx.push_back(order[static_cast<std::size_t>(i) % order.size()]);
  return gather(data, idx);
}

double ce_forward_backward(Graph& g, const Batch& batch, bool want_input_grad) {
  const Tensor& logits = g.forward(batch.inputs);
  Tensor dlogits;
  const double loss = softmax_ce(logits, batch.labels, &dlogits);
  g.backward(dlogits, want_input_grad);
  return loss;
}

std::vector<double> hvp(Graph& g, const Batch& batch, const std::vector<double>& direction,
                        double eps) {
  double norm = 0.0;
  for (double v : direction) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw std::invalid_argument("hvp: zero-norm direction");

  const std::vector<double> theta = g.flat_params();
  if (direction.size() != theta.size())
    throw std::invalid_argument("hvp: direction layout does not match parameters");
  if (eps <= 0.0) {
    double mx = 0.0;
    for (double v : theta) mx = std::max(mx, std::abs(v));
    eps = 1e-4 * (1.0 + mx);
  }

  ce_forward_backward(g, batch);
  const std::vector<double> g0 = g.flat_grads();

  std::vector<double> shifted = theta;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += eps * direction[i] / norm;
  g.set_flat_params(shifted);
  ce_forward_backward(g, batch);
  const std::vector<double> g1 = g.flat_grads();
  g.set_flat_params(theta);

  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (g1[i] - g0[i]) / eps * norm;
  return out;
}

double eval_accuracy(Graph& g, const Dataset& data, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("empty evaluation split");
  int correct = 0;
  const int chunk = 256;
  for (std::size_t off = 0; off < idx.size(); off += chunk) {
    std::vector<int> part(idx.begin() + static_cast<std::ptrdiff_t>(off),
                          idx.begin() + static_cast<std::ptrdiff_t>(
                                            std::min(idx.size(), off + chunk)));
    Batch b = gather(data, part);
    const Tensor& logits = g.forward(b.inputs);
    const int K = logits.dim(1);
    for (int i = 0; i < logits.dim(0); ++i) {
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (logits.at2(i, k) > logits.at2(i, best)) best = k;
      if (best == b.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

TrainResult sgd_train(Graph& g, const Dataset& data, int epochs, double lr, int batch_size,
                      std::uint64_t seed) {
  if (data.size() == 0 || data.train_idx.empty() || data.val_idx.empty())
    throw std::invalid_argument("sgd_train: empty dataset");
  TrainResult res;
  for (int e = 0; e < epochs; ++e) {
    std::vector<int> order = data.train_idx;
    Rng rng(hash64(seed, static_cast<std::uint64_t>(e) + 0x65706f6368ULL));
    rng.shuffle(order);
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(batch_size)) {
      std::vector<int> part(order.begin() + static_cast<std::ptrdiff_t>(off),
                            order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                order.size(), off + static_cast<std::size_t>(batch_size))));
      Batch b = gather(data, part);
      res.final_loss = ce_forward_backward(g, b);
      auto theta = g.flat_params();
      const auto grads = g.flat_grads();
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grads[i];
      g.set_flat_params(theta);
    }
  }
  res.val_accuracy = eval_accuracy(g, data, data.val_idx);
  return res;
}

}  // namespace zcpt
