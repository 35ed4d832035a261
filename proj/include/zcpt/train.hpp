#pragma once

#include <cstdint>
#include <vector>

#include "zcpt/graph.hpp"
#include "zcpt/tensor.hpp"

namespace zcpt {

struct Batch {
  Tensor inputs;            // (B,C,H,W)
  std::vector<int> labels;  // length B
};

struct Dataset {
  Tensor images;  // (N,C,H,W)
  std::vector<int> labels;
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  std::vector<int> test_idx;
  int num_classes = 0;

  int size() const { return images.ndim() ? images.dim(0) : 0; }
};

// Random minibatch from the training split: sampled without replacement,
// wrapping around when batch_size exceeds the split.
Batch make_batch(const Dataset& data, int batch_size, std::uint64_t seed);

// Cross-entropy loss of a logits graph: forward, then backward from the
// softmax-cross-entropy gradient. Returns the loss; parameter gradients are
// left in the graph's slots.
double ce_forward_backward(Graph& g, const Batch& batch, bool want_input_grad = false);

// Hessian-vector product of the cross-entropy loss by forward differencing
// the gradient along the normalized direction, rescaled by |v|.
// eps <= 0 selects the default 1e-4 * (1 + |theta|_inf).
std::vector<double> hvp(Graph& g, const Batch& batch, const std::vector<double>& direction,
                        double eps = 0.0);

struct TrainResult {
  double val_accuracy = 0.0;
  double final_loss = 0.0;
};

// Plain SGD on cross-entropy with seeded shuffling. Deterministic for a fixed
// (graph params, dataset, seed).
TrainResult sgd_train(Graph& g, const Dataset& data, int epochs, double lr, int batch_size,
                      std::uint64_t seed);

double eval_accuracy(Graph& g, const Dataset& data, const std::vector<int>& idx);

}  // namespace zcpt
