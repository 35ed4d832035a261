#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zcpt/tensor.hpp"

namespace zcpt {

enum class NodeKind {
  Input,
  Conv2d,
  Linear,
  Relu,
  BatchNorm,
  AvgPool3x3,
  GlobalAvgPool,
  Add,
  Scale,
  Concat,
  SoftmaxCrossEntropy,
};

enum class ForwardMode { TrainStats, InitStats };

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

struct Node {
  NodeKind kind;
  std::vector<int> in;
  std::vector<int> out_shape;
  int weight = -1;  // param id (conv/linear weight, bn gamma)
  int bias = -1;    // param id (conv/linear bias, bn beta)
  int ksize = 1, stride = 1, pad = 0;
  double scale = 1.0;
  std::string tap;  // non-empty: activation tap, value (+grad) captured per pass
};

struct TapCapture {
  Tensor value;
  Tensor grad;  // empty unless backward ran
};
using TapSet = std::map<std::string, TapCapture>;

// Static computation graph with reverse-mode differentiation. Nodes are added
// in topological order by construction; shapes are checked at build time.
// A graph instance is single-threaded, but graphs are plain values and may be
// copied and evaluated concurrently.
class Graph {
 public:
  int add_input(std::vector<int> shape);
  // conv2d, zero padding k/2, with per-channel bias
  int conv2d(int x, int out_ch, int k, int stride, const std::string& pname);
  int linear(int x, int out_features, const std::string& pname);
  int relu(int x);
  int batchnorm(int x, const std::string& pname);
  int avgpool3x3(int x);
  int global_avg_pool(int x);
  int add(int a, int b);
  int scale(int x, double s);
  int concat(int a, int b);
  int softmax_cross_entropy(int logits);

  void set_tap(int node, const std::string& name);

  // Fan-in-scaled uniform init for conv/linear (U(-b,b), b = 1/sqrt(fan_in)),
  // identity affine for batchnorm. Streams are keyed per parameter name so
  // structurally shared layers get identical weights across graph variants.
  void init_params(std::uint64_t seed);

  void set_labels(std::vector<int> labels);

  const Tensor& forward(const Tensor& input, ForwardMode mode = ForwardMode::InitStats);
  // Seeds the last node's gradient and fills all parameter gradient slots.
  void backward(const Tensor& seed_grad, bool want_input_grad = false);

  const Tensor& value(int node) const { return vals_[static_cast<std::size_t>(node)]; }
  const Tensor& node_grad(int node) const { return grads_[static_cast<std::size_t>(node)]; }
  const Tensor& input_grad() const;

  int output_node() const { return static_cast<int>(nodes_.size()) - 1; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::vector<int> nodes_of_kind(NodeKind k) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  void zero_grads();

  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& v);
  std::vector<double> flat_grads() const;

  TapSet taps() const;

  // Re-derive every node shape for a new batch extent. Parameters are
  // untouched; cached activations are invalidated.
  void rebind_batch(int n);

  // synflow support: treat every batchnorm as identity while set
  void set_bn_bypass(bool b) { bn_bypass_ = b; }
  // per-channel batch variances of each batchnorm node from the last forward
  const std::map<int, std::vector<double>>& bn_batch_var() const { return bn_var_; }

 private:
  int push(Node n);
  const std::vector<int>& shape_of(int node) const {
    return nodes_[static_cast<std::size_t>(node)].out_shape;
  }
  void forward_node(int id, ForwardMode mode);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::vector<Param> params_;
  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  std::vector<int> labels_;
  std::map<int, std::vector<double>> bn_var_;
  std::map<int, Tensor> bn_xhat_;
  std::map<int, std::vector<double>> bn_invstd_;
  std::map<int, Tensor> sce_probs_;
  bool forward_done_ = false;
  bool backward_done_ = false;
  bool want_input_grad_ = false;
  bool bn_bypass_ = false;
  int input_node_ = -1;
};

}  // namespace zcpt
