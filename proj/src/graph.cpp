#include "zcpt/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "zcpt/rng.hpp"

namespace zcpt {

namespace {
constexpr double kBnEps = 1e-5;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  vals_.emplace_back();
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::add_input(std::vector<int> shape) {
  require(input_node_ < 0, "graph already has an input");
  Node n;
  n.kind = NodeKind::Input;
  n.out_shape = std::move(shape);
  input_node_ = push(std::move(n));
  return input_node_;
}

int Graph::conv2d(int x, int out_ch, int k, int stride, const std::string& pname) {
  const auto& s = shape_of(x);
  require(s.size() == 4, "conv2d expects NCHW input");
  require(k == 1 || k == 3, "conv2d kernel must be 1 or 3");
  require(stride == 1 || stride == 2, "conv2d stride must be 1 or 2");
  const int pad = k / 2;
  const int oh = (s[2] + 2 * pad - k) / stride + 1;
  const int ow = (s[3] + 2 * pad - k) / stride + 1;
  require(oh > 0 && ow > 0, "conv2d output collapsed to zero extent");
  Node n;
  n.kind = NodeKind::Conv2d;
  n.in = {x};
  n.ksize = k;
  n.stride = stride;
  n.pad = pad;
  n.out_shape = {s[0], out_ch, oh, ow};
  Param w;
  w.name = pname;
  w.value = Tensor({out_ch, s[1], k, k});
  w.grad = Tensor(w.value.shape);
  n.weight = static_cast<int>(params_.size());
  params_.push_back(std::move(w));
  Param b;
  b.name = pname + ".b";
  b.value = Tensor({out_ch});
  b.grad = Tensor(b.value.shape);
  n.bias = static_cast<int>(params_.size());
  params_.push_back(std::move(b));
  return push(std::move(n));
}

int Graph::linear(int x, int out_features, const std::string& pname) {
  const auto& s = shape_of(x);
  require(s.size() == 2, "linear expects (N,F) input");
  Node n;
  n.kind = NodeKind::Linear;
  n.in = {x};
  n.out_shape = {s[0], out_features};
  Param w;
  w.name = pname + ".w";
  w.value = Tensor({out_features, s[1]});
  w.grad = Tensor(w.value.shape);
  n.weight = static_cast<int>(params_.size());
  params_.push_back(std::move(w));
  Param b;
  b.name = pname + ".b";
  b.value = Tensor({out_features});
  b.grad = Tensor(b.value.shape);
  n.bias = static_cast<int>(params_.size());
  params_.push_back(std::move(b));
  return push(std::move(n));
}

int Graph::relu(int x) {
  Node n;
  n.kind = NodeKind::Relu;
  n.in = {x};
  n.out_shape = shape_of(x);
  return push(std::move(n));
}

int Graph::batchnorm(int x, const std::string& pname) {
  const auto& s = shape_of(x);
  require(s.size() == 4, "batchnorm expects NCHW input");
  Node n;
  n.kind = NodeKind::BatchNorm;
  n.in = {x};
  n.out_shape = s;
  Param g;
  g.name = pname + ".gamma";
  g.value = Tensor({s[1]});
  g.grad = Tensor(g.value.shape);
  n.weight = static_cast<int>(params_.size());
  params_.push_back(std::move(g));
  Param b;
  b.name = pname + ".beta";
  b.value = Tensor({s[1]});
  b.grad = Tensor(b.value.shape);
  n.bias = static_cast<int>(params_.size());
  params_.push_back(std::move(b));
  return push(std::move(n));
}

int Graph::avgpool3x3(int x) {
  const auto& s = shape_of(x);
  require(s.size() == 4, "avgpool3x3 expects NCHW input");
  Node n;
  n.kind = NodeKind::AvgPool3x3;
  n.in = {x};
  n.out_shape = s;  // stride 1, pad 1
  return push(std::move(n));
}

int Graph::global_avg_pool(int x) {
  const auto& s = shape_of(x);
  require(s.size() == 4, "global_avg_pool expects NCHW input");
  Node n;
  n.kind = NodeKind::GlobalAvgPool;
  n.in = {x};
  n.out_shape = {s[0], s[1]};
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  require(shape_of(a) == shape_of(b),
          "add shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  Node n;
  n.kind = NodeKind::Add;
  n.in = {a, b};
  n.out_shape = shape_of(a);
  return push(std::move(n));
}

int Graph::scale(int x, double s) {
  Node n;
  n.kind = NodeKind::Scale;
  n.in = {x};
  n.scale = s;
  n.out_shape = shape_of(x);
  return push(std::move(n));
}

int Graph::concat(int a, int b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  require(sa.size() == sb.size() && (sa.size() == 2 || sa.size() == 4),
          "concat expects two 2d or two 4d inputs");
  require(sa[0] == sb[0], "concat batch mismatch");
  if (sa.size() == 4)
    require(sa[2] == sb[2] && sa[3] == sb[3], "concat spatial mismatch");
  Node n;
  n.kind = NodeKind::Concat;
  n.in = {a, b};
  n.out_shape = sa;
  n.out_shape[1] = sa[1] + sb[1];
  return push(std::move(n));
}

int Graph::softmax_cross_entropy(int logits) {
  require(shape_of(logits).size() == 2, "softmax_cross_entropy expects (N,K) logits");
  Node n;
  n.kind = NodeKind::SoftmaxCrossEntropy;
  n.in = {logits};
  n.out_shape = {1};
  return push(std::move(n));
}

void Graph::set_tap(int node, const std::string& name) {
  for (const auto& n : nodes_)
    require(n.tap != name, "duplicate tap name: " + name);
  nodes_[static_cast<std::size_t>(node)].tap = name;
}

void Graph::init_params(std::uint64_t seed) {
  for (auto& p : params_) {
    Rng rng(hash64(seed, hash_str(p.name)));
    const auto& s = p.value.shape;
    if (p.name.ends_with(".gamma")) {
      p.value.fill(1.0);
    } else if (p.name.ends_with(".beta")) {
      p.value.fill(0.0);
    } else if (p.name.ends_with(".b")) {
      p.value.fill(0.05);  // small positive bias keeps rectifier units alive
    } else {
      // conv weight (OC,IC,K,K) or linear weight (O,F)
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < s.size(); ++i) fan_in *= static_cast<std::size_t>(s[i]);
      // He-uniform: Var(w) = 2/fan_in keeps activation scale stable under ReLU
      const double b = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : p.value.data) v = rng.uniform(-b, b);
    }
    p.grad.fill(0.0);
  }
}

void Graph::set_labels(std::vector<int> labels) { labels_ = std::move(labels); }

std::vector<int> Graph::nodes_of_kind(NodeKind k) const {
  std::vector<int> out;
  for (int i = 0; i < num_nodes(); ++i)
    if (nodes_[static_cast<std::size_t>(i)].kind == k) out.push_back(i);
  return out;
}

void Graph::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::vector<double> Graph::flat_params() const {
  std::vector<double> out;
  for (const auto& p : params_) out.insert(out.end(), p.value.data.begin(), p.value.data.end());
  return out;
}

void Graph::set_flat_params(const std::vector<double>& v) {
  std::size_t off = 0;
  for (auto& p : params_) {
    require(off + p.value.numel() <= v.size(), "flat param vector too short");
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(off),
              v.begin() + static_cast<std::ptrdiff_t>(off + p.value.numel()),
              p.value.data.begin());
    off += p.value.numel();
  }
  require(off == v.size(), "flat param vector length mismatch");
}

std::vector<double> Graph::flat_grads() const {
  std::vector<double> out;
  for (const auto& p : params_) out.insert(out.end(), p.grad.data.begin(), p.grad.data.end());
  return out;
}

TapSet Graph::taps() const {
  TapSet out;
  for (int i = 0; i < num_nodes(); ++i) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.tap.empty()) continue;
    TapCapture cap;
    cap.value = vals_[static_cast<std::size_t>(i)];
    if (backward_done_) cap.grad = grads_[static_cast<std::size_t>(i)];
    out.emplace(n.tap, std::move(cap));
  }
  return out;
}

const Tensor& Graph::input_grad() const {
  require(backward_done_ && want_input_grad_, "input gradient was not requested");
  return grads_[static_cast<std::size_t>(input_node_)];
}

void Graph::rebind_batch(int n) {
  require(n > 0, "batch extent must be positive");
  for (auto& nd : nodes_) {
    if (nd.kind == NodeKind::SoftmaxCrossEntropy) continue;  // scalar output
    nd.out_shape[0] = n;
  }
  for (auto& v : vals_) v = Tensor();
  for (auto& g : grads_) g = Tensor();
  forward_done_ = false;
  backward_done_ = false;
}

const Tensor& Graph::forward(const Tensor& input, ForwardMode mode) {
  require(input_node_ >= 0, "graph has no input node");
  if (!input.shape.empty() && !shape_of(input_node_).empty() &&
      input.shape[0] != shape_of(input_node_)[0] && input.shape.size() == shape_of(input_node_).size())
    rebind_batch(input.shape[0]);
  require(input.shape == shape_of(input_node_),
          "input shape " + shape_str(input.shape) + " does not match graph input " +
              shape_str(shape_of(input_node_)));
  require(input.all_finite(), "non-finite input");
  vals_[static_cast<std::size_t>(input_node_)] = input;
  bn_var_.clear();
  bn_xhat_.clear();
  bn_invstd_.clear();
  sce_probs_.clear();
  for (int i = 0; i < num_nodes(); ++i)
    if (nodes_[static_cast<std::size_t>(i)].kind != NodeKind::Input) forward_node(i, mode);
  forward_done_ = true;
  backward_done_ = false;
  return vals_[static_cast<std::size_t>(output_node())];
}

void Graph::forward_node(int id, ForwardMode) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  Tensor& out = vals_[static_cast<std::size_t>(id)];
  out = Tensor(n.out_shape);
  switch (n.kind) {
    case NodeKind::Input:
      break;
    case NodeKind::Conv2d: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      const Tensor& w = params_[static_cast<std::size_t>(n.weight)].value;
      const Tensor& bias = params_[static_cast<std::size_t>(n.bias)].value;
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int OC = out.dim(1), OH = out.dim(2), OW = out.dim(3);
      const int K = n.ksize, S = n.stride, P = n.pad;
      for (int b = 0; b < N; ++b)
        for (int oc = 0; oc < OC; ++oc)
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow)
              out.at4(b, oc, oh, ow) = bias.data[static_cast<std::size_t>(oc)];
      for (int b = 0; b < N; ++b)
        for (int oc = 0; oc < OC; ++oc)
          for (int c = 0; c < C; ++c)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                const double wv = w.at4(oc, c, kh, kw);
                if (wv == 0.0) continue;
                for (int oh = 0; oh < OH; ++oh) {
                  const int ih = oh * S - P + kh;
                  if (ih < 0 || ih >= H) continue;
                  for (int ow = 0; ow < OW; ++ow) {
                    const int iw = ow * S - P + kw;
                    if (iw < 0 || iw >= W) continue;
                    out.at4(b, oc, oh, ow) += wv * x.at4(b, c, ih, iw);
                  }
                }
              }
      break;
    }
    case NodeKind::Linear: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      const Tensor& w = params_[static_cast<std::size_t>(n.weight)].value;
      const Tensor& b = params_[static_cast<std::size_t>(n.bias)].value;
      const int N = x.dim(0), F = x.dim(1), O = out.dim(1);
      for (int i = 0; i < N; ++i)
        for (int o = 0; o < O; ++o) {
          double acc = b.data[static_cast<std::size_t>(o)];
          for (int f = 0; f < F; ++f) acc += w.at2(o, f) * x.at2(i, f);
          out.at2(i, o) = acc;
        }
      break;
    }
    case NodeKind::Relu: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
      break;
    }
    case NodeKind::BatchNorm: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      if (bn_bypass_) {
        out = x;
        break;
      }
      const Tensor& gamma = params_[static_cast<std::size_t>(n.weight)].value;
      const Tensor& beta = params_[static_cast<std::size_t>(n.bias)].value;
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const double m = static_cast<double>(N * H * W);
      std::vector<double> var(static_cast<std::size_t>(C), 0.0);
      std::vector<double> invstd(static_cast<std::size_t>(C), 0.0);
      Tensor xhat(x.shape);
      for (int c = 0; c < C; ++c) {
        double mu = 0.0;
        for (int b = 0; b < N; ++b)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) mu += x.at4(b, c, h, w2);
        mu /= m;
        double v = 0.0;
        for (int b = 0; b < N; ++b)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) {
              const double d = x.at4(b, c, h, w2) - mu;
              v += d * d;
            }
        v /= m;
        var[static_cast<std::size_t>(c)] = v;
        const double is = 1.0 / std::sqrt(v + kBnEps);
        invstd[static_cast<std::size_t>(c)] = is;
        const double g = gamma.data[static_cast<std::size_t>(c)];
        const double bt = beta.data[static_cast<std::size_t>(c)];
        for (int b = 0; b < N; ++b)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) {
              const double xh = (x.at4(b, c, h, w2) - mu) * is;
              xhat.at4(b, c, h, w2) = xh;
              out.at4(b, c, h, w2) = g * xh + bt;
            }
      }
      bn_var_[id] = std::move(var);
      bn_invstd_[id] = std::move(invstd);
      bn_xhat_[id] = std::move(xhat);
      break;
    }
    case NodeKind::AvgPool3x3: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) {
              double acc = 0.0;
              for (int dh = -1; dh <= 1; ++dh)
                for (int dw = -1; dw <= 1; ++dw) {
                  const int ih = h + dh, iw = w2 + dw;
                  if (ih >= 0 && ih < H && iw >= 0 && iw < W) acc += x.at4(b, c, ih, iw);
                }
              out.at4(b, c, h, w2) = acc / 9.0;
            }
      break;
    }
    case NodeKind::GlobalAvgPool: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const double m = static_cast<double>(H * W);
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) acc += x.at4(b, c, h, w2);
          out.at2(b, c) = acc / m;
        }
      break;
    }
    case NodeKind::Add: {
      const Tensor& a = vals_[static_cast<std::size_t>(n.in[0])];
      const Tensor& b = vals_[static_cast<std::size_t>(n.in[1])];
      for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
      break;
    }
    case NodeKind::Scale: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = n.scale * x.data[i];
      break;
    }
    case NodeKind::Concat: {
      const Tensor& a = vals_[static_cast<std::size_t>(n.in[0])];
      const Tensor& b = vals_[static_cast<std::size_t>(n.in[1])];
      const int N = a.dim(0);
      const std::size_t ra = a.numel() / static_cast<std::size_t>(N);
      const std::size_t rb = b.numel() / static_cast<std::size_t>(N);
      for (int i = 0; i < N; ++i) {
        std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(ra * static_cast<std::size_t>(i)),
                  a.data.begin() + static_cast<std::ptrdiff_t>(ra * static_cast<std::size_t>(i + 1)),
                  out.data.begin() + static_cast<std::ptrdiff_t>((ra + rb) * static_cast<std::size_t>(i)));
        std::copy(b.data.begin() + static_cast<std::ptrdiff_t>(rb * static_cast<std::size_t>(i)),
                  b.data.begin() + static_cast<std::ptrdiff_t>(rb * static_cast<std::size_t>(i + 1)),
                  out.data.begin() +
                      static_cast<std::ptrdiff_t>((ra + rb) * static_cast<std::size_t>(i) + ra));
      }
      break;
    }
    case NodeKind::SoftmaxCrossEntropy: {
      const Tensor& logits = vals_[static_cast<std::size_t>(n.in[0])];
      const int N = logits.dim(0), K = logits.dim(1);
      require(static_cast<int>(labels_.size()) == N, "labels missing or wrong length");
      Tensor probs(logits.shape);
      double loss = 0.0;
      for (int i = 0; i < N; ++i) {
        double mx = logits.at2(i, 0);
        for (int k = 1; k < K; ++k) mx = std::max(mx, logits.at2(i, k));
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(logits.at2(i, k) - mx);
        for (int k = 0; k < K; ++k) probs.at2(i, k) = std::exp(logits.at2(i, k) - mx) / z;
        const int y = labels_[static_cast<std::size_t>(i)];
        require(y >= 0 && y < K, "label out of range");
        loss -= std::log(std::max(probs.at2(i, y), 1e-300));
      }
      out.data[0] = loss / static_cast<double>(N);
      sce_probs_[id] = std::move(probs);
      break;
    }
  }
}

void Graph::backward(const Tensor& seed_grad, bool want_input_grad) {
  require(forward_done_, "backward called before forward");
  require(seed_grad.shape == shape_of(output_node()), "seed gradient shape mismatch");
  for (int i = 0; i < num_nodes(); ++i)
    grads_[static_cast<std::size_t>(i)] = Tensor(shape_of(i));
  zero_grads();
  want_input_grad_ = want_input_grad;
  grads_[static_cast<std::size_t>(output_node())] = seed_grad;
  for (int i = num_nodes() - 1; i >= 0; --i) backward_node(i);
  backward_done_ = true;
}

void Graph::backward_node(int id) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = grads_[static_cast<std::size_t>(id)];
  switch (n.kind) {
    case NodeKind::Input:
      break;
    case NodeKind::Conv2d: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      const Tensor& w = params_[static_cast<std::size_t>(n.weight)].value;
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      Tensor& gw = params_[static_cast<std::size_t>(n.weight)].grad;
      Tensor& gbias = params_[static_cast<std::size_t>(n.bias)].grad;
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const int OC = g.dim(1), OH = g.dim(2), OW = g.dim(3);
      const int K = n.ksize, S = n.stride, P = n.pad;
      for (int b = 0; b < N; ++b)
        for (int oc = 0; oc < OC; ++oc)
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow)
              gbias.data[static_cast<std::size_t>(oc)] += g.at4(b, oc, oh, ow);
      for (int b = 0; b < N; ++b)
        for (int oc = 0; oc < OC; ++oc)
          for (int c = 0; c < C; ++c)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                const double wv = w.at4(oc, c, kh, kw);
                double gwacc = 0.0;
                for (int oh = 0; oh < OH; ++oh) {
                  const int ih = oh * S - P + kh;
                  if (ih < 0 || ih >= H) continue;
                  for (int ow = 0; ow < OW; ++ow) {
                    const int iw = ow * S - P + kw;
                    if (iw < 0 || iw >= W) continue;
                    const double go = g.at4(b, oc, oh, ow);
                    gwacc += go * x.at4(b, c, ih, iw);
                    gx.at4(b, c, ih, iw) += go * wv;
                  }
                }
                gw.at4(oc, c, kh, kw) += gwacc;
              }
      break;
    }
    case NodeKind::Linear: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      const Tensor& w = params_[static_cast<std::size_t>(n.weight)].value;
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      Tensor& gw = params_[static_cast<std::size_t>(n.weight)].grad;
      Tensor& gb = params_[static_cast<std::size_t>(n.bias)].grad;
      const int N = x.dim(0), F = x.dim(1), O = g.dim(1);
      for (int i = 0; i < N; ++i)
        for (int o = 0; o < O; ++o) {
          const double go = g.at2(i, o);
          gb.data[static_cast<std::size_t>(o)] += go;
          for (int f = 0; f < F; ++f) {
            gw.at2(o, f) += go * x.at2(i, f);
            gx.at2(i, f) += go * w.at2(o, f);
          }
        }
      break;
    }
    case NodeKind::Relu: {
      const Tensor& x = vals_[static_cast<std::size_t>(n.in[0])];
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      for (std::size_t i = 0; i < x.numel(); ++i)
        if (x.data[i] > 0.0) gx.data[i] += g.data[i];
      break;
    }
    case NodeKind::BatchNorm: {
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      if (bn_bypass_) {
        for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
        break;
      }
      const Tensor& gamma = params_[static_cast<std::size_t>(n.weight)].value;
      Tensor& ggamma = params_[static_cast<std::size_t>(n.weight)].grad;
      Tensor& gbeta = params_[static_cast<std::size_t>(n.bias)].grad;
      const Tensor& xhat = bn_xhat_.at(id);
      const auto& invstd = bn_invstd_.at(id);
      const int N = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3);
      const double m = static_cast<double>(N * H * W);
      for (int c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < N; ++b)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) {
              const double gv = g.at4(b, c, h, w2);
              sum_g += gv;
              sum_gx += gv * xhat.at4(b, c, h, w2);
            }
        ggamma.data[static_cast<std::size_t>(c)] += sum_gx;
        gbeta.data[static_cast<std::size_t>(c)] += sum_g;
        const double gch = gamma.data[static_cast<std::size_t>(c)];
        const double is = invstd[static_cast<std::size_t>(c)];
        for (int b = 0; b < N; ++b)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) {
              const double gv = g.at4(b, c, h, w2) * gch;
              const double xh = xhat.at4(b, c, h, w2);
              gx.at4(b, c, h, w2) +=
                  is * (gv - (sum_g * gch + xh * sum_gx * gch) / m);
            }
      }
      break;
    }
    case NodeKind::AvgPool3x3: {
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      const int N = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3);
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) {
              const double gv = g.at4(b, c, h, w2) / 9.0;
              for (int dh = -1; dh <= 1; ++dh)
                for (int dw = -1; dw <= 1; ++dw) {
                  const int ih = h + dh, iw = w2 + dw;
                  if (ih >= 0 && ih < H && iw >= 0 && iw < W) gx.at4(b, c, ih, iw) += gv;
                }
            }
      break;
    }
    case NodeKind::GlobalAvgPool: {
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      const int N = gx.dim(0), C = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
      const double m = static_cast<double>(H * W);
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c) {
          const double gv = g.at2(b, c) / m;
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2) gx.at4(b, c, h, w2) += gv;
        }
      break;
    }
    case NodeKind::Add: {
      for (int k = 0; k < 2; ++k) {
        Tensor& gx = grads_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])];
        for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
      }
      break;
    }
    case NodeKind::Scale: {
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += n.scale * g.data[i];
      break;
    }
    case NodeKind::Concat: {
      Tensor& ga = grads_[static_cast<std::size_t>(n.in[0])];
      Tensor& gb = grads_[static_cast<std::size_t>(n.in[1])];
      const int N = ga.dim(0);
      const std::size_t ra = ga.numel() / static_cast<std::size_t>(N);
      const std::size_t rb = gb.numel() / static_cast<std::size_t>(N);
      for (int i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < ra; ++j)
          ga.data[ra * static_cast<std::size_t>(i) + j] +=
              g.data[(ra + rb) * static_cast<std::size_t>(i) + j];
        for (std::size_t j = 0; j < rb; ++j)
          gb.data[rb * static_cast<std::size_t>(i) + j] +=
              g.data[(ra + rb) * static_cast<std::size_t>(i) + ra + j];
      }
      break;
    }
    case NodeKind::SoftmaxCrossEntropy: {
      Tensor& gx = grads_[static_cast<std::size_t>(n.in[0])];
      const Tensor& probs = sce_probs_.at(id);
      const int N = gx.dim(0), K = gx.dim(1);
      const double gs = g.data[0] / static_cast<double>(N);
      for (int i = 0; i < N; ++i)
        for (int k = 0; k < K; ++k) {
          double d = probs.at2(i, k);
          if (k == labels_[static_cast<std::size_t>(i)]) d -= 1.0;
          gx.at2(i, k) += gs * d;
        }
      break;
    }
  }
}

}  // namespace zcpt
