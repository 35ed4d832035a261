#include "zcpt/proxies.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "zcpt/rng.hpp"

namespace zcpt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// log|det| of a square matrix via partial-pivot LU; ok=false when the
// determinant is non-positive or below the degeneracy threshold.
bool logdet(std::vector<std::vector<double>> m, double* out) {
  const int n = static_cast<int>(m.size());
  double acc = 0.0;
  int sign = 1;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
          std::abs(m[static_cast<std::size_t>(piv)][static_cast<std::size_t>(col)]))
        piv = r;
    if (piv != col) {
      std::swap(m[static_cast<std::size_t>(piv)], m[static_cast<std::size_t>(col)]);
      sign = -sign;
    }
    const double p = m[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    if (p == 0.0) return false;
    if (p < 0.0) sign = -sign;
    acc += std::log(std::abs(p));
    for (int r = col + 1; r < n; ++r) {
      const double f = m[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] / p;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c)
        m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] -=
            f * m[static_cast<std::size_t>(col)][static_cast<std::size_t>(c)];
    }
  }
  *out = acc;
  return sign > 0 && acc > std::log(1e-12);
}

double score_nwot(ExecutableNet& net, const Batch& batch, bool* degenerate) {
  net.graph.forward(batch.inputs);
  const auto relus = net.graph.nodes_of_kind(NodeKind::Relu);
  require(!relus.empty(), "nwot: network has no rectifier activations");
  const int B = batch.inputs.dim(0);
  // binary code per sample over every rectifier unit
  std::vector<std::vector<std::uint64_t>> codes(static_cast<std::size_t>(B));
  std::size_t bits = 0;
  for (int nid : relus) {
    const Tensor& v = net.graph.value(nid);
    const std::size_t per = v.numel() / static_cast<std::size_t>(B);
    for (int s = 0; s < B; ++s) {
      auto& code = codes[static_cast<std::size_t>(s)];
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t bit = bits + j;
        if (code.size() <= bit / 64) code.resize(bit / 64 + 1, 0);
        if (v.data[static_cast<std::size_t>(s) * per + j] > 0.0)
          code[bit / 64] |= std::uint64_t{1} << (bit % 64);
      }
    }
    bits += per;
  }
  const double na = static_cast<double>(bits);
  std::vector<std::vector<double>> kh(static_cast<std::size_t>(B),
                                      std::vector<double>(static_cast<std::size_t>(B)));
  for (int i = 0; i < B; ++i)
    for (int j = i; j < B; ++j) {
      std::size_t d = 0;
      for (std::size_t w = 0; w < codes[static_cast<std::size_t>(i)].size(); ++w)
        d += static_cast<std::size_t>(std::popcount(codes[static_cast<std::size_t>(i)][w] ^
                                                    codes[static_cast<std::size_t>(j)][w]));
      kh[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          kh[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
              na - static_cast<double>(d);
    }
  double ld = 0.0;
  if (!logdet(std::move(kh), &ld)) {
    *degenerate = true;
    return 0.0;
  }
  return ld;
}

double score_synflow(const ExecutableNet& net) {
  Graph g = net.graph;  // parameter mutation stays on this copy
  auto theta = g.flat_params();
  for (double& v : theta) v = std::abs(v);
  g.set_flat_params(theta);
  g.set_bn_bypass(true);
  Tensor ones = Tensor::full(net.input_shape, 1.0);
  const Tensor& out = g.forward(ones);
  g.backward(Tensor::full(out.shape, 1.0));
  const auto grads = g.flat_grads();
  double score = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) score += grads[i] * theta[i];
  return score;
}

double score_grad_norm(ExecutableNet& net, const Batch& batch) {
  ce_forward_backward(net.graph, batch);
  double score = 0.0;
  for (const auto& p : net.graph.params()) {
    double sq = 0.0;
    for (double g : p.grad.data) sq += g * g;
    score += std::sqrt(sq);
  }
  return score;
}

double score_snip(ExecutableNet& net, const Batch& batch) {
  ce_forward_backward(net.graph, batch);
  const auto grads = net.graph.flat_grads();
  const auto theta = net.graph.flat_params();
  double score = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) score += std::abs(grads[i] * theta[i]);
  return score;
}

double score_grasp(ExecutableNet& net, const Batch& batch) {
  ce_forward_backward(net.graph, batch);
  const auto g = net.graph.flat_grads();
  const auto theta = net.graph.flat_params();
  const auto hg = hvp(net.graph, batch, g);
  double score = 0.0;
  for (std::size_t i = 0; i < hg.size(); ++i) score -= hg[i] * theta[i];
  return score;
}

double score_fisher(ExecutableNet& net, const Batch& batch) {
  ce_forward_backward(net.graph, batch);
  double score = 0.0;
  for (int nid = 0; nid < net.graph.num_nodes(); ++nid) {
    const auto& node = net.graph.node(nid);
    if (node.tap.rfind("fisher", 0) != 0) continue;
    const Tensor& a = net.graph.value(nid);
    const Tensor& ga = net.graph.node_grad(nid);
    const int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    const double m = static_cast<double>(B * H * W);
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) acc += a.at4(b, c, h, w) * ga.at4(b, c, h, w);
      acc /= m;
      score += acc * acc;
    }
  }
  return score;
}

double score_zen(ExecutableNet& net, std::uint64_t seed, const ZenCfg& cfg) {
  std::vector<int> shape = net.input_shape;
  shape[0] = cfg.batch;
  double mean_delta = 0.0;
  double bn_term = 0.0;
  for (int i = 0; i < cfg.pairs; ++i) {
    Rng rx(hash64(seed, 0x7a656e00ULL + static_cast<std::uint64_t>(i)));
    Tensor x(shape);
    for (double& v : x.data) v = rx.normal();
    Tensor xe = x;
    Rng re(hash64(seed, 0x7a656e80ULL + static_cast<std::uint64_t>(i)));
    for (double& v : xe.data) v += cfg.alpha * re.normal();
    const Tensor y0 = net.graph.forward(x);
    if (i == 0) {
      // re-scale term: per batchnorm, log of the pooled batch deviation
      for (const auto& [nid, var] : net.graph.bn_batch_var()) {
        double mv = 0.0;
        for (double v : var) mv += v;
        mv /= static_cast<double>(var.size());
        bn_term += 0.5 * std::log(mv + 1e-12);
      }
    }
    const Tensor y1 = net.graph.forward(xe);
    double sq = 0.0;
    for (std::size_t j = 0; j < y0.numel(); ++j) {
      const double d = y1.data[j] - y0.data[j];
      sq += d * d;
    }
    mean_delta += std::sqrt(sq) / cfg.alpha;
  }
  mean_delta /= static_cast<double>(cfg.pairs);
  return std::log(mean_delta + 1e-300) + bn_term;
}

}  // namespace

ProxyId proxy_from_name(const std::string& name) {
  if (name == "nwot") return ProxyId::nwot;
  if (name == "synflow") return ProxyId::synflow;
  if (name == "snip") return ProxyId::snip;
  if (name == "grasp") return ProxyId::grasp;
  if (name == "grad_norm") return ProxyId::grad_norm;
  if (name == "fisher") return ProxyId::fisher;
  if (name == "zen_score") return ProxyId::zen_score;
  throw std::invalid_argument("unknown proxy: '" + name + "'");
}

std::string proxy_name(ProxyId p) {
  switch (p) {
    case ProxyId::nwot: return "nwot";
    case ProxyId::synflow: return "synflow";
    case ProxyId::snip: return "snip";
    case ProxyId::grasp: return "grasp";
    case ProxyId::grad_norm: return "grad_norm";
    case ProxyId::fisher: return "fisher";
    case ProxyId::zen_score: return "zen_score";
  }
  return "?";
}

bool proxy_needs_data(ProxyId p) {
  return p != ProxyId::synflow && p != ProxyId::zen_score;
}

bool proxy_needs_labels(ProxyId p) {
  return p == ProxyId::snip || p == ProxyId::grasp || p == ProxyId::grad_norm ||
         p == ProxyId::fisher;
}

ProxyScore compute_proxy(ExecutableNet& net, ProxyId proxy, const Batch* batch,
                         std::uint64_t seed, const ZenCfg& zen) {
  if (proxy_needs_data(proxy))
    require(batch != nullptr, proxy_name(proxy) + " requires a data minibatch");
  if (proxy_needs_labels(proxy))
    require(batch != nullptr && !batch->labels.empty(), proxy_name(proxy) + " requires labels");

  ProxyScore s;
  s.proxy = proxy;
  s.batch_seed = seed;
  switch (proxy) {
    case ProxyId::nwot: s.value = score_nwot(net, *batch, &s.degenerate); break;
    case ProxyId::synflow: s.value = score_synflow(net); break;
    case ProxyId::snip: s.value = score_snip(net, *batch); break;
    case ProxyId::grasp: s.value = score_grasp(net, *batch); break;
    case ProxyId::grad_norm: s.value = score_grad_norm(net, *batch); break;
    case ProxyId::fisher: s.value = score_fisher(net, *batch); break;
    case ProxyId::zen_score: s.value = score_zen(net, seed, zen); break;
  }
  return s;
}

std::vector<ProxyScore> compute_proxy_batched(const std::vector<ExecutableNet*>& nets,
                                              ProxyId proxy, const Batch* batch,
                                              std::uint64_t seed) {
  std::vector<ProxyScore> out;
  out.reserve(nets.size());
  for (ExecutableNet* n : nets) out.push_back(compute_proxy(*n, proxy, batch, seed));
  return out;
}

}  // namespace zcpt
