#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zcpt/space.hpp"
#include "zcpt/train.hpp"

namespace zcpt {

enum class ProxyId { nwot, synflow, snip, grasp, grad_norm, fisher, zen_score };

ProxyId proxy_from_name(const std::string& name);
std::string proxy_name(ProxyId p);

// Whether the proxy consumes a data minibatch (synflow and zen_score
// generate their own inputs).
bool proxy_needs_data(ProxyId p);
// Whether the proxy needs labels (cross-entropy based saliencies).
bool proxy_needs_labels(ProxyId p);

struct ProxyScore {
  double value = 0.0;
  ProxyId proxy = ProxyId::nwot;
  std::uint64_t batch_seed = 0;
  bool degenerate = false;  // nwot kernel determinant collapsed
};

struct ZenCfg {
  int pairs = 8;
  double alpha = 0.01;
  int batch = 32;
};

// Training-free score of a net at initialization. `batch` is required for
// data-dependent proxies and ignored by synflow/zen_score. All stored scores
// are higher-is-better.
ProxyScore compute_proxy(ExecutableNet& net, ProxyId proxy, const Batch* batch,
                         std::uint64_t seed, const ZenCfg& zen = {});

// Scores every net with the identical minibatch so perturbation comparisons
// see the same data.
std::vector<ProxyScore> compute_proxy_batched(const std::vector<ExecutableNet*>& nets,
                                              ProxyId proxy, const Batch* batch,
                                              std::uint64_t seed);

}  // namespace zcpt
