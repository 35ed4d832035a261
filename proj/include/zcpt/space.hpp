#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "zcpt/graph.hpp"

namespace zcpt {

enum class OpId { none, skip_connect, nor_conv_1x1, nor_conv_3x3, avg_pool_3x3 };

enum class SpaceKind { NB201, ToyChain, DartsLike };

// Immutable description of a cell search space: candidate operation set (in
// declared order, which is also the argbest tie-break order) and the cell
// topology as a list of (to, from) node pairs.
struct SpaceDesc {
  SpaceKind kind = SpaceKind::NB201;
  std::vector<OpId> ops;
  struct Edge {
    int to = 0, from = 0;
  };
  std::vector<Edge> edges;
  int num_inter_nodes = 0;  // darts-like only

  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_ops() const { return static_cast<int>(ops.size()); }

  std::string op_token(OpId o) const;
  OpId op_from_token(const std::string& tok) const;

  // 4-node NB201 cell: 6 edges, ops {none, skip_connect, nor_conv_1x1,
  // nor_conv_3x3, avg_pool_3x3}
  static std::shared_ptr<const SpaceDesc> nb201();
  // chain of `layers` mixed edges; candidate ops are the first `num_ops` of
  // {skip, conv_1x1, conv_3x3, avg_pooling}
  static std::shared_ptr<const SpaceDesc> toy_chain(int layers, int num_ops = 4);
  // single cell, `inter_nodes` intermediate nodes, every node connected to
  // the cell input and all previous intermediate nodes
  static std::shared_ptr<const SpaceDesc> darts_like(
      int inter_nodes,
      std::vector<OpId> ops = {OpId::skip_connect, OpId::nor_conv_1x1, OpId::nor_conv_3x3,
                               OpId::avg_pool_3x3});
};

struct EdgeState {
  std::vector<OpId> active;  // remaining candidates; singleton once fixed
  bool fixed = false;
  bool enabled = true;  // darts-like topology pruning can disable an edge
};

// A supernet / partially discretized architecture. Value semantics: the
// mutating operations below return modified copies.
struct ArchState {
  std::shared_ptr<const SpaceDesc> space;
  std::vector<EdgeState> edges;
  int t = 0;  // number of fixed edges

  static ArchState supernet(std::shared_ptr<const SpaceDesc> s);

  bool fully_discretized() const;
  std::vector<int> mixed_edges() const;

  bool operator==(const ArchState& o) const;
  std::size_t hash() const;
};

ArchState discretize(const ArchState& a, int edge, OpId o);
ArchState perturb(const ArchState& a, int edge, OpId o);
ArchState disable_edge(const ArchState& a, int edge);

using Genotype = std::string;

// Canonical string form; requires a fully discretized state.
Genotype encode_genotype(const ArchState& a);
ArchState parse_genotype(std::shared_ptr<const SpaceDesc> space, const Genotype& s);

// Every fully discretized genotype of a finite space, deterministic order.
std::vector<Genotype> enumerate_space(const std::shared_ptr<const SpaceDesc>& space);

struct InstantiateCfg {
  int width = 16;
  int cells_per_stage = 1;
  int input_channels = 3;
  int image_size = 16;
  int num_classes = 4;
};

struct ExecutableNet {
  Graph graph;
  std::vector<int> input_shape;  // (1,C,H,W); batch extent rebinds on forward
  int num_classes = 0;
};

// Materializes an architecture state. Mixed edges compute the arithmetic mean
// of their active candidates; `none` contributes zeros. Deterministic in
// (state, cfg, seed).
ExecutableNet instantiate(const ArchState& a, const InstantiateCfg& cfg, std::uint64_t seed);

// Keep the two most important input edges per intermediate node of a
// fully-discretized darts-like cell. `removal_score` is the (lower-better)
// score of the architecture with one edge disabled; the two edges whose
// removal hurts the score most survive. Nodes are visited in seeded random
// order.
ArchState topology_prune(const ArchState& a,
                         const std::function<double(const ArchState&)>& removal_score,
                         std::uint64_t seed);

}  // namespace zcpt
