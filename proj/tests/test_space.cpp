#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "zcpt/space.hpp"

using namespace zcpt;
using namespace zcpt::testing;

TEST_CASE("discretize fixes the edge and preserves the input state") {
  const auto space = SpaceDesc::nb201();
  const ArchState a0 = ArchState::supernet(space);
  const ArchState a1 = discretize(a0, 0, OpId::nor_conv_3x3);
  CHECK(a1.t == 1);
  CHECK(a1.edges[0].fixed);
  CHECK(a1.edges[0].active == std::vector<OpId>{OpId::nor_conv_3x3});
  CHECK(static_cast<int>(a1.mixed_edges().size()) == 5);
  // value semantics: source untouched
  CHECK(a0.t == 0);
  CHECK(a0.edges[0].active.size() == 5);

  CHECK_THROWS_AS(discretize(a1, 0, OpId::none), std::invalid_argument);
  CHECK_THROWS_AS(discretize(a0, 99, OpId::none), std::invalid_argument);
}

TEST_CASE("full discretization yields t=6 and a genotype") {
  const auto space = SpaceDesc::nb201();
  ArchState a = ArchState::supernet(space);
  for (int e = 0; e < 6; ++e) a = discretize(a, e, OpId::skip_connect);
  CHECK(a.t == 6);
  CHECK(a.fully_discretized());
  CHECK(encode_genotype(a) ==
        "|skip_connect~0|+|skip_connect~0|skip_connect~1|+|skip_connect~0|skip_connect~1|"
        "skip_connect~2|");
}

TEST_CASE("perturb removes one op and keeps the edge mixed") {
  const auto space = SpaceDesc::nb201();
  const ArchState a0 = ArchState::supernet(space);
  const ArchState a1 = perturb(a0, 2, OpId::skip_connect);
  CHECK_FALSE(a1.edges[2].fixed);
  CHECK(a1.edges[2].active.size() == 4);
  CHECK(std::find(a1.edges[2].active.begin(), a1.edges[2].active.end(), OpId::skip_connect) ==
        a1.edges[2].active.end());
  CHECK(a0.edges[2].active.size() == 5);

  // perturb then discretize with a remaining op is legal
  const ArchState a2 = discretize(a1, 2, OpId::none);
  CHECK(a2.edges[2].fixed);

  // |O| single-op removals produce |O| distinct states
  std::set<std::size_t> hashes;
  for (OpId o : space->ops) hashes.insert(perturb(a0, 0, o).hash());
  CHECK(hashes.size() == 5);

  // removing the last op is forbidden
  ArchState thin = a0;
  thin.edges[0].active = {OpId::none};
  CHECK_THROWS_AS(perturb(thin, 0, OpId::none), std::invalid_argument);
}

TEST_CASE("genotype round-trip over the whole NB201 space") {
  const auto space = SpaceDesc::nb201();
  const auto all = enumerate_space(space);
  CHECK(all.size() == 15625);
  std::set<Genotype> uniq(all.begin(), all.end());
  CHECK(uniq.size() == all.size());
  for (const auto& g : all) CHECK(encode_genotype(parse_genotype(space, g)) == g);
}

TEST_CASE("appendix-style NB201 genotype parses to 6 fixed ops") {
  const auto space = SpaceDesc::nb201();
  const Genotype s =
      "|none~0|+|skip_connect~0|nor_conv_1x1~1|+|nor_conv_3x3~0|avg_pool_3x3~1|none~2|";
  const ArchState a = parse_genotype(space, s);
  CHECK(a.fully_discretized());
  CHECK(a.edges[0].active[0] == OpId::none);
  CHECK(a.edges[5].active[0] == OpId::none);
  CHECK(encode_genotype(a) == s);
}

TEST_CASE("malformed genotypes are rejected") {
  const auto space = SpaceDesc::nb201();
  CHECK_THROWS_AS(parse_genotype(space, "|bogus~0|+|none~0|none~1|+|none~0|none~1|none~2|"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_genotype(space, "|none~0|"), std::invalid_argument);
  CHECK_THROWS_AS(parse_genotype(SpaceDesc::toy_chain(2), "skip"), std::invalid_argument);
  CHECK_THROWS_AS(parse_genotype(SpaceDesc::toy_chain(2), "skip|skip|skip"),
                  std::invalid_argument);
}

TEST_CASE("space cardinalities") {
  CHECK(enumerate_space(SpaceDesc::toy_chain(4, 3)).size() == 81);
  CHECK(enumerate_space(SpaceDesc::toy_chain(1, 1)).size() == 1);
  CHECK(SpaceDesc::toy_chain(8)->num_edges() == 8);
  CHECK(SpaceDesc::darts_like(3)->num_edges() == 6);
}

TEST_CASE("toy-chain op tokens") {
  const auto space = SpaceDesc::toy_chain(4);
  CHECK(space->op_token(OpId::skip_connect) == "skip");
  CHECK(space->op_token(OpId::nor_conv_1x1) == "conv_1x1");
  CHECK(space->op_token(OpId::nor_conv_3x3) == "conv_3x3");
  CHECK(space->op_token(OpId::avg_pool_3x3) == "avg_pooling");
  CHECK(enumerate_space(SpaceDesc::toy_chain(1, 4)).size() == 4);
}

TEST_CASE("instantiate: same state and seed give bit-identical parameters") {
  const auto space = SpaceDesc::nb201();
  InstantiateCfg cfg;
  cfg.width = 4;
  cfg.image_size = 8;
  const ArchState a = ArchState::supernet(space);
  ExecutableNet n1 = instantiate(a, cfg, 9);
  ExecutableNet n2 = instantiate(a, cfg, 9);
  CHECK(n1.graph.flat_params() == n2.graph.flat_params());
  ExecutableNet n3 = instantiate(a, cfg, 10);
  CHECK(n1.graph.flat_params() != n3.graph.flat_params());
}

TEST_CASE("mixed edge output is the mean of its candidate outputs") {
  // toy chain, one edge, candidates {skip, conv_1x1}: compare the supernet's
  // aggregation node against the two single-op variants built with the same
  // seed (parameter names are structural, so shared layers coincide).
  const auto space = SpaceDesc::toy_chain(1, 2);
  InstantiateCfg cfg;
  cfg.width = 4;
  cfg.image_size = 8;
  const std::uint64_t seed = 13;

  const ArchState sup = ArchState::supernet(space);
  ExecutableNet mix = instantiate(sup, cfg, seed);
  ExecutableNet skip = instantiate(discretize(sup, 0, OpId::skip_connect), cfg, seed);
  ExecutableNet conv = instantiate(discretize(sup, 0, OpId::nor_conv_1x1), cfg, seed);

  const Tensor x = random_tensor({2, 3, 8, 8}, 77);
  mix.graph.forward(x);
  skip.graph.forward(x);
  conv.graph.forward(x);

  // skip variant's edge output = post-stem relu; conv variant's = its tapped
  // conv+bn block output; the supernet's = its single 1/2-scale node.
  const Tensor& v_skip = skip.graph.value(skip.graph.nodes_of_kind(NodeKind::Relu)[0]);
  const Tensor v_conv = conv.graph.taps().at("fisher0").value;
  const auto scales = mix.graph.nodes_of_kind(NodeKind::Scale);
  REQUIRE(scales.size() == 1);
  const Tensor& v_mix = mix.graph.value(scales[0]);

  REQUIRE(v_mix.data.size() == v_skip.data.size());
  for (std::size_t i = 0; i < v_mix.data.size(); ++i)
    CHECK(v_mix.data[i] ==
          doctest::Approx(0.5 * (v_skip.data[i] + v_conv.data[i])).epsilon(1e-12));
}

TEST_CASE("toy chain N=1 with only skip leaves the stem untouched") {
  const auto space = SpaceDesc::toy_chain(1, 1);
  InstantiateCfg cfg;
  cfg.width = 4;
  cfg.image_size = 8;
  ArchState a = ArchState::supernet(space);
  a = discretize(a, 0, OpId::skip_connect);
  ExecutableNet net = instantiate(a, cfg, 3);
  // the graph then contains no mixing scale nodes and exactly the stem convs
  CHECK(net.graph.nodes_of_kind(NodeKind::Scale).empty());
  CHECK(net.graph.nodes_of_kind(NodeKind::Conv2d).size() == 1);
}

TEST_CASE("topology_prune keeps exactly two input edges per node") {
  const auto space = SpaceDesc::darts_like(3);
  ArchState a = ArchState::supernet(space);
  for (int e = 0; e < space->num_edges(); ++e) a = discretize(a, e, OpId::nor_conv_1x1);

  // deterministic synthetic scorer: prefers keeping low-numbered edges
  auto score = [&](const ArchState& v) {
    double s = 0.0;
    for (int e = 0; e < space->num_edges(); ++e)
      if (v.edges[static_cast<std::size_t>(e)].enabled) s += 100.0 / (1.0 + e);
    return s;
  };
  const ArchState pruned = topology_prune(a, score, 1);
  for (int node = 1; node <= space->num_inter_nodes; ++node) {
    int incoming = 0;
    for (int e = 0; e < space->num_edges(); ++e)
      if (space->edges[static_cast<std::size_t>(e)].to == node &&
          pruned.edges[static_cast<std::size_t>(e)].enabled)
        ++incoming;
    CHECK(incoming == std::min(node, 2));
  }
  // node 3 has inputs {3,4,5}; dropping edge 3 hurts most, then 4 -> keep 3,4
  CHECK(pruned.edges[3].enabled);
  CHECK(pruned.edges[4].enabled);
  CHECK_FALSE(pruned.edges[5].enabled);

  CHECK_THROWS_AS(topology_prune(ArchState::supernet(SpaceDesc::nb201()), score, 1),
                  std::invalid_argument);
}

TEST_CASE("topology_prune matches the brute-force keep-2 oracle") {
  const auto space = SpaceDesc::darts_like(3);
  ArchState a = ArchState::supernet(space);
  for (int e = 0; e < space->num_edges(); ++e)
    a = discretize(a, e, space->ops[static_cast<std::size_t>(e) % space->ops.size()]);

  // arbitrary but deterministic per-edge utilities
  const double util[6] = {3.0, 1.0, 7.0, 2.0, 9.0, 4.0};
  auto score = [&](const ArchState& v) {
    double s = 0.0;
    for (int e = 0; e < 6; ++e)
      if (v.edges[static_cast<std::size_t>(e)].enabled) s += util[e];
    return s;
  };
  const ArchState pruned = topology_prune(a, score, 123);
  // node 3 (edges 3,4,5): brute force over keep-2 subsets picks {4,5}
  CHECK_FALSE(pruned.edges[3].enabled);
  CHECK(pruned.edges[4].enabled);
  CHECK(pruned.edges[5].enabled);
  // nodes with <= 2 inputs unchanged
  CHECK(pruned.edges[0].enabled);
  CHECK(pruned.edges[1].enabled);
  CHECK(pruned.edges[2].enabled);
}

TEST_CASE("darts-like genotype round-trips through pruned topology") {
  const auto space = SpaceDesc::darts_like(3);
  ArchState a = ArchState::supernet(space);
  for (int e = 0; e < space->num_edges(); ++e) a = discretize(a, e, OpId::nor_conv_3x3);
  a = disable_edge(a, 5);
  const Genotype g = encode_genotype(a);
  const ArchState back = parse_genotype(space, g);
  CHECK_FALSE(back.edges[5].enabled);
  CHECK(encode_genotype(back) == g);
}
