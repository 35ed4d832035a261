#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zcpt/bench.hpp"
#include "zcpt/proxies.hpp"
#include "zcpt/space.hpp"

namespace zcpt {

enum class Direction { HigherBetter, LowerBetter };

// One row of a per-edge, per-operation score table. Entries follow the
// space's declared op order, which is also the argbest tie-break order.
struct ScoreRow {
  int edge = -1;
  std::vector<std::pair<OpId, double>> scores;
  Direction dir = Direction::HigherBetter;
};

OpId argbest(const ScoreRow& row);
ScoreRow negated(const ScoreRow& row);

// Spearman rank correlation with average-rank tie handling. Throws on length
// mismatch, fewer than two points, or zero rank variance.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// Shared knobs for instantiating and proxy-scoring architecture variants.
struct ScoringContext {
  InstantiateCfg inst;
  const Dataset* data = nullptr;
  int batch_size = 32;
  std::uint64_t init_seed = 0;
  int nwot_retries = 3;
  long long* eval_counter = nullptr;  // counts perturbation evaluations
};

// Perturbation scores S(A-(e,o)) for every active op on edge e; lower is
// better (argmin selects). All variants share the minibatch derived from
// batch_seed; a degenerate nwot kernel retries with a fresh batch.
ScoreRow zc_pt_scores(const ScoringContext& ctx, const ArchState& a, int edge, ProxyId proxy,
                      std::uint64_t batch_seed);

// Discretization scores S(A+(e,o)); higher is better (argmax selects).
ScoreRow disc_zc_scores(const ScoringContext& ctx, const ArchState& a, int edge, ProxyId proxy,
                        std::uint64_t batch_seed);

enum class OracleMode { BestAcc, AvgAcc, BestZc };

// Aggregates the tabular benchmark over all fully discretized genotypes
// consistent with a+(e,o): max/mean of mean-seed val accuracy, or max stored
// proxy score.
ScoreRow oracle_scores(const TabularBenchmark& bench, const ArchState& a, int edge,
                       OracleMode mode, ProxyId proxy = ProxyId::nwot);

enum class Policy { BestAcc, AvgAcc, BestZc, DiscZc, ZcPt };
std::string policy_name(Policy p);
Policy policy_from_name(const std::string& s);

struct CorrRow {
  std::string method_a;
  std::string method_b;
  int iteration = 0;
  int edge = -1;  // -1: edge-averaged value
  double rho = 0.0;
  std::uint64_t seed = 0;
};

std::string correlation_csv(const std::vector<CorrRow>& rows);

// Per-edge Spearman of each policy pair on the undiscretized supernet,
// plus the edge average; lower-better tables are negated before correlating.
std::vector<CorrRow> initial_analysis(const ScoringContext& ctx, const TabularBenchmark& bench,
                                      const ArchState& supernet,
                                      const std::vector<Policy>& policies, ProxyId proxy,
                                      const std::vector<std::uint64_t>& seeds);

// Iterative variant: at iteration i the policy's scores on all remaining
// mixed edges are correlated against best-acc, then edge i is discretized
// with the trajectory policy's choice.
std::vector<CorrRow> progressive_analysis(const ScoringContext& ctx,
                                          const TabularBenchmark& bench,
                                          const ArchState& supernet, Policy under_test,
                                          ProxyId proxy, Policy trajectory,
                                          const std::vector<std::uint64_t>& seeds);

// Score row for an arbitrary policy (dispatches to the functions above).
ScoreRow policy_scores(const ScoringContext& ctx, const TabularBenchmark* bench,
                       const ArchState& a, int edge, Policy policy, ProxyId proxy,
                       std::uint64_t seed);

// The paper-reported raw operation-score table bundled under data/:
// method -> 6 edges x 5 ops (NB201 op order).
using FixtureTable = std::map<std::string, std::array<std::array<double, 5>, 6>>;
FixtureTable load_fixture_table(const std::string& path);
std::string default_fixture_path();

}  // namespace zcpt
