#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zcpt/scoring.hpp"
#include "zcpt/space.hpp"

namespace zcpt {

enum class EdgeOrder {
  Fixed,
  Random,
  GlobalOpIter,
  GlobalOpOnce,
  GlobalEdgeIter,
  GlobalEdgeOnce,
};

std::string order_name(EdgeOrder o);
EdgeOrder order_from_name(const std::string& s);

struct SearchConfig {
  int proposal_iterations = 10;    // N
  int validation_iterations = 100; // V
  EdgeOrder order = EdgeOrder::Random;
  ProxyId proxy = ProxyId::nwot;
  std::uint64_t seed = 0;
  int batch_size = 32;
};

// Exact number of perturbation evaluations one proposal iteration performs.
long long perturbation_count(EdgeOrder strategy, int num_ops, int num_edges);

struct TraceStep {
  int edge = -1;
  ScoreRow scores;  // empty for forced single-candidate edges
  OpId chosen = OpId::none;
};

struct ProposalRecord {
  int iteration = 0;
  std::vector<TraceStep> steps;
  Genotype genotype;       // empty when the iteration aborted
  std::string aborted;     // non-empty: abort reason
};

struct ValidationRecord {
  Genotype genotype;
  double score_sum = 0.0;
};

struct SearchTrace {
  SearchConfig config;
  std::shared_ptr<const SpaceDesc> space;  // for op-token serialization
  std::vector<ProposalRecord> proposals;
  std::vector<ValidationRecord> validation;
  Genotype winner;
  long long perturbation_evals = 0;

  std::string to_json() const;  // deterministic, pretty-printed
};

// One proposal pass: |E| perturbation-driven discretization steps in the
// configured edge order, then topology pruning on spaces that require it.
ProposalRecord propose(const ScoringContext& ctx, const ArchState& a0, const SearchConfig& cfg,
                       std::uint64_t iteration_seed, long long* eval_counter);

// Validation stage: sums proxy scores over V shared minibatches per candidate
// and returns the argmax index (ties -> earliest-proposed).
std::vector<ValidationRecord> validate(const ScoringContext& ctx,
                                       const std::shared_ptr<const SpaceDesc>& space,
                                       const std::vector<Genotype>& candidates,
                                       const SearchConfig& cfg);

struct SearchResult {
  Genotype winner;
  SearchTrace trace;
};

// End-to-end search: N independent proposals (iteration i seeded with
// hash64(cfg.seed, i)) followed by the validation stage.
SearchResult zero_cost_pt(const ScoringContext& ctx, const ArchState& a0,
                          const SearchConfig& cfg);

}  // namespace zcpt
