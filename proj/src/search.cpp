#include "zcpt/search.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "zcpt/rng.hpp"

namespace zcpt {

using json = nlohmann::ordered_json;

std::string order_name(EdgeOrder o) {
  switch (o) {
    case EdgeOrder::Fixed: return "fixed";
    case EdgeOrder::Random: return "random";
    case EdgeOrder::GlobalOpIter: return "global-op-iter";
    case EdgeOrder::GlobalOpOnce: return "global-op-once";
    case EdgeOrder::GlobalEdgeIter: return "global-edge-iter";
    case EdgeOrder::GlobalEdgeOnce: return "global-edge-once";
  }
  return "?";
}

EdgeOrder order_from_name(const std::string& s) {
  if (s == "fixed") return EdgeOrder::Fixed;
  if (s == "random") return EdgeOrder::Random;
  if (s == "global-op-iter") return EdgeOrder::GlobalOpIter;
  if (s == "global-op-once") return EdgeOrder::GlobalOpOnce;
  if (s == "global-edge-iter") return EdgeOrder::GlobalEdgeIter;
  if (s == "global-edge-once") return EdgeOrder::GlobalEdgeOnce;
  throw std::invalid_argument("unknown edge order: '" + s + "'");
}

long long perturbation_count(EdgeOrder strategy, int num_ops, int num_edges) {
  if (num_ops < 1 || num_edges < 1)
    throw std::invalid_argument("perturbation_count needs at least one op and one edge");
  const long long O = num_ops, E = num_edges;
  switch (strategy) {
    case EdgeOrder::Fixed:
    case EdgeOrder::Random:
      return O * E;
    case EdgeOrder::GlobalOpIter:
    case EdgeOrder::GlobalEdgeIter:
      return O * E * (E + 1) / 2;
    case EdgeOrder::GlobalOpOnce:
    case EdgeOrder::GlobalEdgeOnce:
      return 2 * O * E - O;
  }
  throw std::invalid_argument("unknown edge order strategy");
}

namespace {

// Best (lowest) entry of a perturbation row: the sweep key for op-ordered
// strategies. Edge-ordered strategies use the row mean instead.
double row_key(const ScoreRow& row, bool by_mean) {
  double best = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& [op, v] : row.scores) {
    best = std::min(best, v);
    sum += v;
  }
  return by_mean ? sum / static_cast<double>(row.scores.size()) : best;
}

}  // namespace

ProposalRecord propose(const ScoringContext& ctx, const ArchState& a0, const SearchConfig& cfg,
                       std::uint64_t iteration_seed, long long* eval_counter) {
  ScoringContext sctx = ctx;
  if (eval_counter) sctx.eval_counter = eval_counter;
  sctx.batch_size = cfg.batch_size;

  ProposalRecord rec;
  ArchState a = a0;
  std::uint64_t call = 0;
  auto next_batch_seed = [&] { return hash64(iteration_seed, 0x6261746368ULL + call++); };

  auto take = [&](int edge, const ScoreRow& row) {
    TraceStep step;
    step.edge = edge;
    step.scores = row;
    step.chosen = argbest(row);
    a = discretize(a, edge, step.chosen);
    rec.steps.push_back(std::move(step));
  };

  // Forced edges carry no information; fix them up front without scoring.
  for (int e : a.mixed_edges())
    if (a.edges[static_cast<std::size_t>(e)].active.size() == 1) {
      TraceStep step;
      step.edge = e;
      step.chosen = a.edges[static_cast<std::size_t>(e)].active[0];
      a = discretize(a, e, step.chosen);
      rec.steps.push_back(std::move(step));
    }

  const bool by_mean =
      cfg.order == EdgeOrder::GlobalEdgeIter || cfg.order == EdgeOrder::GlobalEdgeOnce;

  switch (cfg.order) {
    case EdgeOrder::Fixed:
    case EdgeOrder::Random: {
      std::vector<int> order = a.mixed_edges();
      if (cfg.order == EdgeOrder::Random) {
        Rng rng(hash64(iteration_seed, 0x6f72646572ULL));
        rng.shuffle(order);
      }
      for (int e : order)
        take(e, zc_pt_scores(sctx, a, e, cfg.proxy, next_batch_seed()));
      break;
    }
    case EdgeOrder::GlobalOpIter:
    case EdgeOrder::GlobalEdgeIter: {
      while (!a.mixed_edges().empty()) {
        // Re-sweep every remaining edge, then commit the globally best one
        // using the row already computed for it.
        int best_edge = -1;
        double best_key = std::numeric_limits<double>::infinity();
        ScoreRow best_row;
        for (int e : a.mixed_edges()) {
          ScoreRow row = zc_pt_scores(sctx, a, e, cfg.proxy, next_batch_seed());
          const double key = row_key(row, by_mean);
          if (key < best_key) {
            best_key = key;
            best_edge = e;
            best_row = std::move(row);
          }
        }
        take(best_edge, best_row);
      }
      break;
    }
    case EdgeOrder::GlobalOpOnce:
    case EdgeOrder::GlobalEdgeOnce: {
      // One initial sweep fixes the full edge order and decides the first
      // edge; the rest are re-evaluated when their turn comes.
      std::vector<std::pair<double, int>> keyed;
      std::vector<ScoreRow> sweep_rows;
      const auto mixed = a.mixed_edges();
      for (std::size_t i = 0; i < mixed.size(); ++i) {
        ScoreRow row = zc_pt_scores(sctx, a, mixed[i], cfg.proxy, next_batch_seed());
        keyed.emplace_back(row_key(row, by_mean), mixed[i]);
        sweep_rows.push_back(std::move(row));
      }
      std::vector<std::size_t> order(mixed.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return keyed[x].first < keyed[y].first;
      });
      for (std::size_t k = 0; k < order.size(); ++k) {
        const int e = keyed[order[k]].second;
        if (k == 0)
          take(e, sweep_rows[order[k]]);
        else
          take(e, zc_pt_scores(sctx, a, e, cfg.proxy, next_batch_seed()));
      }
      break;
    }
  }

  if (a.space->kind == SpaceKind::DartsLike) {
    const std::uint64_t prune_seed = hash64(iteration_seed, 0x7072756e65ULL);
    Batch batch;
    const Batch* bp = nullptr;
    if (proxy_needs_data(cfg.proxy)) {
      if (!sctx.data)
        throw std::runtime_error("topology pruning needs a dataset for this proxy");
      batch = make_batch(*sctx.data, sctx.batch_size, prune_seed);
      bp = &batch;
    }
    auto removal_score = [&](const ArchState& v) {
      ExecutableNet net = instantiate(v, sctx.inst, sctx.init_seed);
      return compute_proxy(net, cfg.proxy, bp, prune_seed).value;
    };
    a = topology_prune(a, removal_score, hash64(iteration_seed, 0x6e6f6465ULL));
  }

  rec.genotype = encode_genotype(a);
  return rec;
}

std::vector<ValidationRecord> validate(const ScoringContext& ctx,
                                       const std::shared_ptr<const SpaceDesc>& space,
                                       const std::vector<Genotype>& candidates,
                                       const SearchConfig& cfg) {
  if (candidates.empty()) throw std::invalid_argument("validate: empty candidate list");
  std::vector<ValidationRecord> out;
  for (const auto& g : candidates) out.push_back({g, 0.0});
  if (cfg.validation_iterations == 0) {
    if (candidates.size() != 1)
      throw std::invalid_argument("V=0 requires a single candidate");
    return out;
  }

  // Instantiate each candidate once; minibatch j is shared across candidates.
  std::vector<ExecutableNet> nets;
  nets.reserve(candidates.size());
  for (const auto& g : candidates)
    nets.push_back(instantiate(parse_genotype(space, g), ctx.inst, ctx.init_seed));
  std::vector<ExecutableNet*> ptrs;
  for (auto& n : nets) ptrs.push_back(&n);

  for (int j = 0; j < cfg.validation_iterations; ++j) {
    const std::uint64_t seed = hash64(cfg.seed, 0x76616c00ULL + static_cast<std::uint64_t>(j));
    Batch batch;
    const Batch* bp = nullptr;
    if (proxy_needs_data(cfg.proxy)) {
      if (!ctx.data)
        throw std::runtime_error("validation needs a dataset for this proxy");
      batch = make_batch(*ctx.data, cfg.batch_size, seed);
      bp = &batch;
    }
    const auto scores = compute_proxy_batched(ptrs, cfg.proxy, bp, seed);
    for (std::size_t c = 0; c < out.size(); ++c)
      out[c].score_sum += scores[c].degenerate ? -1e30 : scores[c].value;
  }
  return out;
}

SearchResult zero_cost_pt(const ScoringContext& ctx, const ArchState& a0,
                          const SearchConfig& cfg) {
  if (cfg.proposal_iterations < 1)
    throw std::invalid_argument("search needs at least one proposal iteration");
  SearchResult res;
  res.trace.config = cfg;
  res.trace.space = a0.space;

  std::vector<Genotype> candidates;
  for (int i = 0; i < cfg.proposal_iterations; ++i) {
    const std::uint64_t iter_seed = hash64(cfg.seed, static_cast<std::uint64_t>(i));
    ProposalRecord rec;
    rec.iteration = i;
    try {
      rec = propose(ctx, a0, cfg, iter_seed, &res.trace.perturbation_evals);
      rec.iteration = i;
      candidates.push_back(rec.genotype);
    } catch (const std::exception& e) {
      rec.steps.clear();
      rec.genotype.clear();
      rec.aborted = e.what();
    }
    res.trace.proposals.push_back(std::move(rec));
  }
  if (candidates.empty()) throw std::runtime_error("all proposal iterations aborted");

  if (cfg.validation_iterations == 0 && candidates.size() == 1) {
    res.trace.validation.push_back({candidates[0], 0.0});
    res.winner = candidates[0];
  } else {
    res.trace.validation = validate(ctx, a0.space, candidates, cfg);
    std::size_t best = 0;
    for (std::size_t i = 1; i < res.trace.validation.size(); ++i)
      if (res.trace.validation[i].score_sum > res.trace.validation[best].score_sum) best = i;
    res.winner = res.trace.validation[best].genotype;
  }
  res.trace.winner = res.winner;
  return res;
}

std::string SearchTrace::to_json() const {
  json j;
  j["config"] = {{"N", config.proposal_iterations},
                 {"V", config.validation_iterations},
                 {"order", order_name(config.order)},
                 {"proxy", proxy_name(config.proxy)},
                 {"seed", config.seed},
                 {"batch_size", config.batch_size}};
  json props = json::array();
  for (const auto& p : proposals) {
    json jp;
    jp["iteration"] = p.iteration;
    json steps = json::array();
    for (const auto& s : p.steps) {
      json js;
      js["edge"] = s.edge;
      json scores;
      for (const auto& [op, v] : s.scores.scores) scores[space->op_token(op)] = v;
      js["scores"] = std::move(scores);
      js["chosen"] = space->op_token(s.chosen);
      steps.push_back(std::move(js));
    }
    jp["steps"] = std::move(steps);
    jp["genotype"] = p.genotype;
    if (!p.aborted.empty()) jp["aborted"] = p.aborted;
    props.push_back(std::move(jp));
  }
  j["proposals"] = std::move(props);
  json val = json::array();
  for (const auto& v : validation)
    val.push_back({{"genotype", v.genotype}, {"score_sum", v.score_sum}});
  j["validation"] = std::move(val);
  j["winner"] = winner;
  j["perturbation_evals"] = perturbation_evals;
  return j.dump(2);
}

}  // namespace zcpt
