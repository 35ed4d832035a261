#include "zcpt/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "zcpt/rng.hpp"

namespace zcpt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

ScoreRow score_variants(const ScoringContext& ctx, const ArchState& a, int edge, ProxyId proxy,
                        std::uint64_t batch_seed, bool perturbation) {
  const auto& es = a.edges[static_cast<std::size_t>(edge)];
  require(!es.fixed, "scoring a fixed edge");
  if (perturbation)
    require(es.active.size() >= 2, "zc-pt needs at least two active ops on the edge");

  std::vector<ExecutableNet> nets;
  nets.reserve(es.active.size());
  for (OpId o : es.active) {
    const ArchState variant = perturbation ? perturb(a, edge, o) : discretize(a, edge, o);
    nets.push_back(instantiate(variant, ctx.inst, ctx.init_seed));
  }

  std::vector<ExecutableNet*> ptrs;
  for (auto& n : nets) ptrs.push_back(&n);

  std::vector<ProxyScore> scores;
  std::uint64_t seed = batch_seed;
  for (int attempt = 0;; ++attempt) {
    Batch batch;
    const Batch* bp = nullptr;
    if (proxy_needs_data(proxy)) {
      require(ctx.data != nullptr, "scoring context has no dataset for a data-dependent proxy");
      batch = make_batch(*ctx.data, ctx.batch_size, seed);
      bp = &batch;
    }
    scores = compute_proxy_batched(ptrs, proxy, bp, seed);
    if (perturbation && ctx.eval_counter)
      *ctx.eval_counter += static_cast<long long>(scores.size());
    bool degenerate = false;
    for (const auto& s : scores) degenerate = degenerate || s.degenerate;
    if (!degenerate) break;
    if (attempt + 1 >= ctx.nwot_retries)
      throw std::runtime_error("degenerate proxy batch after " +
                               std::to_string(ctx.nwot_retries) + " retries");
    seed = hash64(batch_seed, static_cast<std::uint64_t>(attempt) + 1);
  }

  ScoreRow row;
  row.edge = edge;
  row.dir = perturbation ? Direction::LowerBetter : Direction::HigherBetter;
  for (std::size_t i = 0; i < es.active.size(); ++i)
    row.scores.emplace_back(es.active[i], scores[i].value);
  return row;
}

}  // namespace

OpId argbest(const ScoreRow& row) {
  require(!row.scores.empty(), "argbest on empty score row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.scores.size(); ++i) {
    const bool better = row.dir == Direction::HigherBetter
                            ? row.scores[i].second > row.scores[best].second
                            : row.scores[i].second < row.scores[best].second;
    if (better) best = i;  // ties keep the earlier (declared-order) op
  }
  return row.scores[best].first;
}

ScoreRow negated(const ScoreRow& row) {
  ScoreRow out = row;
  for (auto& [op, v] : out.scores) v = -v;
  out.dir = row.dir == Direction::HigherBetter ? Direction::LowerBetter : Direction::HigherBetter;
  return out;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size(), "spearman: length mismatch");
  require(xs.size() >= 2, "spearman: need at least two points");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  require(vx > 0.0 && vy > 0.0, "spearman: zero rank variance");
  return cov / std::sqrt(vx * vy);
}

ScoreRow zc_pt_scores(const ScoringContext& ctx, const ArchState& a, int edge, ProxyId proxy,
                      std::uint64_t batch_seed) {
  return score_variants(ctx, a, edge, proxy, batch_seed, true);
}

ScoreRow disc_zc_scores(const ScoringContext& ctx, const ArchState& a, int edge, ProxyId proxy,
                        std::uint64_t batch_seed) {
  return score_variants(ctx, a, edge, proxy, batch_seed, false);
}

ScoreRow oracle_scores(const TabularBenchmark& bench, const ArchState& a, int edge,
                       OracleMode mode, ProxyId proxy) {
  const auto& es = a.edges[static_cast<std::size_t>(edge)];
  require(!es.fixed, "oracle scoring a fixed edge");
  ScoreRow row;
  row.edge = edge;
  row.dir = Direction::HigherBetter;
  const std::string pname = proxy_name(proxy);
  for (OpId o : es.active) {
    double best = -1e300;
    double sum = 0.0;
    int count = 0;
    for (const auto& br : bench.rows) {
      bool match = br.ops[static_cast<std::size_t>(edge)] == o;
      for (std::size_t j = 0; match && j < a.edges.size(); ++j) {
        if (static_cast<int>(j) == edge) continue;
        const auto& ej = a.edges[j];
        match = std::find(ej.active.begin(), ej.active.end(), br.ops[j]) != ej.active.end();
      }
      if (!match) continue;
      ++count;
      if (mode == OracleMode::BestZc) {
        auto it = br.proxy.find(pname);
        require(it != br.proxy.end(), "benchmark has no stored '" + pname + "' proxy column");
        best = std::max(best, it->second);
      } else {
        const double acc = br.mean_val_acc();
        best = std::max(best, acc);
        sum += acc;
      }
    }
    if (count == 0)
      throw std::runtime_error("no benchmark rows match the partial architecture");
    row.scores.emplace_back(o, mode == OracleMode::AvgAcc ? sum / count : best);
  }
  return row;
}

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::BestAcc: return "best-acc";
    case Policy::AvgAcc: return "avg-acc";
    case Policy::BestZc: return "best-zc";
    case Policy::DiscZc: return "disc-zc";
    case Policy::ZcPt: return "zc-pt";
  }
  return "?";
}

Policy policy_from_name(const std::string& s) {
  if (s == "best-acc") return Policy::BestAcc;
  if (s == "avg-acc") return Policy::AvgAcc;
  if (s == "best-zc") return Policy::BestZc;
  if (s == "disc-zc") return Policy::DiscZc;
  if (s == "zc-pt") return Policy::ZcPt;
  throw std::invalid_argument("unknown policy: '" + s + "'");
}

ScoreRow policy_scores(const ScoringContext& ctx, const TabularBenchmark* bench,
                       const ArchState& a, int edge, Policy policy, ProxyId proxy,
                       std::uint64_t seed) {
  switch (policy) {
    case Policy::BestAcc:
      require(bench != nullptr, "best-acc needs a benchmark");
      return oracle_scores(*bench, a, edge, OracleMode::BestAcc);
    case Policy::AvgAcc:
      require(bench != nullptr, "avg-acc needs a benchmark");
      return oracle_scores(*bench, a, edge, OracleMode::AvgAcc);
    case Policy::BestZc:
      require(bench != nullptr, "best-zc needs a benchmark");
      return oracle_scores(*bench, a, edge, OracleMode::BestZc, proxy);
    case Policy::DiscZc:
      return disc_zc_scores(ctx, a, edge, proxy, seed);
    case Policy::ZcPt:
      return zc_pt_scores(ctx, a, edge, proxy, seed);
  }
  throw std::logic_error("unreachable policy");
}

std::string correlation_csv(const std::vector<CorrRow>& rows) {
  std::ostringstream os;
  os << "method_a,method_b,iteration,edge,rho,seed\n";
  for (const auto& r : rows) {
    os << r.method_a << "," << r.method_b << "," << r.iteration << ",";
    if (r.edge < 0)
      os << "avg";
    else
      os << r.edge;
    os << "," << r.rho << "," << r.seed << "\n";
  }
  return os.str();
}

namespace {

std::vector<double> row_values(const ScoreRow& row) {
  std::vector<double> out;
  const double sign = row.dir == Direction::LowerBetter ? -1.0 : 1.0;
  for (const auto& [op, v] : row.scores) out.push_back(sign * v);
  return out;
}

}  // namespace

std::vector<CorrRow> initial_analysis(const ScoringContext& ctx, const TabularBenchmark& bench,
                                      const ArchState& supernet,
                                      const std::vector<Policy>& policies, ProxyId proxy,
                                      const std::vector<std::uint64_t>& seeds) {
  std::vector<CorrRow> out;
  const int E = supernet.space->num_edges();
  for (std::uint64_t seed : seeds) {
    ScoringContext sctx = ctx;
    sctx.init_seed = hash64(seed, 0x696e6974ULL);
    // per policy: one row per edge
    std::vector<std::vector<ScoreRow>> tables;
    for (Policy p : policies) {
      std::vector<ScoreRow> t;
      for (int e = 0; e < E; ++e)
        t.push_back(policy_scores(sctx, &bench, supernet, e, p, proxy, hash64(seed, 0xb0 + e)));
      tables.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < policies.size(); ++i)
      for (std::size_t j = i + 1; j < policies.size(); ++j) {
        double sum = 0.0;
        for (int e = 0; e < E; ++e) {
          const double rho = spearman(row_values(tables[i][static_cast<std::size_t>(e)]),
                                      row_values(tables[j][static_cast<std::size_t>(e)]));
          out.push_back({policy_name(policies[i]), policy_name(policies[j]), 0, e, rho, seed});
          sum += rho;
        }
        out.push_back({policy_name(policies[i]), policy_name(policies[j]), 0, -1,
                       sum / static_cast<double>(E), seed});
      }
  }
  return out;
}

std::vector<CorrRow> progressive_analysis(const ScoringContext& ctx,
                                          const TabularBenchmark& bench,
                                          const ArchState& supernet, Policy under_test,
                                          ProxyId proxy, Policy trajectory,
                                          const std::vector<std::uint64_t>& seeds) {
  std::vector<CorrRow> out;
  for (std::uint64_t seed : seeds) {
    ScoringContext sctx = ctx;
    sctx.init_seed = hash64(seed, 0x696e6974ULL);
    ArchState a = supernet;
    int iteration = 0;
    while (!a.mixed_edges().empty()) {
      const auto mixed = a.mixed_edges();
      double sum = 0.0;
      for (int e : mixed) {
        const ScoreRow test =
            policy_scores(sctx, &bench, a, e, under_test, proxy, hash64(seed, 0xc0 + e));
        const ScoreRow ref = oracle_scores(bench, a, e, OracleMode::BestAcc);
        const double rho = spearman(row_values(test), row_values(ref));
        out.push_back({policy_name(under_test), "best-acc", iteration, e, rho, seed});
        sum += rho;
      }
      out.push_back({policy_name(under_test), "best-acc", iteration, -1,
                     sum / static_cast<double>(mixed.size()), seed});
      // discretize the lowest-index mixed edge with the trajectory's choice
      const int e = mixed.front();
      const ScoreRow traj =
          policy_scores(sctx, &bench, a, e, trajectory, proxy, hash64(seed, 0xd0 + e));
      a = discretize(a, e, argbest(traj));
      ++iteration;
    }
  }
  return out;
}

FixtureTable load_fixture_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture table: " + path);
  FixtureTable out;
  std::string line;
  std::getline(in, line);  // header
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string method, tok;
    std::getline(ss, method, ',');
    std::getline(ss, tok, ',');
    const int edge = std::stoi(tok);
    if (edge < 0 || edge > 5)
      throw std::runtime_error("fixture edge out of range at line " + std::to_string(lineno));
    for (int k = 0; k < 5; ++k) {
      if (!std::getline(ss, tok, ','))
        throw std::runtime_error("fixture row too short at line " + std::to_string(lineno));
      out[method][static_cast<std::size_t>(edge)][static_cast<std::size_t>(k)] = std::stod(tok);
    }
  }
  return out;
}

std::string default_fixture_path() { return std::string(ZCPT_DATA_DIR) + "/nb201_iter0_scores.csv"; }

}  // namespace zcpt
