// Command-line front end: thin views over the library (scoring, search,
// benchmark generation, correlation analysis, report tables).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "zcpt/bench.hpp"
#include "zcpt/proxies.hpp"
#include "zcpt/rng.hpp"
#include "zcpt/scoring.hpp"
#include "zcpt/search.hpp"

using json = nlohmann::ordered_json;
using namespace zcpt;

namespace {

// Space selector grammar: "nb201", "toy:<layers>[:<ops>]", "darts:<nodes>".
std::shared_ptr<const SpaceDesc> parse_space(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  if (parts.empty()) throw std::invalid_argument("empty space selector");
  if (parts[0] == "nb201" && parts.size() == 1) return SpaceDesc::nb201();
  if (parts[0] == "toy" && (parts.size() == 2 || parts.size() == 3))
    return SpaceDesc::toy_chain(std::stoi(parts[1]),
                                parts.size() == 3 ? std::stoi(parts[2]) : 4);
  if (parts[0] == "darts" && parts.size() == 2)
    return SpaceDesc::darts_like(std::stoi(parts[1]));
  throw std::invalid_argument("bad space selector: '" + s + "' (nb201 | toy:L[:K] | darts:N)");
}

struct CommonOpts {
  std::string space = "nb201";
  std::string proxy = "nwot";
  std::uint64_t seed = 0;
  int batch_size = 32;
  int width = 16;
  int image_size = 16;
  int classes = 4;
  int samples = 256;
  double noise = 1.0;
  int jobs = 1;
};

void add_data_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--classes", o.classes, "synthetic dataset classes");
  cmd->add_option("--samples", o.samples, "samples per class");
  cmd->add_option("--image-size", o.image_size, "square image extent");
  cmd->add_option("--noise", o.noise, "per-pixel noise level");
}

InstantiateCfg inst_cfg(const CommonOpts& o) {
  InstantiateCfg c;
  c.width = o.width;
  c.image_size = o.image_size;
  c.num_classes = o.classes;
  return c;
}

SynthDatasetCfg data_cfg(const CommonOpts& o, std::uint64_t data_seed) {
  SynthDatasetCfg c;
  c.num_classes = o.classes;
  c.samples_per_class = o.samples;
  c.image_size = o.image_size;
  c.noise_level = o.noise;
  c.seed = data_seed;
  return c;
}

int resolve_jobs(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("ZCPT_JOBS")) {
    const int j = std::atoi(env);
    if (j > 0) return j;
  }
  return 1;
}

void print_config(const json& cfg) { std::cout << "config " << cfg.dump() << "\n"; }

int cmd_score(const CommonOpts& o, const std::string& genotype, bool supernet,
              std::uint64_t data_seed) {
  const auto space = parse_space(o.space);
  const ProxyId proxy = proxy_from_name(o.proxy);
  const ArchState arch =
      supernet ? ArchState::supernet(space) : parse_genotype(space, genotype);
  print_config({{"command", "score"},
                {"space", o.space},
                {"genotype", supernet ? "<supernet>" : genotype},
                {"proxy", o.proxy},
                {"seed", o.seed},
                {"data_seed", data_seed},
                {"batch_size", o.batch_size}});

  ExecutableNet net = instantiate(arch, inst_cfg(o), hash64(o.seed, 0x696e6974ULL));
  Batch batch;
  const Batch* bp = nullptr;
  Dataset data;
  if (proxy_needs_data(proxy)) {
    data = synth_dataset(data_cfg(o, data_seed));
    batch = make_batch(data, o.batch_size, o.seed);
    bp = &batch;
  }
  const ProxyScore s = compute_proxy(net, proxy, bp, o.seed);
  json out = {{"proxy", proxy_name(s.proxy)},
              {"value", s.value},
              {"seed", s.batch_seed},
              {"degenerate", s.degenerate}};
  std::cout << out.dump() << "\n";
  return s.degenerate ? 1 : 0;
}

int cmd_search(const CommonOpts& o, const SearchConfig& cfg_in, const std::string& out_path,
               std::uint64_t data_seed) {
  const auto space = parse_space(o.space);
  SearchConfig cfg = cfg_in;
  cfg.seed = o.seed;
  cfg.batch_size = o.batch_size;
  print_config({{"command", "search"},
                {"space", o.space},
                {"proxy", proxy_name(cfg.proxy)},
                {"order", order_name(cfg.order)},
                {"N", cfg.proposal_iterations},
                {"V", cfg.validation_iterations},
                {"seed", cfg.seed},
                {"data_seed", data_seed},
                {"batch_size", cfg.batch_size}});

  ScoringContext ctx;
  ctx.inst = inst_cfg(o);
  ctx.init_seed = hash64(cfg.seed, 0x696e6974ULL);
  ctx.batch_size = cfg.batch_size;
  Dataset data;
  if (proxy_needs_data(cfg.proxy)) {
    data = synth_dataset(data_cfg(o, data_seed));
    ctx.data = &data;
  }
  const SearchResult res = zero_cost_pt(ctx, ArchState::supernet(space), cfg);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write trace: " + out_path);
    out << res.trace.to_json() << "\n";
  }
  std::cout << res.winner << "\n";
  return 0;
}

int cmd_benchgen(const CommonOpts& o, const std::string& out_path, int epochs, double lr,
                 const std::vector<int>& seeds, const std::vector<std::string>& proxies,
                 std::uint64_t data_seed) {
  const auto space = parse_space(o.space);
  print_config({{"command", "benchgen"},
                {"space", o.space},
                {"epochs", epochs},
                {"lr", lr},
                {"train_seeds", seeds},
                {"data_seed", data_seed},
                {"jobs", resolve_jobs(o.jobs)},
                {"out", out_path}});
  TrainCfg tc;
  tc.epochs = epochs;
  tc.lr = lr;
  tc.batch_size = o.batch_size;
  tc.seeds = seeds;
  std::vector<ProxyId> plist;
  for (const auto& p : proxies) plist.push_back(proxy_from_name(p));
  const TabularBenchmark bench = generate_mini_benchmark(
      space, data_cfg(o, data_seed), tc, inst_cfg(o), plist,
      [](int done, int total, const Genotype& g) {
        std::cerr << "[" << done << "/" << total << "] " << g << "\n";
      });
  for (const auto& f : bench.failures) std::cerr << "failed: " << f << "\n";
  save_benchmark(bench, out_path);
  std::cout << out_path << ": " << bench.rows.size() << " rows\n";
  return bench.failures.empty() ? 0 : 1;
}

std::vector<Policy> parse_policies(const std::vector<std::string>& names) {
  std::vector<Policy> out;
  for (const auto& n : names) out.push_back(policy_from_name(n));
  return out;
}

void write_csv(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << body;
}

// Correlations of the bundled raw-score table against its accuracy oracles.
std::vector<CorrRow> fixture_analysis(const FixtureTable& table, const std::string& reference) {
  auto ref = table.find(reference);
  if (ref == table.end())
    throw std::invalid_argument("fixture table has no method '" + reference + "'");
  std::vector<CorrRow> rows;
  for (const auto& [method, scores] : table) {
    if (method == reference) continue;
    double sum = 0.0;
    for (int e = 0; e < 6; ++e) {
      const auto& a = scores[static_cast<std::size_t>(e)];
      const auto& b = ref->second[static_cast<std::size_t>(e)];
      const double rho = spearman({a.begin(), a.end()}, {b.begin(), b.end()});
      rows.push_back({method, reference, 0, e, rho, 0});
      sum += rho;
    }
    rows.push_back({method, reference, 0, -1, sum / 6.0, 0});
  }
  return rows;
}

int cmd_analyze(const CommonOpts& o, const std::string& mode, const std::string& bench_path,
                const std::vector<std::string>& methods, const std::string& trajectory,
                const std::vector<std::uint64_t>& seeds, const std::string& fixture,
                const std::string& out_path, std::uint64_t data_seed) {
  print_config({{"command", "analyze"},
                {"mode", mode},
                {"space", o.space},
                {"bench", bench_path},
                {"methods", methods},
                {"seeds", seeds},
                {"proxy", o.proxy},
                {"data_seed", data_seed},
                {"out", out_path}});
  if (mode == "fixture") {
    const FixtureTable table =
        load_fixture_table(fixture.empty() ? default_fixture_path() : fixture);
    write_csv(out_path, correlation_csv(fixture_analysis(table, "best-acc")));
    return 0;
  }

  const auto space = parse_space(o.space);
  const TabularBenchmark bench = load_benchmark(bench_path, space);
  if (!bench.complete()) {
    std::cerr << "error: benchmark does not cover the full space\n";
    return 2;
  }
  Dataset data = synth_dataset(data_cfg(o, data_seed));
  ScoringContext ctx;
  ctx.inst = inst_cfg(o);
  ctx.data = &data;
  ctx.batch_size = o.batch_size;
  const ArchState supernet = ArchState::supernet(space);
  const ProxyId proxy = proxy_from_name(o.proxy);

  std::vector<CorrRow> rows;
  if (mode == "initial") {
    rows = initial_analysis(ctx, bench, supernet, parse_policies(methods), proxy, seeds);
  } else if (mode == "progressive") {
    if (methods.size() != 1)
      throw std::invalid_argument("progressive mode takes exactly one method");
    rows = progressive_analysis(ctx, bench, supernet, policy_from_name(methods[0]), proxy,
                                policy_from_name(trajectory), seeds);
  } else {
    throw std::invalid_argument("unknown analyze mode: '" + mode + "'");
  }
  write_csv(out_path, correlation_csv(rows));
  return 0;
}

int cmd_report(const CommonOpts& o, const std::string& bench_path,
               const std::vector<std::string>& entries, const std::string& out_path) {
  print_config({{"command", "report"},
                {"space", o.space},
                {"bench", bench_path},
                {"entries", entries},
                {"out", out_path}});
  const auto space = parse_space(o.space);
  const TabularBenchmark bench = load_benchmark(bench_path, space);
  std::ostringstream csv;
  csv << "method,avg_error,rank\n";
  for (const auto& entry : entries) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("report entry must be method=genotype: '" + entry + "'");
    const std::string method = entry.substr(0, eq);
    const QueryStats st = query(bench, entry.substr(eq + 1));
    csv << method << "," << 1.0 - st.mean_acc << "," << st.rank << "\n";
  }
  write_csv(out_path, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perturbation-based zero-cost operation scoring and search"};
  app.require_subcommand(1);

  CommonOpts o;
  std::uint64_t data_seed = 0;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--space", o.space, "nb201 | toy:L[:K] | darts:N");
    cmd->add_option("--proxy", o.proxy, "zero-cost proxy name");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--data-seed", data_seed, "synthetic dataset seed");
    cmd->add_option("--batch-size", o.batch_size, "minibatch size");
    cmd->add_option("--width", o.width, "stem width");
    cmd->add_option("--jobs", o.jobs, "worker count (ZCPT_JOBS fallback)");
    add_data_flags(cmd, o);
  };

  auto* score = app.add_subcommand("score", "proxy-score one genotype or the supernet");
  std::string genotype;
  bool supernet = false;
  score->add_option("--genotype", genotype, "genotype string");
  score->add_flag("--supernet", supernet, "score the undiscretized supernet");
  add_common(score);

  auto* search = app.add_subcommand("search", "run the two-stage search");
  SearchConfig scfg;
  std::string trace_out;
  std::string order = "random";
  search->add_option("-N,--proposals", scfg.proposal_iterations, "proposal iterations");
  search->add_option("-V,--validations", scfg.validation_iterations, "validation iterations");
  search->add_option("--order", order, "edge order strategy");
  search->add_option("--out", trace_out, "trace JSON path");
  add_common(search);

  auto* benchgen = app.add_subcommand("benchgen", "train every genotype of a finite space");
  std::string bench_out = "bench.jsonl";
  int epochs = 20;
  double lr = 0.05;
  std::vector<int> train_seeds = {0, 1, 2};
  std::vector<std::string> bench_proxies;
  benchgen->add_option("--out", bench_out, "output JSONL path");
  benchgen->add_option("--epochs", epochs, "training epochs");
  benchgen->add_option("--lr", lr, "learning rate");
  benchgen->add_option("--train-seeds", train_seeds, "training seeds");
  benchgen->add_option("--proxies", bench_proxies, "proxy columns to precompute");
  add_common(benchgen);

  auto* analyze = app.add_subcommand("analyze", "correlation analysis over a benchmark");
  std::string mode = "initial";
  std::string bench_path;
  std::vector<std::string> methods = {"best-acc", "avg-acc", "disc-zc", "zc-pt"};
  std::string trajectory = "best-acc";
  std::vector<std::uint64_t> analyze_seeds = {0};
  std::string fixture_path;
  std::string analyze_out = "-";
  analyze->add_option("--mode", mode, "initial | progressive | fixture");
  analyze->add_option("--bench", bench_path, "benchmark JSONL path");
  analyze->add_option("--methods", methods, "policies to correlate");
  analyze->add_option("--trajectory", trajectory, "discretization policy (progressive)");
  analyze->add_option("--seeds", analyze_seeds, "analysis seeds");
  analyze->add_option("--fixture", fixture_path, "raw-score table (fixture mode)");
  analyze->add_option("--out", analyze_out, "CSV path ('-' = stdout)");
  add_common(analyze);

  auto* report = app.add_subcommand("report", "selected-genotype error/rank table");
  std::vector<std::string> entries;
  std::string report_bench;
  std::string report_out = "-";
  report->add_option("--bench", report_bench, "benchmark JSONL path");
  report->add_option("--entry", entries, "method=genotype rows");
  report->add_option("--out", report_out, "CSV path ('-' = stdout)");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (score->parsed()) {
      if (!supernet && genotype.empty())
        throw std::invalid_argument("score needs --genotype or --supernet");
      return cmd_score(o, genotype, supernet, data_seed);
    }
    if (search->parsed()) {
      scfg.order = order_from_name(order);
      scfg.proxy = proxy_from_name(o.proxy);
      return cmd_search(o, scfg, trace_out, data_seed);
    }
    if (benchgen->parsed())
      return cmd_benchgen(o, bench_out, epochs, lr, train_seeds, bench_proxies, data_seed);
    if (analyze->parsed())
      return cmd_analyze(o, mode, bench_path, methods, trajectory, analyze_seeds, fixture_path,
                         analyze_out, data_seed);
    if (report->parsed()) return cmd_report(o, report_bench, entries, report_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
