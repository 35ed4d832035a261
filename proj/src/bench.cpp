#include "zcpt/bench.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "zcpt/rng.hpp"

namespace zcpt {

using json = nlohmann::ordered_json;

double BenchRow::mean_val_acc() const {
  double acc = 0.0;
  for (const auto& r : results) acc += r.val_acc;
  return acc / static_cast<double>(results.size());
}

const BenchRow& TabularBenchmark::row(const Genotype& g) const {
  auto it = index.find(g);
  if (it == index.end()) throw std::invalid_argument("unknown genotype: '" + g + "'");
  return rows[static_cast<std::size_t>(it->second)];
}

bool TabularBenchmark::complete() const {
  for (const auto& g : enumerate_space(space))
    if (!index.count(g)) return false;
  return true;
}

TabularBenchmark load_benchmark(const std::string& path,
                                std::shared_ptr<const SpaceDesc> space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open benchmark file: " + path);
  TabularBenchmark bench;
  bench.space = space;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("benchmark parse error at line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    BenchRow row;
    try {
      row.genotype = j.at("genotype").get<std::string>();
      for (const auto& r : j.at("results")) {
        BenchRow::SeedResult sr;
        sr.seed = r.at("seed").get<int>();
        sr.val_acc = r.at("val_acc").get<double>();
        sr.test_acc = r.at("test_acc").get<double>();
        if (sr.val_acc < 0.0 || sr.val_acc > 1.0 || sr.test_acc < 0.0 || sr.test_acc > 1.0)
          throw std::runtime_error("accuracy out of [0,1]");
        for (const auto& prev : row.results)
          if (prev.seed == sr.seed) throw std::runtime_error("duplicate (genotype, seed)");
        row.results.push_back(sr);
      }
      if (row.results.empty()) throw std::runtime_error("row has no results");
      if (j.contains("params")) row.params = j.at("params").get<double>();
      if (j.contains("flops")) row.flops = j.at("flops").get<double>();
      if (j.contains("proxy"))
        for (const auto& [k, v] : j.at("proxy").items()) row.proxy[k] = v.get<double>();
    } catch (const std::exception& e) {
      throw std::runtime_error("benchmark error at line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    if (bench.index.count(row.genotype))
      throw std::runtime_error("duplicate genotype at line " + std::to_string(lineno) + ": " +
                               row.genotype);
    const ArchState parsed = parse_genotype(space, row.genotype);
    for (const auto& e : parsed.edges) row.ops.push_back(e.active[0]);
    bench.index[row.genotype] = static_cast<int>(bench.rows.size());
    bench.rows.push_back(std::move(row));
  }
  return bench;
}

void save_benchmark(const TabularBenchmark& bench, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write benchmark file: " + path);
  for (const auto& row : bench.rows) {
    json j;
    j["genotype"] = row.genotype;
    json results = json::array();
    for (const auto& r : row.results)
      results.push_back({{"seed", r.seed}, {"val_acc", r.val_acc}, {"test_acc", r.test_acc}});
    j["results"] = std::move(results);
    if (row.params) j["params"] = *row.params;
    if (row.flops) j["flops"] = *row.flops;
    if (!row.proxy.empty()) {
      json p;
      for (const auto& [k, v] : row.proxy) p[k] = v;
      j["proxy"] = std::move(p);
    }
    out << j.dump() << "\n";
  }
}

QueryStats query(const TabularBenchmark& bench, const Genotype& g) {
  const BenchRow& row = bench.row(g);
  QueryStats st;
  st.mean_acc = row.mean_val_acc();
  for (const auto& r : row.results) st.per_seed.push_back(r.val_acc);
  int better = 0;
  for (const auto& other : bench.rows)
    if (other.mean_val_acc() > st.mean_acc) ++better;
  st.rank = better + 1;
  return st;
}

Dataset synth_dataset(const SynthDatasetCfg& cfg) {
  if (cfg.num_classes < 1 || cfg.samples_per_class < 1)
    throw std::invalid_argument("degenerate dataset configuration");
  const int n = cfg.num_classes * cfg.samples_per_class;
  Dataset d;
  d.num_classes = cfg.num_classes;
  d.images = Tensor({n, cfg.channels, cfg.image_size, cfg.image_size});
  const std::size_t row = static_cast<std::size_t>(cfg.channels) *
                          static_cast<std::size_t>(cfg.image_size) *
                          static_cast<std::size_t>(cfg.image_size);
  // class pattern = sum of smooth spatial Gaussian bumps per channel, so the
  // signal is spatially correlated while the per-sample noise stays white
  std::vector<std::vector<double>> pattern(static_cast<std::size_t>(cfg.num_classes));
  const int S = cfg.image_size;
  for (int c = 0; c < cfg.num_classes; ++c) {
    Rng rng(hash64(cfg.seed, 0x636c6173ULL + static_cast<std::uint64_t>(c)));
    auto& pat = pattern[static_cast<std::size_t>(c)];
    pat.assign(row, 0.0);
    for (int ch = 0; ch < cfg.channels; ++ch)
      for (int bump = 0; bump < 3; ++bump) {
        const double cx = rng.uniform(0.0, static_cast<double>(S));
        const double cy = rng.uniform(0.0, static_cast<double>(S));
        const double sigma = 0.15 * S * (1.0 + rng.uniform(0.0, 1.0));
        const double amp = 2.0 * rng.normal();
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x) {
            const double dx = x - cx, dy = y - cy;
            pat[(static_cast<std::size_t>(ch) * S + y) * S + x] +=
                amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          }
      }
  }
  int idx = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    const int train_n = (cfg.samples_per_class * 2) / 4;
    const int val_n = cfg.samples_per_class / 4;
    for (int s = 0; s < cfg.samples_per_class; ++s, ++idx) {
      Rng rng(hash64(cfg.seed, 0x73616d70ULL + static_cast<std::uint64_t>(idx)));
      double* dst = d.images.data.data() + static_cast<std::size_t>(idx) * row;
      const double* pat = pattern[static_cast<std::size_t>(c)].data();
      for (std::size_t i = 0; i < row; ++i) dst[i] = pat[i] + cfg.noise_level * rng.normal();
      d.labels.push_back(c);
      if (s < train_n)
        d.train_idx.push_back(idx);
      else if (s < train_n + val_n)
        d.val_idx.push_back(idx);
      else
        d.test_idx.push_back(idx);
    }
  }
  if (d.val_idx.empty()) {  // tiny datasets: fall back to a 1:1 split
    d.train_idx.clear();
    d.test_idx.clear();
    for (int i = 0; i < n; ++i) (i % 2 ? d.val_idx : d.train_idx).push_back(i);
  }
  return d;
}

TabularBenchmark generate_mini_benchmark(const std::shared_ptr<const SpaceDesc>& space,
                                         const SynthDatasetCfg& data_cfg,
                                         const TrainCfg& train_cfg,
                                         const InstantiateCfg& inst_cfg,
                                         const std::vector<ProxyId>& proxies,
                                         const BenchProgress& progress) {
  const Dataset data = synth_dataset(data_cfg);
  const auto genotypes = enumerate_space(space);
  TabularBenchmark bench;
  bench.space = space;
  int done = 0;
  for (const auto& g : genotypes) {
    const ArchState arch = parse_genotype(space, g);
    BenchRow row;
    row.genotype = g;
    for (const auto& e : arch.edges) row.ops.push_back(e.active[0]);
    try {
      for (int seed : train_cfg.seeds) {
        ExecutableNet net =
            instantiate(arch, inst_cfg, hash64(static_cast<std::uint64_t>(seed), 0x696e6974ULL));
        sgd_train(net.graph, data, train_cfg.epochs, train_cfg.lr, train_cfg.batch_size,
                  static_cast<std::uint64_t>(seed));
        BenchRow::SeedResult sr;
        sr.seed = seed;
        sr.val_acc = eval_accuracy(net.graph, data, data.val_idx);
        sr.test_acc = data.test_idx.empty() ? sr.val_acc
                                            : eval_accuracy(net.graph, data, data.test_idx);
        row.results.push_back(sr);
      }
      ExecutableNet fresh = instantiate(arch, inst_cfg, hash64(0x70727879ULL, 0));
      row.params = static_cast<double>(fresh.graph.flat_params().size());
      for (ProxyId p : proxies) {
        ProxyScore s;
        for (int attempt = 0; attempt < 3; ++attempt) {
          const Batch b = make_batch(data, train_cfg.batch_size,
                                     hash64(0x70727879ULL, static_cast<std::uint64_t>(attempt)));
          s = compute_proxy(fresh, p, &b, static_cast<std::uint64_t>(attempt));
          if (!s.degenerate) break;
        }
        row.proxy[proxy_name(p)] = s.value;
      }
      bench.index[row.genotype] = static_cast<int>(bench.rows.size());
      bench.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      bench.failures.push_back(g + ": " + e.what());
    }
    ++done;
    if (progress) progress(done, static_cast<int>(genotypes.size()), g);
  }
  return bench;
}

}  // namespace zcpt
