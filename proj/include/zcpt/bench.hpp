#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zcpt/proxies.hpp"
#include "zcpt/space.hpp"
#include "zcpt/train.hpp"

namespace zcpt {

struct BenchRow {
  Genotype genotype;
  std::vector<OpId> ops;  // per-edge op, parsed once at load
  struct SeedResult {
    int seed = 0;
    double val_acc = 0.0;
    double test_acc = 0.0;
  };
  std::vector<SeedResult> results;
  std::optional<double> params;
  std::optional<double> flops;
  std::map<std::string, double> proxy;  // end-to-end proxy scores, by name

  double mean_val_acc() const;
};

// Exhaustive genotype -> accuracy table over a finite space; the oracle
// policies are computed against it.
struct TabularBenchmark {
  std::shared_ptr<const SpaceDesc> space;
  std::vector<BenchRow> rows;
  std::map<Genotype, int> index;

  const BenchRow& row(const Genotype& g) const;
  bool has(const Genotype& g) const { return index.count(g) > 0; }
  bool complete() const;  // covers every enumerable genotype
  std::vector<std::string> failures;  // genotypes whose training failed
};

// JSONL, one row per genotype:
// {"genotype": str, "results": [{"seed": int, "val_acc": f, "test_acc": f}],
//  "params": f?, "flops": f?, "proxy": {"nwot": f, ...}?}
TabularBenchmark load_benchmark(const std::string& path,
                                std::shared_ptr<const SpaceDesc> space);
void save_benchmark(const TabularBenchmark& bench, const std::string& path);

struct QueryStats {
  double mean_acc = 0.0;
  std::vector<double> per_seed;
  int rank = 0;  // 1 = best mean val-acc; ties share the better rank
};
QueryStats query(const TabularBenchmark& bench, const Genotype& g);

struct SynthDatasetCfg {
  int num_classes = 4;
  int samples_per_class = 256;
  int image_size = 16;
  int channels = 3;
  double noise_level = 1.0;
  std::uint64_t seed = 0;
};

// Class-conditional Gaussian-blob images: per-class mean pattern plus seeded
// pixel noise. Deterministic in cfg. 3:1 train/val split per class.
Dataset synth_dataset(const SynthDatasetCfg& cfg);

struct TrainCfg {
  int epochs = 20;
  double lr = 0.05;
  int batch_size = 64;
  std::vector<int> seeds = {0, 1, 2};
};

using BenchProgress = std::function<void(int done, int total, const Genotype&)>;

// Trains every genotype of a finite space and records accuracies; optionally
// precomputes end-to-end proxy scores for the best-zc oracle.
TabularBenchmark generate_mini_benchmark(const std::shared_ptr<const SpaceDesc>& space,
                                         const SynthDatasetCfg& data_cfg,
                                         const TrainCfg& train_cfg,
                                         const InstantiateCfg& inst_cfg,
                                         const std::vector<ProxyId>& proxies = {},
                                         const BenchProgress& progress = nullptr);

}  // namespace zcpt
