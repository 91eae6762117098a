#pragma once

// Per-iteration timing of the dense and sparse draws across topic counts.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rlda/sampler.hpp"

namespace rlda {

struct BenchOptions {
  std::vector<int> ks{16, 256};
  std::size_t burn_in = 30;  // sparse sweeps before timing
  std::size_t timed = 5;     // timed sweeps per sampler
  double alpha = 0.1;
  double beta = 0.01;
  std::uint64_t seed = 1;
};

struct BenchRow {
  int k = 0;
  double dense_seconds = 0.0;   // median per sweep
  double sparse_seconds = 0.0;  // median per sweep
  double mean_doc_topics = 0.0;
  double mean_word_topics = 0.0;
};

struct BenchReport {
  std::size_t tokens = 0;
  std::vector<BenchRow> rows;

  /// Time at the last k over time at the first k.
  double dense_ratio() const;
  double sparse_ratio() const;
};

/// Both samplers are timed from the same burned-in state for each k.
BenchReport run_bench(const WeightedCorpus& corpus, const BenchOptions& options);

std::string format_bench(const BenchReport& report);

}  // namespace rlda
