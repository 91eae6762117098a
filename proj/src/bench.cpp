#include "rlda/bench.hpp"

#include <algorithm>
#include <cstdio>

#include "rlda/errors.hpp"

namespace rlda {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double timed_sweeps(TopicModelState state, const Hyperparams& hyper, SamplerKind kind, std::size_t sweeps) {
  std::vector<double> seconds;
  for (std::size_t i = 0; i < sweeps; ++i) seconds.push_back(gibbs_iteration(state, hyper, {1, kind}).seconds);
  return median(std::move(seconds));
}

}  // namespace

double BenchReport::dense_ratio() const {
  return rows.size() < 2 ? 1.0 : rows.back().dense_seconds / rows.front().dense_seconds;
}

double BenchReport::sparse_ratio() const {
  return rows.size() < 2 ? 1.0 : rows.back().sparse_seconds / rows.front().sparse_seconds;
}

BenchReport run_bench(const WeightedCorpus& corpus, const BenchOptions& options) {
  if (options.ks.empty() || options.timed == 0) throw ValidationError("bench needs at least one k and one timed sweep");
  BenchReport report;
  report.tokens = corpus.token_count();
  for (int k : options.ks) {
    const auto hyper = Hyperparams::symmetric(k, corpus.vocab.size(), options.alpha, options.beta);
    TrainOptions train_opts;
    train_opts.iterations = options.burn_in;
    train_opts.seed = options.seed;
    train_opts.track_perplexity = false;
    auto burned = train(corpus, k, hyper, train_opts).state;

    BenchRow row;
    row.k = k;
    row.sparse_seconds = timed_sweeps(burned, hyper, SamplerKind::kSparse, options.timed);
    row.dense_seconds = timed_sweeps(burned, hyper, SamplerKind::kDense, options.timed);
    const auto stats = gibbs_iteration(burned, hyper, {1, SamplerKind::kSparse});
    row.mean_doc_topics = stats.mean_doc_topics;
    row.mean_word_topics = stats.mean_word_topics;
    report.rows.push_back(row);
  }
  return report;
}

std::string format_bench(const BenchReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "tokens %zu\n%6s %14s %14s %8s %8s\n", report.tokens, "k", "dense_s/iter",
                "sparse_s/iter", "k_d", "k_w");
  out += line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%6d %14.6f %14.6f %8.2f %8.2f\n", r.k, r.dense_seconds, r.sparse_seconds,
                  r.mean_doc_topics, r.mean_word_topics);
    out += line;
  }
  std::snprintf(line, sizeof line, "dense_ratio %.3f\nsparse_ratio %.3f\n", report.dense_ratio(),
                report.sparse_ratio());
  out += line;
  return out;
}

}  // namespace rlda
