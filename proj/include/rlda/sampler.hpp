#pragma once

// Collapsed Gibbs sampling over weighted (fixed-point) token observations.
//
// All counts are exact integers in units of 2^-(w_bits+1). The conditional
//
//   p(z = t | rest) ∝ (n_td + alpha_t)(n_tw + beta_w) / (n_t + beta_bar)
//
// is evaluated on decoded counts, with the token's own weight removed. The
// sparse sampler splits the mass into the buckets
//
//   s(t) = alpha_t beta_w / (n_t + beta_bar)          all topics, cached sum
//   r(t) = n_td beta_w / (n_t + beta_bar)             topics of the document
//   q(t) = (n_td + alpha_t) n_tw / (n_t + beta_bar)   topics of the word
//
// so a draw touches O(k_d + k_w) entries except when it lands in s.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rlda/random.hpp"
#include "rlda/transform.hpp"

namespace rlda {

using TopicId = std::uint32_t;
using Units = std::int64_t;

struct Hyperparams {
  Eigen::VectorXd alpha;  // per topic
  Eigen::VectorXd beta;   // per augmented word
  double beta_bar = 0.0;  // sum of beta

  /// alpha_t = alpha (default 50/k), beta_w = beta.
  static Hyperparams symmetric(int k, std::size_t vocab_size, double alpha = -1.0, double beta = 0.01);

  double alpha_sum() const { return alpha.sum(); }
  int topics() const { return static_cast<int>(alpha.size()); }

  /// Appends prior mass for new words, keeping beta_bar in step.
  void append_words(std::size_t n, double beta_value);

  /// Throws ValidationError unless all entries are positive and finite,
  /// sizes match, and beta_bar agrees with sum(beta) within 1e-12 relative.
  void validate(int k, std::size_t vocab_size) const;
};

/// Small unordered (topic, units) list; zero entries are removed.
class SparseCounts {
 public:
  struct Entry {
    TopicId topic;
    Units units;
    bool operator==(const Entry&) const = default;
  };

  Units get(TopicId topic) const;
  /// Adds delta; an entry reaching zero is swap-removed.
  void add(TopicId topic, Units delta);
  void push_back(Entry e) { entries_.push_back(e); }  // no merge; for loading
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Units total() const;
  std::span<const Entry> entries() const { return entries_; }
  std::vector<Entry>& raw() { return entries_; }

  bool operator==(const SparseCounts&) const = default;

 private:
  std::vector<Entry> entries_;
};

struct TopicModelState {
  int k = 0;
  FixedPointConfig cfg;
  AugmentedVocabulary vocab;
  std::vector<WeightedDocument> docs;
  std::vector<std::vector<TopicId>> z;   // parallel to docs[d].tokens
  std::vector<SparseCounts> doc_topic;   // n_td per document
  std::vector<SparseCounts> word_topic;  // n_tw per augmented word
  std::vector<Units> topic_totals;       // n_t
  std::uint64_t iteration = 0;           // sweeps run since (re)training
  std::uint64_t seed = 0;
  std::uint64_t updates = 0;

  std::size_t num_docs() const { return docs.size(); }
  std::size_t vocab_size() const { return vocab.size(); }
  std::size_t token_count() const;
  Units doc_weight(std::size_t d) const;  // sum of token units

  /// Counts recomputed from z (entry order: first occurrence).
  void rebuild_counts();

  /// Throws ConsistencyError if counts disagree with z, are negative, or
  /// topic ids / word ids are out of range.
  void check_consistency() const;

  bool operator==(const TopicModelState& o) const;
};

/// Fresh state over a weighted corpus with the given assignments.
TopicModelState make_state(const WeightedCorpus& corpus, int k, std::vector<std::vector<TopicId>> z,
                           std::uint64_t seed);

/// Dense collapsed conditional for token (doc, pos), excluding its own weight.
Eigen::VectorXd conditional_distribution(const TopicModelState& state, const Hyperparams& hyper,
                                         std::size_t doc, std::size_t pos);

struct BucketMasses {
  double smoothing = 0.0;  // s
  double document = 0.0;   // r
  double word = 0.0;       // q
  double total() const { return smoothing + document + word; }
};

enum class SamplerKind { kSparse, kDense };

/// Incremental three-bucket sampler over borrowed count tables. One
/// document is loaded at a time into a dense scratch row.
class SparseGibbsKernel {
 public:
  SparseGibbsKernel(int k, const Hyperparams& hyper, const FixedPointConfig& cfg,
                    std::vector<SparseCounts>& word_topic, std::vector<Units>& topic_totals);

  void load_document(SparseCounts& doc_counts);
  void store_document();

  void remove(std::uint32_t word, Units units, TopicId topic);
  void add(std::uint32_t word, Units units, TopicId topic);

  /// Bucket masses for `word` against the current counts.
  BucketMasses masses(std::uint32_t word);

  TopicId draw_sparse(std::uint32_t word, Rng& rng);
  TopicId draw_dense(std::uint32_t word, Rng& rng);
  TopicId draw(std::uint32_t word, Rng& rng, SamplerKind kind) {
    return kind == SamplerKind::kSparse ? draw_sparse(word, rng) : draw_dense(word, rng);
  }

  /// Recomputes the smoothing sum exactly.
  void refresh_smoothing();

  /// Throws ConsistencyError if the cached bucket sums drifted more than
  /// 1e-8 relative from a fresh evaluation.
  void check_caches() const;

  /// Entries visited by draws so far (word row + walked buckets).
  std::uint64_t work() const { return work_; }
  std::size_t loaded_topics() const { return doc_nonzero_.size(); }

 private:
  void update_topic(TopicId t, Units doc_delta, Units total_delta);

  int k_;
  const Hyperparams& hyper_;
  double inv_scale_;
  std::vector<SparseCounts>& word_topic_;
  std::vector<Units>& topic_totals_;

  std::vector<double> inv_denom_;  // 1 / (n_t + beta_bar), decoded
  double smoothing_sum_ = 0.0;     // sum_t alpha_t * inv_denom_t
  double document_sum_ = 0.0;      // sum_{t in doc} n_td * inv_denom_t, decoded

  SparseCounts* doc_ = nullptr;
  std::vector<Units> doc_dense_;
  std::vector<TopicId> doc_nonzero_;
  std::vector<std::int32_t> doc_pos_;

  std::vector<double> q_buffer_;
  std::vector<double> dense_buffer_;
  std::vector<Units> dense_counts_;
  std::uint64_t work_ = 0;
};

struct GibbsOptions {
  std::size_t shards = 1;
  SamplerKind kind = SamplerKind::kSparse;
};

struct SweepStats {
  double seconds = 0.0;
  std::uint64_t work = 0;       // bucket entries touched
  std::size_t tokens = 0;
  double mean_doc_topics = 0.0;   // mean k_d after the sweep
  double mean_word_topics = 0.0;  // mean k_w over words with counts
};

/// One sweep over every token. shards == 1 is exact sequential collapsed
/// Gibbs; with more shards documents are split into contiguous blocks that
/// sample against a private copy of the word tables, which are rebuilt from
/// the assignments after all shards finish. Random streams are derived from
/// (state.seed, state.iteration, shard), so the result depends only on the
/// state, seed and shard count.
SweepStats gibbs_iteration(TopicModelState& state, const Hyperparams& hyper, const GibbsOptions& options = {});

/// exp(-(1/W) sum_tokens weight * log sum_t theta_dt phi_tw) with point
/// estimates theta_dt = (n_td + alpha_t)/(n_d + alpha_sum) and
/// phi_tw = (n_tw + beta_w)/(n_t + beta_bar), weights decoded.
double perplexity(const TopicModelState& state, const Hyperparams& hyper);

struct SamplerStats {
  std::size_t iterations = 0;
  std::vector<double> seconds;
  std::vector<double> perplexity;       // after each iteration (if tracked)
  std::vector<std::uint64_t> work;
  std::vector<std::size_t> doc_topics_histogram;   // index = k_d
  std::vector<std::size_t> word_topics_histogram;  // index = k_w
};

struct TrainOptions {
  std::size_t iterations = 200;
  std::uint64_t seed = 1;
  GibbsOptions gibbs;
  bool track_perplexity = true;
};

struct TrainResult {
  TopicModelState state;
  SamplerStats stats;
};

/// Uniform random initial topics from the seed, then `iterations` sweeps.
/// Throws ValidationError for k < 1 or a corpus without tokens.
TrainResult train(const WeightedCorpus& corpus, int k, const Hyperparams& hyper, const TrainOptions& options);

/// Runs more sweeps on an existing state (continuation after load).
SamplerStats continue_training(TopicModelState& state, const Hyperparams& hyper, std::size_t iterations,
                               const GibbsOptions& gibbs = {}, bool track_perplexity = true);

void fill_histograms(const TopicModelState& state, SamplerStats& stats);

struct UpdatePolicy {
  std::size_t full_recompute_every = 5;  // U
  std::size_t incremental_sweeps = 20;
  double old_sample_fraction = 0.1;
  std::size_t full_iterations = 200;
  double beta_default = 0.01;
};

struct UpdateReport {
  bool full_recompute = false;
  std::size_t new_documents = 0;
  std::size_t swept_documents = 0;
};

/// Adds `incoming.docs` to the model. `incoming.vocab` must extend
/// state.vocab (same leading entries); new entries get beta_default prior
/// mass. New tokens are drawn from the current conditionals, then a number
/// of sweeps cover the new documents plus a random fraction of old ones.
/// Every U-th update retrains the union from scratch instead. An update
/// with no documents only advances the counter.
UpdateReport update_model(TopicModelState& state, Hyperparams& hyper, const WeightedCorpus& incoming,
                          const UpdatePolicy& policy = {});

struct CoreSetThresholds {
  double min_mass = 0.02;
  double min_distinctiveness = 0.5;
};

struct TopicScores {
  Eigen::VectorXd mass;             // n_t / sum n_t
  Eigen::VectorXd distinctiveness;  // mean share of phi over the top words
};

TopicScores score_topics(const TopicModelState& state, const Hyperparams& hyper, std::size_t n_top);

struct CoreSetResult {
  std::vector<std::int32_t> topic_map;  // old id -> new id, -1 if dropped
  std::size_t kept = 0;
};

/// Keeps topics passing both thresholds, reassigns the tokens of dropped
/// topics by one sweep restricted to the survivors, and renumbers topics.
/// `hyper.alpha` is restricted to the kept topics. Throws ValidationError
/// if no topic survives.
CoreSetResult core_set_reduce(TopicModelState& state, Hyperparams& hyper, const CoreSetThresholds& thresholds,
                              std::size_t n_top);

/// Point estimates as dense matrices: theta (D x k), phi (k x V).
Eigen::MatrixXd theta_matrix(const TopicModelState& state, const Hyperparams& hyper);
Eigen::MatrixXd phi_matrix(const TopicModelState& state, const Hyperparams& hyper);

}  // namespace rlda
