#include "rlda/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>
#include <thread>

#include "rlda/errors.hpp"

namespace rlda {

namespace {

constexpr std::uint64_t kInitStream = 0x1000000000000001ULL;
constexpr std::uint64_t kUpdateStream = 0x1000000000000002ULL;
constexpr std::uint64_t kCoreSetStream = 0x1000000000000003ULL;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Hyperparams

Hyperparams Hyperparams::symmetric(int k, std::size_t vocab_size, double alpha, double beta) {
  if (k < 1) throw ValidationError("k must be >= 1");
  Hyperparams h;
  h.alpha = Eigen::VectorXd::Constant(k, alpha > 0.0 ? alpha : 50.0 / k);
  h.beta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(vocab_size), beta);
  h.beta_bar = h.beta.sum();
  return h;
}

void Hyperparams::append_words(std::size_t n, double beta_value) {
  if (n == 0) return;
  const auto old = beta.size();
  beta.conservativeResize(old + static_cast<Eigen::Index>(n));
  beta.tail(static_cast<Eigen::Index>(n)).setConstant(beta_value);
  beta_bar += beta_value * static_cast<double>(n);
}

void Hyperparams::validate(int k, std::size_t vocab_size) const {
  if (alpha.size() != k) throw ValidationError("alpha has " + std::to_string(alpha.size()) + " entries, expected k");
  if (beta.size() != static_cast<Eigen::Index>(vocab_size)) {
    throw ValidationError("beta has " + std::to_string(beta.size()) + " entries, expected vocabulary size " +
                          std::to_string(vocab_size));
  }
  auto positive = [](const Eigen::VectorXd& v) { return v.allFinite() && (v.array() > 0.0).all(); };
  if (!positive(alpha) || !positive(beta)) throw ValidationError("alpha and beta must be positive and finite");
  const double sum = beta.sum();
  if (!(std::fabs(beta_bar - sum) <= 1e-12 * std::max(1.0, sum))) {
    throw ValidationError("beta_bar does not match sum(beta)");
  }
}

// ---------------------------------------------------------------------------
// SparseCounts

Units SparseCounts::get(TopicId topic) const {
  for (const auto& e : entries_) {
    if (e.topic == topic) return e.units;
  }
  return 0;
}

void SparseCounts::add(TopicId topic, Units delta) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].topic == topic) {
      entries_[i].units += delta;
      if (entries_[i].units == 0) {
        entries_[i] = entries_.back();
        entries_.pop_back();
      }
      return;
    }
  }
  if (delta != 0) entries_.push_back({topic, delta});
}

Units SparseCounts::total() const {
  Units t = 0;
  for (const auto& e : entries_) t += e.units;
  return t;
}

// ---------------------------------------------------------------------------
// TopicModelState

std::size_t TopicModelState::token_count() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.tokens.size();
  return n;
}

Units TopicModelState::doc_weight(std::size_t d) const {
  Units w = 0;
  for (const auto& t : docs.at(d).tokens) w += t.units;
  return w;
}

void TopicModelState::rebuild_counts() {
  doc_topic.assign(docs.size(), {});
  word_topic.assign(vocab.size(), {});
  topic_totals.assign(static_cast<std::size_t>(k), 0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& toks = docs[d].tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const TopicId t = z[d][i];
      doc_topic[d].add(t, toks[i].units);
      word_topic[toks[i].word].add(t, toks[i].units);
      topic_totals[t] += toks[i].units;
    }
  }
}

void TopicModelState::check_consistency() const {
  auto fail = [](const std::string& msg) { throw ConsistencyError("model state: " + msg); };
  if (k < 1) fail("k < 1");
  if (z.size() != docs.size() || doc_topic.size() != docs.size()) fail("document table sizes differ");
  if (word_topic.size() != vocab.size()) fail("word table size differs from vocabulary");
  if (topic_totals.size() != static_cast<std::size_t>(k)) fail("topic totals size differs from k");

  std::vector<SparseCounts> wt(vocab.size());
  std::vector<Units> tt(static_cast<std::size_t>(k), 0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& toks = docs[d].tokens;
    if (z[d].size() != toks.size()) fail("assignment count differs in document " + std::to_string(d));
    SparseCounts dt;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i].word >= vocab.size()) fail("word id out of range");
      if (toks[i].units <= 0) fail("non-positive token weight");
      const TopicId t = z[d][i];
      if (t >= static_cast<TopicId>(k)) fail("topic id out of range");
      dt.add(t, toks[i].units);
      wt[toks[i].word].add(t, toks[i].units);
      tt[t] += toks[i].units;
    }
    if (dt.size() != doc_topic[d].size()) fail("document-topic counts differ in document " + std::to_string(d));
    for (const auto& e : doc_topic[d].entries()) {
      if (e.units <= 0) fail("non-positive document-topic count");
      if (dt.get(e.topic) != e.units) fail("document-topic counts differ in document " + std::to_string(d));
    }
  }
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    if (wt[w].size() != word_topic[w].size()) fail("word-topic counts differ for word " + std::to_string(w));
    for (const auto& e : word_topic[w].entries()) {
      if (e.units <= 0) fail("non-positive word-topic count");
      if (wt[w].get(e.topic) != e.units) fail("word-topic counts differ for word " + std::to_string(w));
    }
  }
  if (tt != topic_totals) fail("topic totals differ");
}

bool TopicModelState::operator==(const TopicModelState& o) const {
  return k == o.k && cfg.w_bits == o.cfg.w_bits && vocab == o.vocab && docs == o.docs && z == o.z &&
         doc_topic == o.doc_topic && word_topic == o.word_topic && topic_totals == o.topic_totals &&
         iteration == o.iteration && seed == o.seed && updates == o.updates;
}

TopicModelState make_state(const WeightedCorpus& corpus, int k, std::vector<std::vector<TopicId>> z,
                           std::uint64_t seed) {
  if (k < 1) throw ValidationError("k must be >= 1");
  corpus.cfg.validate();
  if (z.size() != corpus.docs.size()) throw ValidationError("assignments do not cover the corpus");
  TopicModelState s;
  s.k = k;
  s.cfg = corpus.cfg;
  s.vocab = corpus.vocab;
  s.docs = corpus.docs;
  s.seed = seed;
  for (std::size_t d = 0; d < z.size(); ++d) {
    if (z[d].size() != s.docs[d].tokens.size()) throw ValidationError("assignments do not cover the corpus");
    for (TopicId t : z[d]) {
      if (t >= static_cast<TopicId>(k)) throw ValidationError("topic id out of range");
    }
    for (const auto& tok : s.docs[d].tokens) {
      if (tok.word >= s.vocab.size()) throw ValidationError("token word id outside vocabulary");
      if (tok.units <= 0) throw ValidationError("token weight must be positive");
    }
  }
  s.z = std::move(z);
  s.rebuild_counts();
  return s;
}

Eigen::VectorXd conditional_distribution(const TopicModelState& state, const Hyperparams& hyper,
                                         std::size_t doc, std::size_t pos) {
  const auto& tok = state.docs.at(doc).tokens.at(pos);
  const TopicId own = state.z.at(doc).at(pos);
  const double is = 1.0 / static_cast<double>(state.cfg.scale());
  Eigen::VectorXd p(state.k);
  for (int t = 0; t < state.k; ++t) {
    const TopicId tt = static_cast<TopicId>(t);
    const Units self = tt == own ? tok.units : 0;
    const double ntd = static_cast<double>(state.doc_topic[doc].get(tt) - self) * is;
    const double ntw = static_cast<double>(state.word_topic[tok.word].get(tt) - self) * is;
    const double nt = static_cast<double>(state.topic_totals[tt] - self) * is;
    p(t) = (ntd + hyper.alpha(t)) * (ntw + hyper.beta(tok.word)) / (nt + hyper.beta_bar);
  }
  return p / p.sum();
}

// ---------------------------------------------------------------------------
// SparseGibbsKernel

SparseGibbsKernel::SparseGibbsKernel(int k, const Hyperparams& hyper, const FixedPointConfig& cfg,
                                     std::vector<SparseCounts>& word_topic, std::vector<Units>& topic_totals)
    : k_(k),
      hyper_(hyper),
      inv_scale_(1.0 / static_cast<double>(cfg.scale())),
      word_topic_(word_topic),
      topic_totals_(topic_totals),
      inv_denom_(static_cast<std::size_t>(k)),
      doc_dense_(static_cast<std::size_t>(k), 0),
      doc_pos_(static_cast<std::size_t>(k), -1),
      dense_buffer_(static_cast<std::size_t>(k), 0.0),
      dense_counts_(static_cast<std::size_t>(k), 0) {
  refresh_smoothing();
}

void SparseGibbsKernel::refresh_smoothing() {
  smoothing_sum_ = 0.0;
  for (int t = 0; t < k_; ++t) {
    inv_denom_[t] = 1.0 / (static_cast<double>(topic_totals_[t]) * inv_scale_ + hyper_.beta_bar);
    smoothing_sum_ += hyper_.alpha(t) * inv_denom_[t];
  }
  document_sum_ = 0.0;
  for (TopicId t : doc_nonzero_) document_sum_ += static_cast<double>(doc_dense_[t]) * inv_scale_ * inv_denom_[t];
}

void SparseGibbsKernel::load_document(SparseCounts& doc_counts) {
  doc_ = &doc_counts;
  document_sum_ = 0.0;
  for (const auto& e : doc_counts.entries()) {
    doc_dense_[e.topic] = e.units;
    doc_pos_[e.topic] = static_cast<std::int32_t>(doc_nonzero_.size());
    doc_nonzero_.push_back(e.topic);
    document_sum_ += static_cast<double>(e.units) * inv_scale_ * inv_denom_[e.topic];
  }
}

void SparseGibbsKernel::store_document() {
  if (!doc_) return;
  auto& raw = doc_->raw();
  raw.clear();
  for (TopicId t : doc_nonzero_) {
    raw.push_back({t, doc_dense_[t]});
    doc_dense_[t] = 0;
    doc_pos_[t] = -1;
  }
  doc_nonzero_.clear();
  doc_ = nullptr;
  document_sum_ = 0.0;
}

void SparseGibbsKernel::update_topic(TopicId t, Units doc_delta, Units total_delta) {
  const double alpha = hyper_.alpha(t);
  smoothing_sum_ -= alpha * inv_denom_[t];
  document_sum_ -= static_cast<double>(doc_dense_[t]) * inv_scale_ * inv_denom_[t];

  Units& nd = doc_dense_[t];
  const bool was_present = nd != 0;
  nd += doc_delta;
  if (!was_present && nd != 0) {
    doc_pos_[t] = static_cast<std::int32_t>(doc_nonzero_.size());
    doc_nonzero_.push_back(t);
  } else if (was_present && nd == 0) {
    const auto at = static_cast<std::size_t>(doc_pos_[t]);
    const TopicId last = doc_nonzero_.back();
    doc_nonzero_[at] = last;
    doc_pos_[last] = static_cast<std::int32_t>(at);
    doc_nonzero_.pop_back();
    doc_pos_[t] = -1;
  }
  topic_totals_[t] += total_delta;
  inv_denom_[t] = 1.0 / (static_cast<double>(topic_totals_[t]) * inv_scale_ + hyper_.beta_bar);

  smoothing_sum_ += alpha * inv_denom_[t];
  document_sum_ += static_cast<double>(nd) * inv_scale_ * inv_denom_[t];
}

void SparseGibbsKernel::remove(std::uint32_t word, Units units, TopicId topic) {
  word_topic_[word].add(topic, -units);
  update_topic(topic, -units, -units);
}

void SparseGibbsKernel::add(std::uint32_t word, Units units, TopicId topic) {
  word_topic_[word].add(topic, units);
  update_topic(topic, units, units);
}

BucketMasses SparseGibbsKernel::masses(std::uint32_t word) {
  const auto row = word_topic_[word].entries();
  q_buffer_.resize(row.size());
  double q = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const TopicId t = row[i].topic;
    const double v = (static_cast<double>(doc_dense_[t]) * inv_scale_ + hyper_.alpha(t)) * inv_denom_[t] *
                     (static_cast<double>(row[i].units) * inv_scale_);
    q_buffer_[i] = v;
    q += v;
  }
  const double beta_w = hyper_.beta(word);
  return {beta_w * smoothing_sum_, beta_w * document_sum_, q};
}

TopicId SparseGibbsKernel::draw_sparse(std::uint32_t word, Rng& rng) {
  const BucketMasses m = masses(word);
  const auto row = word_topic_[word].entries();
  work_ += row.size();
  double u = rng.uniform() * m.total();

  if (u < m.word) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      u -= q_buffer_[i];
      if (u < 0.0) return row[i].topic;
    }
    return row.back().topic;
  }
  u -= m.word;

  const double beta_w = hyper_.beta(word);
  if (u < m.document && !doc_nonzero_.empty()) {
    for (std::size_t i = 0; i < doc_nonzero_.size(); ++i) {
      ++work_;
      const TopicId t = doc_nonzero_[i];
      u -= static_cast<double>(doc_dense_[t]) * inv_scale_ * inv_denom_[t] * beta_w;
      if (u < 0.0) return t;
    }
    return doc_nonzero_.back();
  }
  u -= m.document;

  for (int t = 0; t < k_; ++t) {
    ++work_;
    u -= hyper_.alpha(t) * inv_denom_[t] * beta_w;
    if (u < 0.0) return static_cast<TopicId>(t);
  }
  return static_cast<TopicId>(k_ - 1);
}

TopicId SparseGibbsKernel::draw_dense(std::uint32_t word, Rng& rng) {
  const auto row = word_topic_[word].entries();
  auto& nw = dense_counts_;
  for (const auto& e : row) nw[e.topic] = e.units;
  const double beta_w = hyper_.beta(word);
  double total = 0.0;
  for (int t = 0; t < k_; ++t) {
    total += (static_cast<double>(doc_dense_[t]) * inv_scale_ + hyper_.alpha(t)) *
             (static_cast<double>(nw[t]) * inv_scale_ + beta_w) /
             (static_cast<double>(topic_totals_[t]) * inv_scale_ + hyper_.beta_bar);
    dense_buffer_[t] = total;
  }
  for (const auto& e : row) nw[e.topic] = 0;
  work_ += static_cast<std::uint64_t>(k_);
  const double u = rng.uniform() * total;
  int t = 0;
  while (t < k_ - 1 && dense_buffer_[t] <= u) ++t;
  return static_cast<TopicId>(t);
}

void SparseGibbsKernel::check_caches() const {
  double smoothing = 0.0;
  for (int t = 0; t < k_; ++t) {
    smoothing += hyper_.alpha(t) / (static_cast<double>(topic_totals_[t]) * inv_scale_ + hyper_.beta_bar);
  }
  double document = 0.0;
  for (TopicId t : doc_nonzero_) {
    document += static_cast<double>(doc_dense_[t]) * inv_scale_ /
                (static_cast<double>(topic_totals_[t]) * inv_scale_ + hyper_.beta_bar);
  }
  auto drifted = [](double cached, double fresh) {
    return std::fabs(cached - fresh) > 1e-8 * std::max(std::fabs(fresh), 1e-300);
  };
  if (drifted(smoothing_sum_, smoothing) || (doc_ && drifted(document_sum_, document))) {
    throw ConsistencyError("sparse sampler bucket cache drifted from the count tables");
  }
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

void sweep_document(TopicModelState& state, std::size_t d, SparseGibbsKernel& kernel, Rng& rng,
                    SamplerKind kind) {
  auto& toks = state.docs[d].tokens;
  auto& zd = state.z[d];
  kernel.load_document(state.doc_topic[d]);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& tok = toks[i];
    kernel.remove(tok.word, tok.units, zd[i]);
    const TopicId t = kernel.draw(tok.word, rng, kind);
    kernel.add(tok.word, tok.units, t);
    zd[i] = t;
  }
  kernel.store_document();
}

// Contiguous document blocks with roughly equal token counts.
std::vector<std::size_t> shard_bounds(const TopicModelState& state, std::size_t shards) {
  const std::size_t total = state.token_count();
  std::vector<std::size_t> bounds{0};
  std::size_t acc = 0;
  for (std::size_t d = 0; d < state.docs.size() && bounds.size() < shards; ++d) {
    acc += state.docs[d].tokens.size();
    if (acc * shards >= total * bounds.size()) bounds.push_back(d + 1);
  }
  while (bounds.size() <= shards) bounds.push_back(state.docs.size());
  bounds.back() = state.docs.size();
  return bounds;
}

void collect_sparsity(const TopicModelState& state, SweepStats& out) {
  std::size_t kd = 0, kw = 0, words = 0;
  for (const auto& dt : state.doc_topic) kd += dt.size();
  for (const auto& wt : state.word_topic) {
    if (!wt.empty()) {
      kw += wt.size();
      ++words;
    }
  }
  out.mean_doc_topics = state.docs.empty() ? 0.0 : static_cast<double>(kd) / static_cast<double>(state.docs.size());
  out.mean_word_topics = words == 0 ? 0.0 : static_cast<double>(kw) / static_cast<double>(words);
}

}  // namespace

SweepStats gibbs_iteration(TopicModelState& state, const Hyperparams& hyper, const GibbsOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SweepStats stats;
  stats.tokens = state.token_count();
  const std::size_t shards = std::max<std::size_t>(1, std::min(options.shards, state.docs.size()));

  if (shards == 1) {
    SparseGibbsKernel kernel(state.k, hyper, state.cfg, state.word_topic, state.topic_totals);
    Rng rng(stream_seed(state.seed, {state.iteration, 0}));
    for (std::size_t d = 0; d < state.docs.size(); ++d) sweep_document(state, d, kernel, rng, options.kind);
    kernel.check_caches();
    stats.work = kernel.work();
  } else {
    const auto bounds = shard_bounds(state, shards);
    std::vector<std::exception_ptr> errors(shards);
    std::vector<std::uint64_t> work(shards, 0);
    std::vector<std::thread> workers;
    workers.reserve(shards);
    for (std::size_t s = 0; s < shards; ++s) {
      workers.emplace_back([&, s] {
        try {
          std::vector<SparseCounts> word_topic = state.word_topic;
          std::vector<Units> topic_totals = state.topic_totals;
          SparseGibbsKernel kernel(state.k, hyper, state.cfg, word_topic, topic_totals);
          Rng rng(stream_seed(state.seed, {state.iteration, s}));
          for (std::size_t d = bounds[s]; d < bounds[s + 1]; ++d) sweep_document(state, d, kernel, rng, options.kind);
          kernel.check_caches();
          work[s] = kernel.work();
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    // Merge: each shard only moved its own tokens, so recounting from the
    // assignments equals applying every shard's delta.
    state.word_topic.assign(state.vocab.size(), {});
    state.topic_totals.assign(static_cast<std::size_t>(state.k), 0);
    for (std::size_t d = 0; d < state.docs.size(); ++d) {
      const auto& toks = state.docs[d].tokens;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        state.word_topic[toks[i].word].add(state.z[d][i], toks[i].units);
        state.topic_totals[state.z[d][i]] += toks[i].units;
      }
    }
    stats.work = std::accumulate(work.begin(), work.end(), std::uint64_t{0});
  }
  ++state.iteration;
  collect_sparsity(state, stats);
  stats.seconds = seconds_since(start);
  return stats;
}

double perplexity(const TopicModelState& state, const Hyperparams& hyper) {
  const double is = 1.0 / static_cast<double>(state.cfg.scale());
  const double alpha_sum = hyper.alpha_sum();
  std::vector<double> inv_denom(static_cast<std::size_t>(state.k));
  for (int t = 0; t < state.k; ++t) {
    inv_denom[t] = 1.0 / (static_cast<double>(state.topic_totals[t]) * is + hyper.beta_bar);
  }
  std::vector<double> theta(static_cast<std::size_t>(state.k));
  std::vector<double> nw(static_cast<std::size_t>(state.k), 0.0);
  double log_sum = 0.0;
  double weight = 0.0;
  for (std::size_t d = 0; d < state.docs.size(); ++d) {
    const double nd = static_cast<double>(state.doc_weight(d)) * is;
    for (int t = 0; t < state.k; ++t) theta[t] = hyper.alpha(t) / (nd + alpha_sum);
    for (const auto& e : state.doc_topic[d].entries()) {
      theta[e.topic] = (static_cast<double>(e.units) * is + hyper.alpha(e.topic)) / (nd + alpha_sum);
    }
    for (const auto& tok : state.docs[d].tokens) {
      const auto row = state.word_topic[tok.word].entries();
      for (const auto& e : row) nw[e.topic] = static_cast<double>(e.units) * is;
      const double beta_w = hyper.beta(tok.word);
      double p = 0.0;
      for (int t = 0; t < state.k; ++t) p += theta[t] * (nw[t] + beta_w) * inv_denom[t];
      for (const auto& e : row) nw[e.topic] = 0.0;
      const double w = static_cast<double>(tok.units) * is;
      log_sum += w * std::log(p);
      weight += w;
    }
  }
  if (weight == 0.0) return 1.0;
  return std::exp(-log_sum / weight);
}

// ---------------------------------------------------------------------------
// Training

void fill_histograms(const TopicModelState& state, SamplerStats& stats) {
  stats.doc_topics_histogram.assign(static_cast<std::size_t>(state.k) + 1, 0);
  stats.word_topics_histogram.assign(static_cast<std::size_t>(state.k) + 1, 0);
  for (const auto& dt : state.doc_topic) ++stats.doc_topics_histogram[dt.size()];
  for (const auto& wt : state.word_topic) ++stats.word_topics_histogram[wt.size()];
}

SamplerStats continue_training(TopicModelState& state, const Hyperparams& hyper, std::size_t iterations,
                               const GibbsOptions& gibbs, bool track_perplexity) {
  hyper.validate(state.k, state.vocab_size());
  SamplerStats stats;
  for (std::size_t it = 0; it < iterations; ++it) {
    const auto sweep = gibbs_iteration(state, hyper, gibbs);
    stats.seconds.push_back(sweep.seconds);
    stats.work.push_back(sweep.work);
    if (track_perplexity) stats.perplexity.push_back(perplexity(state, hyper));
    ++stats.iterations;
  }
  fill_histograms(state, stats);
  return stats;
}

TrainResult train(const WeightedCorpus& corpus, int k, const Hyperparams& hyper, const TrainOptions& options) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (corpus.token_count() == 0) throw ValidationError("cannot train on an empty corpus");
  hyper.validate(k, corpus.vocab.size());
  Rng rng(stream_seed(options.seed, {kInitStream}));
  std::vector<std::vector<TopicId>> z(corpus.docs.size());
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    z[d].resize(corpus.docs[d].tokens.size());
    for (auto& t : z[d]) t = static_cast<TopicId>(rng.below(static_cast<std::uint64_t>(k)));
  }
  TrainResult result{make_state(corpus, k, std::move(z), options.seed), {}};
  result.stats = continue_training(result.state, hyper, options.iterations, options.gibbs, options.track_perplexity);
  return result;
}

// ---------------------------------------------------------------------------
// Updates

UpdateReport update_model(TopicModelState& state, Hyperparams& hyper, const WeightedCorpus& incoming,
                          const UpdatePolicy& policy) {
  if (incoming.cfg.w_bits != state.cfg.w_bits) throw ValidationError("update uses a different w_bits");
  const auto& old_vocab = state.vocab;
  const auto& new_vocab = incoming.vocab;
  if (new_vocab.size() < old_vocab.size() || new_vocab.base_size() < old_vocab.base_size() ||
      !std::equal(old_vocab.entries().begin(), old_vocab.entries().end(), new_vocab.entries().begin()) ||
      !std::equal(old_vocab.base_words().begin(), old_vocab.base_words().end(), new_vocab.base_words().begin())) {
    throw ValidationError("update vocabulary does not extend the model vocabulary");
  }
  for (const auto& doc : incoming.docs) {
    for (const auto& tok : doc.tokens) {
      if (tok.word >= new_vocab.size() || tok.units <= 0) throw ValidationError("malformed incoming token");
    }
  }
  hyper.validate(state.k, state.vocab_size());

  const std::size_t added_words = new_vocab.size() - old_vocab.size();
  state.vocab = new_vocab;
  state.word_topic.resize(state.vocab.size());
  hyper.append_words(added_words, policy.beta_default);
  ++state.updates;

  UpdateReport report;
  report.new_documents = incoming.docs.size();
  if (incoming.docs.empty()) return report;

  if (policy.full_recompute_every > 0 && state.updates % policy.full_recompute_every == 0) {
    WeightedCorpus all;
    all.cfg = state.cfg;
    all.vocab = state.vocab;
    all.docs = state.docs;
    all.docs.insert(all.docs.end(), incoming.docs.begin(), incoming.docs.end());
    TrainOptions opts;
    opts.iterations = policy.full_iterations;
    opts.seed = state.seed;
    opts.track_perplexity = false;
    const auto updates = state.updates;
    state = train(all, state.k, hyper, opts).state;
    state.updates = updates;
    report.full_recompute = true;
    report.swept_documents = state.docs.size();
    return report;
  }

  Rng rng(stream_seed(state.seed, {kUpdateStream, state.updates}));
  SparseGibbsKernel kernel(state.k, hyper, state.cfg, state.word_topic, state.topic_totals);
  const std::size_t first_new = state.docs.size();
  for (const auto& doc : incoming.docs) {
    state.docs.push_back(doc);
    state.doc_topic.emplace_back();
    auto& zd = state.z.emplace_back();
    zd.reserve(doc.tokens.size());
    kernel.load_document(state.doc_topic.back());
    for (const auto& tok : doc.tokens) {
      const TopicId t = kernel.draw_sparse(tok.word, rng);
      kernel.add(tok.word, tok.units, t);
      zd.push_back(t);
    }
    kernel.store_document();
  }

  std::vector<std::size_t> sweep_docs;
  for (std::size_t d = 0; d < first_new; ++d) {
    if (rng.uniform() < policy.old_sample_fraction) sweep_docs.push_back(d);
  }
  for (std::size_t d = first_new; d < state.docs.size(); ++d) sweep_docs.push_back(d);
  for (std::size_t s = 0; s < policy.incremental_sweeps; ++s) {
    for (std::size_t d : sweep_docs) sweep_document(state, d, kernel, rng, SamplerKind::kSparse);
    kernel.refresh_smoothing();
  }
  kernel.check_caches();
  report.swept_documents = sweep_docs.size();
  return report;
}

// ---------------------------------------------------------------------------
// Core set

TopicScores score_topics(const TopicModelState& state, const Hyperparams& hyper, std::size_t n_top) {
  const int k = state.k;
  const double is = 1.0 / static_cast<double>(state.cfg.scale());
  TopicScores scores;
  Eigen::VectorXd totals(k);
  for (int t = 0; t < k; ++t) totals(t) = static_cast<double>(state.topic_totals[t]);
  const double all = totals.sum();
  scores.mass = all > 0.0 ? Eigen::VectorXd(totals / all) : Eigen::VectorXd::Zero(k);

  const Eigen::ArrayXd inv_denom = 1.0 / (totals.array() * is + hyper.beta_bar);
  const double inv_denom_sum = inv_denom.sum();
  const std::size_t V = state.vocab_size();

  // Column sums of phi: beta_w * sum_t inv_denom_t + counted part.
  std::vector<double> phi_col(V);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_topic(static_cast<std::size_t>(k));
  for (std::size_t w = 0; w < V; ++w) {
    double col = hyper.beta(static_cast<Eigen::Index>(w)) * inv_denom_sum;
    for (const auto& e : state.word_topic[w].entries()) {
      col += static_cast<double>(e.units) * is * inv_denom(e.topic);
      by_topic[e.topic].emplace_back(static_cast<std::uint32_t>(w), 0.0);
    }
    phi_col[w] = col;
  }
  auto phi = [&](int t, std::uint32_t w) {
    return (static_cast<double>(state.word_topic[w].get(static_cast<TopicId>(t))) * is + hyper.beta(w)) *
           inv_denom(t);
  };
  // Zero-count words ordered by prior mass, then index, for topics with
  // fewer than n_top counted words.
  std::vector<std::uint32_t> by_prior(V);
  std::iota(by_prior.begin(), by_prior.end(), 0u);
  std::stable_sort(by_prior.begin(), by_prior.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return hyper.beta(a) > hyper.beta(b); });

  scores.distinctiveness = Eigen::VectorXd::Zero(k);
  const std::size_t n = std::min(n_top, V);
  if (n == 0) return scores;
  for (int t = 0; t < k; ++t) {
    auto& cand = by_topic[t];
    for (auto& c : cand) c.second = phi(t, c.first);
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    double share = 0.0;
    std::size_t taken = 0;
    for (std::size_t i = 0; i < cand.size() && taken < n; ++i, ++taken) share += cand[i].second / phi_col[cand[i].first];
    for (std::size_t i = 0; i < by_prior.size() && taken < n; ++i) {
      const auto w = by_prior[i];
      if (state.word_topic[w].get(static_cast<TopicId>(t)) != 0) continue;
      share += phi(t, w) / phi_col[w];
      ++taken;
    }
    scores.distinctiveness(t) = share / static_cast<double>(n);
  }
  return scores;
}

CoreSetResult core_set_reduce(TopicModelState& state, Hyperparams& hyper, const CoreSetThresholds& thresholds,
                              std::size_t n_top) {
  hyper.validate(state.k, state.vocab_size());
  const auto scores = score_topics(state, hyper, n_top);
  CoreSetResult result;
  result.topic_map.assign(static_cast<std::size_t>(state.k), -1);
  std::vector<int> kept;
  for (int t = 0; t < state.k; ++t) {
    if (scores.mass(t) >= thresholds.min_mass && scores.distinctiveness(t) >= thresholds.min_distinctiveness) {
      result.topic_map[t] = static_cast<std::int32_t>(kept.size());
      kept.push_back(t);
    }
  }
  if (kept.empty()) throw ValidationError("core set reduction dropped every topic; thresholds too aggressive");
  result.kept = kept.size();
  if (kept.size() == static_cast<std::size_t>(state.k)) return result;

  const int k_new = static_cast<int>(kept.size());
  Hyperparams reduced = hyper;
  reduced.alpha.resize(k_new);
  for (int i = 0; i < k_new; ++i) reduced.alpha(i) = hyper.alpha(kept[i]);

  const TopicId pending = static_cast<TopicId>(k_new);
  for (auto& zd : state.z) {
    for (auto& t : zd) {
      const auto m = result.topic_map[t];
      t = m < 0 ? pending : static_cast<TopicId>(m);
    }
  }
  state.k = k_new;
  state.doc_topic.assign(state.docs.size(), {});
  state.word_topic.assign(state.vocab.size(), {});
  state.topic_totals.assign(static_cast<std::size_t>(k_new), 0);
  for (std::size_t d = 0; d < state.docs.size(); ++d) {
    const auto& toks = state.docs[d].tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const TopicId t = state.z[d][i];
      if (t == pending) continue;
      state.doc_topic[d].add(t, toks[i].units);
      state.word_topic[toks[i].word].add(t, toks[i].units);
      state.topic_totals[t] += toks[i].units;
    }
  }

  Rng rng(stream_seed(state.seed, {kCoreSetStream, state.iteration}));
  SparseGibbsKernel kernel(k_new, reduced, state.cfg, state.word_topic, state.topic_totals);
  for (std::size_t d = 0; d < state.docs.size(); ++d) {
    auto& zd = state.z[d];
    if (std::find(zd.begin(), zd.end(), pending) == zd.end()) continue;
    kernel.load_document(state.doc_topic[d]);
    for (std::size_t i = 0; i < zd.size(); ++i) {
      if (zd[i] != pending) continue;
      const auto& tok = state.docs[d].tokens[i];
      const TopicId t = kernel.draw_sparse(tok.word, rng);
      kernel.add(tok.word, tok.units, t);
      zd[i] = t;
    }
    kernel.store_document();
  }
  kernel.check_caches();
  hyper = std::move(reduced);
  return result;
}

Eigen::MatrixXd theta_matrix(const TopicModelState& state, const Hyperparams& hyper) {
  const double is = 1.0 / static_cast<double>(state.cfg.scale());
  const double alpha_sum = hyper.alpha_sum();
  Eigen::MatrixXd theta(static_cast<Eigen::Index>(state.docs.size()), state.k);
  for (std::size_t d = 0; d < state.docs.size(); ++d) {
    const auto row = static_cast<Eigen::Index>(d);
    theta.row(row) = hyper.alpha.transpose();
    for (const auto& e : state.doc_topic[d].entries()) theta(row, e.topic) += static_cast<double>(e.units) * is;
    theta.row(row) /= static_cast<double>(state.doc_weight(d)) * is + alpha_sum;
  }
  return theta;
}

Eigen::MatrixXd phi_matrix(const TopicModelState& state, const Hyperparams& hyper) {
  const double is = 1.0 / static_cast<double>(state.cfg.scale());
  Eigen::MatrixXd phi = hyper.beta.transpose().replicate(state.k, 1);
  for (std::size_t w = 0; w < state.vocab_size(); ++w) {
    for (const auto& e : state.word_topic[w].entries()) {
      phi(e.topic, static_cast<Eigen::Index>(w)) += static_cast<double>(e.units) * is;
    }
  }
  for (int t = 0; t < state.k; ++t) phi.row(t) /= static_cast<double>(state.topic_totals[t]) * is + hyper.beta_bar;
  return phi;
}

}  // namespace rlda
