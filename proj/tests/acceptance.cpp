// Acceptance suite: one PASS/FAIL line per criterion with the measured values.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <regex>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "rlda/bench.hpp"
#include "rlda/corpus.hpp"
#include "rlda/market.hpp"
#include "rlda/model_io.hpp"
#include "rlda/random.hpp"
#include "rlda/relevance.hpp"
#include "rlda/sampler.hpp"
#include "rlda/synthetic.hpp"
#include "rlda/transform.hpp"

using namespace rlda;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

AugmentedVocabulary tier5_vocab(std::size_t v) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < v; ++i) words.push_back("w" + std::to_string(i));
  AugmentedVocabulary vocab(words);
  for (std::uint32_t i = 0; i < v; ++i) vocab.intern(i, 5);
  return vocab;
}

TopicModelState random_state(Rng& rng, int k, std::size_t v, std::size_t docs, std::size_t max_len, int w_bits) {
  WeightedCorpus c;
  c.cfg.w_bits = w_bits;
  c.vocab = tier5_vocab(v);
  std::vector<std::vector<TopicId>> z;
  for (std::size_t d = 0; d < docs; ++d) {
    WeightedDocument doc{"d" + std::to_string(d), {}};
    auto& zd = z.emplace_back();
    const auto len = 1 + rng.below(max_len);
    for (std::uint32_t i = 0; i < len; ++i) {
      doc.tokens.push_back({static_cast<std::uint32_t>(rng.below(v)), 1 + static_cast<Units>(rng.below(c.cfg.scale())), i});
      zd.push_back(static_cast<TopicId>(rng.below(k)));
    }
    c.docs.push_back(std::move(doc));
  }
  return make_state(c, k, std::move(z), 1);
}

// Unnormalized conditional for (d, pos) from a tally of z.
Eigen::VectorXd brute_numerators(const TopicModelState& s, const Hyperparams& h, std::size_t d, std::size_t pos) {
  const double inv = 1.0 / static_cast<double>(s.cfg.scale());
  Eigen::VectorXd ndt = Eigen::VectorXd::Zero(s.k), nwt = Eigen::VectorXd::Zero(s.k), nt = Eigen::VectorXd::Zero(s.k);
  const auto word = s.docs[d].tokens[pos].word;
  for (std::size_t e = 0; e < s.num_docs(); ++e) {
    for (std::size_t i = 0; i < s.docs[e].tokens.size(); ++i) {
      if (e == d && i == pos) continue;
      const auto& tok = s.docs[e].tokens[i];
      const double w = static_cast<double>(tok.units) * inv;
      const auto t = s.z[e][i];
      nt(t) += w;
      if (e == d) ndt(t) += w;
      if (tok.word == word) nwt(t) += w;
    }
  }
  Eigen::VectorXd p(s.k);
  for (int t = 0; t < s.k; ++t) p(t) = (ndt(t) + h.alpha(t)) * (nwt(t) + h.beta(word)) / (nt(t) + h.beta_bar);
  return p;
}

// Pearson chi-square with bins of expected count < 5 pooled.
double chi_square_p(const std::vector<std::size_t>& observed, const Eigen::VectorXd& probs, std::size_t n) {
  double stat = 0, pooled_o = 0, pooled_e = 0;
  std::size_t bins = 0;
  for (std::size_t t = 0; t < observed.size(); ++t) {
    const double e = static_cast<double>(n) * probs(static_cast<Eigen::Index>(t));
    if (e < 5) {
      pooled_o += static_cast<double>(observed[t]);
      pooled_e += e;
      continue;
    }
    stat += std::pow(static_cast<double>(observed[t]) - e, 2) / e;
    ++bins;
  }
  if (pooled_e > 0) {
    stat += std::pow(pooled_o - pooled_e, 2) / pooled_e;
    ++bins;
  }
  boost::math::chi_squared dist(static_cast<double>(bins - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

Outcome sparse_dense_equivalence() {
  Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(32));
    auto s = random_state(rng, k, 2 + rng.below(99), 1 + rng.below(8), 20, static_cast<int>(rng.below(17)));
    auto h = Hyperparams::symmetric(k, s.vocab_size(), 0.01 + rng.uniform(), 0.001 + 0.2 * rng.uniform());
    for (int t = 0; t < k; ++t) h.alpha(t) *= 0.5 + rng.uniform();
    const auto d = rng.below(s.num_docs());
    const auto pos = rng.below(s.docs[d].tokens.size());
    const double dense = brute_numerators(s, h, d, pos).sum();
    SparseGibbsKernel kernel(k, h, s.cfg, s.word_topic, s.topic_totals);
    kernel.load_document(s.doc_topic[d]);
    const auto& tok = s.docs[d].tokens[pos];
    kernel.remove(tok.word, tok.units, s.z[d][pos]);
    worst = std::max(worst, std::abs(kernel.masses(tok.word).total() - dense) / dense);
  }

  Rng srng(202);
  auto s = random_state(srng, 24, 80, 12, 40, 8);
  const auto h = Hyperparams::symmetric(24, s.vocab_size(), 0.1, 0.05);
  const auto probs = brute_numerators(s, h, 5, 2);
  SparseGibbsKernel kernel(24, h, s.cfg, s.word_topic, s.topic_totals);
  kernel.load_document(s.doc_topic[5]);
  const auto& tok = s.docs[5].tokens[2];
  kernel.remove(tok.word, tok.units, s.z[5][2]);
  const std::size_t n = 1000000;
  std::vector<std::size_t> counts(24);
  Rng draws(303);
  for (std::size_t i = 0; i < n; ++i) ++counts[kernel.draw_sparse(tok.word, draws)];
  const double p = chi_square_p(counts, probs / probs.sum(), n);
  return {worst <= 1e-10 && p > 0.01, fmt("max rel mass error %.3g over 200 states; chi-square p = %.4f (10^6 draws)", worst, p)};
}

double top_word_purity(const TopicModelState& s, const Hyperparams& h, const std::vector<int>& group, std::size_t n) {
  const auto phi = phi_matrix(s, h);
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(s.k, static_cast<Eigen::Index>(s.vocab.base_size()));
  for (std::uint32_t w = 0; w < s.vocab_size(); ++w) base.col(s.vocab.entry(w).base) += phi.col(w);
  double total = 0;
  for (int t = 0; t < s.k; ++t) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(base.cols()));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](auto a, auto b) { return base(t, a) > base(t, b); });
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < n; ++i) ++votes[group[static_cast<std::size_t>(order[i])]];
    std::size_t best = 0;
    for (const auto& [g, c] : votes) best = std::max(best, c);
    total += static_cast<double>(best) / static_cast<double>(n);
  }
  return total / s.k;
}

Outcome planted_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto planted = planted_corpus({});
  const auto h2 = Hyperparams::symmetric(2, planted.corpus.vocab.size(), 0.1, 0.01);
  TrainOptions opts;
  opts.iterations = 200;
  opts.seed = 1;
  opts.track_perplexity = false;
  const auto two = train(planted.corpus, 2, h2, opts);
  const double purity = top_word_purity(two.state, h2, planted.base_topic, 10);

  auto h8 = Hyperparams::symmetric(8, planted.corpus.vocab.size(), 0.1, 0.01);
  TrainOptions long_opts = opts;
  long_opts.iterations = 4000;
  auto eight = train(planted.corpus, 8, h8, long_opts).state;
  const auto reduced = core_set_reduce(eight, h8, {}, 10);
  const double kept_purity = top_word_purity(eight, h8, planted.base_topic, 10);
  const double secs = seconds_since(t0);
  return {purity >= 0.95 && reduced.kept == 2 && secs < 10.0,
          fmt("k=2 top-10 purity %.3f; k=8 after 4000 sweeps, core set keeps %zu topics (purity %.3f); %.2f s", purity, reduced.kept,
              kept_purity, secs)};
}

Outcome case_study_envelope() {
  const auto corpus = build_corpus(synthetic_reviews(487, 103, 11), 1);
  const auto weighted = build_weighted_corpus(corpus, LogisticModel{}, FixedPointConfig{8});
  const auto h = Hyperparams::symmetric(16, weighted.vocab.size(), -1.0, 0.01);
  TrainOptions opts;
  opts.iterations = 200;
  opts.gibbs.shards = 2;
  opts.track_perplexity = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = train(weighted, 16, h, opts);
  const double secs = seconds_since(t0);
  fit.state.check_consistency();
  std::size_t source_tokens = 0;
  for (const auto& r : corpus.reviews) source_tokens += tokenize(r.text).words.size();
  return {secs <= 15.0, fmt("%zu docs, %zu source tokens (%zu weighted entries), k=16, 200 sweeps, 2 shards: %.2f s",
                            weighted.docs.size(), source_tokens, weighted.token_count(), secs)};
}

Outcome complexity() {
  const auto planted =
      planted_corpus({.docs = 1000, .doc_length = 50, .topics = 16, .words_per_topic = 100, .seed = 1});
  const auto report = run_bench(planted.corpus, BenchOptions{});
  const auto& lo = report.rows.front();
  const auto& hi = report.rows.back();
  return {report.dense_ratio() >= 8.0 && report.sparse_ratio() <= 3.0,
          fmt("k 16->256 on %zu tokens: dense %.4f->%.4f s (x%.2f), sparse %.4f->%.4f s (x%.2f)", report.tokens,
              lo.dense_seconds, hi.dense_seconds, report.dense_ratio(), lo.sparse_seconds, hi.sparse_seconds,
              report.sparse_ratio())};
}

Outcome fixed_point() {
  Rng rng(5);
  double worst_ratio = 0;
  for (int bits = 0; bits <= 16; ++bits) {
    const FixedPointConfig cfg{bits};
    const double bound = std::ldexp(1.0, -(bits + 2));
    for (int i = 0; i < 100000; ++i) {
      const double w = rng.uniform();
      worst_ratio = std::max(worst_ratio, std::abs(decode_weight(encode_weight(w, cfg), cfg) - w) / bound);
    }
  }

  bool conserved = true;
  for (int bits : {0, 8, 16}) {
    const auto planted = planted_corpus({.docs = 80, .doc_length = 30, .topics = 4, .words_per_topic = 20,
                                         .fractional = true, .w_bits = bits, .seed = 2});
    const auto h = Hyperparams::symmetric(6, planted.corpus.vocab.size(), 0.1, 0.01);
    TrainOptions opts;
    opts.iterations = 100;
    opts.track_perplexity = false;
    opts.gibbs.shards = bits == 8 ? 3 : 1;
    const auto s = train(planted.corpus, 6, h, opts).state;
    try {
      s.check_consistency();
    } catch (const std::exception&) {
      conserved = false;
    }
    // Independent tally from z against every stored table.
    std::vector<std::map<TopicId, Units>> doc(s.num_docs()), word(s.vocab_size());
    std::vector<Units> total(static_cast<std::size_t>(s.k), 0);
    Units input = 0;
    for (std::size_t d = 0; d < s.num_docs(); ++d) {
      for (std::size_t i = 0; i < s.docs[d].tokens.size(); ++i) {
        const auto& tok = s.docs[d].tokens[i];
        doc[d][s.z[d][i]] += tok.units;
        word[tok.word][s.z[d][i]] += tok.units;
        total[s.z[d][i]] += tok.units;
      }
      for (const auto& tok : planted.corpus.docs[d].tokens) input += tok.units;
    }
    for (std::size_t d = 0; d < s.num_docs(); ++d) {
      conserved &= doc[d].size() == s.doc_topic[d].size();
      for (const auto& e : s.doc_topic[d].entries()) conserved &= doc[d][e.topic] == e.units;
    }
    for (std::size_t w = 0; w < s.vocab_size(); ++w) {
      conserved &= word[w].size() == s.word_topic[w].size();
      for (const auto& e : s.word_topic[w].entries()) conserved &= word[w][e.topic] == e.units;
    }
    conserved &= total == s.topic_totals;
    conserved &= std::accumulate(total.begin(), total.end(), Units{0}) == input;
  }
  return {worst_ratio <= 1.0 && conserved,
          fmt("max |decode(encode(w)) - w| = %.3f of bound over 17 x 10^5 weights; counts after 100 sweeps %s",
              worst_ratio, conserved ? "exact" : "MISMATCH")};
}

Outcome verification_formula() {
  using market::verification_probability;
  double worst = 0;
  for (double p : {1.0, 7.5, 120.0, 1e6}) worst = std::max(worst, std::abs(verification_probability(0, 0, p, p) - 1.0 / 6));

  bool monotone = true;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      const double c = -5.0 + 0.5 * i;
      const double ratio = 0.05 + 0.05 * j;
      const double here = verification_probability(c / 2, c / 2, 100.0 * ratio, 100.0);
      if (i + 1 < 20) monotone &= verification_probability((c + 0.5) / 2, (c + 0.5) / 2, 100.0 * ratio, 100.0) < here;
      if (j + 1 < 20) monotone &= verification_probability(c / 2, c / 2, 100.0 * (ratio + 0.05), 100.0) < here;
    }
  }

  Rng rng(6);
  double worst_z = 0;
  for (double pv : {verification_probability(0, 0, 1, 1), verification_probability(-2, 1, 1, 3), 0.5}) {
    const int n = 10000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += market::verification_occurs(pv, rng.uniform()) ? 1 : 0;
    worst_z = std::max(worst_z, std::abs(hits - n * pv) / std::sqrt(n * pv * (1 - pv)));
  }
  return {worst <= 1e-12 && monotone && worst_z <= 3.0,
          fmt("|p_v(0,0,p,p) - 1/6| <= %.3g; 20x20 grid %s; frequency within %.2f sigma", worst,
              monotone ? "strictly decreasing" : "NOT monotone", worst_z)};
}

Outcome marketplace() {
  market::Scenario sc;
  sc.seed = 2024;
  sc.max_tasks = 10000;
  sc.arrival_rate = 0.05;
  sc.lottery_period = 5000;
  Rng speeds(7);
  for (std::uint32_t i = 0; i < 20; ++i) {
    market::SellerNode n;
    n.seller_id = i;
    n.speed = 80 + 40 * speeds.uniform();
    if (i % 5 == 4) n.honesty = {market::Honesty::kCorrupt, 0.2};
    sc.sellers.push_back(n);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = market::run_simulation(sc);
  const double secs = seconds_since(t0);

  // Replay SETTLE lines: running credits, zero sum, and t * i tickets.
  const std::regex settle(R"(SETTLE task=\d+ winner=(\d+) loser=(\d+) t=(\d+) i=(\d+) tickets=(\d+) credit=(-?\d+),(-?\d+) total=(-?\d+))");
  std::map<std::uint32_t, long long> credit;
  std::size_t settles = 0, audit_failures = 0;
  bool zero_sum = m.zero_sum_violations == 0;
  for (const auto& line : m.event_log) {
    std::smatch g;
    if (!std::regex_search(line, g, settle)) continue;
    ++settles;
    const auto w = static_cast<std::uint32_t>(std::stoul(g[1])), l = static_cast<std::uint32_t>(std::stoul(g[2]));
    ++credit[w];
    --credit[l];
    if (std::stoull(g[5]) != std::stoull(g[3]) * std::stoull(g[4])) ++audit_failures;
    long long sum = 0;
    for (const auto& [id, c] : credit) sum += c;
    zero_sum &= sum == 0 && std::stoll(g[8]) == 0 && credit[w] == std::stoll(g[6]) && credit[l] == std::stoll(g[7]);
  }

  const double corrupt = m.mean_credit_by_class.at("corrupt");
  const double honest = m.mean_credit_by_class.at("honest");
  const double pv_corrupt = m.mean_pv("corrupt", 3);
  const double pv_honest = m.mean_pv("honest", 3);
  const bool pass = m.tasks_arrived == 10000 && settles == m.tasks_completed && zero_sum && audit_failures == 0 &&
                    corrupt < 0.0 && honest > 0.0 && pv_corrupt > pv_honest;
  return {pass, fmt("%zu tasks (%zu settled, %zu failed) in %.2f s; zero-sum %s; ticket audit %zu/%zu ok; "
                    "mean credit corrupt %.2f honest %.2f; final-quartile mean p_v corrupt %.4f honest %.4f",
                    m.tasks_arrived, m.tasks_completed, m.tasks_failed, secs, zero_sum ? "held" : "VIOLATED",
                    settles - audit_failures, settles, corrupt, honest, pv_corrupt, pv_honest)};
}

Outcome logistic() {
  std::vector<RelevanceExample> ex;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto many = static_cast<std::int64_t>(6 + rng.below(7));
    auto few = static_cast<std::int64_t>(rng.below(4));
    if (i % 2) std::swap(many, few);
    ex.push_back({rng.uniform(), many, few, many > few ? 1 : 0});
  }
  const auto [x, y] = design_matrix<double>(ex);
  const auto [xl, yl] = design_matrix<long double>(ex);
  double worst = 0;
  Rng wr(17);
  for (int trial = 0; trial < 20; ++trial) {
    Vector4<double> w;
    for (int i = 0; i < 4; ++i) w(i) = 2.0 * wr.normal();
    const auto g = regularized_gradient<double>(w, x, y, 1e-2);
    for (int i = 0; i < 4; ++i) {
      Vector4<long double> wp = w.cast<long double>(), wm = w.cast<long double>();
      const long double h = 1e-6L;
      wp(i) += h;
      wm(i) -= h;
      const long double fd =
          (regularized_log_loss<long double>(wp, xl, yl, 1e-2) - regularized_log_loss<long double>(wm, xl, yl, 1e-2)) /
          (2 * h);
      worst = std::max(worst, std::abs(g(i) - static_cast<double>(fd)) / std::max(1e-8, std::abs(static_cast<double>(fd))));
    }
  }
  const double acc = training_accuracy(train_logistic(ex).model, ex);
  return {worst <= 1e-5 && acc == 1.0, fmt("max gradient rel error %.3g at 20 points; toy-set accuracy %.3f", worst, acc)};
}

Outcome tiers() {
  Rng rng(9);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const int r = 1 + static_cast<int>(rng.below(5));
    const auto c = tier_probabilities(r, {4.0 * (rng.uniform() - 0.5), 3.0 * rng.uniform(), 1 + rng.below(5)});
    worst = std::max(worst, std::abs(std::accumulate(c.c.begin(), c.c.end(), 0.0) - 1.0));
  }
  const auto sym = tier_probabilities(3, {0.0, 0.7, 4});
  const double asym = std::max(std::abs(sym[1] - sym[5]), std::abs(sym[2] - sym[4]));
  const auto one_hot = tier_probabilities(2, {1.3, 0.4, 0});
  const bool hot = one_hot.c == std::array<double, 5>{0, 1, 0, 0, 0};
  return {worst <= 1e-9 && asym <= 1e-12 && hot,
          fmt("max |sum - 1| %.3g over 10^4 inputs; |c1-c5|,|c2-c4| <= %.3g at mean 3; single review one-hot %s", worst,
              asym, hot ? "yes" : "no")};
}

Outcome persistence() {
  const auto planted = planted_corpus({.docs = 100, .doc_length = 30, .topics = 3, .words_per_topic = 20,
                                       .fractional = true, .seed = 12});
  ModelContainer m;
  m.hyper = Hyperparams::symmetric(5, planted.corpus.vocab.size(), 0.1, 0.01);
  m.relevance.weights << 0.1, -0.2, 0.3, -0.4;
  TrainOptions opts;
  opts.seed = 31;
  opts.track_perplexity = false;
  opts.iterations = 60;
  const auto straight = train(planted.corpus, 5, m.hyper, opts).state;
  opts.iterations = 25;
  m.state = train(planted.corpus, 5, m.hyper, opts).state;

  const auto dir = std::filesystem::temp_directory_path() / "rlda_acceptance";
  std::filesystem::create_directories(dir);
  bool resumed = true, lossless = true;
  for (auto fmt_kind : {ContainerFormat::kText, ContainerFormat::kBinary}) {
    const auto path = (dir / "model").string();
    save_model(m, path, fmt_kind);
    auto loaded = load_model(path);
    lossless &= loaded.state == m.state && loaded.hyper.alpha == m.hyper.alpha && loaded.hyper.beta == m.hyper.beta &&
                loaded.relevance.weights == m.relevance.weights;
    continue_training(loaded.state, loaded.hyper, 35, {}, false);
    resumed &= loaded.state == straight;
  }
  lossless &= to_text(from_binary(to_binary(m))) == to_text(m);
  std::filesystem::remove_all(dir);
  return {resumed && lossless, fmt("resume after save/load %s; text and binary round trips %s",
                                   resumed ? "bit-identical" : "DIVERGED", lossless ? "lossless" : "LOSSY")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria = {
      {"sparse/dense equivalence", sparse_dense_equivalence},
      {"planted-topic recovery", planted_recovery},
      {"case-study envelope", case_study_envelope},
      {"complexity behavior", complexity},
      {"fixed-point contract", fixed_point},
      {"verification probability", verification_formula},
      {"marketplace claims", marketplace},
      {"logistic model", logistic},
      {"tier distribution", tiers},
      {"determinism and persistence", persistence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
