#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "rlda/errors.hpp"
#include "rlda/random.hpp"
#include "rlda/relevance.hpp"
#include "rlda/synthetic.hpp"
#include "rlda/view.hpp"

using namespace rlda;

namespace {

AugmentedVocabulary tier_vocab(std::size_t v) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < v; ++i) words.push_back("w" + std::to_string(i));
  AugmentedVocabulary vocab(words);
  for (std::uint32_t i = 0; i < v; ++i) {
    for (int tier = 1; tier <= 5; ++tier) vocab.intern(i, tier);
  }
  return vocab;
}

// Three documents, two topics, unit weights, alpha 0.5.
TopicModelState three_docs() {
  WeightedCorpus c;
  c.cfg.w_bits = 0;
  c.vocab = tier_vocab(4);
  const Units one = c.cfg.scale();
  const auto w0 = c.vocab.find(0, 5), w1 = c.vocab.find(1, 5), w2 = c.vocab.find(2, 5), w3 = c.vocab.find(3, 5);
  c.docs = {{"a", {{w0, one, 0}, {w1, one, 1}}},
            {"b", {{w0, one, 0}, {w2, one, 1}}},
            {"c", {{w2, one, 0}, {w3, one, 1}, {w3, one, 2}}}};
  return make_state(c, 2, {{0, 0}, {0, 1}, {1, 1, 1}}, 1);
}

}  // namespace

TEST_CASE("view of a hand-built state") {
  const auto s = three_docs();
  const auto h = Hyperparams::symmetric(2, s.vocab_size(), 0.5, 0.01);
  DocumentSignals sig{Eigen::Vector3d(5, 3, 1), Eigen::Vector3d(4, 2, 0), Eigen::Vector3d(0, 1, 6)};
  const auto view = build_view(s, h, sig, 3);
  REQUIRE(view.size() == 2);

  // theta: a (2.5, 0.5)/3, b (1.5, 1.5)/3, c (0.5, 3.5)/4
  const double a0 = 2.5 / 3, b0 = 0.5, c0 = 0.125;
  const double a1 = 0.5 / 3, b1 = 0.5, c1 = 0.875;
  const double w0 = a0 + b0 + c0, w1 = a1 + b1 + c1;
  CHECK(view[0].probability == doctest::Approx(3.0 / 7).epsilon(1e-12));
  CHECK(view[1].probability == doctest::Approx(4.0 / 7).epsilon(1e-12));
  CHECK(std::abs(view[0].expected_rating - (5 * a0 + 3 * b0 + 1 * c0) / w0) < 1e-12);
  CHECK(std::abs(view[1].expected_rating - (5 * a1 + 3 * b1 + 1 * c1) / w1) < 1e-12);
  CHECK(std::abs(view[0].expected_helpfulness - (4 * a0 + 2 * b0) / w0) < 1e-12);
  CHECK(std::abs(view[1].expected_unhelpfulness - (b1 + 6 * c1) / w1) < 1e-12);

  // Topic 1 holds w2 and w3 twice each; equal weights fall back to base order.
  CHECK(view[1].top_words[0].word == "w2");
  CHECK(view[1].top_words[1].word == "w3");
  CHECK(view[0].top_words[0].word == "w0");
  for (const auto& t : view) {
    for (std::size_t i = 1; i < t.top_words.size(); ++i) {
      const auto& p = t.top_words[i - 1];
      const auto& q = t.top_words[i];
      CHECK((p.weight > q.weight || (p.weight == q.weight && p.base < q.base)));
    }
  }
}

TEST_CASE("tier variants aggregate into base words") {
  WeightedCorpus c;
  c.cfg.w_bits = 2;
  c.vocab = tier_vocab(3);
  // w0 holds 8 units in tier 5; w1 holds 5 in each of tiers 1 and 2.
  const auto w0 = c.vocab.find(0, 5), w1a = c.vocab.find(1, 1), w1b = c.vocab.find(1, 2);
  c.docs = {{"a", {{w0, 4, 0}, {w0, 4, 1}, {w1a, 5, 2}, {w1b, 5, 3}}}};
  const auto s = make_state(c, 1, {{0, 0, 0, 0}}, 1);
  const auto h = Hyperparams::symmetric(1, s.vocab_size(), 1.0, 0.01);
  const auto base = base_word_phi(s, h);
  const auto phi = phi_matrix(s, h);
  CHECK(base(0, 1) == doctest::Approx(phi.row(0).segment(5, 5).sum()).epsilon(1e-14));
  CHECK(base.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  const auto view = build_view(s, h, DocumentSignals{Eigen::VectorXd::Constant(1, 4.0),
                                                     Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)}, 2);
  CHECK(view[0].top_words[0].word == "w1");
  CHECK(view[0].top_words[1].word == "w0");
  CHECK(strip_rating_suffix(rating_suffixed(view[0].top_words[0].word, 3)).first == "w1");
}

TEST_CASE("degenerate views") {
  const auto corpus = build_corpus(synthetic_reviews(60, 12, 4), 1);
  const auto weighted = build_weighted_corpus(corpus, LogisticModel{}, FixedPointConfig{8});
  const auto h1 = Hyperparams::symmetric(1, weighted.vocab.size(), 0.1, 0.01);
  TrainOptions opts;
  opts.iterations = 2;
  opts.track_perplexity = false;
  const auto one = train(weighted, 1, h1, opts).state;
  const auto view = build_view(one, h1, corpus, 5);
  REQUIRE(view.size() == 1);
  CHECK(view[0].probability == 1.0);
  double mean = 0;
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    mean += std::clamp(corpus.reviews[i].rating + corpus.bias[i].mean, 1.0, 5.0);
  }
  CHECK(std::abs(view[0].expected_rating - mean / static_cast<double>(corpus.reviews.size())) < 1e-12);

  // Everyone rates 5 and has no other reviews to compare against.
  auto reviews = synthetic_reviews(30, 10, 8);
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    reviews[i].rating = 5;
    reviews[i].user_id = "solo" + std::to_string(i);
  }
  const auto fives = build_corpus(reviews, 1);
  const auto wf = build_weighted_corpus(fives, LogisticModel{}, FixedPointConfig{8});
  const auto h3 = Hyperparams::symmetric(3, wf.vocab.size(), 0.1, 0.01);
  const auto s3 = train(wf, 3, h3, opts).state;
  double total = 0;
  for (const auto& t : build_view(s3, h3, fives, 5)) {
    CHECK(t.expected_rating == doctest::Approx(5.0).epsilon(1e-12));
    total += t.probability;
  }
  CHECK(std::abs(total - 1.0) < 1e-9);

  auto missing = fives;
  missing.reviews.pop_back();
  CHECK_THROWS_AS(document_signals(s3, missing), ValidationError);
}

TEST_CASE("rank_reviews") {
  const auto s = three_docs();
  const auto h = Hyperparams::symmetric(2, s.vocab_size(), 0.5, 0.01);
  CHECK(rank_reviews(s, h, 0) == std::vector<std::string>{"a", "b", "c"});
  CHECK(rank_reviews(s, h, 1) == std::vector<std::string>{"c", "b", "a"});
  CHECK_THROWS_AS(rank_reviews(s, h, 2), ValidationError);
  CHECK_THROWS_AS(rank_reviews(s, h, -1), ValidationError);

  WeightedCorpus single;
  single.cfg.w_bits = 0;
  single.vocab = tier_vocab(1);
  single.docs = {{"only", {{0, 2, 0}}}};
  CHECK(rank_reviews(make_state(single, 3, {{1}}, 1), Hyperparams::symmetric(3, 5), 2) ==
        std::vector<std::string>{"only"});

  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    WeightedCorpus c;
    c.cfg.w_bits = 1;
    c.vocab = tier_vocab(5);
    std::vector<std::vector<TopicId>> z;
    for (int d = 0; d < 10; ++d) {
      WeightedDocument doc{"r" + std::to_string(rng.below(6)) + "_" + std::to_string(d), {}};
      auto& zd = z.emplace_back();
      for (std::uint32_t i = 0; i < 1 + rng.below(4); ++i) {
        doc.tokens.push_back({static_cast<std::uint32_t>(rng.below(25)), 4, i});
        zd.push_back(static_cast<TopicId>(rng.below(3)));
      }
      c.docs.push_back(doc);
    }
    const auto st = make_state(c, 3, z, 1);
    const auto hp = Hyperparams::symmetric(3, st.vocab_size(), 0.2, 0.01);
    const int topic = static_cast<int>(rng.below(3));

    // Oracle: theta from raw units, sorted by (theta desc, id asc).
    std::vector<std::pair<double, std::string>> rows;
    for (std::size_t d = 0; d < c.docs.size(); ++d) {
      double n_t = 0, n_d = 0;
      for (std::size_t i = 0; i < z[d].size(); ++i) {
        n_d += 2.0;
        if (static_cast<int>(z[d][i]) == topic) n_t += 2.0;
      }
      rows.emplace_back((n_t + 0.2) / (n_d + 0.6), c.docs[d].review_id);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<std::string> expected;
    for (const auto& r : rows) expected.push_back(r.second);
    CHECK(rank_reviews(st, hp, topic) == expected);
  }
}

TEST_CASE("stem prefix rule") {
  CHECK(stem_prefix_match("charging", "charge"));
  CHECK(stem_prefix_match("CHARGER", "charge"));
  CHECK(stem_prefix_match("chart", "charge"));
  CHECK_FALSE(stem_prefix_match("cha", "charge"));
  CHECK_FALSE(stem_prefix_match("change", "charge"));
  CHECK(stem_prefix_match("ok", "ok"));
  CHECK(stem_prefix_match("okay", "ok"));
  CHECK_FALSE(stem_prefix_match("o", "ok"));
}

TEST_CASE("highlight spans") {
  CHECK(highlight("r", "nothing relevant here", {"battery"}).empty());

  const auto one = highlight("r", "charging the device", {"charge"});
  REQUIRE(one.size() == 1);
  CHECK(one[0] == HighlightSpan{"r", 0, 8, "charge"});

  // "Charging" is claimed by both charge and chart; the first listed keyword wins.
  const std::string text = "Charging the battery, batt.";
  const auto spans = highlight("r9", text, {"charge", "chart", "battery"});
  REQUIRE(spans.size() == 3);
  CHECK(spans[0] == HighlightSpan{"r9", 0, 8, "charge"});
  CHECK(spans[1] == HighlightSpan{"r9", 13, 20, "battery"});
  CHECK(spans[2] == HighlightSpan{"r9", 22, 26, "battery"});
  CHECK(text.substr(22, 4) == "batt");
  for (std::size_t i = 0; i < spans.size(); ++i) {
    CHECK(spans[i].byte_end <= text.size());
    if (i) CHECK(spans[i - 1].byte_end <= spans[i].byte_start);
  }
}

TEST_CASE("serialized views carry no review text") {
  const auto reviews = synthetic_reviews(40, 20, 6);
  const auto corpus = build_corpus(reviews, 1);
  const auto weighted = build_weighted_corpus(corpus, LogisticModel{}, FixedPointConfig{8});
  const auto h = Hyperparams::symmetric(3, weighted.vocab.size(), 0.1, 0.01);
  TrainOptions opts;
  opts.iterations = 20;
  opts.track_perplexity = false;
  const auto s = train(weighted, 3, h, opts).state;
  const auto out = serialize_view(build_view(s, h, corpus, 8));

  const auto doc = nlohmann::json::parse(out);
  CHECK(doc["format"] == "rlda-view");
  CHECK(doc["version"] == 1);
  REQUIRE(doc["topics"].size() == 3);
  for (const auto& t : doc["topics"]) {
    std::vector<std::string> keys;
    for (const auto& [key, value] : t.items()) keys.push_back(key);
    std::sort(keys.begin(), keys.end());
    CHECK(keys == std::vector<std::string>{"expected_helpfulness", "expected_rating", "expected_unhelpfulness",
                                           "probability", "top_words", "topic_id"});
  }
  for (const auto& r : reviews) {
    CHECK(out.find(r.text.substr(0, 20)) == std::string::npos);
    CHECK(out.find("\"" + r.review_id + "\"") == std::string::npos);
  }
}
