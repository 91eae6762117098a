#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "rlda/errors.hpp"
#include "rlda/random.hpp"
#include "rlda/relevance.hpp"
#include "rlda/synthetic.hpp"
#include "rlda/transform.hpp"

using namespace rlda;

namespace {

// P(a < X < b) for X ~ N(mu, var) by adaptive quadrature of the density.
double interval_mass(double mu, double var, double a, double b) {
  const double sd = std::sqrt(var);
  auto density = [&](double x) {
    const double z = (x - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  };
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(density, a, b, 15, 1e-14);
}

UserBiasStats stats(double mean, double variance, std::size_t n = 3) { return {mean, variance, n}; }

}  // namespace

TEST_CASE("normal_cdf matches quadrature") {
  for (double x = -8.0; x <= 8.0; x += 0.25) {
    const double oracle = x < 0 ? interval_mass(0, 1, -INFINITY, x) : 1.0 - interval_mass(0, 1, x, INFINITY);
    CHECK(std::abs(normal_cdf(x) - oracle) < 1e-12);
  }
}

TEST_CASE("tier probabilities") {
  const auto one_hot = tier_probabilities(5, stats(0.7, 0.3, 0));
  CHECK(one_hot.c == std::array<double, 5>{0, 0, 0, 0, 1});

  const auto sym = tier_probabilities(3, stats(0.0, 0.0));
  CHECK(sym[1] == doctest::Approx(sym[5]).epsilon(1e-15));
  CHECK(sym[2] == doctest::Approx(sym[4]).epsilon(1e-15));

  const auto four = tier_probabilities(4, stats(0.0, 0.0));
  CHECK(std::abs(four[4] - interval_mass(4.0, 1.0, 3.5, 4.5)) < 1e-12);
  CHECK(four[4] == doctest::Approx(0.382925).epsilon(1e-6));

  const auto shifted = tier_probabilities(2, stats(0.6, 0.44));
  const double cuts[] = {-INFINITY, 1.5, 2.5, 3.5, 4.5, INFINITY};
  for (int t = 1; t <= 5; ++t) {
    CHECK(std::abs(shifted[t] - interval_mass(2.6, 1.44, cuts[t - 1], cuts[t])) < 1e-12);
  }
  CHECK_THROWS_AS(tier_probabilities(0, stats(0, 0)), ValidationError);
}

TEST_CASE("tier probabilities sum to one") {
  Rng rng(21);
  for (int i = 0; i < 10000; ++i) {
    const int r = 1 + static_cast<int>(rng.below(5));
    const auto c = tier_probabilities(r, stats(4.0 * (rng.uniform() - 0.5), 3.0 * rng.uniform(), 1 + rng.below(4)));
    double sum = 0;
    for (double v : c.c) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("encode and decode") {
  FixedPointConfig b3{3};
  CHECK(b3.scale() == 16);
  CHECK(b3.zero_floor() == 1.0 / 32);
  CHECK(encode_weight(1.0, b3) == 16);
  CHECK(encode_weight(0.3, b3) == 5);
  CHECK(decode_weight(5, b3) == 0.3125);
  CHECK(encode_weight(0.0, b3) == 0);
  CHECK(encode_weight(1.0 / 32, b3) == 1);  // half a unit rounds up
  CHECK_THROWS_AS(encode_weight(1.5, b3), ValidationError);
  CHECK_THROWS_AS(encode_weight(-0.1, b3), ValidationError);
  CHECK_THROWS_AS((FixedPointConfig{17}.validate()), ValidationError);

  Rng rng(4);
  for (int bits = 0; bits <= 16; ++bits) {
    FixedPointConfig cfg{bits};
    const double bound = std::ldexp(1.0, -(bits + 2));
    for (int i = 0; i < 100000; ++i) {
      const double w = rng.uniform();
      CHECK(std::abs(decode_weight(encode_weight(w, cfg), cfg) - w) <= bound);
    }
  }
}

TEST_CASE("rating suffixes") {
  CHECK(rating_suffixed("battery", 4) == "battery_4");
  CHECK(strip_rating_suffix("battery_4") == std::pair<std::string, int>{"battery", 4});
  CHECK(strip_rating_suffix(rating_suffixed("screen", 2)) == std::pair<std::string, int>{"screen", 2});
  CHECK(strip_rating_suffix("clock_radio_5").first == "clock_radio");
  CHECK_THROWS_AS(strip_rating_suffix("no_suffix_here"), ValidationError);
  CHECK_THROWS_AS(strip_rating_suffix("word_6"), ValidationError);
  CHECK_THROWS_AS(strip_rating_suffix("_3"), ValidationError);
  CHECK_THROWS_AS(strip_rating_suffix("word"), ValidationError);
}

TEST_CASE("augment_tokens examples") {
  AugmentedVocabulary vocab({"battery", "screen"});
  const std::vector<std::string> words = {"battery", "screen", "battery"};

  TierDistribution five;
  five.c = {0, 0, 0, 0, 1};
  for (int bits : {0, 3, 8, 16}) {
    FixedPointConfig cfg{bits};
    auto v = vocab;
    const auto toks = augment_tokens(words, five, 1.0, cfg, v);
    REQUIRE(toks.size() == 3);
    for (const auto& t : toks) {
      CHECK(decode_weight(t.units, cfg) == 1.0);
      CHECK(v.entry(t.word).tier == 5);
    }
    CHECK(v.augmented_word(toks[0].word) == "battery_5");
  }

  TierDistribution split;
  split.c = {0, 0, 0, 0.5, 0.5};
  auto v = vocab;
  const auto toks = augment_tokens({"battery"}, split, 0.5, FixedPointConfig{3}, v);
  REQUIRE(toks.size() == 2);
  CHECK(toks[0].units == 4);
  CHECK(toks[1].units == 4);
  CHECK(v.augmented_word(toks[0].word) == "battery_4");
  CHECK(v.augmented_word(toks[1].word) == "battery_5");

  TierDistribution tiny;
  tiny.c = {0.04, 0, 0, 0, 0.96};
  auto v2 = vocab;
  const auto dropped = augment_tokens({"screen"}, tiny, 0.5, FixedPointConfig{3}, v2);
  REQUIRE(dropped.size() == 1);  // 0.02 is below the 1/32 floor
  CHECK(v2.entry(dropped[0].word).tier == 5);

  auto v3 = vocab;
  CHECK_THROWS_AS(augment_tokens(words, five, 0.0, FixedPointConfig{3}, v3), ValidationError);
  CHECK_THROWS_AS(augment_tokens(words, five, 1.2, FixedPointConfig{3}, v3), ValidationError);

  const auto added = augment_tokens({"charger"}, five, 1.0, FixedPointConfig{3}, v3);
  CHECK(v3.base_size() == 3);
  CHECK(v3.augmented_word(added[0].word) == "charger_5");
}

TEST_CASE("emitted weight per source token stays within the rounding bounds") {
  Rng rng(8);
  for (int trial = 0; trial < 3000; ++trial) {
    const int bits = static_cast<int>(rng.below(17));
    FixedPointConfig cfg{bits};
    const auto tiers = tier_probabilities(1 + static_cast<int>(rng.below(5)),
                                          stats(2.0 * (rng.uniform() - 0.5), rng.uniform(), 2));
    const double quality = 1.0 - rng.uniform();
    AugmentedVocabulary v({"word"});
    const auto toks = augment_tokens({"word"}, tiers, quality, cfg, v);
    double total = 0;
    for (const auto& t : toks) {
      CHECK(t.units > 0);
      total += decode_weight(t.units, cfg);
    }
    // Each of five variants can round up by at most half a unit.
    const double half_unit = std::ldexp(1.0, -(bits + 2));
    CHECK(total <= quality + 5 * half_unit + 1e-15);
    CHECK(total >= quality - 5 * half_unit - 1e-15);
  }
}

TEST_CASE("fewer fractional bits never keep more variants") {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const auto tiers = tier_probabilities(1 + static_cast<int>(rng.below(5)),
                                          stats(2.0 * (rng.uniform() - 0.5), 2.0 * rng.uniform(), 2));
    const double quality = 1.0 - rng.uniform();
    std::size_t prev = 0;
    for (int bits = 0; bits <= 16; ++bits) {
      AugmentedVocabulary v({"w"});
      const auto n = augment_tokens({"w"}, tiers, quality, FixedPointConfig{bits}, v).size();
      CHECK(n >= prev);
      prev = n;
    }
  }
}

TEST_CASE("weighted corpus from an ingested corpus") {
  const auto corpus = build_corpus(synthetic_reviews(30, 16, 2), 1);
  const auto weighted = build_weighted_corpus(corpus, LogisticModel{}, FixedPointConfig{8});
  REQUIRE(weighted.docs.size() == corpus.reviews.size());
  CHECK(weighted.vocab.base_words() == corpus.vocab.words());
  for (std::size_t d = 0; d < weighted.docs.size(); ++d) {
    CHECK(weighted.docs[d].review_id == corpus.reviews[d].review_id);
    const auto n_source = tokenize(corpus.reviews[d].text).words.size();
    std::int64_t total = 0;
    for (const auto& t : weighted.docs[d].tokens) {
      total += t.units;
      CHECK(t.position < n_source);
      const auto [word, tier] = strip_rating_suffix(weighted.vocab.augmented_word(t.word));
      CHECK(corpus.vocab.contains(word));
      CHECK(tier >= 1);
    }
    // Zero relevance model: quality 0.5 per source token.
    CHECK(std::abs(decode_weight(total, weighted.cfg) - 0.5 * static_cast<double>(n_source)) <=
          5 * n_source * weighted.cfg.zero_floor());
  }
}
