#include "rlda/transform.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

#include "rlda/errors.hpp"
#include "rlda/relevance.hpp"

namespace rlda {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

TierDistribution tier_probabilities(int rating, const UserBiasStats& bias) {
  if (rating < 1 || rating > kTiers) throw ValidationError("rating outside 1..5");
  TierDistribution out;
  if (bias.n_other == 0) {
    out.c[static_cast<std::size_t>(rating - 1)] = 1.0;
    return out;
  }
  const double mean = rating + bias.mean;
  const double sd = std::sqrt(bias.variance + 1.0);
  static constexpr std::array<double, kTiers - 1> kCuts = {1.5, 2.5, 3.5, 4.5};
  // Each interval is evaluated on the tail where it is small, so erfc keeps
  // full relative precision far from the mean.
  auto interval = [&](double lo, double hi) {
    const double a = (lo - mean) / sd;
    const double b = (hi - mean) / sd;
    if (a >= 0.0) return normal_cdf(-a) - normal_cdf(-b);
    return normal_cdf(b) - normal_cdf(a);
  };
  out.c[0] = normal_cdf((kCuts[0] - mean) / sd);
  for (std::size_t t = 1; t + 1 < kTiers; ++t) out.c[t] = interval(kCuts[t - 1], kCuts[t]);
  out.c[kTiers - 1] = normal_cdf((mean - kCuts[kTiers - 2]) / sd);
  for (double& c : out.c) c = std::max(c, 0.0);
  return out;
}

void FixedPointConfig::validate() const {
  if (w_bits < 0 || w_bits > 16) throw ValidationError("w_bits must be in 0..16");
}

std::int64_t encode_weight(double w, const FixedPointConfig& cfg) {
  cfg.validate();
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("weight outside [0, 1]");
  return static_cast<std::int64_t>(std::floor(w * static_cast<double>(cfg.scale()) + 0.5));
}

double decode_weight(std::int64_t units, const FixedPointConfig& cfg) {
  return static_cast<double>(units) / static_cast<double>(cfg.scale());
}

std::string rating_suffixed(std::string_view word, int tier) {
  std::string out(word);
  out += '_';
  out += static_cast<char>('0' + tier);
  return out;
}

std::pair<std::string, int> strip_rating_suffix(std::string_view augmented_word) {
  const auto pos = augmented_word.rfind('_');
  if (pos == std::string_view::npos || pos == 0 || pos + 2 != augmented_word.size()) {
    throw ValidationError("malformed rating suffix: " + std::string(augmented_word));
  }
  const char d = augmented_word[pos + 1];
  if (d < '1' || d > '5') throw ValidationError("malformed rating suffix: " + std::string(augmented_word));
  return {std::string(augmented_word.substr(0, pos)), d - '0'};
}

AugmentedVocabulary::AugmentedVocabulary(std::vector<std::string> base_words) {
  for (auto& w : base_words) add_base(std::move(w));
}

std::uint32_t AugmentedVocabulary::base_index(std::string_view word) const {
  auto it = base_index_.find(std::string(word));
  return it == base_index_.end() ? kNone : it->second;
}

std::uint32_t AugmentedVocabulary::add_base(std::string word) {
  auto [it, inserted] = base_index_.emplace(word, static_cast<std::uint32_t>(base_words_.size()));
  if (inserted) base_words_.push_back(std::move(word));
  return it->second;
}

std::uint32_t AugmentedVocabulary::find(std::uint32_t base, int tier) const {
  auto it = entry_index_.find(key(base, tier));
  return it == entry_index_.end() ? kNone : it->second;
}

std::uint32_t AugmentedVocabulary::intern(std::uint32_t base, int tier) {
  if (base >= base_words_.size() || tier < 1 || tier > kTiers) {
    throw ValidationError("augmented entry out of range");
  }
  auto [it, inserted] = entry_index_.emplace(key(base, tier), static_cast<std::uint32_t>(entries_.size()));
  if (inserted) entries_.push_back({base, tier});
  return it->second;
}

std::string AugmentedVocabulary::augmented_word(std::uint32_t id) const {
  const auto& e = entry(id);
  return rating_suffixed(base_words_.at(e.base), e.tier);
}

std::size_t WeightedCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.tokens.size();
  return n;
}

std::vector<WeightedToken> augment_tokens(const std::vector<std::string>& words,
                                          const TierDistribution& tiers, double quality,
                                          const FixedPointConfig& cfg, AugmentedVocabulary& vocab) {
  if (!(quality > 0.0 && quality <= 1.0)) throw ValidationError("quality weight must be in (0, 1]");
  std::array<std::int64_t, kTiers> units{};
  for (int t = 1; t <= kTiers; ++t) {
    units[static_cast<std::size_t>(t - 1)] = encode_weight(std::clamp(quality * tiers[t], 0.0, 1.0), cfg);
  }
  std::vector<WeightedToken> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto base = vocab.add_base(words[i]);
    for (int t = 1; t <= kTiers; ++t) {
      const auto u = units[static_cast<std::size_t>(t - 1)];
      if (u == 0) continue;
      out.push_back({vocab.intern(base, t), u, static_cast<std::uint32_t>(i)});
    }
  }
  return out;
}

void append_weighted_documents(const Corpus& corpus, std::size_t first, const LogisticModel& relevance,
                               bool admit_new_words, WeightedCorpus& out) {
  for (std::size_t i = first; i < corpus.reviews.size(); ++i) {
    const auto& r = corpus.reviews[i];
    const auto surface = tokenize(r.text);
    std::vector<std::string> words;
    words.reserve(surface.words.size());
    for (const auto& w : surface.words) {
      if (admit_new_words || corpus.vocab.contains(w)) words.push_back(w);
    }
    const auto tiers = tier_probabilities(r.rating, corpus.bias.at(i));
    const double quality = predict_quality(relevance, corpus.quality.at(i).nu,
                                           static_cast<double>(r.helpful_votes),
                                           static_cast<double>(r.unhelpful_votes));
    WeightedDocument doc;
    doc.review_id = r.review_id;
    doc.tokens = augment_tokens(words, tiers, quality, out.cfg, out.vocab);
    out.docs.push_back(std::move(doc));
  }
}

WeightedCorpus build_weighted_corpus(const Corpus& corpus, const LogisticModel& relevance,
                                     const FixedPointConfig& cfg) {
  cfg.validate();
  WeightedCorpus out;
  out.cfg = cfg;
  out.vocab = AugmentedVocabulary(corpus.vocab.words());
  append_weighted_documents(corpus, 0, relevance, false, out);
  return out;
}

}  // namespace rlda
