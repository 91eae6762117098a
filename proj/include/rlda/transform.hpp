#pragma once

// Reduction of reviews plus auxiliary signals to weighted, rating-suffixed
// word observations with fixed-point fractional weights.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rlda/corpus.hpp"

namespace rlda {

inline constexpr int kTiers = 5;

/// Probabilities of the five rating tiers (index 0 is tier 1).
struct TierDistribution {
  std::array<double, kTiers> c{};
  double operator[](int tier) const { return c.at(static_cast<std::size_t>(tier - 1)); }
};

/// Standard normal CDF, 0.5*erfc(-x/sqrt 2).
double normal_cdf(double x);

/// Interval probabilities of N(r + b, sigma^2 + 1) at cut points
/// 1.5/2.5/3.5/4.5. A user without other reviews gets the one-hot tier of
/// the given rating. Throws ValidationError if rating is outside 1..5.
TierDistribution tier_probabilities(int rating, const UserBiasStats& bias);

/// Fixed-point weights: one unit is 2^-(w_bits+1); anything that rounds to
/// zero units (real weight below 2^-(w_bits+2)) is dropped.
struct FixedPointConfig {
  int w_bits = 8;

  std::int64_t scale() const { return std::int64_t{1} << (w_bits + 1); }
  double zero_floor() const { return 1.0 / static_cast<double>(std::int64_t{1} << (w_bits + 2)); }
  void validate() const;
};

/// Round-half-up of w * 2^(w_bits+1). Throws ValidationError unless 0 <= w <= 1.
std::int64_t encode_weight(double w, const FixedPointConfig& cfg);
double decode_weight(std::int64_t units, const FixedPointConfig& cfg);

/// "{word}_{tier}"
std::string rating_suffixed(std::string_view word, int tier);

/// Inverse of rating_suffixed. Throws ValidationError if the text after the
/// last '_' is not a single digit 1..5 or the base word is empty.
std::pair<std::string, int> strip_rating_suffix(std::string_view augmented_word);

/// word x tier ids. Base words keep the ingestion vocabulary order; new
/// words (model updates) are appended.
class AugmentedVocabulary {
 public:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  struct Entry {
    std::uint32_t base = 0;
    int tier = 1;
    bool operator==(const Entry&) const = default;
  };

  AugmentedVocabulary() = default;
  explicit AugmentedVocabulary(std::vector<std::string> base_words);

  std::uint32_t base_index(std::string_view word) const;
  std::uint32_t add_base(std::string word);  // existing index if present

  std::uint32_t find(std::uint32_t base, int tier) const;
  std::uint32_t intern(std::uint32_t base, int tier);  // appends if absent

  std::size_t size() const { return entries_.size(); }
  std::size_t base_size() const { return base_words_.size(); }
  const Entry& entry(std::uint32_t id) const { return entries_.at(id); }
  const std::string& base_word(std::uint32_t base) const { return base_words_.at(base); }
  std::string augmented_word(std::uint32_t id) const;

  const std::vector<std::string>& base_words() const { return base_words_; }
  const std::vector<Entry>& entries() const { return entries_; }

  bool operator==(const AugmentedVocabulary& o) const {
    return base_words_ == o.base_words_ && entries_ == o.entries_;
  }

 private:
  static std::uint64_t key(std::uint32_t base, int tier) {
    return (std::uint64_t{base} << 3) | static_cast<std::uint64_t>(tier);
  }

  std::vector<std::string> base_words_;
  std::unordered_map<std::string, std::uint32_t> base_index_;
  std::vector<Entry> entries_;
  std::unordered_map<std::uint64_t, std::uint32_t> entry_index_;
};

struct WeightedToken {
  std::uint32_t word = 0;     // augmented vocabulary id
  std::int64_t units = 0;     // fixed-point weight, > 0
  std::uint32_t position = 0; // index of the source token in its review
  bool operator==(const WeightedToken&) const = default;
};

struct WeightedDocument {
  std::string review_id;
  std::vector<WeightedToken> tokens;
  bool operator==(const WeightedDocument&) const = default;
};

struct WeightedCorpus {
  FixedPointConfig cfg;
  AugmentedVocabulary vocab;
  std::vector<WeightedDocument> docs;

  std::size_t token_count() const;
};

/// Emits "w_t" for every tier with nonzero encoded weight quality * c_t.
/// Base words not yet in the vocabulary are appended to it. Throws
/// ValidationError unless 0 < quality <= 1.
std::vector<WeightedToken> augment_tokens(const std::vector<std::string>& words,
                                          const TierDistribution& tiers, double quality,
                                          const FixedPointConfig& cfg, AugmentedVocabulary& vocab);

struct LogisticModel;

/// Runs tiers, quality, and augmentation over reviews [first, corpus.reviews.size())
/// and appends the resulting documents to `out`. OOV words (not in
/// corpus.vocab) are skipped unless `admit_new_words` is set, in which case
/// they join the augmented vocabulary.
void append_weighted_documents(const Corpus& corpus, std::size_t first, const LogisticModel& relevance,
                               bool admit_new_words, WeightedCorpus& out);

WeightedCorpus build_weighted_corpus(const Corpus& corpus, const LogisticModel& relevance,
                                     const FixedPointConfig& cfg);

}  // namespace rlda
