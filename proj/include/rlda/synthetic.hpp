#pragma once

// Seeded synthetic corpora: planted-topic weighted corpora for sampler
// checks and benchmarks, and raw review records for pipeline fixtures.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rlda/corpus.hpp"
#include "rlda/transform.hpp"

namespace rlda {

struct PlantedSpec {
  std::size_t docs = 200;
  std::size_t doc_length = 50;      // source tokens per document
  std::size_t topics = 2;           // disjoint vocabularies "t<topic>w<j>"
  std::size_t words_per_topic = 50;
  std::size_t topics_per_doc = 1;   // distinct planted topics mixed per document
  bool fractional = false;          // spread tokens over rating tiers with quality weights
  int w_bits = 8;
  std::uint64_t seed = 1;
};

struct PlantedCorpus {
  WeightedCorpus corpus;
  std::vector<int> base_topic;  // planted topic of each base word
};

/// Without `fractional` every token is one full-weight observation, all at
/// tier 5, so the only structure is the planted one. With it, tokens go
/// through the tier and quality weighting with random ratings, biases and
/// qualities.
PlantedCorpus planted_corpus(const PlantedSpec& spec);

/// Reviews over a few products whose text draws from per-topic word lists.
std::vector<ReviewRecord> synthetic_reviews(std::size_t count, std::size_t words_per_review, std::uint64_t seed);

}  // namespace rlda
