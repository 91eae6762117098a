#pragma once

// Bandwidth-reduced model views: per-topic summaries with top base words,
// topic-sorted review ranking, and keyword highlight spans. Views carry ids
// and words only; review text is fetched separately by id.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlda/corpus.hpp"
#include "rlda/sampler.hpp"

namespace rlda {

struct TopicWord {
  std::string word;  // base word, suffix stripped
  std::uint32_t base = 0;
  double weight = 0.0;
};

struct TopicSummary {
  int topic_id = 0;
  double probability = 0.0;
  double expected_rating = 0.0;
  double expected_helpfulness = 0.0;
  double expected_unhelpfulness = 0.0;
  std::vector<TopicWord> top_words;
};

/// Per-document signals joined from the corpus, in model document order.
struct DocumentSignals {
  Eigen::VectorXd corrected_rating;  // r_d + b_d clamped to [1, 5]
  Eigen::VectorXd helpful;
  Eigen::VectorXd unhelpful;
};

/// Throws ValidationError if a model document has no corpus review.
DocumentSignals document_signals(const TopicModelState& state, const Corpus& corpus);

/// Topic mass n_t / sum n_t.
Eigen::VectorXd topic_mass(const TopicModelState& state);

/// phi summed over the tier variants of each base word (k x base words).
Eigen::MatrixXd base_word_phi(const TopicModelState& state, const Hyperparams& hyper);

std::vector<TopicSummary> build_view(const TopicModelState& state, const Hyperparams& hyper,
                                     const DocumentSignals& signals, std::size_t n_top);
std::vector<TopicSummary> build_view(const TopicModelState& state, const Hyperparams& hyper, const Corpus& corpus,
                                     std::size_t n_top);

/// Review ids by theta_{d,topic} descending, ties by review id ascending.
/// Throws ValidationError for an unknown topic.
std::vector<std::string> rank_reviews(const TopicModelState& state, const Hyperparams& hyper, int topic);

struct HighlightSpan {
  std::string review_id;
  std::size_t byte_start = 0;
  std::size_t byte_end = 0;
  std::string keyword;
  bool operator==(const HighlightSpan&) const = default;
};

/// True if the first min(4, |keyword|) characters of both agree ignoring
/// ASCII case, and the token is at least that long.
bool stem_prefix_match(std::string_view token, std::string_view keyword);

/// Spans of tokens matching any keyword; where candidates overlap the one
/// starting first wins, then the keyword listed first.
std::vector<HighlightSpan> highlight(const std::string& review_id, std::string_view text,
                                     const std::vector<std::string>& keywords);

/// Versioned JSON document with TopicSummary fields only.
std::string serialize_view(const std::vector<TopicSummary>& view);

}  // namespace rlda
