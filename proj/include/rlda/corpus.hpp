#pragma once

// Review ingestion: JSON-lines parsing, tokenization, vocabulary, and the
// per-review auxiliary statistics (user rating bias, writing quality).

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rlda {

struct ReviewRecord {
  std::string review_id;
  std::string product_id;
  std::string user_id;
  int rating = 0;  // stars, 1..5
  std::int64_t helpful_votes = 0;
  std::int64_t unhelpful_votes = 0;
  std::string text;
  std::int64_t timestamp = 0;
};

enum class InputFormat {
  kNative,  // {"review_id","product_id","user_id","rating","helpful","unhelpful","text","timestamp"}
  kSnap,    // SNAP/McAuley Amazon dumps: reviewerID, asin, overall, helpful:[h,total], ...
};

struct ParseDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParseResult {
  std::vector<ReviewRecord> records;
  std::size_t skipped = 0;
  std::vector<ParseDiagnostic> diagnostics;
};

/// Parses one record per line. Blank lines are ignored; malformed lines
/// (bad JSON, missing keys, rating outside 1..5, negative votes, duplicate
/// review_id) are skipped and reported. Throws IoError if the stream fails.
ParseResult parse_reviews(std::istream& in, InputFormat format = InputFormat::kNative);

/// Same, reading from a file path.
ParseResult parse_reviews_file(const std::string& path, InputFormat format = InputFormat::kNative);

/// Decodes one line; std::nullopt plus a message if malformed.
std::optional<ReviewRecord> parse_review_line(std::string_view line, InputFormat format,
                                              std::string* error = nullptr);

struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const ByteSpan&) const = default;
};

/// Surface tokens with their byte ranges into the source text.
struct TokenSurface {
  std::vector<std::string> words;
  std::vector<ByteSpan> spans;
};

/// Lowercases ASCII, splits on anything that is not an ASCII letter or digit
/// (bytes >= 0x80 are kept as word characters), drops all-digit tokens and
/// tokens shorter than two characters.
TokenSurface tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  Vocabulary() = default;

  /// Words must be distinct; index order is taken as given.
  Vocabulary(std::vector<std::string> words, std::vector<std::uint64_t> frequencies);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

  std::uint32_t index_of(std::string_view word) const;
  bool contains(std::string_view word) const { return index_of(word) != kNone; }

  const std::string& word(std::uint32_t index) const { return words_.at(index); }
  std::uint64_t frequency(std::uint32_t index) const { return frequencies_.at(index); }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::uint64_t>& frequencies() const { return frequencies_; }

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Frequency table for one shard of tokenized text. Shards are merged by
/// summation, which is order-independent.
using FrequencyMap = std::map<std::string, std::uint64_t, std::less<>>;

void accumulate_frequencies(const TokenSurface& tokens, FrequencyMap& freq);
void merge_frequencies(const FrequencyMap& shard, FrequencyMap& into);

/// Keeps words seen at least min_frequency times, ordered by descending
/// frequency with lexicographic tie-break. Throws ValidationError if
/// min_frequency < 1.
Vocabulary build_vocab(const FrequencyMap& freq, std::uint64_t min_frequency);
Vocabulary build_vocab(const std::vector<TokenSurface>& docs, std::uint64_t min_frequency);

struct TokenizedReview {
  std::string review_id;
  std::vector<std::uint32_t> tokens;  // vocabulary indices; OOV dropped
  std::vector<ByteSpan> raw_spans;    // parallel to tokens
};

TokenizedReview index_tokens(const std::string& review_id, const TokenSurface& surface,
                             const Vocabulary& vocab);

struct UserBiasStats {
  double mean = 0.0;      // b_d, stars
  double variance = 0.0;  // sigma^2_d, population variance, stars^2
  std::size_t n_other = 0;
  bool operator==(const UserBiasStats&) const = default;
};

/// Precomputed product means and per-user review lists for user_bias
/// queries. Rating bias of a review is its rating minus the corpus mean
/// rating of its product.
class UserBiasIndex {
 public:
  explicit UserBiasIndex(const std::vector<ReviewRecord>& reviews);

  /// Mean and population variance of the rating biases of every other
  /// review by the same user. Throws ValidationError on unknown id.
  UserBiasStats user_bias(std::string_view review_id) const;
  UserBiasStats user_bias_at(std::size_t review_index) const;

  double product_mean(std::string_view product_id) const;

 private:
  const std::vector<ReviewRecord>* reviews_;
  std::unordered_map<std::string, double> product_mean_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

UserBiasStats user_bias(const std::vector<ReviewRecord>& corpus, std::string_view review_id);

struct QualityWeights {
  double oov = 0.5;
  double punctuation = 0.3;
  double word_length = 0.2;
  double word_length_cap = 8.0;
};

struct WritingQualityFeatures {
  double oov_rate = 0.0;
  double punctuation_correctness = 1.0;
  double avg_word_length = 0.0;
  double nu = 0.0;
};

/// Fraction of sentence segments (runs of . ! ? delimit) whose first
/// non-space character is a letter. A trailing blank segment is not
/// counted; text without segments scores 1.
double punctuation_correctness(std::string_view text);

WritingQualityFeatures writing_quality(const ReviewRecord& review, const Vocabulary& vocab,
                                       const QualityWeights& weights = {});

/// Everything ingestion produces; serialized as the corpus container.
struct Corpus {
  std::vector<ReviewRecord> reviews;
  Vocabulary vocab;
  std::vector<UserBiasStats> bias;               // parallel to reviews
  std::vector<WritingQualityFeatures> quality;   // parallel to reviews
  std::uint64_t min_frequency = 1;

  std::size_t find(std::string_view review_id) const;  // npos if absent
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// parse -> tokenize -> vocab -> bias/quality for every review.
Corpus build_corpus(std::vector<ReviewRecord> reviews, std::uint64_t min_frequency,
                    const QualityWeights& weights = {});

/// Recomputes bias and quality after reviews were appended; keeps vocab.
void refresh_auxiliary(Corpus& corpus, const QualityWeights& weights = {});

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace rlda
