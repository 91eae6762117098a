#include "rlda/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "json.hpp"
#include "rlda/errors.hpp"
#include "rlda/io.hpp"

namespace rlda {

using json = nlohmann::json;

namespace {

std::optional<std::string> id_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return std::nullopt;
}

std::optional<std::int64_t> integral_field(const json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  return std::nullopt;
}

bool fail(std::string* error, std::string msg) {
  if (error) *error = std::move(msg);
  return false;
}

bool fill_native(const json& obj, ReviewRecord& r, std::string* error) {
  static constexpr const char* kKeys[] = {"review_id", "product_id", "user_id", "rating",
                                          "helpful",   "unhelpful",  "text",    "timestamp"};
  for (const char* key : kKeys) {
    if (!obj.contains(key)) return fail(error, std::string("missing key \"") + key + "\"");
  }
  auto rid = id_field(obj, "review_id");
  auto pid = id_field(obj, "product_id");
  auto uid = id_field(obj, "user_id");
  if (!rid || !pid || !uid) return fail(error, "identifier fields must be strings or integers");
  auto rating = integral_field(obj["rating"]);
  auto helpful = integral_field(obj["helpful"]);
  auto unhelpful = integral_field(obj["unhelpful"]);
  auto ts = integral_field(obj["timestamp"]);
  if (!rating || !helpful || !unhelpful || !ts) return fail(error, "numeric fields must be integers");
  if (!obj["text"].is_string()) return fail(error, "text must be a string");
  r.review_id = *rid;
  r.product_id = *pid;
  r.user_id = *uid;
  r.rating = static_cast<int>(std::clamp<std::int64_t>(*rating, -1, 100));
  r.helpful_votes = *helpful;
  r.unhelpful_votes = *unhelpful;
  r.text = obj["text"].get<std::string>();
  r.timestamp = *ts;
  return true;
}

bool fill_snap(const json& obj, ReviewRecord& r, std::string* error) {
  static constexpr const char* kKeys[] = {"reviewerID", "asin", "overall", "reviewText"};
  for (const char* key : kKeys) {
    if (!obj.contains(key)) return fail(error, std::string("missing key \"") + key + "\"");
  }
  auto uid = id_field(obj, "reviewerID");
  auto pid = id_field(obj, "asin");
  if (!uid || !pid) return fail(error, "reviewerID/asin must be strings");
  auto rating = integral_field(obj["overall"]);
  if (!rating) return fail(error, "overall must be a whole number of stars");
  if (!obj["reviewText"].is_string()) return fail(error, "reviewText must be a string");
  std::int64_t helpful = 0, total = 0;
  if (auto it = obj.find("helpful"); it != obj.end()) {
    if (!it->is_array() || it->size() != 2) return fail(error, "helpful must be [helpful, total]");
    auto h = integral_field((*it)[0]);
    auto t = integral_field((*it)[1]);
    if (!h || !t || *t < *h) return fail(error, "helpful must be [helpful, total] with total >= helpful");
    helpful = *h;
    total = *t;
  }
  std::int64_t ts = 0;
  if (auto it = obj.find("unixReviewTime"); it != obj.end()) {
    auto t = integral_field(*it);
    if (!t) return fail(error, "unixReviewTime must be an integer");
    ts = *t;
  }
  r.review_id = *pid + ":" + *uid;
  r.product_id = *pid;
  r.user_id = *uid;
  r.rating = static_cast<int>(std::clamp<std::int64_t>(*rating, -1, 100));
  r.helpful_votes = helpful;
  r.unhelpful_votes = total - helpful;
  r.text = obj["reviewText"].get<std::string>();
  r.timestamp = ts;
  return true;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::optional<ReviewRecord> parse_review_line(std::string_view line, InputFormat format,
                                              std::string* error) {
  json obj = json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) {
    fail(error, "invalid JSON");
    return std::nullopt;
  }
  if (!obj.is_object()) {
    fail(error, "record is not a JSON object");
    return std::nullopt;
  }
  ReviewRecord r;
  const bool ok = format == InputFormat::kSnap ? fill_snap(obj, r, error) : fill_native(obj, r, error);
  if (!ok) return std::nullopt;
  if (r.rating < 1 || r.rating > 5) {
    fail(error, "rating " + std::to_string(r.rating) + " outside 1..5");
    return std::nullopt;
  }
  if (r.helpful_votes < 0 || r.unhelpful_votes < 0) {
    fail(error, "negative vote count");
    return std::nullopt;
  }
  return r;
}

ParseResult parse_reviews(std::istream& in, InputFormat format) {
  if (!in) throw IoError("unreadable review stream");
  ParseResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    std::string error;
    auto rec = parse_review_line(line, format, &error);
    if (rec && !seen.insert(rec->review_id).second) {
      error = "duplicate review_id \"" + rec->review_id + "\"";
      rec.reset();
    }
    if (!rec) {
      ++result.skipped;
      result.diagnostics.push_back({lineno, std::move(error)});
      continue;
    }
    result.records.push_back(std::move(*rec));
  }
  if (in.bad()) throw IoError("read error at line " + std::to_string(lineno + 1));
  return result;
}

ParseResult parse_reviews_file(const std::string& path, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open review file: " + path);
  return parse_reviews(in, format);
}

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Counts UTF-8 code points (continuation bytes excluded).
std::size_t char_count(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](unsigned char c) { return (c & 0xC0) != 0x80; }));
}

}  // namespace

TokenSurface tokenize(std::string_view text) {
  TokenSurface out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && !word_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < n && word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) continue;
    std::string_view raw = text.substr(start, i - start);
    const bool all_digits =
        std::all_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isdigit(c); });
    if (all_digits || char_count(raw) < 2) continue;
    std::string word(raw);
    for (char& c : word) {
      if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    out.words.push_back(std::move(word));
    out.spans.push_back({start, i});
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::uint64_t> frequencies)
    : words_(std::move(words)), frequencies_(std::move(frequencies)) {
  if (frequencies_.size() != words_.size()) {
    throw ValidationError("vocabulary words/frequencies length mismatch");
  }
  index_.reserve(words_.size());
  for (std::uint32_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) {
      throw ValidationError("duplicate vocabulary word: " + words_[i]);
    }
  }
}

std::uint32_t Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kNone : it->second;
}

void accumulate_frequencies(const TokenSurface& tokens, FrequencyMap& freq) {
  for (const auto& w : tokens.words) {
    auto it = freq.find(w);
    if (it == freq.end()) {
      freq.emplace(w, 1);
    } else {
      ++it->second;
    }
  }
}

void merge_frequencies(const FrequencyMap& shard, FrequencyMap& into) {
  for (const auto& [w, c] : shard) into[w] += c;
}

Vocabulary build_vocab(const FrequencyMap& freq, std::uint64_t min_frequency) {
  if (min_frequency < 1) throw ValidationError("min_frequency must be >= 1");
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [w, c] : freq) {
    if (c >= min_frequency) kept.emplace_back(w, c);
  }
  // std::map iteration is already lexicographic; stable sort keeps that for ties.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  words.reserve(kept.size());
  counts.reserve(kept.size());
  for (auto& [w, c] : kept) {
    words.push_back(std::move(w));
    counts.push_back(c);
  }
  return Vocabulary(std::move(words), std::move(counts));
}

Vocabulary build_vocab(const std::vector<TokenSurface>& docs, std::uint64_t min_frequency) {
  FrequencyMap freq;
  for (const auto& d : docs) accumulate_frequencies(d, freq);
  return build_vocab(freq, min_frequency);
}

TokenizedReview index_tokens(const std::string& review_id, const TokenSurface& surface,
                             const Vocabulary& vocab) {
  TokenizedReview out;
  out.review_id = review_id;
  for (std::size_t i = 0; i < surface.words.size(); ++i) {
    const auto idx = vocab.index_of(surface.words[i]);
    if (idx == Vocabulary::kNone) continue;
    out.tokens.push_back(idx);
    out.raw_spans.push_back(surface.spans[i]);
  }
  return out;
}

UserBiasIndex::UserBiasIndex(const std::vector<ReviewRecord>& reviews) : reviews_(&reviews) {
  std::unordered_map<std::string, std::pair<double, std::size_t>> sums;
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    const auto& r = reviews[i];
    auto& s = sums[r.product_id];
    s.first += r.rating;
    s.second += 1;
    by_user_[r.user_id].push_back(i);
    by_id_.emplace(r.review_id, i);
  }
  for (const auto& [pid, s] : sums) product_mean_[pid] = s.first / static_cast<double>(s.second);
}

double UserBiasIndex::product_mean(std::string_view product_id) const {
  auto it = product_mean_.find(std::string(product_id));
  if (it == product_mean_.end()) throw ValidationError("unknown product: " + std::string(product_id));
  return it->second;
}

UserBiasStats UserBiasIndex::user_bias(std::string_view review_id) const {
  auto it = by_id_.find(std::string(review_id));
  if (it == by_id_.end()) throw ValidationError("unknown review_id: " + std::string(review_id));
  return user_bias_at(it->second);
}

UserBiasStats UserBiasIndex::user_bias_at(std::size_t review_index) const {
  const auto& reviews = *reviews_;
  const auto& self = reviews.at(review_index);
  const auto& mine = by_user_.at(self.user_id);
  std::vector<double> biases;
  biases.reserve(mine.size());
  for (std::size_t j : mine) {
    if (j == review_index) continue;
    biases.push_back(reviews[j].rating - product_mean_.at(reviews[j].product_id));
  }
  UserBiasStats out;
  out.n_other = biases.size();
  if (biases.empty()) return out;
  const double n = static_cast<double>(biases.size());
  out.mean = std::accumulate(biases.begin(), biases.end(), 0.0) / n;
  if (biases.size() > 1) {
    double ss = 0.0;
    for (double b : biases) ss += (b - out.mean) * (b - out.mean);
    out.variance = ss / n;
  }
  return out;
}

UserBiasStats user_bias(const std::vector<ReviewRecord>& corpus, std::string_view review_id) {
  return UserBiasIndex(corpus).user_bias(review_id);
}

double punctuation_correctness(std::string_view text) {
  auto is_term = [](char c) { return c == '.' || c == '!' || c == '?'; };
  std::vector<std::string_view> segments;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i <= n) {
    std::size_t j = i;
    while (j < n && !is_term(text[j])) ++j;
    segments.push_back(text.substr(i, j - i));
    if (j >= n) break;
    while (j < n && is_term(text[j])) ++j;
    i = j;
    if (i == n) break;
  }
  if (!segments.empty() && is_blank(segments.back())) segments.pop_back();
  if (segments.empty()) return 1.0;
  std::size_t good = 0;
  for (auto seg : segments) {
    auto it = std::find_if(seg.begin(), seg.end(), [](unsigned char c) { return !std::isspace(c); });
    if (it == seg.end()) continue;
    const auto c = static_cast<unsigned char>(*it);
    if (std::isalpha(c) || c >= 0x80) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(segments.size());
}

WritingQualityFeatures writing_quality(const ReviewRecord& review, const Vocabulary& vocab,
                                       const QualityWeights& weights) {
  WritingQualityFeatures f;
  const auto surface = tokenize(review.text);
  if (!surface.words.empty()) {
    std::size_t oov = 0, chars = 0;
    for (const auto& w : surface.words) {
      if (!vocab.contains(w)) ++oov;
      chars += char_count(w);
    }
    const double n = static_cast<double>(surface.words.size());
    f.oov_rate = static_cast<double>(oov) / n;
    f.avg_word_length = static_cast<double>(chars) / n;
  }
  f.punctuation_correctness = punctuation_correctness(review.text);
  f.nu = (1.0 - f.oov_rate) * weights.oov + f.punctuation_correctness * weights.punctuation +
         std::min(f.avg_word_length / weights.word_length_cap, 1.0) * weights.word_length;
  return f;
}

std::size_t Corpus::find(std::string_view review_id) const {
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    if (reviews[i].review_id == review_id) return i;
  }
  return npos;
}

void refresh_auxiliary(Corpus& corpus, const QualityWeights& weights) {
  UserBiasIndex index(corpus.reviews);
  corpus.bias.resize(corpus.reviews.size());
  corpus.quality.resize(corpus.reviews.size());
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    corpus.bias[i] = index.user_bias_at(i);
    corpus.quality[i] = writing_quality(corpus.reviews[i], corpus.vocab, weights);
  }
}

Corpus build_corpus(std::vector<ReviewRecord> reviews, std::uint64_t min_frequency,
                    const QualityWeights& weights) {
  Corpus c;
  c.reviews = std::move(reviews);
  c.min_frequency = min_frequency;
  FrequencyMap freq;
  for (const auto& r : c.reviews) accumulate_frequencies(tokenize(r.text), freq);
  c.vocab = build_vocab(freq, min_frequency);
  refresh_auxiliary(c, weights);
  return c;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  json doc;
  doc["format"] = "rlda-corpus";
  doc["version"] = 1;
  doc["min_frequency"] = corpus.min_frequency;
  json vocab = json::array();
  for (std::uint32_t i = 0; i < corpus.vocab.size(); ++i) {
    vocab.push_back(json::array({corpus.vocab.word(i), corpus.vocab.frequency(i)}));
  }
  doc["vocab"] = std::move(vocab);
  json reviews = json::array();
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    const auto& r = corpus.reviews[i];
    json o;
    o["review_id"] = r.review_id;
    o["product_id"] = r.product_id;
    o["user_id"] = r.user_id;
    o["rating"] = r.rating;
    o["helpful"] = r.helpful_votes;
    o["unhelpful"] = r.unhelpful_votes;
    o["text"] = r.text;
    o["timestamp"] = r.timestamp;
    const auto& b = corpus.bias.at(i);
    o["bias"] = json::array({b.mean, b.variance, b.n_other});
    const auto& q = corpus.quality.at(i);
    o["quality"] = json::array({q.oov_rate, q.punctuation_correctness, q.avg_word_length, q.nu});
    reviews.push_back(std::move(o));
  }
  doc["reviews"] = std::move(reviews);
  write_file_atomic(path, doc.dump(1) + "\n");
}

Corpus load_corpus(const std::string& path) {
  const std::string text = read_file(path);
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || doc.value("format", "") != "rlda-corpus") {
    throw ValidationError("not a corpus container: " + path);
  }
  if (doc.value("version", 0) != 1) throw ValidationError("unsupported corpus version in " + path);
  try {
    Corpus c;
    c.min_frequency = doc.at("min_frequency").get<std::uint64_t>();
    std::vector<std::string> words;
    std::vector<std::uint64_t> freqs;
    for (const auto& e : doc.at("vocab")) {
      words.push_back(e.at(0).get<std::string>());
      freqs.push_back(e.at(1).get<std::uint64_t>());
    }
    c.vocab = Vocabulary(std::move(words), std::move(freqs));
    for (const auto& o : doc.at("reviews")) {
      ReviewRecord r;
      r.review_id = o.at("review_id").get<std::string>();
      r.product_id = o.at("product_id").get<std::string>();
      r.user_id = o.at("user_id").get<std::string>();
      r.rating = o.at("rating").get<int>();
      r.helpful_votes = o.at("helpful").get<std::int64_t>();
      r.unhelpful_votes = o.at("unhelpful").get<std::int64_t>();
      r.text = o.at("text").get<std::string>();
      r.timestamp = o.at("timestamp").get<std::int64_t>();
      const auto& b = o.at("bias");
      c.bias.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<std::size_t>()});
      const auto& q = o.at("quality");
      c.quality.push_back(
          {q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>()});
      c.reviews.push_back(std::move(r));
    }
    return c;
  } catch (const json::exception& e) {
    throw ValidationError("malformed corpus container " + path + ": " + e.what());
  }
}

}  // namespace rlda
