#include "rlda/model_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "json.hpp"
#include "rlda/errors.hpp"
#include "rlda/io.hpp"

namespace rlda {

namespace {

constexpr char kTextMagic[] = "rlda-model";
constexpr char kBinaryMagic[8] = {'R', 'L', 'D', 'A', 'M', 'D', 'L', '\x01'};
constexpr std::uint32_t kVersion = 1;

void append_double(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

// Whitespace-separated reader over one text container.
class TextReader {
 public:
  explicit TextReader(std::string_view text) : text_(text) {}

  std::string_view word() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("unexpected end of input");
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view keyword) {
    const auto got = word();
    if (got != keyword) fail("expected '" + std::string(keyword) + "', found '" + std::string(got) + "'");
  }

  template <typename T>
  T number() {
    const auto w = word();
    T v{};
    auto [end, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || end != w.data() + w.size()) fail("bad number '" + std::string(w) + "'");
    return v;
  }

  std::string line() {
    if (pos_ < text_.size() && text_[pos_] == '\n') ++pos_;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  /// Remainder of the current line, parsed as a JSON string.
  std::string json_string() {
    skip_inline_space();
    const auto rest = line();
    auto v = nlohmann::json::parse(rest, nullptr, false);
    if (v.is_discarded() || !v.is_string()) fail("expected a quoted string");
    return v.get<std::string>();
  }

  [[noreturn]] void fail(const std::string& msg) const {
    std::size_t lineno = 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos_), '\n'));
    throw ValidationError("model text, line " + std::to_string(lineno) + ": " + msg);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  void skip_inline_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  const char* raw(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw ValidationError("model binary truncated at offset " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(*raw(1)); }
  std::uint32_t u32() {
    const auto* p = reinterpret_cast<const unsigned char*>(raw(4));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = reinterpret_cast<const unsigned char*>(raw(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    return std::string(raw(n), n);
  }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// Upper bound for counts read from a file before allocating.
void check_count(std::uint64_t n, std::uint64_t limit, const char* what) {
  if (n > limit) throw ValidationError(std::string("implausible ") + what + " count in model container");
}

void finish(ModelContainer& m) {
  auto& s = m.state;
  s.cfg.validate();
  m.hyper.validate(s.k, s.vocab.size());
  if (s.topic_totals.size() != static_cast<std::size_t>(s.k)) s.topic_totals.assign(static_cast<std::size_t>(s.k), 0);
  std::fill(s.topic_totals.begin(), s.topic_totals.end(), 0);
  for (const auto& row : s.word_topic) {
    for (const auto& e : row.entries()) {
      if (e.topic >= static_cast<TopicId>(s.k)) throw ConsistencyError("model container: topic id out of range");
      s.topic_totals[e.topic] += e.units;
    }
  }
  s.check_consistency();
}

}  // namespace

std::string to_text(const ModelContainer& model) {
  const auto& s = model.state;
  const auto& h = model.hyper;
  std::string out;
  out += kTextMagic;
  out += " " + std::to_string(kVersion) + "\n";
  out += "k " + std::to_string(s.k) + "\n";
  out += "vocab_size " + std::to_string(s.vocab.size()) + "\n";
  out += "w_bits " + std::to_string(s.cfg.w_bits) + "\n";
  out += "iteration " + std::to_string(s.iteration) + "\n";
  out += "seed " + std::to_string(s.seed) + "\n";
  out += "updates " + std::to_string(s.updates) + "\n";
  out += "alpha";
  for (Eigen::Index t = 0; t < h.alpha.size(); ++t) {
    out += ' ';
    append_double(out, h.alpha(t));
  }
  out += "\nbeta_bar ";
  append_double(out, h.beta_bar);
  out += "\nbeta";
  for (Eigen::Index w = 0; w < h.beta.size(); ++w) {
    out += ' ';
    append_double(out, h.beta(w));
  }
  out += "\nbase_words " + std::to_string(s.vocab.base_size()) + "\n";
  for (const auto& w : s.vocab.base_words()) out += w + "\n";
  out += "augmented " + std::to_string(s.vocab.size()) + "\n";
  for (const auto& e : s.vocab.entries()) out += std::to_string(e.base) + " " + std::to_string(e.tier) + "\n";
  std::size_t triples = 0;
  for (const auto& row : s.word_topic) triples += row.size();
  out += "word_topic " + std::to_string(triples) + "\n";
  for (std::size_t w = 0; w < s.word_topic.size(); ++w) {
    for (const auto& e : s.word_topic[w].entries()) {
      out += std::to_string(e.topic) + " " + std::to_string(w) + " " + std::to_string(e.units) + "\n";
    }
  }
  out += "documents " + std::to_string(s.docs.size()) + "\n";
  for (std::size_t d = 0; d < s.docs.size(); ++d) {
    const auto& doc = s.docs[d];
    out += "doc " + std::to_string(s.doc_topic[d].size()) + " " + std::to_string(doc.tokens.size()) + " " +
           quoted(doc.review_id) + "\ntopics";
    for (const auto& e : s.doc_topic[d].entries()) out += " " + std::to_string(e.topic) + ":" + std::to_string(e.units);
    out += "\n";
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      const auto& t = doc.tokens[i];
      out += std::to_string(t.word) + " " + std::to_string(t.units) + " " + std::to_string(t.position) + " " +
             std::to_string(s.z[d][i]) + "\n";
    }
  }
  out += "relevance";
  for (int i = 0; i < 4; ++i) {
    out += ' ';
    append_double(out, model.relevance.weights(i));
  }
  out += "\nend\n";
  return out;
}

ModelContainer from_text(std::string_view text) {
  TextReader in(text);
  in.expect(kTextMagic);
  if (in.number<std::uint32_t>() != kVersion) in.fail("unsupported version");
  ModelContainer m;
  auto& s = m.state;
  in.expect("k");
  s.k = in.number<int>();
  if (s.k < 1 || s.k > (1 << 20)) in.fail("k out of range");
  in.expect("vocab_size");
  const auto V = in.number<std::size_t>();
  check_count(V, text.size(), "vocabulary");
  in.expect("w_bits");
  s.cfg.w_bits = in.number<int>();
  in.expect("iteration");
  s.iteration = in.number<std::uint64_t>();
  in.expect("seed");
  s.seed = in.number<std::uint64_t>();
  in.expect("updates");
  s.updates = in.number<std::uint64_t>();
  in.expect("alpha");
  m.hyper.alpha.resize(s.k);
  for (int t = 0; t < s.k; ++t) m.hyper.alpha(t) = in.number<double>();
  in.expect("beta_bar");
  m.hyper.beta_bar = in.number<double>();
  in.expect("beta");
  m.hyper.beta.resize(static_cast<Eigen::Index>(V));
  for (std::size_t w = 0; w < V; ++w) m.hyper.beta(static_cast<Eigen::Index>(w)) = in.number<double>();
  in.expect("base_words");
  const auto n_base = in.number<std::size_t>();
  check_count(n_base, text.size(), "base word");
  std::vector<std::string> base;
  base.reserve(n_base);
  for (std::size_t i = 0; i < n_base; ++i) {
    auto w = in.line();
    if (w.empty()) in.fail("empty base word");
    base.push_back(std::move(w));
  }
  s.vocab = AugmentedVocabulary(std::move(base));
  if (s.vocab.base_size() != n_base) in.fail("duplicate base word");
  in.expect("augmented");
  if (in.number<std::size_t>() != V) in.fail("augmented size differs from vocab_size");
  for (std::size_t i = 0; i < V; ++i) {
    const auto b = in.number<std::uint32_t>();
    const auto t = in.number<int>();
    if (b >= s.vocab.base_size() || t < 1 || t > kTiers) in.fail("augmented entry out of range");
    if (s.vocab.intern(b, t) != i) in.fail("duplicate augmented entry");
  }
  s.word_topic.assign(V, {});
  in.expect("word_topic");
  const auto triples = in.number<std::size_t>();
  check_count(triples, text.size(), "word-topic");
  for (std::size_t i = 0; i < triples; ++i) {
    const auto t = in.number<TopicId>();
    const auto w = in.number<std::size_t>();
    const auto u = in.number<Units>();
    if (w >= V) in.fail("word id out of range");
    s.word_topic[w].push_back({t, u});
  }
  in.expect("documents");
  const auto D = in.number<std::size_t>();
  check_count(D, text.size(), "document");
  s.docs.resize(D);
  s.z.resize(D);
  s.doc_topic.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    in.expect("doc");
    const auto ntopics = in.number<std::size_t>();
    const auto ntokens = in.number<std::size_t>();
    check_count(ntopics, text.size(), "document-topic");
    check_count(ntokens, text.size(), "token");
    s.docs[d].review_id = in.json_string();
    in.expect("topics");
    for (std::size_t i = 0; i < ntopics; ++i) {
      const auto pair = in.word();
      const auto colon = pair.find(':');
      if (colon == std::string_view::npos) in.fail("expected topic:units");
      TopicId t{};
      Units u{};
      auto r1 = std::from_chars(pair.data(), pair.data() + colon, t);
      auto r2 = std::from_chars(pair.data() + colon + 1, pair.data() + pair.size(), u);
      if (r1.ec != std::errc() || r2.ec != std::errc() || r2.ptr != pair.data() + pair.size()) {
        in.fail("bad topic:units pair");
      }
      s.doc_topic[d].push_back({t, u});
    }
    auto& toks = s.docs[d].tokens;
    toks.resize(ntokens);
    s.z[d].resize(ntokens);
    for (std::size_t i = 0; i < ntokens; ++i) {
      toks[i].word = in.number<std::uint32_t>();
      toks[i].units = in.number<Units>();
      toks[i].position = in.number<std::uint32_t>();
      s.z[d][i] = in.number<TopicId>();
    }
  }
  in.expect("relevance");
  for (int i = 0; i < 4; ++i) m.relevance.weights(i) = in.number<double>();
  in.expect("end");
  finish(m);
  return m;
}

std::string to_binary(const ModelContainer& model) {
  const auto& s = model.state;
  const auto& h = model.hyper;
  ByteWriter out;
  out.raw(kBinaryMagic, sizeof kBinaryMagic);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(s.k));
  out.u32(static_cast<std::uint32_t>(s.vocab.size()));
  out.u32(static_cast<std::uint32_t>(s.cfg.w_bits));
  out.u64(s.iteration);
  out.u64(s.seed);
  out.u64(s.updates);
  out.u64(s.docs.size());
  out.f64(h.beta_bar);
  for (Eigen::Index t = 0; t < h.alpha.size(); ++t) out.f64(h.alpha(t));
  for (Eigen::Index w = 0; w < h.beta.size(); ++w) out.f64(h.beta(w));
  out.u32(static_cast<std::uint32_t>(s.vocab.base_size()));
  for (const auto& w : s.vocab.base_words()) out.str(w);
  for (const auto& e : s.vocab.entries()) {
    out.u32(e.base);
    out.u8(static_cast<std::uint8_t>(e.tier));
  }
  std::uint64_t triples = 0;
  for (const auto& row : s.word_topic) triples += row.size();
  out.u64(triples);
  for (std::size_t w = 0; w < s.word_topic.size(); ++w) {
    for (const auto& e : s.word_topic[w].entries()) {
      out.u32(e.topic);
      out.u32(static_cast<std::uint32_t>(w));
      out.i64(e.units);
    }
  }
  for (std::size_t d = 0; d < s.docs.size(); ++d) {
    const auto& doc = s.docs[d];
    out.str(doc.review_id);
    out.u32(static_cast<std::uint32_t>(s.doc_topic[d].size()));
    for (const auto& e : s.doc_topic[d].entries()) {
      out.u32(e.topic);
      out.i64(e.units);
    }
    out.u32(static_cast<std::uint32_t>(doc.tokens.size()));
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      out.u32(doc.tokens[i].word);
      out.i64(doc.tokens[i].units);
      out.u32(doc.tokens[i].position);
      out.u32(s.z[d][i]);
    }
  }
  for (int i = 0; i < 4; ++i) out.f64(model.relevance.weights(i));
  out.raw("END!", 4);
  return out.take();
}

ModelContainer from_binary(std::string_view bytes) {
  ByteReader in(bytes);
  if (std::memcmp(in.raw(sizeof kBinaryMagic), kBinaryMagic, sizeof kBinaryMagic) != 0) {
    throw ValidationError("not a binary model container");
  }
  if (in.u32() != kVersion) throw ValidationError("unsupported binary model version");
  const std::uint64_t limit = bytes.size();
  ModelContainer m;
  auto& s = m.state;
  const auto k = in.u32();
  const auto V = in.u32();
  if (k < 1 || k > (1u << 20)) throw ValidationError("k out of range");
  check_count(V, limit, "vocabulary");
  s.k = static_cast<int>(k);
  s.cfg.w_bits = static_cast<int>(in.u32());
  s.iteration = in.u64();
  s.seed = in.u64();
  s.updates = in.u64();
  const auto D = in.u64();
  check_count(D, limit, "document");
  m.hyper.beta_bar = in.f64();
  m.hyper.alpha.resize(s.k);
  for (int t = 0; t < s.k; ++t) m.hyper.alpha(t) = in.f64();
  m.hyper.beta.resize(V);
  for (std::uint32_t w = 0; w < V; ++w) m.hyper.beta(w) = in.f64();
  const auto n_base = in.u32();
  check_count(n_base, limit, "base word");
  std::vector<std::string> base;
  base.reserve(n_base);
  for (std::uint32_t i = 0; i < n_base; ++i) base.push_back(in.str());
  s.vocab = AugmentedVocabulary(std::move(base));
  if (s.vocab.base_size() != n_base) throw ValidationError("duplicate base word");
  for (std::uint32_t i = 0; i < V; ++i) {
    const auto b = in.u32();
    const int t = in.u8();
    if (b >= n_base || t < 1 || t > kTiers) throw ValidationError("augmented entry out of range");
    if (s.vocab.intern(b, t) != i) throw ValidationError("duplicate augmented entry");
  }
  s.word_topic.assign(V, {});
  const auto triples = in.u64();
  check_count(triples, limit, "word-topic");
  for (std::uint64_t i = 0; i < triples; ++i) {
    const auto t = in.u32();
    const auto w = in.u32();
    const auto u = in.i64();
    if (w >= V) throw ValidationError("word id out of range");
    s.word_topic[w].push_back({t, u});
  }
  s.docs.resize(D);
  s.z.resize(D);
  s.doc_topic.resize(D);
  for (std::uint64_t d = 0; d < D; ++d) {
    s.docs[d].review_id = in.str();
    const auto ntopics = in.u32();
    check_count(ntopics, limit, "document-topic");
    for (std::uint32_t i = 0; i < ntopics; ++i) {
      const auto t = in.u32();
      const auto u = in.i64();
      s.doc_topic[d].push_back({t, u});
    }
    const auto ntokens = in.u32();
    check_count(ntokens, limit, "token");
    auto& toks = s.docs[d].tokens;
    toks.resize(ntokens);
    s.z[d].resize(ntokens);
    for (std::uint32_t i = 0; i < ntokens; ++i) {
      toks[i].word = in.u32();
      toks[i].units = in.i64();
      toks[i].position = in.u32();
      s.z[d][i] = in.u32();
    }
  }
  for (int i = 0; i < 4; ++i) m.relevance.weights(i) = in.f64();
  if (std::memcmp(in.raw(4), "END!", 4) != 0 || !in.at_end()) throw ValidationError("binary model trailer missing");
  finish(m);
  return m;
}

ModelContainer parse_container(std::string_view contents) {
  if (contents.size() >= sizeof kBinaryMagic && std::memcmp(contents.data(), kBinaryMagic, sizeof kBinaryMagic) == 0) {
    return from_binary(contents);
  }
  return from_text(contents);
}

void save_model(const ModelContainer& model, const std::string& path, ContainerFormat format) {
  write_file_atomic(path, format == ContainerFormat::kText ? to_text(model) : to_binary(model));
}

ModelContainer load_model(const std::string& path) { return parse_container(read_file(path)); }

}  // namespace rlda
