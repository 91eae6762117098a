#include "rlda/view.hpp"

#include <algorithm>
#include <numeric>

#include <Eigen/SparseCore>

#include "json.hpp"
#include "rlda/errors.hpp"

namespace rlda {

DocumentSignals document_signals(const TopicModelState& state, const Corpus& corpus) {
  std::unordered_map<std::string_view, std::size_t> by_id;
  by_id.reserve(corpus.reviews.size());
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) by_id.emplace(corpus.reviews[i].review_id, i);
  const auto D = static_cast<Eigen::Index>(state.docs.size());
  DocumentSignals s{Eigen::VectorXd(D), Eigen::VectorXd(D), Eigen::VectorXd(D)};
  for (Eigen::Index d = 0; d < D; ++d) {
    const auto& id = state.docs[static_cast<std::size_t>(d)].review_id;
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("model document " + id + " not found in corpus");
    const auto& r = corpus.reviews[it->second];
    s.corrected_rating(d) = std::clamp(r.rating + corpus.bias.at(it->second).mean, 1.0, 5.0);
    s.helpful(d) = static_cast<double>(r.helpful_votes);
    s.unhelpful(d) = static_cast<double>(r.unhelpful_votes);
  }
  return s;
}

Eigen::VectorXd topic_mass(const TopicModelState& state) {
  Eigen::VectorXd mass(state.k);
  for (int t = 0; t < state.k; ++t) mass(t) = static_cast<double>(state.topic_totals[t]);
  const double total = mass.sum();
  return total > 0.0 ? Eigen::VectorXd(mass / total) : Eigen::VectorXd::Constant(state.k, 1.0 / state.k);
}

Eigen::MatrixXd base_word_phi(const TopicModelState& state, const Hyperparams& hyper) {
  const auto V = static_cast<Eigen::Index>(state.vocab.size());
  Eigen::SparseMatrix<double> collapse(V, static_cast<Eigen::Index>(state.vocab.base_size()));
  std::vector<Eigen::Triplet<double>> ones;
  ones.reserve(state.vocab.size());
  for (Eigen::Index w = 0; w < V; ++w) ones.emplace_back(w, state.vocab.entry(static_cast<std::uint32_t>(w)).base, 1.0);
  collapse.setFromTriplets(ones.begin(), ones.end());
  return phi_matrix(state, hyper) * collapse;
}

std::vector<TopicSummary> build_view(const TopicModelState& state, const Hyperparams& hyper,
                                     const DocumentSignals& signals, std::size_t n_top) {
  const Eigen::MatrixXd theta = theta_matrix(state, hyper);
  const Eigen::VectorXd weight = theta.colwise().sum().transpose();
  const Eigen::VectorXd rating = (theta.transpose() * signals.corrected_rating).cwiseQuotient(weight);
  const Eigen::VectorXd helpful = (theta.transpose() * signals.helpful).cwiseQuotient(weight);
  const Eigen::VectorXd unhelpful = (theta.transpose() * signals.unhelpful).cwiseQuotient(weight);
  const Eigen::VectorXd mass = topic_mass(state);
  const Eigen::MatrixXd phi = base_word_phi(state, hyper);

  std::vector<TopicSummary> view;
  view.reserve(static_cast<std::size_t>(state.k));
  std::vector<std::uint32_t> order(state.vocab.base_size());
  for (int t = 0; t < state.k; ++t) {
    TopicSummary s;
    s.topic_id = t;
    s.probability = mass(t);
    s.expected_rating = state.docs.empty() ? 0.0 : rating(t);
    s.expected_helpfulness = state.docs.empty() ? 0.0 : helpful(t);
    s.expected_unhelpfulness = state.docs.empty() ? 0.0 : unhelpful(t);
    std::iota(order.begin(), order.end(), 0u);
    const std::size_t n = std::min(n_top, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        const double pa = phi(t, a), pb = phi(t, b);
                        return pa != pb ? pa > pb : a < b;
                      });
    for (std::size_t i = 0; i < n; ++i) s.top_words.push_back({state.vocab.base_word(order[i]), order[i], phi(t, order[i])});
    view.push_back(std::move(s));
  }
  return view;
}

std::vector<TopicSummary> build_view(const TopicModelState& state, const Hyperparams& hyper, const Corpus& corpus,
                                     std::size_t n_top) {
  return build_view(state, hyper, document_signals(state, corpus), n_top);
}

std::vector<std::string> rank_reviews(const TopicModelState& state, const Hyperparams& hyper, int topic) {
  if (topic < 0 || topic >= state.k) throw ValidationError("unknown topic " + std::to_string(topic));
  const Eigen::VectorXd theta = theta_matrix(state, hyper).col(topic);
  std::vector<std::size_t> order(state.docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ta = theta(static_cast<Eigen::Index>(a)), tb = theta(static_cast<Eigen::Index>(b));
    return ta != tb ? ta > tb : state.docs[a].review_id < state.docs[b].review_id;
  });
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (auto d : order) ids.push_back(state.docs[d].review_id);
  return ids;
}

namespace {

// Byte length of the first n code points, or npos if shorter.
std::size_t prefix_bytes(std::string_view s, std::size_t n) {
  std::size_t points = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (points == n) return i;
      ++points;
    }
  }
  return points == n ? s.size() : std::string_view::npos;
}

std::size_t code_points(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](unsigned char c) { return (c & 0xC0) != 0x80; }));
}

char lower(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 ? static_cast<char>(std::tolower(u)) : c;
}

}  // namespace

bool stem_prefix_match(std::string_view token, std::string_view keyword) {
  if (keyword.empty()) return false;
  const std::size_t n = std::min<std::size_t>(4, code_points(keyword));
  const std::size_t kb = prefix_bytes(keyword, n);
  const std::size_t tb = prefix_bytes(token, n);
  if (tb == std::string_view::npos || tb != kb) return false;
  for (std::size_t i = 0; i < kb; ++i) {
    if (lower(token[i]) != lower(keyword[i])) return false;
  }
  return true;
}

std::vector<HighlightSpan> highlight(const std::string& review_id, std::string_view text,
                                     const std::vector<std::string>& keywords) {
  const auto tokens = tokenize(text);
  struct Candidate {
    ByteSpan span;
    std::size_t keyword;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < tokens.words.size(); ++i) {
    for (std::size_t k = 0; k < keywords.size(); ++k) {
      if (stem_prefix_match(tokens.words[i], keywords[k])) candidates.push_back({tokens.spans[i], k});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.span.begin != b.span.begin ? a.span.begin < b.span.begin : a.keyword < b.keyword;
  });
  std::vector<HighlightSpan> spans;
  std::size_t covered = 0;
  for (const auto& c : candidates) {
    if (!spans.empty() && c.span.begin < covered) continue;
    spans.push_back({review_id, c.span.begin, c.span.end, keywords[c.keyword]});
    covered = c.span.end;
  }
  return spans;
}

std::string serialize_view(const std::vector<TopicSummary>& view) {
  using json = nlohmann::json;
  json topics = json::array();
  for (const auto& s : view) {
    json words = json::array();
    for (const auto& w : s.top_words) words.push_back({{"word", w.word}, {"weight", w.weight}});
    topics.push_back({{"topic_id", s.topic_id},
                      {"probability", s.probability},
                      {"expected_rating", s.expected_rating},
                      {"expected_helpfulness", s.expected_helpfulness},
                      {"expected_unhelpfulness", s.expected_unhelpfulness},
                      {"top_words", std::move(words)}});
  }
  json doc = {{"format", "rlda-view"}, {"version", 1}, {"topics", std::move(topics)}};
  return doc.dump(2) + "\n";
}

}  // namespace rlda
