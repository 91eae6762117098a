#include "rlda/synthetic.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "rlda/errors.hpp"
#include "rlda/random.hpp"

namespace rlda {

PlantedCorpus planted_corpus(const PlantedSpec& spec) {
  if (spec.topics == 0 || spec.words_per_topic == 0 || spec.topics_per_doc == 0 ||
      spec.topics_per_doc > spec.topics) {
    throw ValidationError("planted corpus needs topics >= topics_per_doc >= 1 and words");
  }
  PlantedCorpus out;
  out.corpus.cfg.w_bits = spec.w_bits;
  out.corpus.cfg.validate();
  std::vector<std::string> words;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t j = 0; j < spec.words_per_topic; ++j) {
      words.push_back("t" + std::to_string(t) + "w" + std::to_string(j));
      out.base_topic.push_back(static_cast<int>(t));
    }
  }
  out.corpus.vocab = AugmentedVocabulary(words);

  Rng rng(stream_seed(spec.seed, {0x706c616eULL}));
  std::vector<std::size_t> topic_order(spec.topics);
  for (std::size_t d = 0; d < spec.docs; ++d) {
    for (std::size_t t = 0; t < spec.topics; ++t) topic_order[t] = t;
    for (std::size_t i = 0; i < spec.topics_per_doc; ++i) {
      std::swap(topic_order[i], topic_order[i + rng.below(spec.topics - i)]);
    }
    const int rating = 1 + static_cast<int>(rng.below(5));

    std::vector<std::string> doc_words;
    doc_words.reserve(spec.doc_length);
    for (std::size_t n = 0; n < spec.doc_length; ++n) {
      const std::size_t topic = topic_order[rng.below(spec.topics_per_doc)];
      doc_words.push_back(words[topic * spec.words_per_topic + rng.below(spec.words_per_topic)]);
    }

    WeightedDocument doc;
    doc.review_id = "d" + std::to_string(d);
    if (spec.fractional) {
      UserBiasStats bias;
      bias.mean = std::clamp(0.5 * rng.normal(), -1.5, 1.5);
      bias.variance = 0.5 * rng.uniform();
      bias.n_other = 3;
      const double quality = 0.5 + 0.5 * (1.0 - rng.uniform());
      doc.tokens = augment_tokens(doc_words, tier_probabilities(rating, bias), quality, out.corpus.cfg,
                                  out.corpus.vocab);
    } else {
      for (std::size_t n = 0; n < doc_words.size(); ++n) {
        const auto base = out.corpus.vocab.base_index(doc_words[n]);
        doc.tokens.push_back({out.corpus.vocab.intern(base, 5), out.corpus.cfg.scale(),
                              static_cast<std::uint32_t>(n)});
      }
    }
    out.corpus.docs.push_back(std::move(doc));
  }
  return out;
}

namespace {

const std::array<std::vector<std::string>, 3> kThemes = {{
    {"battery", "charge", "hours", "power", "drain", "charger", "lasts", "overnight"},
    {"screen", "display", "bright", "colors", "pixels", "resolution", "glare", "sharp"},
    {"shipping", "arrived", "package", "seller", "refund", "box", "delivery", "late"},
}};
const std::vector<std::string> kFiller = {"the", "it", "is", "was", "and", "very", "really", "this", "phone"};

}  // namespace

std::vector<ReviewRecord> synthetic_reviews(std::size_t count, std::size_t words_per_review, std::uint64_t seed) {
  Rng rng(stream_seed(seed, {0x72657677ULL}));
  std::vector<ReviewRecord> reviews;
  reviews.reserve(count);
  const std::size_t users = std::max<std::size_t>(1, count / 3);
  for (std::size_t i = 0; i < count; ++i) {
    ReviewRecord r;
    r.review_id = "r" + std::to_string(i);
    r.product_id = "p" + std::to_string(rng.below(3));
    r.user_id = "u" + std::to_string(rng.below(users));
    const std::size_t theme = rng.below(kThemes.size());
    r.rating = std::clamp(static_cast<int>(theme) * 2 + 1 + static_cast<int>(rng.below(2)), 1, 5);
    r.helpful_votes = static_cast<std::int64_t>(rng.below(10));
    r.unhelpful_votes = static_cast<std::int64_t>(rng.below(4));
    r.timestamp = 1'300'000'000 + static_cast<std::int64_t>(i) * 3600;
    std::string text;
    for (std::size_t n = 0; n < words_per_review; ++n) {
      const auto& pool = rng.uniform() < 0.7 ? kThemes[theme] : kFiller;
      std::string w = pool[rng.below(pool.size())];
      if (n % 8 == 0) w[0] = static_cast<char>(w[0] - 'a' + 'A');
      if (!text.empty()) text += ' ';
      text += w;
      if (n % 8 == 7 || n + 1 == words_per_review) text += '.';
    }
    r.text = std::move(text);
    reviews.push_back(std::move(r));
  }
  return reviews;
}

}  // namespace rlda
