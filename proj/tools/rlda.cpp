// rlda: ingest reviews, train and update topic models, render views,
// simulate the marketplace, and benchmark the samplers.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rlda/bench.hpp"
#include "rlda/corpus.hpp"
#include "rlda/errors.hpp"
#include "rlda/io.hpp"
#include "rlda/market.hpp"
#include "rlda/model_io.hpp"
#include "rlda/relevance.hpp"
#include "rlda/sampler.hpp"
#include "rlda/synthetic.hpp"
#include "rlda/transform.hpp"
#include "rlda/view.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kValidation = 4, kConsistency = 5 };

struct Options {
  // ingest
  std::string reviews_path, corpus_path, corpus_out;
  bool snap = false;
  std::uint64_t min_frequency = 1;

  // train / update
  std::string model_path, model_out, labels_path, resume_path, format = "text";
  int k = 10;
  std::size_t iterations = 200;
  std::uint64_t seed = 1;
  std::size_t shards = 1;
  int w_bits = 8;
  double alpha = -1.0;  // 50/k
  double beta = 0.01;
  bool core_set = false;
  double min_mass = rlda::CoreSetThresholds{}.min_mass;
  double min_distinctiveness = rlda::CoreSetThresholds{}.min_distinctiveness;
  std::size_t n_top = 10;
  std::size_t update_every = rlda::UpdatePolicy{}.full_recompute_every;
  std::size_t update_sweeps = rlda::UpdatePolicy{}.incremental_sweeps;
  double old_fraction = rlda::UpdatePolicy{}.old_sample_fraction;

  // view / review
  int topic = -1;
  std::string review_id;
  std::vector<std::string> keywords;

  // simulate
  std::string scenario_path, metrics_out, log_out;

  // bench
  std::vector<int> ks{16, 64, 256};
  std::size_t burn_in = rlda::BenchOptions{}.burn_in;
  std::size_t timed = rlda::BenchOptions{}.timed;
  bool planted = false;
};

rlda::Corpus read_corpus(const std::string& path) { return rlda::load_corpus(path); }

rlda::LogisticModel fit_relevance(const rlda::Corpus& corpus, const std::string& labels_path) {
  if (labels_path.empty()) return {};
  std::ifstream in(labels_path);
  if (!in) throw rlda::IoError("cannot open " + labels_path);
  const auto labels = rlda::parse_relevance_labels(in);
  std::vector<rlda::RelevanceExample> examples;
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    auto it = labels.find(corpus.reviews[i].review_id);
    if (it == labels.end()) continue;
    examples.push_back({corpus.quality[i].nu, corpus.reviews[i].helpful_votes, corpus.reviews[i].unhelpful_votes,
                        it->second});
  }
  const auto fit = rlda::train_logistic(examples);
  std::printf("relevance model: %zu labelled reviews, training accuracy %.4f\n", examples.size(),
              rlda::training_accuracy(fit.model, examples));
  return fit.model;
}

rlda::ContainerFormat container_format(const std::string& name) {
  return name == "binary" ? rlda::ContainerFormat::kBinary : rlda::ContainerFormat::kText;
}

void print_stats(const rlda::SamplerStats& stats) {
  double seconds = 0.0;
  for (double s : stats.seconds) seconds += s;
  std::printf("%zu iterations in %.3f s", stats.iterations, seconds);
  if (!stats.perplexity.empty()) std::printf(", perplexity %.6g", stats.perplexity.back());
  std::printf("\n");
}

int cmd_ingest(const Options& o) {
  const auto format = o.snap ? rlda::InputFormat::kSnap : rlda::InputFormat::kNative;
  auto parsed = rlda::parse_reviews_file(o.reviews_path, format);
  for (const auto& d : parsed.diagnostics) std::fprintf(stderr, "line %zu: %s\n", d.line, d.message.c_str());
  const std::size_t count = parsed.records.size();
  const auto corpus = rlda::build_corpus(std::move(parsed.records), o.min_frequency);
  rlda::save_corpus(corpus, o.corpus_out);
  std::printf("%zu reviews, %zu skipped\n", count, parsed.skipped);
  std::printf("%zu vocabulary words\n", corpus.vocab.size());
  return kOk;
}

int cmd_train(const Options& o) {
  const auto corpus = read_corpus(o.corpus_path);
  rlda::GibbsOptions gibbs{o.shards, rlda::SamplerKind::kSparse};
  if (!o.resume_path.empty()) {
    auto model = rlda::load_model(o.resume_path);
    const auto stats = rlda::continue_training(model.state, model.hyper, o.iterations, gibbs);
    print_stats(stats);
    rlda::save_model(model, o.model_out, container_format(o.format));
    return kOk;
  }
  rlda::FixedPointConfig cfg{o.w_bits};
  cfg.validate();
  const auto relevance = fit_relevance(corpus, o.labels_path);
  const auto weighted = rlda::build_weighted_corpus(corpus, relevance, cfg);
  auto hyper = rlda::Hyperparams::symmetric(o.k, weighted.vocab.size(), o.alpha, o.beta);
  rlda::TrainOptions opts;
  opts.iterations = o.iterations;
  opts.seed = o.seed;
  opts.gibbs = gibbs;
  auto result = rlda::train(weighted, o.k, hyper, opts);
  print_stats(result.stats);
  if (o.core_set) {
    const auto reduced = rlda::core_set_reduce(result.state, hyper, {o.min_mass, o.min_distinctiveness}, o.n_top);
    std::printf("core set keeps %zu of %d topics\n", reduced.kept, o.k);
  }
  rlda::save_model({std::move(result.state), std::move(hyper), relevance}, o.model_out, container_format(o.format));
  return kOk;
}

int cmd_update(const Options& o) {
  auto model = rlda::load_model(o.model_path);
  auto corpus = read_corpus(o.corpus_path);
  const auto format = o.snap ? rlda::InputFormat::kSnap : rlda::InputFormat::kNative;
  auto parsed = rlda::parse_reviews_file(o.reviews_path, format);
  for (const auto& d : parsed.diagnostics) std::fprintf(stderr, "line %zu: %s\n", d.line, d.message.c_str());

  const std::size_t first = corpus.reviews.size();
  std::size_t duplicates = 0;
  for (auto& r : parsed.records) {
    if (corpus.find(r.review_id) != rlda::Corpus::npos) {
      ++duplicates;
      continue;
    }
    corpus.reviews.push_back(std::move(r));
  }
  rlda::refresh_auxiliary(corpus);

  rlda::WeightedCorpus incoming;
  incoming.cfg = model.state.cfg;
  incoming.vocab = model.state.vocab;
  rlda::append_weighted_documents(corpus, first, model.relevance, true, incoming);

  rlda::UpdatePolicy policy;
  policy.full_recompute_every = o.update_every;
  policy.incremental_sweeps = o.update_sweeps;
  policy.old_sample_fraction = o.old_fraction;
  policy.beta_default = o.beta;
  const auto report = rlda::update_model(model.state, model.hyper, incoming, policy);
  std::printf("%zu new reviews, %zu skipped, %zu already present\n", report.new_documents, parsed.skipped, duplicates);
  std::printf("%s, %zu documents swept\n", report.full_recompute ? "full recompute" : "incremental update",
              report.swept_documents);

  rlda::save_model(model, o.model_out.empty() ? o.model_path : o.model_out, container_format(o.format));
  rlda::save_corpus(corpus, o.corpus_out.empty() ? o.corpus_path : o.corpus_out);
  return kOk;
}

int cmd_view(const Options& o) {
  const auto model = rlda::load_model(o.model_path);
  const auto corpus = read_corpus(o.corpus_path);
  auto view = rlda::build_view(model.state, model.hyper, corpus, o.n_top);
  if (o.topic < 0) {
    std::fputs(rlda::serialize_view(view).c_str(), stdout);
    return kOk;
  }
  if (o.topic >= model.state.k) throw rlda::ValidationError("unknown topic " + std::to_string(o.topic));
  std::fputs(rlda::serialize_view({view[static_cast<std::size_t>(o.topic)]}).c_str(), stdout);
  for (const auto& id : rlda::rank_reviews(model.state, model.hyper, o.topic)) std::printf("%s\n", id.c_str());
  return kOk;
}

int cmd_review(const Options& o) {
  const auto corpus = read_corpus(o.corpus_path);
  const auto i = corpus.find(o.review_id);
  if (i == rlda::Corpus::npos) throw rlda::ValidationError("unknown review " + o.review_id);
  const auto& r = corpus.reviews[i];
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : rlda::highlight(r.review_id, r.text, o.keywords)) {
    spans.push_back({{"byte_start", s.byte_start}, {"byte_end", s.byte_end}, {"keyword", s.keyword}});
  }
  nlohmann::json doc = {{"review_id", r.review_id}, {"rating", r.rating}, {"text", r.text}, {"highlights", spans}};
  std::printf("%s\n", doc.dump(2).c_str());
  return kOk;
}

int cmd_simulate(const Options& o) {
  const auto scenario = rlda::market::parse_scenario(rlda::read_file(o.scenario_path));
  const auto metrics = rlda::market::run_simulation(scenario);
  const auto text = rlda::market::metrics_json(metrics);
  if (o.metrics_out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    rlda::write_file_atomic(o.metrics_out, text);
  }
  if (!o.log_out.empty()) {
    std::string log;
    for (const auto& line : metrics.event_log) log += line + "\n";
    rlda::write_file_atomic(o.log_out, log);
  }
  return kOk;
}

int cmd_bench(const Options& o) {
  rlda::WeightedCorpus weighted;
  if (o.planted || o.corpus_path.empty()) {
    rlda::PlantedSpec spec;
    spec.docs = 1000;
    spec.doc_length = 50;
    spec.topics = 16;
    spec.words_per_topic = 100;
    spec.seed = o.seed;
    weighted = rlda::planted_corpus(spec).corpus;
  } else {
    const auto corpus = read_corpus(o.corpus_path);
    weighted = rlda::build_weighted_corpus(corpus, {}, rlda::FixedPointConfig{o.w_bits});
  }
  rlda::BenchOptions opts;
  opts.ks = o.ks;
  opts.burn_in = o.burn_in;
  opts.timed = o.timed;
  opts.seed = o.seed;
  opts.beta = o.beta;
  if (o.alpha > 0.0) opts.alpha = o.alpha;
  std::fputs(rlda::format_bench(rlda::run_bench(weighted, opts)).c_str(), stdout);
  return kOk;
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--format", o.format, "Model container format")->check(CLI::IsMember({"text", "binary"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Review topic models: ingest, train, update, view, simulate, bench"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (flags > config > defaults)");
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Parse reviews into a corpus container");
  ingest->add_option("reviews", o.reviews_path, "Review file, one JSON record per line")->required();
  ingest->add_option("corpus", o.corpus_out, "Output corpus container")->required();
  ingest->add_flag("--snap", o.snap, "Input uses the SNAP Amazon review layout");
  ingest->add_option("--min-frequency", o.min_frequency, "Minimum corpus frequency for the vocabulary")
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train a topic model on a corpus container");
  train->add_option("corpus", o.corpus_path, "Corpus container")->required();
  train->add_option("model", o.model_out, "Output model container")->required();
  train->add_option("-k,--topics", o.k, "Number of topics")->check(CLI::PositiveNumber);
  train->add_option("--iterations", o.iterations, "Gibbs sweeps");
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--shards", o.shards, "Document shards sampled in parallel")->check(CLI::PositiveNumber);
  train->add_option("--w-bits", o.w_bits, "Fractional bits of token weights")->check(CLI::Range(0, 16));
  train->add_option("--alpha", o.alpha, "Symmetric document-topic prior (default 50/k)");
  train->add_option("--beta", o.beta, "Symmetric topic-word prior")->check(CLI::PositiveNumber);
  train->add_option("--labels", o.labels_path, "Relevance labels, {review_id, label} JSON lines");
  train->add_option("--resume", o.resume_path, "Continue sampling a saved model");
  train->add_flag("--core-set", o.core_set, "Drop weak topics after sampling");
  train->add_option("--min-mass", o.min_mass, "Core-set minimum topic mass");
  train->add_option("--min-distinctiveness", o.min_distinctiveness, "Core-set minimum top-word distinctiveness");
  train->add_option("--top", o.n_top, "Top words used for distinctiveness");
  add_model_flags(train, o);

  auto* update = app.add_subcommand("update", "Add new reviews to a trained model");
  update->add_option("model", o.model_path, "Model container (rewritten unless --out)")->required();
  update->add_option("corpus", o.corpus_path, "Corpus container (rewritten unless --corpus-out)")->required();
  update->add_option("reviews", o.reviews_path, "New review file")->required();
  update->add_option("--out", o.model_out, "Output model container");
  update->add_option("--corpus-out", o.corpus_out, "Output corpus container");
  update->add_flag("--snap", o.snap, "Input uses the SNAP Amazon review layout");
  update->add_option("--full-every", o.update_every, "Retrain from scratch every U-th update")
      ->check(CLI::PositiveNumber);
  update->add_option("--sweeps", o.update_sweeps, "Sweeps per incremental update");
  update->add_option("--old-fraction", o.old_fraction, "Fraction of old documents resampled")
      ->check(CLI::Range(0.0, 1.0));
  update->add_option("--beta", o.beta, "Prior for new words")->check(CLI::PositiveNumber);
  add_model_flags(update, o);

  auto* view = app.add_subcommand("view", "Print topic summaries, or one topic and its ranked reviews");
  view->add_option("model", o.model_path, "Model container")->required();
  view->add_option("corpus", o.corpus_path, "Corpus container")->required();
  view->add_option("--topic", o.topic, "Topic to expand");
  view->add_option("--top", o.n_top, "Top words per topic");

  auto* review = app.add_subcommand("review", "Print one review with keyword highlights");
  review->add_option("corpus", o.corpus_path, "Corpus container")->required();
  review->add_option("id", o.review_id, "Review id")->required();
  review->add_option("--keywords", o.keywords, "Keywords to highlight")->delimiter(',');

  auto* simulate = app.add_subcommand("simulate", "Run a marketplace scenario");
  simulate->add_option("scenario", o.scenario_path, "Scenario JSON")->required();
  simulate->add_option("--metrics", o.metrics_out, "Write metrics here instead of stdout");
  simulate->add_option("--log", o.log_out, "Write the event log here");

  auto* bench = app.add_subcommand("bench", "Per-iteration time of dense and sparse sampling");
  bench->add_option("corpus", o.corpus_path, "Corpus container (planted corpus if omitted)");
  bench->add_option("--k", o.ks, "Topic counts")->delimiter(',');
  bench->add_option("--burn-in", o.burn_in, "Sparse sweeps before timing");
  bench->add_option("--timed", o.timed, "Timed sweeps per sampler")->check(CLI::PositiveNumber);
  bench->add_option("--seed", o.seed, "Random seed");
  bench->add_option("--alpha", o.alpha, "Document-topic prior (default 0.1)");
  bench->add_option("--beta", o.beta, "Topic-word prior")->check(CLI::PositiveNumber);
  bench->add_option("--w-bits", o.w_bits, "Fractional bits of token weights")->check(CLI::Range(0, 16));
  bench->add_flag("--planted", o.planted, "Use the planted synthetic corpus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(o);
    if (*train) return cmd_train(o);
    if (*update) return cmd_update(o);
    if (*view) return cmd_view(o);
    if (*review) return cmd_review(o);
    if (*simulate) return cmd_simulate(o);
    if (*bench) return cmd_bench(o);
  } catch (const rlda::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const rlda::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const rlda::ConsistencyError& e) {
    std::fprintf(stderr, "internal consistency error: %s\n", e.what());
    return kConsistency;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kConsistency;
  }
  return kUsage;
}
