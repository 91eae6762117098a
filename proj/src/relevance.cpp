#include "rlda/relevance.hpp"

#include <iostream>

#include "json.hpp"
#include "rlda/errors.hpp"

namespace rlda {

LogisticFit train_logistic(const std::vector<RelevanceExample>& examples,
                           const LogisticTrainOptions& options) {
  if (examples.empty()) throw ValidationError("train_logistic: empty example set");
  if (!(options.learning_rate > 0.0)) throw ValidationError("train_logistic: learning_rate must be > 0");
  if (!(options.l2 >= 0.0)) throw ValidationError("train_logistic: l2 must be >= 0");
  if (options.epochs < 0) throw ValidationError("train_logistic: epochs must be >= 0");

  LogisticFit fit;
  std::size_t positives = 0;
  for (const auto& e : examples) {
    if (e.label != 0 && e.label != 1) throw ValidationError("train_logistic: labels must be 0 or 1");
    positives += static_cast<std::size_t>(e.label);
  }
  if (positives == 0 || positives == examples.size()) {
    fit.single_class = true;
    std::cerr << "warning: relevance labels contain a single class; fit is degenerate\n";
  }

  const auto [x, y] = design_matrix<double>(examples);
  Eigen::Vector4d w = Eigen::Vector4d::Zero();
  const double shrink = 1.0 / (1.0 + options.learning_rate * options.l2);
  fit.loss_per_epoch.reserve(static_cast<std::size_t>(options.epochs) + 1);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    fit.loss_per_epoch.push_back(regularized_log_loss<double>(w, x, y, options.l2));
    w = (w - options.learning_rate * log_loss_gradient<double>(w, x, y)) * shrink;
  }
  fit.loss_per_epoch.push_back(regularized_log_loss<double>(w, x, y, options.l2));
  fit.model.weights = w;
  return fit;
}

double predict_quality(const LogisticModel& model, double nu, double helpful, double unhelpful) {
  if (!std::isfinite(nu) || !std::isfinite(helpful) || !std::isfinite(unhelpful)) {
    throw ValidationError("predict_quality: non-finite input");
  }
  if (helpful < 0 || unhelpful < 0) throw ValidationError("predict_quality: negative vote count");
  return logistic(model.weights.dot(relevance_features<double>(nu, helpful, unhelpful)));
}

double training_accuracy(const LogisticModel& model, const std::vector<RelevanceExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& e : examples) {
    const double p = predict_quality(model, e.nu, static_cast<double>(e.helpful),
                                     static_cast<double>(e.unhelpful));
    correct += static_cast<std::size_t>((p >= 0.5 ? 1 : 0) == e.label);
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

std::unordered_map<std::string, int> parse_relevance_labels(std::istream& in) {
  using json = nlohmann::json;
  if (!in) throw IoError("unreadable label stream");
  std::unordered_map<std::string, int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, false);
    const auto where = "label line " + std::to_string(lineno);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("review_id") || !obj.contains("label")) {
      throw ValidationError(where + ": expected {\"review_id\", \"label\"}");
    }
    const auto& id = obj["review_id"];
    const auto& label = obj["label"];
    if (!(id.is_string() || id.is_number_integer()) || !label.is_number_integer() ||
        (label.get<int>() != 0 && label.get<int>() != 1)) {
      throw ValidationError(where + ": review_id must be a string and label 0 or 1");
    }
    labels[id.is_string() ? id.get<std::string>() : std::to_string(id.get<std::int64_t>())] = label.get<int>();
  }
  return labels;
}

}  // namespace rlda
