#pragma once

// Logistic review-quality model psi_d over (nu, helpful, unhelpful).

#include <cmath>
#include <cstdint>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace rlda {

struct RelevanceExample {
  double nu = 0.0;
  std::int64_t helpful = 0;
  std::int64_t unhelpful = 0;
  int label = 0;  // 1 = relevant
};

template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;

/// (1, nu, log(1+h), log(1+u))
template <typename Scalar>
Vector4<Scalar> relevance_features(Scalar nu, Scalar helpful, Scalar unhelpful) {
  using std::log1p;
  return Vector4<Scalar>(Scalar(1), nu, log1p(helpful), log1p(unhelpful));
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  using std::exp;
  // Branches keep exp() from overflowing in either tail.
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

/// Feature matrix (n x 4) and label vector for a training set.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, 4>, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>
design_matrix(const std::vector<RelevanceExample>& examples) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 4> x(static_cast<Eigen::Index>(examples.size()), 4);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y(static_cast<Eigen::Index>(examples.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto& e = examples[static_cast<std::size_t>(i)];
    x.row(i) = relevance_features<Scalar>(Scalar(e.nu), Scalar(e.helpful), Scalar(e.unhelpful)).transpose();
    y(i) = Scalar(e.label);
  }
  return {std::move(x), std::move(y)};
}

/// Mean log-loss plus (l2/2)*|w|^2 over all four weights.
template <typename Scalar, typename DerivedX, typename DerivedY>
Scalar regularized_log_loss(const Vector4<Scalar>& w, const Eigen::MatrixBase<DerivedX>& x,
                            const Eigen::MatrixBase<DerivedY>& y, Scalar l2) {
  using std::exp;
  using std::log1p;
  const auto n = x.rows();
  Scalar loss(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar z = x.row(i).dot(w);
    // log(1 + e^z) - y*z, evaluated stably.
    const Scalar softplus = z > Scalar(0) ? z + log1p(exp(-z)) : log1p(exp(z));
    loss += softplus - y(i) * z;
  }
  if (n > 0) loss /= Scalar(n);
  return loss + Scalar(0.5) * l2 * w.squaredNorm();
}

/// Gradient of the smooth log-loss term only (no l2).
template <typename Scalar, typename DerivedX, typename DerivedY>
Vector4<Scalar> log_loss_gradient(const Vector4<Scalar>& w, const Eigen::MatrixBase<DerivedX>& x,
                                  const Eigen::MatrixBase<DerivedY>& y) {
  const auto n = x.rows();
  Vector4<Scalar> g = Vector4<Scalar>::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar p = logistic<Scalar>(x.row(i).dot(w));
    g += (p - y(i)) * x.row(i).transpose();
  }
  if (n > 0) g /= Scalar(n);
  return g;
}

template <typename Scalar, typename DerivedX, typename DerivedY>
Vector4<Scalar> regularized_gradient(const Vector4<Scalar>& w, const Eigen::MatrixBase<DerivedX>& x,
                                     const Eigen::MatrixBase<DerivedY>& y, Scalar l2) {
  return log_loss_gradient<Scalar>(w, x, y) + l2 * w;
}

struct LogisticModel {
  /// (bias, w_nu, w_helpful, w_unhelpful)
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();
};

struct LogisticTrainOptions {
  double learning_rate = 0.1;
  int epochs = 500;
  double l2 = 1e-4;
  /// Full-batch descent from zero weights does not consume randomness; the
  /// seed is recorded so training stays reproducible if that changes.
  std::uint64_t seed = 0;
};

struct LogisticFit {
  LogisticModel model;
  std::vector<double> loss_per_epoch;  // objective before each epoch, then final
  bool single_class = false;
};

/// Proximal gradient descent on the regularized log-loss: a gradient step on
/// the log-loss followed by the exact l2 shrink w / (1 + lr*l2). Throws
/// ValidationError on an empty set or non-positive learning rate.
LogisticFit train_logistic(const std::vector<RelevanceExample>& examples,
                           const LogisticTrainOptions& options = {});

/// logistic(w . features); throws ValidationError for non-finite input.
double predict_quality(const LogisticModel& model, double nu, double helpful, double unhelpful);

double training_accuracy(const LogisticModel& model, const std::vector<RelevanceExample>& examples);

/// review_id -> label, from {"review_id", "label"} JSON lines.
std::unordered_map<std::string, int> parse_relevance_labels(std::istream& in);

}  // namespace rlda
