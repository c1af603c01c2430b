#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svyconform {

/// Row-major view over an n x d covariate matrix.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

/// Black-box fitted prediction function. Implementations must be immutable
/// after construction: engines call them concurrently.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t dim() const = 0;
  /// Number of classes for probabilistic classifiers, 0 for regressors.
  virtual int n_classes() const { return 0; }
  /// Point prediction (regressors).
  virtual double predict(std::span<const double> x) const;
  /// Class probabilities (classifiers); `out` has n_classes() entries.
  virtual void predict_proba(std::span<const double> x, std::span<double> out) const;
};

/// beta_0 + beta . x
class LinearPredictor final : public Predictor {
 public:
  explicit LinearPredictor(std::vector<double> coefficients);
  std::size_t dim() const override { return coef_.size() - 1; }
  double predict(std::span<const double> x) const override;
  const std::vector<double>& coefficients() const { return coef_; }

 private:
  std::vector<double> coef_;  // intercept first
};

/// Softmax over K linear scores, class 0 fixed at zero.
class MultinomialLogitPredictor final : public Predictor {
 public:
  /// `coefficients` holds (K-1) rows of (d+1) values, intercept first.
  MultinomialLogitPredictor(int n_classes, std::size_t dim, std::vector<double> coefficients);
  std::size_t dim() const override { return dim_; }
  int n_classes() const override { return k_; }
  void predict_proba(std::span<const double> x, std::span<double> out) const override;
  const std::vector<double>& coefficients() const { return coef_; }

 private:
  int k_;
  std::size_t dim_;
  std::vector<double> coef_;
};

/// Wraps any callable as a regressor.
class FunctionPredictor final : public Predictor {
 public:
  FunctionPredictor(std::size_t dim, std::function<double(std::span<const double>)> fn)
      : dim_(dim), fn_(std::move(fn)) {}
  std::size_t dim() const override { return dim_; }
  double predict(std::span<const double> x) const override { return fn_(x); }

 private:
  std::size_t dim_;
  std::function<double(std::span<const double>)> fn_;
};

enum class ScoreKind { kAbsResidual, kOneMinusProb };

/// Fitted predictor plus the nonconformity score built on it.
class ScoreModel {
 public:
  ScoreModel(std::shared_ptr<const Predictor> predictor, ScoreKind kind,
             std::optional<std::vector<double>> fit_weights = std::nullopt);

  /// Constant predictor c with absolute-residual score |y - c|; used for
  /// unsupervised intervals.
  static ScoreModel constant(double center);

  ScoreKind kind() const { return kind_; }
  std::size_t dim() const { return predictor_->dim(); }
  int n_classes() const { return predictor_->n_classes(); }
  const Predictor& predictor() const { return *predictor_; }
  const std::optional<std::vector<double>>& fit_weights() const { return fit_weights_; }

  /// |y - f(x)| or 1 - f(x)_y. Throws on dimension mismatch or unknown label.
  double score(std::span<const double> x, double y) const;

  /// Point prediction; regression models only.
  double predict(std::span<const double> x) const;
  /// Class probabilities; classification models only.
  std::vector<double> predict_proba(std::span<const double> x) const;

 private:
  void check_dim(std::span<const double> x) const;

  std::shared_ptr<const Predictor> predictor_;
  ScoreKind kind_;
  std::optional<std::vector<double>> fit_weights_;
};

/// Least squares with intercept via column-pivoted Householder QR; weighted
/// least squares when weights are given. Throws InvalidInput naming the
/// collinear columns when the design is rank deficient.
ScoreModel fit_ols(MatrixView x, std::span<const double> y,
                   std::optional<std::span<const double>> weights = std::nullopt,
                   const std::vector<std::string>& column_names = {});

struct LogitOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

/// Multinomial logistic regression (class 0 as reference) by damped Newton
/// iterations. Labels are 0..n_classes-1 stored as doubles.
ScoreModel fit_multinomial_logit(MatrixView x, std::span<const double> labels, int n_classes,
                                 std::optional<std::span<const double>> weights = std::nullopt,
                                 const LogitOptions& options = {});

}  // namespace svyconform
