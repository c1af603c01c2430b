#include "svyconform/scores.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "svyconform/error.hpp"

namespace svyconform {

double Predictor::predict(std::span<const double>) const {
  throw InvalidInput("predictor does not produce point predictions");
}

void Predictor::predict_proba(std::span<const double>, std::span<double>) const {
  throw InvalidInput("predictor does not produce class probabilities");
}

LinearPredictor::LinearPredictor(std::vector<double> coefficients) : coef_(std::move(coefficients)) {
  require(!coef_.empty(), "linear predictor needs at least an intercept");
}

double LinearPredictor::predict(std::span<const double> x) const {
  double v = coef_[0];
  for (std::size_t j = 0; j < x.size(); ++j) v += coef_[j + 1] * x[j];
  return v;
}

MultinomialLogitPredictor::MultinomialLogitPredictor(int n_classes, std::size_t dim,
                                                     std::vector<double> coefficients)
    : k_(n_classes), dim_(dim), coef_(std::move(coefficients)) {
  require(k_ >= 2, "need at least two classes");
  require(coef_.size() == static_cast<std::size_t>(k_ - 1) * (dim_ + 1), "coefficient count mismatch");
}

void MultinomialLogitPredictor::predict_proba(std::span<const double> x, std::span<double> out) const {
  const std::size_t p = dim_ + 1;
  out[0] = 0.0;
  double mx = 0.0;
  for (int k = 1; k < k_; ++k) {
    const double* b = coef_.data() + static_cast<std::size_t>(k - 1) * p;
    double eta = b[0];
    for (std::size_t j = 0; j < dim_; ++j) eta += b[j + 1] * x[j];
    out[static_cast<std::size_t>(k)] = eta;
    mx = std::max(mx, eta);
  }
  double z = 0.0;
  for (int k = 0; k < k_; ++k) z += (out[static_cast<std::size_t>(k)] = std::exp(out[static_cast<std::size_t>(k)] - mx));
  for (int k = 0; k < k_; ++k) out[static_cast<std::size_t>(k)] /= z;
}

// ---------------------------------------------------------------------------

ScoreModel::ScoreModel(std::shared_ptr<const Predictor> predictor, ScoreKind kind,
                       std::optional<std::vector<double>> fit_weights)
    : predictor_(std::move(predictor)), kind_(kind), fit_weights_(std::move(fit_weights)) {
  require(predictor_ != nullptr, "score model needs a predictor");
  if (kind_ == ScoreKind::kOneMinusProb)
    require(predictor_->n_classes() >= 2, "1 - probability score needs a probabilistic classifier");
}

ScoreModel ScoreModel::constant(double center) {
  return ScoreModel(std::make_shared<LinearPredictor>(std::vector<double>{center}), ScoreKind::kAbsResidual);
}

void ScoreModel::check_dim(std::span<const double> x) const {
  if (x.size() != predictor_->dim())
    throw InvalidInput("covariate dimension " + std::to_string(x.size()) + " does not match model dimension " +
                       std::to_string(predictor_->dim()));
}

double ScoreModel::predict(std::span<const double> x) const {
  check_dim(x);
  return predictor_->predict(x);
}

std::vector<double> ScoreModel::predict_proba(std::span<const double> x) const {
  check_dim(x);
  std::vector<double> p(static_cast<std::size_t>(predictor_->n_classes()));
  predictor_->predict_proba(x, p);
  return p;
}

double ScoreModel::score(std::span<const double> x, double y) const {
  check_dim(x);
  if (kind_ == ScoreKind::kAbsResidual) return std::abs(y - predictor_->predict(x));
  const int k = predictor_->n_classes();
  if (!(y >= 0 && y < k && y == std::floor(y)))
    throw InvalidInput("unknown class label " + std::to_string(y));
  double buf[64];
  std::vector<double> heap;
  std::span<double> p;
  if (k <= 64) {
    p = std::span<double>(buf, static_cast<std::size_t>(k));
  } else {
    heap.resize(static_cast<std::size_t>(k));
    p = heap;
  }
  predictor_->predict_proba(x, p);
  return std::max(0.0, 1.0 - p[static_cast<std::size_t>(y)]);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd design_with_intercept(MatrixView x) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols + 1));
  for (std::size_t i = 0; i < x.rows; ++i) {
    a(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < x.cols; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = x.data[i * x.cols + j];
  }
  return a;
}

void check_weights(std::optional<std::span<const double>> weights, std::size_t n) {
  if (!weights) return;
  require(weights->size() == n, "weight count differs from row count");
  for (double w : *weights) require(std::isfinite(w) && w > 0.0, "fit weights must be positive");
}

}  // namespace

ScoreModel fit_ols(MatrixView x, std::span<const double> y, std::optional<std::span<const double>> weights,
                   const std::vector<std::string>& column_names) {
  const std::size_t n = x.rows;
  const std::size_t p = x.cols + 1;
  require(y.size() == n, "response length differs from row count");
  require(x.data.size() == n * x.cols, "covariate matrix size mismatch");
  require(n >= p, "need at least d+1 rows to fit " + std::to_string(x.cols) + " covariates plus intercept");
  check_weights(weights, n);

  Eigen::MatrixXd a = design_with_intercept(x);
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
  if (weights) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::sqrt((*weights)[i]);
      a.row(static_cast<Eigen::Index>(i)) *= s;
      b(static_cast<Eigen::Index>(i)) *= s;
    }
  }

  // Threshold is relative to the largest pivot.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < p) {
    std::string names;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index r = qr.rank(); r < static_cast<Eigen::Index>(p); ++r) {
      const auto col = static_cast<std::size_t>(perm(r));
      std::string name = col == 0 ? "intercept"
                         : (col - 1 < column_names.size() ? column_names[col - 1] : "x" + std::to_string(col));
      names += (names.empty() ? "" : ", ") + name;
    }
    throw InvalidInput("design matrix is rank deficient; collinear column(s): " + names);
  }
  Eigen::VectorXd beta = qr.solve(b);
  std::vector<double> coef(beta.data(), beta.data() + beta.size());
  std::optional<std::vector<double>> fw;
  if (weights) fw.emplace(weights->begin(), weights->end());
  return ScoreModel(std::make_shared<LinearPredictor>(std::move(coef)), ScoreKind::kAbsResidual, std::move(fw));
}

ScoreModel fit_multinomial_logit(MatrixView x, std::span<const double> labels, int n_classes,
                                 std::optional<std::span<const double>> weights, const LogitOptions& options) {
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  const std::size_t p = d + 1;
  require(n_classes >= 2, "need at least two classes");
  require(labels.size() == n, "label count differs from row count");
  require(n >= 1, "no training rows");
  check_weights(weights, n);
  for (double l : labels)
    require(l >= 0 && l < n_classes && l == std::floor(l), "label outside 0..K-1");

  const auto km1 = static_cast<std::size_t>(n_classes - 1);
  const auto dim = static_cast<Eigen::Index>(km1 * p);
  const Eigen::MatrixXd a = design_with_intercept(x);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  std::vector<double> probs(static_cast<std::size_t>(n_classes));
  auto wt = [&](std::size_t i) { return weights ? (*weights)[i] : 1.0; };

  auto make_predictor = [&](const Eigen::VectorXd& t) {
    return MultinomialLogitPredictor(n_classes, d, std::vector<double>(t.data(), t.data() + t.size()));
  };
  auto log_likelihood = [&](const Eigen::VectorXd& t) {
    const auto model = make_predictor(t);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      model.predict_proba(x.row(i), probs);
      ll += wt(i) * std::log(std::max(probs[static_cast<std::size_t>(labels[i])], 1e-300));
    }
    return ll;
  };

  double ll = log_likelihood(theta);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const auto model = make_predictor(theta);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
      model.predict_proba(x.row(i), probs);
      const double w = wt(i);
      const auto ai = a.row(static_cast<Eigen::Index>(i));
      for (std::size_t k = 0; k < km1; ++k) {
        const double pk = probs[k + 1];
        const double yk = labels[i] == static_cast<double>(k + 1) ? 1.0 : 0.0;
        grad.segment(static_cast<Eigen::Index>(k * p), static_cast<Eigen::Index>(p)) += w * (yk - pk) * ai.transpose();
        for (std::size_t l = 0; l < km1; ++l) {
          const double c = w * ((k == l ? pk : 0.0) - pk * probs[l + 1]);
          hess.block(static_cast<Eigen::Index>(k * p), static_cast<Eigen::Index>(l * p), static_cast<Eigen::Index>(p),
                     static_cast<Eigen::Index>(p))
              .noalias() += c * ai.transpose() * ai;
        }
      }
    }
    if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) break;
    // Small ridge keeps the solve defined on separable or collinear data.
    hess.diagonal().array() += 1e-9 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half, scale *= 0.5) {
      const Eigen::VectorXd cand = theta + scale * step;
      const double cand_ll = log_likelihood(cand);
      if (std::isfinite(cand_ll) && cand_ll >= ll) {
        theta = cand;
        improved = cand_ll > ll;
        ll = cand_ll;
        break;
      }
    }
    if (!improved) break;
  }
  std::optional<std::vector<double>> fw;
  if (weights) fw.emplace(weights->begin(), weights->end());
  return ScoreModel(std::make_shared<MultinomialLogitPredictor>(make_predictor(theta)), ScoreKind::kOneMinusProb,
                    std::move(fw));
}

}  // namespace svyconform
