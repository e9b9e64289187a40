#pragma once

// Regularized convex objectives G(theta) = F(theta) + (lambda/2)|theta|^2.
//
// Convention used throughout the library: gradient() includes the lambda*theta
// term, hessian() does NOT include lambda*I. The sketched estimators act on
// the unregularized curvature and lambda enters only through the debiasing
// regularizer, so mixing the two here would corrupt calibration.
//
// Losses are averaged over rows: the ridge loss is (1/n)|X theta - y|^2 and the
// logistic loss is the mean log loss. lambda is relative to that scaling.

#include "dsnewton/matrix_kernel.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace dsnewton {

/// Rows of X are covariates. For logistic tasks y holds labels in {0,1}.
struct Dataset {
  Matrix X;
  Vector y;

  Eigen::Index rows() const noexcept { return X.rows(); }
  Eigen::Index cols() const noexcept { return X.cols(); }
};

inline void validate_dataset(const Dataset& data, bool binary_labels) {
  if (data.X.rows() != data.y.size()) throw DimensionError("Dataset: X rows and y length differ");
  if (data.X.rows() < 1) throw std::invalid_argument("Dataset: need at least one row");
  if (!data.X.allFinite() || !data.y.allFinite())
    throw std::invalid_argument("Dataset: non-finite entries");
  if (binary_labels) {
    for (Eigen::Index i = 0; i < data.y.size(); ++i)
      if (data.y[i] != 0.0 && data.y[i] != 1.0)
        throw std::invalid_argument("Dataset: logistic label outside {0,1} at row " + std::to_string(i));
  }
}

class Objective {
 public:
  explicit Objective(double lambda) : lambda_(lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("Objective: lambda must be positive");
  }
  virtual ~Objective() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  virtual HessianView hessian(const Vector& theta) const = 0;
  /// True when hessian() does not depend on theta.
  virtual bool constant_hessian() const = 0;

  double ridge_lambda() const noexcept { return lambda_; }

 protected:
  void check(const Vector& theta) const { detail::require_dims(theta.size() == dim(), "Objective"); }
  double penalty(const Vector& theta) const { return 0.5 * lambda_ * theta.squaredNorm(); }

 private:
  double lambda_;
};

class RidgeObjective final : public Objective {
 public:
  RidgeObjective(Dataset data, double lambda) : Objective(lambda), data_(std::move(data)) {
    validate_dataset(data_, false);
    factor_ = std::sqrt(2.0 / static_cast<double>(data_.rows())) * data_.X;
  }

  Eigen::Index dim() const override { return data_.cols(); }

  double value(const Vector& theta) const override {
    check(theta);
    return (data_.X * theta - data_.y).squaredNorm() / static_cast<double>(data_.rows()) + penalty(theta);
  }

  Vector gradient(const Vector& theta) const override {
    check(theta);
    const Vector r = data_.X * theta - data_.y;
    return (2.0 / static_cast<double>(data_.rows())) * (data_.X.transpose() * r) + ridge_lambda() * theta;
  }

  HessianView hessian(const Vector& theta) const override {
    check(theta);
    return HessianView::factored(factor_);
  }

  bool constant_hessian() const override { return true; }

  const Dataset& data() const noexcept { return data_; }

 private:
  Dataset data_;
  Matrix factor_;
};

namespace detail {
/// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}
}  // namespace detail

class LogisticObjective final : public Objective {
 public:
  static constexpr double kMinWeight = 1e-12;

  LogisticObjective(Dataset data, double lambda) : Objective(lambda), data_(std::move(data)) {
    validate_dataset(data_, true);
  }

  Eigen::Index dim() const override { return data_.cols(); }

  double value(const Vector& theta) const override {
    check(theta);
    const Vector z = data_.X * theta;
    // -[y log s(z) + (1-y) log(1-s(z))] = log(1+e^z) - y z
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += detail::log1pexp(z[i]) - data_.y[i] * z[i];
    return loss / static_cast<double>(data_.rows()) + penalty(theta);
  }

  Vector gradient(const Vector& theta) const override {
    check(theta);
    const Vector z = data_.X * theta;
    Vector r(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) r[i] = detail::sigmoid(z[i]) - data_.y[i];
    return (data_.X.transpose() * r) / static_cast<double>(data_.rows()) + ridge_lambda() * theta;
  }

  HessianView hessian(const Vector& theta) const override {
    check(theta);
    const Vector z = data_.X * theta;
    Vector w(z.size());
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(data_.rows()));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = detail::sigmoid(z[i]);
      w[i] = std::sqrt(std::max(s * (1.0 - s), kMinWeight)) * inv_sqrt_n;
    }
    return HessianView::factored(w.asDiagonal() * data_.X);
  }

  bool constant_hessian() const override { return false; }

  const Dataset& data() const noexcept { return data_; }

 private:
  Dataset data_;
};

/// 0.5 theta^T H theta - b^T theta + (lambda/2)|theta|^2 with H PSD.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(SymmetricMatrix h, Vector b, double lambda)
      : Objective(lambda), h_(std::move(h)), b_(std::move(b)) {
    detail::require_dims(h_.dim() == b_.size(), "QuadraticObjective");
    if (h_.dim() > 0) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(h_.dense(), Eigen::EigenvaluesOnly);
      const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      if (es.eigenvalues().minCoeff() < -1e-10 * scale)
        throw std::invalid_argument("QuadraticObjective: H is not positive semidefinite");
    }
  }

  Eigen::Index dim() const override { return h_.dim(); }

  double value(const Vector& theta) const override {
    check(theta);
    return 0.5 * theta.dot(h_.dense() * theta) - b_.dot(theta) + penalty(theta);
  }

  Vector gradient(const Vector& theta) const override {
    check(theta);
    return h_.dense() * theta - b_ + ridge_lambda() * theta;
  }

  HessianView hessian(const Vector& theta) const override {
    check(theta);
    return HessianView::dense(h_);
  }

  bool constant_hessian() const override { return true; }

 private:
  SymmetricMatrix h_;
  Vector b_;
};

inline std::unique_ptr<Objective> ridge_objective(Dataset data, double lambda) {
  return std::make_unique<RidgeObjective>(std::move(data), lambda);
}
inline std::unique_ptr<Objective> logistic_objective(Dataset data, double lambda) {
  return std::make_unique<LogisticObjective>(std::move(data), lambda);
}
inline std::unique_ptr<Objective> quadratic_objective(SymmetricMatrix h, Vector b, double lambda) {
  return std::make_unique<QuadraticObjective>(std::move(h), std::move(b), lambda);
}

}  // namespace dsnewton
