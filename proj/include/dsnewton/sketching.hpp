#pragma once

// I.i.d. sketching matrices and the debiased sketched inverse
//   W_hat = S^T (S H S^T + lambda_hat I)^{-1} S.
// Entries have mean 0 and variance 1/m, so E[S^T S] = I.

#include "dsnewton/matrix_kernel.hpp"
#include "dsnewton/random.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsnewton {

struct SketchDistribution {
  enum class Kind { Gaussian, Rademacher, SparseRademacher };

  Kind kind = Kind::Gaussian;
  double density = 1.0;  ///< nonzero probability, SparseRademacher only

  static SketchDistribution gaussian() { return {Kind::Gaussian, 1.0}; }
  static SketchDistribution rademacher() { return {Kind::Rademacher, 1.0}; }
  static SketchDistribution sparse_rademacher(double p = 0.1) {
    if (!(p > 0.0 && p <= 1.0))
      throw std::invalid_argument("sparse_rademacher: density must lie in (0,1], got " + std::to_string(p));
    return {Kind::SparseRademacher, p};
  }

  std::string name() const {
    switch (kind) {
      case Kind::Gaussian: return "gaussian";
      case Kind::Rademacher: return "rademacher";
      case Kind::SparseRademacher: return "sparse-rademacher";
    }
    return "unknown";
  }

  friend bool operator==(const SketchDistribution&, const SketchDistribution&) = default;
};

inline SketchDistribution parse_sketch_distribution(const std::string& s) {
  if (s == "gaussian" || s == "G") return SketchDistribution::gaussian();
  if (s == "rademacher" || s == "R") return SketchDistribution::rademacher();
  if (s == "sparse-rademacher" || s == "SR") return SketchDistribution::sparse_rademacher();
  throw std::invalid_argument("unknown sketch distribution '" + s + "'");
}

struct SketchSample {
  Matrix matrix;  ///< m x d
  SketchDistribution dist;
  std::uint64_t seed = 0;

  Eigen::Index m() const noexcept { return matrix.rows(); }
  Eigen::Index d() const noexcept { return matrix.cols(); }
};

inline SketchSample sample_sketch(SketchDistribution dist, Eigen::Index m, Eigen::Index d, std::uint64_t seed) {
  if (m < 1 || d < 1) throw std::invalid_argument("sample_sketch: m and d must be positive");
  if (dist.kind == SketchDistribution::Kind::SparseRademacher && !(dist.density > 0.0 && dist.density <= 1.0))
    throw std::invalid_argument("sample_sketch: sparse Rademacher density must lie in (0,1]");

  Rng rng(seed);
  Matrix s(m, d);
  const double md = static_cast<double>(m);
  switch (dist.kind) {
    case SketchDistribution::Kind::Gaussian: {
      std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(md));
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < m; ++i) s(i, j) = n(rng);
      break;
    }
    case SketchDistribution::Kind::Rademacher: {
      const double v = 1.0 / std::sqrt(md);
      std::uint64_t bits = 0;
      int left = 0;
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < m; ++i) {
          if (left == 0) {
            bits = rng();
            left = 64;
          }
          s(i, j) = (bits & 1U) ? v : -v;
          bits >>= 1;
          --left;
        }
      break;
    }
    case SketchDistribution::Kind::SparseRademacher: {
      const double p = dist.density;
      const double v = 1.0 / std::sqrt(p * md);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < m; ++i) {
          const bool nonzero = u(rng) < p;
          const bool positive = (rng() >> 63) != 0;
          s(i, j) = nonzero ? (positive ? v : -v) : 0.0;
        }
      break;
    }
  }
  return {std::move(s), dist, seed};
}

/// What sketch_hessian decomposes. The spectrum alone drives every Stieltjes
/// evaluation; shifted solves then go through a Cholesky factor of the gram.
enum class SketchSpectrum { EigenvaluesOnly, Full };

/// S H S^T with its (clamped) spectrum, computed once and reused for every
/// Stieltjes evaluation and shifted solve.
struct SketchedHessian {
  SymmetricMatrix gram;
  SpectralDecomposition decomp;  ///< eigenvalues clamped to >= 0
  SketchSample sketch;

  Eigen::Index m() const noexcept { return gram.dim(); }
};

inline SymmetricMatrix sketched_gram(const SketchSample& s, const HessianView& h) {
  detail::require_dims(s.d() == h.dim(), "sketch_hessian");
  const Matrix& S = s.matrix;
  return std::visit(
      [&](const auto& hh) -> SymmetricMatrix {
        using T = std::decay_t<decltype(hh)>;
        Matrix g = Matrix::Zero(S.rows(), S.rows());
        if constexpr (std::is_same_v<T, DenseHessian>) {
          const Matrix sh = S * hh.matrix.dense().template selfadjointView<Eigen::Lower>();
          g.noalias() = sh * S.transpose();
        } else if constexpr (std::is_same_v<T, FactoredHessian>) {
          const Matrix b = hh.factor * S.transpose();  // n x m
          g.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
        } else {
          const Matrix b = S * hh.diag.cwiseMax(0.0).cwiseSqrt().asDiagonal();  // m x d
          g.selfadjointView<Eigen::Lower>().rankUpdate(b);
        }
        return SymmetricMatrix(std::move(g));
      },
      h.variant());
}

inline SketchedHessian sketch_hessian(SketchSample s, const HessianView& h,
                                     SketchSpectrum what = SketchSpectrum::EigenvaluesOnly) {
  const auto* fac = std::get_if<FactoredHessian>(&h.variant());
  if (what == SketchSpectrum::EigenvaluesOnly && fac != nullptr && fac->factor.rows() < s.m()) {
    // S H S^T = B^T B has the nonzero spectrum of the smaller B B^T.
    detail::require_dims(s.d() == h.dim(), "sketch_hessian");
    const Matrix b = fac->factor * s.matrix.transpose();  // r x m
    Matrix g = Matrix::Zero(s.m(), s.m());
    g.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
    Matrix small = Matrix::Zero(b.rows(), b.rows());
    small.selfadjointView<Eigen::Lower>().rankUpdate(b);
    Vector ev = Vector::Zero(s.m());
    ev.head(b.rows()) = clamp_nonnegative(sym_eigenvalues(SymmetricMatrix(std::move(small))));
    return {SymmetricMatrix(std::move(g)), {std::move(ev), Matrix()}, std::move(s)};
  }
  SymmetricMatrix gram = sketched_gram(s, h);
  SpectralDecomposition decomp =
      what == SketchSpectrum::Full ? sym_eig(gram) : SpectralDecomposition{sym_eigenvalues(gram), Matrix()};
  decomp.eigenvalues = clamp_nonnegative(decomp.eigenvalues);
  return {std::move(gram), std::move(decomp), std::move(s)};
}

inline Vector apply_debiased_inverse(const SketchedHessian& sk, double lambda_hat, const Vector& g) {
  if (!(lambda_hat > 0.0)) throw std::invalid_argument("apply_debiased_inverse: lambda_hat must be positive");
  detail::require_dims(g.size() == sk.sketch.d(), "apply_debiased_inverse");
  const Matrix& S = sk.sketch.matrix;
  if (sk.decomp.has_eigenvectors()) return S.transpose() * shifted_solve(sk.decomp, lambda_hat, S * g);
  return S.transpose() * shifted_cholesky_solve(sk.gram, lambda_hat, S * g);
}

/// Full d x d estimator. Symmetric PSD with rank at most m.
inline SymmetricMatrix densify_estimator(const SketchedHessian& sk, double lambda_hat) {
  if (!(lambda_hat > 0.0)) throw std::invalid_argument("densify_estimator: lambda_hat must be positive");
  Matrix c;  // m x d with W = C^T C
  if (sk.decomp.has_eigenvectors()) {
    const Vector scale = (sk.decomp.eigenvalues.array() + lambda_hat).rsqrt().matrix();
    c = scale.asDiagonal() * (sk.decomp.eigenvectors.transpose() * sk.sketch.matrix);
  } else {
    Matrix k = sk.gram.dense();
    k.diagonal().array() += lambda_hat;
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) throw std::runtime_error("densify_estimator: shifted gram not positive definite");
    c = llt.matrixL().solve(sk.sketch.matrix);
  }
  Matrix w = Matrix::Zero(c.cols(), c.cols());
  w.selfadjointView<Eigen::Lower>().rankUpdate(c.transpose());
  return SymmetricMatrix(std::move(w));
}

}  // namespace dsnewton
