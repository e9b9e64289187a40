#pragma once

// Dense symmetric linear algebra shared by the sketching, calibration and
// solver layers. Everything here is a pure function of its arguments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>

namespace dsnewton {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EigenSolverError : public std::runtime_error {
 public:
  EigenSolverError(const std::string& what, int iterations)
      : std::runtime_error(what + " (iteration budget " + std::to_string(iterations) + ")"), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// Eigen's QR sweep budget per eigenvalue (m_maxIterations in SelfAdjointEigenSolver).
inline constexpr int kEigenMaxSweeps = 30;

namespace detail {
inline void require_dims(bool ok, const char* where) {
  if (!ok) throw DimensionError(std::string(where) + ": dimension mismatch");
}
}  // namespace detail

/// Real symmetric d x d matrix. The constructor mirrors the lower triangle
/// onto the upper one, so entries(i,j) == entries(j,i) holds bit-exactly.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;

  explicit SymmetricMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionError("SymmetricMatrix: matrix must be square");
    m_.triangularView<Eigen::StrictlyUpper>() = m_.transpose();
  }

  static SymmetricMatrix identity(Eigen::Index d) { return SymmetricMatrix(Matrix::Identity(d, d)); }
  static SymmetricMatrix zero(Eigen::Index d) { return SymmetricMatrix(Matrix::Zero(d, d)); }
  static SymmetricMatrix diagonal(const Vector& diag) {
    return SymmetricMatrix(Matrix(diag.asDiagonal()));
  }

  Eigen::Index dim() const noexcept { return m_.rows(); }
  const Matrix& dense() const noexcept { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Hessian without its ridge term, in one of three storage forms. Factored
/// holds A with H = A^T A; Diagonal holds the diagonal of H.
struct DenseHessian {
  SymmetricMatrix matrix;
};
struct FactoredHessian {
  Matrix factor;
};
struct DiagonalHessian {
  Vector diag;
};

class HessianView {
 public:
  HessianView(DenseHessian h) : v_(std::move(h)) {}
  HessianView(FactoredHessian h) : v_(std::move(h)) {}
  HessianView(DiagonalHessian h) : v_(std::move(h)) {}

  static HessianView dense(SymmetricMatrix m) { return HessianView(DenseHessian{std::move(m)}); }
  static HessianView factored(Matrix a) { return HessianView(FactoredHessian{std::move(a)}); }
  static HessianView diagonal(Vector d) { return HessianView(DiagonalHessian{std::move(d)}); }

  Eigen::Index dim() const {
    return std::visit(
        [](const auto& h) -> Eigen::Index {
          using T = std::decay_t<decltype(h)>;
          if constexpr (std::is_same_v<T, DenseHessian>) return h.matrix.dim();
          else if constexpr (std::is_same_v<T, FactoredHessian>) return h.factor.cols();
          else return h.diag.size();
        },
        v_);
  }

  const auto& variant() const noexcept { return v_; }

  /// Full d x d matrix. Intended for diagnostics and small problems.
  SymmetricMatrix densify() const {
    return std::visit(
        [](const auto& h) -> SymmetricMatrix {
          using T = std::decay_t<decltype(h)>;
          if constexpr (std::is_same_v<T, DenseHessian>) {
            return h.matrix;
          } else if constexpr (std::is_same_v<T, FactoredHessian>) {
            Matrix g = Matrix::Zero(h.factor.cols(), h.factor.cols());
            g.selfadjointView<Eigen::Lower>().rankUpdate(h.factor.transpose());
            return SymmetricMatrix(std::move(g));
          } else {
            return SymmetricMatrix::diagonal(h.diag);
          }
        },
        v_);
  }

 private:
  std::variant<DenseHessian, FactoredHessian, DiagonalHessian> v_;
};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
/// eigenvectors may be empty when only the spectrum was requested.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Eigen::Index dim() const noexcept { return eigenvalues.size(); }
  bool has_eigenvectors() const noexcept { return eigenvectors.size() > 0 || eigenvalues.size() == 0; }
};

/// Eigenpairs via Eigen's symmetric QR solver.
inline SpectralDecomposition sym_eig(const SymmetricMatrix& m) {
  if (!m.dense().allFinite()) throw std::invalid_argument("sym_eig: matrix has non-finite entries");
  const Eigen::Index d = m.dim();
  if (d == 0) return {Vector(), Matrix()};
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.dense(), Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw EigenSolverError("sym_eig: symmetric QR iteration did not converge", kEigenMaxSweeps * static_cast<int>(d));
  // Eigen returns ascending order.
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

/// Eigenvalues only, descending. Several times cheaper than sym_eig.
inline Vector sym_eigenvalues(const SymmetricMatrix& m) {
  if (!m.dense().allFinite()) throw std::invalid_argument("sym_eigenvalues: matrix has non-finite entries");
  if (m.dim() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.dense(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw EigenSolverError("sym_eigenvalues: symmetric QR iteration did not converge",
                           kEigenMaxSweeps * static_cast<int>(m.dim()));
  return es.eigenvalues().reverse();
}

inline double spectral_norm(const SymmetricMatrix& m) {
  if (m.dim() == 0) return 0.0;
  return sym_eigenvalues(m).cwiseAbs().maxCoeff();
}

/// (M + shift I)^{-1} V by Cholesky; M must be PSD and shift > 0.
inline Matrix shifted_cholesky_solve(const SymmetricMatrix& m, double shift, const Matrix& v) {
  if (!(shift > 0.0)) throw std::invalid_argument("shifted_cholesky_solve: shift must be positive");
  detail::require_dims(v.rows() == m.dim(), "shifted_cholesky_solve");
  Matrix k = m.dense();
  k.diagonal().array() += shift;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) throw std::runtime_error("shifted_cholesky_solve: matrix not positive definite");
  return llt.solve(v);
}

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

/// Eigenvalues below zero are floating-point noise for PSD inputs.
inline Vector clamp_nonnegative(const Vector& eigenvalues) { return eigenvalues.cwiseMax(0.0); }

inline Vector shifted_solve(const SpectralDecomposition& decomp, double shift, const Vector& v) {
  if (!(shift > 0.0)) throw std::invalid_argument("shifted_solve: shift must be positive");
  detail::require_dims(v.size() == decomp.dim(), "shifted_solve");
  if (!decomp.has_eigenvectors()) throw std::invalid_argument("shifted_solve: decomposition has no eigenvectors");
  const Vector inv = (clamp_nonnegative(decomp.eigenvalues).array() + shift).inverse().matrix();
  return decomp.eigenvectors * (inv.asDiagonal() * (decomp.eigenvectors.transpose() * v));
}

inline Vector hessian_matvec(const HessianView& h, const Vector& v) {
  detail::require_dims(v.size() == h.dim(), "hessian_matvec");
  return std::visit(
      [&](const auto& hh) -> Vector {
        using T = std::decay_t<decltype(hh)>;
        if constexpr (std::is_same_v<T, DenseHessian>) {
          return hh.matrix.dense().template selfadjointView<Eigen::Lower>() * v;
        } else if constexpr (std::is_same_v<T, FactoredHessian>) {
          return hh.factor.transpose() * (hh.factor * v);
        } else {
          return hh.diag.cwiseProduct(v);
        }
      },
      h.variant());
}

/// Symmetric square root of a PSD matrix via its eigendecomposition.
inline Matrix psd_sqrt(const SymmetricMatrix& m) {
  const SpectralDecomposition e = sym_eig(m);
  const Vector r = clamp_nonnegative(e.eigenvalues).cwiseSqrt();
  return e.eigenvectors * r.asDiagonal() * e.eigenvectors.transpose();
}

}  // namespace dsnewton
