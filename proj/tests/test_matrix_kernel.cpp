#include "dsnewton/matrix_kernel.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace dsnewton;
using testkit::random_psd;
using testkit::random_symmetric;
using testkit::rel_err;

TEST(SymmetricMatrix, MirrorsLowerTriangle) {
  Matrix m(2, 2);
  m << 1, 7, 3, 4;
  const SymmetricMatrix s(m);
  EXPECT_EQ(s(0, 1), 3.0);
  EXPECT_EQ(s(1, 0), 3.0);
  EXPECT_THROW(SymmetricMatrix(Matrix(2, 3)), DimensionError);
}

TEST(SymEig, IdentityHasUnitSpectrum) {
  const auto e = sym_eig(SymmetricMatrix::identity(3));
  EXPECT_TRUE(e.eigenvalues.isApprox(Vector::Ones(3)));
  EXPECT_LE((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(SymEig, DiagonalSortedDescending) {
  const auto e = sym_eig(SymmetricMatrix::diagonal(Vector::LinSpaced(3, 0, 2).unaryExpr([](double i) {
    const double v[] = {3, 1, 2};
    return v[static_cast<int>(i)];
  })));
  EXPECT_DOUBLE_EQ(e.eigenvalues[0], 3.0);
  EXPECT_DOUBLE_EQ(e.eigenvalues[1], 2.0);
  EXPECT_DOUBLE_EQ(e.eigenvalues[2], 1.0);
}

TEST(SymEig, RandomReconstruction) {
  for (Eigen::Index d : {1, 7, 50, 200, 500}) {
    const SymmetricMatrix m(random_symmetric(d, 100 + d));
    const auto e = sym_eig(m);
    ASSERT_EQ(e.dim(), d);
    for (Eigen::Index i = 1; i < d; ++i) EXPECT_GE(e.eigenvalues[i - 1], e.eigenvalues[i]);
    const Matrix rec = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
    EXPECT_LE((rec - m.dense()).norm(), 1e-8 * (1.0 + m.dense().norm())) << "d=" << d;
    EXPECT_LE((rec - m.dense()).cwiseAbs().maxCoeff(), 1e-8) << "d=" << d;
    EXPECT_LE((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(d, d)).norm(), 1e-10 * d);
  }
}

TEST(SymEig, EigenvaluesOnlyMatchesFull) {
  const SymmetricMatrix m(random_symmetric(60, 3));
  EXPECT_LE((sym_eigenvalues(m) - sym_eig(m).eigenvalues).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(sym_eig(m).has_eigenvectors());
}

TEST(SymEig, RejectsNonFinite) {
  Matrix m = Matrix::Identity(3, 3);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sym_eig(SymmetricMatrix(m)), std::invalid_argument);
  EXPECT_EQ(sym_eig(SymmetricMatrix(Matrix(0, 0))).dim(), 0);
}

TEST(ShiftedSolve, ZeroMatrixHalves) {
  const auto e = sym_eig(SymmetricMatrix::zero(4));
  const Vector v = Vector::LinSpaced(4, 1, 4);
  EXPECT_TRUE(shifted_solve(e, 2.0, v).isApprox(v / 2));
}

TEST(ShiftedSolve, IdentityHalves) {
  const auto e = sym_eig(SymmetricMatrix::identity(4));
  const Vector v = Vector::LinSpaced(4, -1, 3);
  EXPECT_TRUE(shifted_solve(e, 1.0, v).isApprox(v / 2));
}

TEST(ShiftedSolve, MatchesDenseSolve) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix h = random_psd(30, seed, 20);  // rank deficient
    const auto e = sym_eig(SymmetricMatrix(h));
    Rng rng(seed);
    const Vector v = gaussian_matrix(30, 1, rng);
    const double shift = 0.3;
    const Vector x = shifted_solve(e, shift, v);
    const Matrix k = h + shift * Matrix::Identity(30, 30);
    EXPECT_LE((k * x - v).norm(), 1e-8 * v.norm());
    EXPECT_LE(rel_err(x, k.partialPivLu().solve(v)), 1e-8);
    EXPECT_LE(rel_err(shifted_cholesky_solve(SymmetricMatrix(h), shift, v), x), 1e-10);
  }
}

TEST(ShiftedSolve, RejectsBadShift) {
  const auto e = sym_eig(SymmetricMatrix::identity(2));
  EXPECT_THROW(shifted_solve(e, 0.0, Vector::Ones(2)), std::invalid_argument);
  EXPECT_THROW(shifted_solve(e, -1.0, Vector::Ones(2)), std::invalid_argument);
  EXPECT_THROW(shifted_solve(e, 1.0, Vector::Ones(3)), DimensionError);
  const SpectralDecomposition values_only{Vector::Ones(2), Matrix()};
  EXPECT_THROW(shifted_solve(values_only, 1.0, Vector::Ones(2)), std::invalid_argument);
}

TEST(ShiftedSolve, ClampsTinyNegativeEigenvalues) {
  SpectralDecomposition e{Vector::Constant(2, -1e-18), Matrix::Identity(2, 2)};
  EXPECT_TRUE(shifted_solve(e, 1.0, Vector::Ones(2)).isApprox(Vector::Ones(2)));
}

TEST(HessianMatvec, Identity) {
  const Vector v = Vector::LinSpaced(5, 1, 5);
  EXPECT_EQ(hessian_matvec(HessianView::dense(SymmetricMatrix::identity(5)), v), v);
}

TEST(HessianMatvec, SmallFactored) {
  Matrix a(2, 2);
  a << 1, 0, 0, 2;
  const Vector out = hessian_matvec(HessianView::factored(a), Vector::Ones(2));
  EXPECT_DOUBLE_EQ(out[0], 1.0);
  EXPECT_DOUBLE_EQ(out[1], 4.0);
}

TEST(HessianMatvec, FactoredDenseDiagonalAgree) {
  Rng rng(11);
  const Matrix a = gaussian_matrix(40, 25, rng);
  const HessianView f = HessianView::factored(a);
  const HessianView d = HessianView::dense(f.densify());
  const Vector v = gaussian_matrix(25, 1, rng);
  EXPECT_LE(rel_err(hessian_matvec(f, v), hessian_matvec(d, v)), 1e-10);
  EXPECT_LE(rel_err(hessian_matvec(f, v), a.transpose() * (a * v)), 1e-12);

  const Vector diag = gaussian_matrix(25, 1, rng).cwiseAbs();
  EXPECT_LE(rel_err(hessian_matvec(HessianView::diagonal(diag), v),
                    hessian_matvec(HessianView::dense(SymmetricMatrix::diagonal(diag)), v)),
            1e-15);
  EXPECT_THROW(hessian_matvec(f, Vector::Ones(3)), DimensionError);
}

TEST(Norms, SpectralAndFrobenius) {
  Matrix m = Matrix::Zero(3, 3);
  m.diagonal() << -4, 1, 2;
  EXPECT_DOUBLE_EQ(spectral_norm(SymmetricMatrix(m)), 4.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(m), std::sqrt(21.0));
}

TEST(PsdSqrt, SquaresBack) {
  const Matrix h = random_psd(20, 5);
  const Matrix r = psd_sqrt(SymmetricMatrix(h));
  EXPECT_LE(rel_err(r * r, h), 1e-10);
}
