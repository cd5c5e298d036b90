#pragma once

// Dense linear algebra used throughout the filter: upper-triangular square-root
// factors, R-only QR factorization, triangular solves and log-determinants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "gmmf/errors.hpp"

namespace gmmf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Relative floor below which a triangular diagonal entry counts as singular.
inline constexpr double kSingularityFloor = 1e-12;

/// Square upper-triangular matrix with a nonnegative diagonal.
///
/// Used as a covariance square root: for a factor R the represented covariance
/// is R^T R.  Construction zeroes the strictly lower part and flips the sign of
/// any row whose diagonal entry is negative, which leaves R^T R unchanged.
class UpperTriangular {
public:
    UpperTriangular() = default;

    explicit UpperTriangular(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) {
            throw ArgumentError("UpperTriangular: matrix must be square, got " +
                                std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
        }
        if (!m_.allFinite()) throw ArgumentError("UpperTriangular: nonfinite entry");
        canonicalize();
    }

    static UpperTriangular identity(Eigen::Index n) { return UpperTriangular(Matrix::Identity(n, n)); }
    static UpperTriangular zero(Eigen::Index n) { return UpperTriangular(Matrix::Zero(n, n)); }

    /// Diagonal factor with the given standard deviations.
    static UpperTriangular diagonal(const Vector& stddev) {
        return UpperTriangular(Matrix(stddev.cwiseAbs().asDiagonal()));
    }

    /// Factor of a symmetric positive (semi)definite matrix.
    static UpperTriangular from_covariance(const Matrix& cov);

    [[nodiscard]] Eigen::Index dim() const noexcept { return m_.rows(); }
    [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

    /// R^T R
    [[nodiscard]] Matrix covariance() const { return m_.transpose() * m_; }

    /// Row-major upper triangle including zeros, as used by the JSON format.
    [[nodiscard]] std::vector<double> row_major() const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(m_.size()));
        for (Eigen::Index i = 0; i < m_.rows(); ++i)
            for (Eigen::Index j = 0; j < m_.cols(); ++j) out.push_back(m_(i, j));
        return out;
    }

    friend bool operator==(const UpperTriangular& a, const UpperTriangular& b) {
        return a.m_.rows() == b.m_.rows() && a.m_ == b.m_;
    }

private:
    void canonicalize() {
        m_.triangularView<Eigen::StrictlyLower>().setZero();
        for (Eigen::Index i = 0; i < m_.rows(); ++i) {
            if (m_(i, i) < 0.0) m_.row(i) *= -1.0;
        }
    }

    Matrix m_;
};

/// Upper-triangular R with R^T R = M^T M for a tall matrix M (rows >= cols).
///
/// Householder QR; the orthogonal factor is never formed.
inline UpperTriangular qr_r_factor(const Eigen::Ref<const Matrix>& m) {
    if (m.rows() < m.cols()) {
        throw ArgumentError("qr_r_factor: need rows >= cols, got " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
    }
    if (!m.allFinite()) throw ArgumentError("qr_r_factor: nonfinite entry");
    const Eigen::Index n = m.cols();
    if (n == 0) return UpperTriangular(Matrix(0, 0));
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    return UpperTriangular(std::move(r));
}

inline UpperTriangular UpperTriangular::from_covariance(const Matrix& cov) {
    if (cov.rows() != cov.cols()) throw ArgumentError("from_covariance: matrix must be square");
    if (!cov.allFinite()) throw ArgumentError("from_covariance: nonfinite entry");
    const Matrix sym = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() == Eigen::Success) return UpperTriangular(Matrix(llt.matrixU()));
    // Semidefinite: sym = V diag(l) V^T, so sqrt(l) V^T is a factor.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector l = eig.eigenvalues();
    if (l.minCoeff() < -1e-12 * std::max(1.0, l.cwiseAbs().maxCoeff())) {
        throw ArgumentError("from_covariance: matrix is not positive semidefinite");
    }
    const Matrix f = l.cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    return qr_r_factor(f);
}

namespace detail {

inline void check_nonsingular(const UpperTriangular& r, const char* where) {
    const Eigen::Index n = r.dim();
    if (n == 0) return;
    const Vector diag = r.matrix().diagonal();
    const double largest = diag.maxCoeff();
    const double scale = largest >= kSingularityFloor ? largest : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(diag(i) > kSingularityFloor * scale)) {
            throw SingularFactorError(std::string(where) + ": diagonal entry " + std::to_string(i) + " = " +
                                      std::to_string(diag(i)) + " is below the singularity floor");
        }
    }
}

}  // namespace detail

/// Solves R^T x = b.
inline Vector solve_upper_transposed(const UpperTriangular& r, const Eigen::Ref<const Vector>& b) {
    if (b.size() != r.dim()) throw ArgumentError("solve_upper_transposed: dimension mismatch");
    detail::check_nonsingular(r, "solve_upper_transposed");
    return r.matrix().transpose().triangularView<Eigen::Lower>().solve(b);
}

/// sum_i log R(i,i), which equals half the log-determinant of R^T R.
inline double half_logdet_from_factor(const UpperTriangular& r) {
    detail::check_nonsingular(r, "half_logdet_from_factor");
    return r.matrix().diagonal().array().log().sum();
}

/// Symmetric part of a square matrix.
inline Matrix symmetrize(const Eigen::Ref<const Matrix>& p) { return 0.5 * (p + p.transpose()); }

}  // namespace gmmf
