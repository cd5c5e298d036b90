#pragma once

// Test-only reference computations.  These deliberately avoid the library's
// factorization paths: determinants by hand-written elimination, Gaussian
// densities from explicit inverses, merges and bounds from full covariances.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "gmmf/linalg.hpp"
#include "gmmf/mixture.hpp"

namespace oracle {

using gmmf::Matrix;
using gmmf::Vector;

/// Determinant by Gaussian elimination with partial pivoting on plain arrays.
inline double determinant(const Matrix& m) {
    const std::size_t n = static_cast<std::size_t>(m.rows());
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i][j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    double det = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (a[piv][c] == 0.0) return 0.0;
        if (piv != c) {
            std::swap(a[piv], a[c]);
            det = -det;
        }
        det *= a[c][c];
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
        }
    }
    return det;
}

/// Inverse by Gauss-Jordan elimination.
inline Matrix inverse(const Matrix& m) {
    const Eigen::Index n = m.rows();
    Matrix a = m;
    Matrix inv = Matrix::Identity(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        Eigen::Index piv = c;
        for (Eigen::Index r = c + 1; r < n; ++r)
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
        a.row(c).swap(a.row(piv));
        inv.row(c).swap(inv.row(piv));
        const double d = a(c, c);
        a.row(c) /= d;
        inv.row(c) /= d;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a(r, c);
            a.row(r) -= f * a.row(c);
            inv.row(r) -= f * inv.row(c);
        }
    }
    return inv;
}

/// Multivariate normal density coded directly from the textbook formula.
inline double normal_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
    const Vector d = x - mean;
    const double q = d.dot(inverse(cov) * d);
    const double k = static_cast<double>(x.size());
    return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * std::numbers::pi, k) * determinant(cov));
}

struct FullComponent {
    double weight;
    Vector mean;
    Matrix cov;
};

/// Moment-preserving merge evaluated on full covariances.
inline FullComponent merge(const FullComponent& a, const FullComponent& b) {
    const double w = a.weight + b.weight;
    const double wa = a.weight / w, wb = b.weight / w;
    const Vector d = a.mean - b.mean;
    return {w, wa * a.mean + wb * b.mean, wa * a.cov + wb * b.cov + wa * wb * d * d.transpose()};
}

/// 0.5 [w_ij log|P_ij| - w_i log|P_i| - w_j log|P_j|] with elimination determinants.
inline double bound(const FullComponent& a, const FullComponent& b) {
    const FullComponent m = merge(a, b);
    return 0.5 * (m.weight * std::log(determinant(m.cov)) - a.weight * std::log(determinant(a.cov)) -
                  b.weight * std::log(determinant(b.cov)));
}

inline FullComponent full(const gmmf::GaussianComponent& c) { return {c.weight, c.mean, c.covariance()}; }

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

/// Well-conditioned random upper-triangular factor.
inline gmmf::UpperTriangular random_factor(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::uniform_real_distribution<double> diag(0.5, 1.5);
    Matrix m = 0.3 * random_matrix(rng, n, n);
    for (Eigen::Index i = 0; i < n; ++i) m(i, i) = diag(rng);
    return gmmf::UpperTriangular(scale * Matrix(m.triangularView<Eigen::Upper>()));
}

inline gmmf::GaussianMixture random_mixture(std::mt19937_64& rng, Eigen::Index dim, std::size_t size,
                                            double spread = 3.0) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::uniform_real_distribution<double> s(0.3, 2.0);
    std::vector<gmmf::GaussianComponent> comps;
    for (std::size_t i = 0; i < size; ++i) {
        comps.emplace_back(u(rng), spread * random_matrix(rng, dim, 1).col(0), random_factor(rng, dim, s(rng)));
    }
    return gmmf::normalize_weights(gmmf::GaussianMixture(std::move(comps)));
}

}  // namespace oracle
