#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "gmmf/errors.hpp"
#include "gmmf/mixture.hpp"
#include "gmmf/particle_filter.hpp"

namespace gmmf {

/// Regular 1-D or 2-D evaluation grid with inclusive end points.
struct DensityGrid {
    Vector lo;
    Vector hi;
    std::vector<std::size_t> counts;

    static DensityGrid line(double lo, double hi, std::size_t n) {
        return {Vector::Constant(1, lo), Vector::Constant(1, hi), {n}};
    }
    static DensityGrid plane(double lo0, double hi0, std::size_t n0, double lo1, double hi1, std::size_t n1) {
        Vector lo(2), hi(2);
        lo << lo0, lo1;
        hi << hi0, hi1;
        return {lo, hi, {n0, n1}};
    }

    void validate() const {
        if (lo.size() != hi.size() || static_cast<std::size_t>(lo.size()) != counts.size() || counts.empty() ||
            counts.size() > 2) {
            throw ArgumentError("DensityGrid: must be 1-D or 2-D with matching bounds");
        }
        for (std::size_t d = 0; d < counts.size(); ++d) {
            if (counts[d] < 2) throw ArgumentError("DensityGrid: need at least two points per axis");
            if (!std::isfinite(lo(d)) || !std::isfinite(hi(d)) || !(hi(d) > lo(d))) {
                throw ArgumentError("DensityGrid: bounds must be finite with hi > lo");
            }
        }
    }

    [[nodiscard]] std::size_t dims() const noexcept { return counts.size(); }
    [[nodiscard]] double spacing(std::size_t d) const {
        return (hi(d) - lo(d)) / static_cast<double>(counts[d] - 1);
    }
    [[nodiscard]] double cell_volume() const {
        double v = 1.0;
        for (std::size_t d = 0; d < dims(); ++d) v *= spacing(d);
        return v;
    }

    /// Points in row-major order (last axis fastest).
    [[nodiscard]] std::vector<Vector> points() const {
        validate();
        std::vector<Vector> out;
        if (dims() == 1) {
            for (std::size_t i = 0; i < counts[0]; ++i) out.push_back(Vector::Constant(1, lo(0) + i * spacing(0)));
        } else {
            for (std::size_t i = 0; i < counts[0]; ++i) {
                for (std::size_t j = 0; j < counts[1]; ++j) {
                    Vector p(2);
                    p << lo(0) + i * spacing(0), lo(1) + j * spacing(1);
                    out.push_back(p);
                }
            }
        }
        return out;
    }
};

/// Riemann sum of gridded density values.
inline double grid_integral(const DensityGrid& grid, const std::vector<double>& values) {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.cell_volume();
}

/// Mixture density evaluated at every grid point.
inline std::vector<double> density_on_grid(const GaussianMixture& m, const DensityGrid& grid) {
    if (static_cast<std::size_t>(m.dim()) != grid.dims()) throw ArgumentError("density_on_grid: dimension mismatch");
    std::vector<double> out;
    for (const auto& p : grid.points()) out.push_back(evaluate_pdf(m, p));
    return out;
}

/// Silverman bandwidths per axis for weighted samples (sample size = ESS).
/// Axes with zero spread fall back to the grid spacing.
inline Vector silverman_bandwidth(const ParticleCloud& cloud, const DensityGrid& grid) {
    const std::size_t d = grid.dims();
    const Vector mean = weighted_mean(cloud);
    Vector var = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < cloud.particles.size(); ++i) {
        var += cloud.weights[i] * (cloud.particles[i] - mean).cwiseAbs2();
    }
    const double ess = std::max(1.0, effective_sample_size(cloud.weights));
    const double factor = std::pow(4.0 / ((static_cast<double>(d) + 2.0) * ess), 1.0 / (static_cast<double>(d) + 4.0));
    Vector h(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
        const double s = std::sqrt(var(static_cast<Eigen::Index>(k)));
        h(static_cast<Eigen::Index>(k)) = s > 0.0 ? s * factor : grid.spacing(k);
    }
    return h;
}

/// Weighted Gaussian-kernel density estimate on a grid.
inline std::vector<double> density_from_particles(const ParticleCloud& cloud, const DensityGrid& grid) {
    grid.validate();
    if (cloud.particles.empty()) throw ArgumentError("density_from_particles: empty cloud");
    if (static_cast<std::size_t>(cloud.particles.front().size()) != grid.dims()) {
        throw ArgumentError("density_from_particles: particle and grid dimensions differ");
    }
    const Vector h = silverman_bandwidth(cloud, grid);
    double norm = 1.0;
    for (Eigen::Index k = 0; k < h.size(); ++k) norm *= h(k) * std::sqrt(2.0 * std::numbers::pi);
    const double cutoff = 8.0;  // kernels are negligible beyond 8 bandwidths

    const auto pts = grid.points();
    std::vector<double> out(pts.size(), 0.0);
    for (std::size_t i = 0; i < cloud.particles.size(); ++i) {
        const double w = cloud.weights[i];
        if (w == 0.0) continue;
        const Vector& x = cloud.particles[i];
        for (std::size_t g = 0; g < pts.size(); ++g) {
            double q = 0.0;
            bool far = false;
            for (Eigen::Index k = 0; k < h.size(); ++k) {
                const double z = (pts[g](k) - x(k)) / h(k);
                if (std::abs(z) > cutoff) {
                    far = true;
                    break;
                }
                q += z * z;
            }
            if (!far) out[g] += w * std::exp(-0.5 * q);
        }
    }
    for (auto& v : out) v /= norm;
    return out;
}

/// L1 distance between two gridded densities.
inline double grid_l1(const DensityGrid& grid, const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ArgumentError("grid_l1: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s * grid.cell_volume();
}

/// Mixture convolved with a Gaussian kernel of per-axis bandwidth h, i.e. what
/// a kernel estimate with bandwidth h converges to for samples of `m`.
inline GaussianMixture smooth_mixture(const GaussianMixture& m, const Vector& h) {
    if (h.size() != m.dim()) throw ArgumentError("smooth_mixture: bandwidth dimension mismatch");
    std::vector<GaussianComponent> out;
    out.reserve(m.size());
    const Eigen::Index n = m.dim();
    Matrix stacked(2 * n, n);
    stacked.bottomRows(n) = h.cwiseAbs().asDiagonal();
    for (const auto& c : m) {
        stacked.topRows(n) = c.cov_sqrt.matrix();
        out.emplace_back(c.weight, c.mean, qr_r_factor(stacked));
    }
    return GaussianMixture(std::move(out));
}

}  // namespace gmmf
