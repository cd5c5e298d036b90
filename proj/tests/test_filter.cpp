#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gmmf/filter.hpp"
#include "gmmf/naive_filter.hpp"
#include "oracles.hpp"

using gmmf::FilterConfig;
using gmmf::GaussianComponent;
using gmmf::GaussianMixture;
using gmmf::Matrix;
using gmmf::MeasurementComponent;
using gmmf::OffsetSignal;
using gmmf::ProcessComponent;
using gmmf::StateSpaceModel;
using gmmf::UpperTriangular;
using gmmf::Vector;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }
Matrix m1(double x) { return Matrix::Constant(1, 1, x); }
UpperTriangular sd1(double s) { return UpperTriangular(m1(s)); }
GaussianComponent scalar(double w, double mean, double sd) { return GaussianComponent(w, v1(mean), sd1(sd)); }

MeasurementComponent scalar_meas(double w, double c, double v, double r_sd) {
    return {w, m1(c), OffsetSignal::constant(v1(v)), sd1(r_sd)};
}

ProcessComponent scalar_proc(double w, double a, double u, double q_sd) {
    return {w, m1(a), OffsetSignal::constant(v1(u)), sd1(q_sd)};
}

/// Textbook covariance-form Kalman recursion with explicit inverses.
struct Reference {
    std::vector<Vector> filtered_means;
    std::vector<Matrix> filtered_covs;
    std::vector<double> log_likelihoods;
};

Reference textbook_kalman(const Matrix& a, const Matrix& q, const Matrix& c, const Matrix& r, Vector x, Matrix p,
                          const std::vector<Vector>& ys) {
    Reference out;
    for (const auto& y : ys) {
        const Matrix s = c * p * c.transpose() + r;
        const Matrix k = p * c.transpose() * oracle::inverse(s);
        const Vector e = y - c * x;
        out.log_likelihoods.push_back(std::log(oracle::normal_pdf(y, c * x, s)));
        x = x + k * e;
        p = (Matrix::Identity(p.rows(), p.cols()) - k * c) * p;
        p = 0.5 * (p + p.transpose()).eval();
        out.filtered_means.push_back(x);
        out.filtered_covs.push_back(p);
        x = a * x;
        p = a * p * a.transpose() + q;
    }
    return out;
}

StateSpaceModel random_linear_model(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p, std::size_t nx,
                                    std::size_t ny, std::size_t prior_size) {
    std::vector<ProcessComponent> proc;
    for (std::size_t j = 0; j < nx; ++j) {
        proc.push_back({1.0 / static_cast<double>(nx), 0.6 * oracle::random_matrix(rng, n, n),
                        OffsetSignal::constant(oracle::random_matrix(rng, n, 1).col(0)),
                        oracle::random_factor(rng, n, 0.3)});
    }
    std::vector<MeasurementComponent> meas;
    for (std::size_t k = 0; k < ny; ++k) {
        meas.push_back({1.0 / static_cast<double>(ny), oracle::random_matrix(rng, p, n),
                        OffsetSignal::constant(oracle::random_matrix(rng, p, 1).col(0)),
                        oracle::random_factor(rng, p, 0.5)});
    }
    return {oracle::random_mixture(rng, n, prior_size), proc, meas};
}

}  // namespace

TEST(MeasurementUpdate, ScalarTextbookCase) {
    const GaussianMixture pred({scalar(1.0, 0.0, 1.0)});
    const std::vector<MeasurementComponent> meas{scalar_meas(1.0, 1.0, 0.0, 1.0)};
    const auto r = gmmf::measurement_update(pred, v1(2.0), meas, 1);
    ASSERT_EQ(r.mixture.size(), 1u);
    EXPECT_NEAR(r.mixture[0].mean(0), 1.0, 1e-12);
    EXPECT_NEAR(r.mixture[0].covariance()(0, 0), 0.5, 1e-12);
    EXPECT_DOUBLE_EQ(r.mixture[0].weight, 1.0);
    EXPECT_NEAR(r.log_likelihood, std::log(oracle::normal_pdf(v1(2.0), v1(0.0), m1(2.0))), 1e-12);
}

TEST(MeasurementUpdate, ZeroObservationMatrixGivesZeroGain) {
    const GaussianMixture pred({scalar(1.0, 3.0, 2.0)});
    const std::vector<MeasurementComponent> meas{scalar_meas(1.0, 0.0, 0.0, 1.0)};
    const auto r = gmmf::measurement_update(pred, v1(17.0), meas, 1);
    EXPECT_NEAR(r.mixture[0].mean(0), 3.0, 1e-12);
    EXPECT_NEAR(r.mixture[0].covariance()(0, 0), 4.0, 1e-12);
}

TEST(MeasurementUpdate, ComponentCountAndOrdering) {
    const GaussianMixture pred({scalar(0.2, -1.0, 1.0), scalar(0.5, 0.0, 1.0), scalar(0.3, 1.0, 1.0)});
    const std::vector<MeasurementComponent> meas{scalar_meas(0.5, 1.0, -5.0, 1.0), scalar_meas(0.5, 1.0, 5.0, 1.0)};
    const auto r = gmmf::measurement_update(pred, v1(0.5), meas, 1);
    ASSERT_EQ(r.mixture.size(), 6u);
    EXPECT_NEAR(r.mixture.weight_sum(), 1.0, 1e-14);
    // s = 2 l + k: component 5 pairs the last prediction (mean 1) with v = +5.
    const double expected = 1.0 + 0.5 * (0.5 - 1.0 - 5.0);
    EXPECT_NEAR(r.mixture[5].mean(0), expected, 1e-12);
}

TEST(MeasurementUpdate, WeightsMatchDirectPosterior) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const auto pred = oracle::random_mixture(rng, 2, 3);
        std::vector<MeasurementComponent> meas{
            {0.3, oracle::random_matrix(rng, 1, 2), OffsetSignal::none(1), oracle::random_factor(rng, 1)},
            {0.7, oracle::random_matrix(rng, 1, 2), OffsetSignal::none(1), oracle::random_factor(rng, 1)}};
        const Vector y = oracle::random_matrix(rng, 1, 1).col(0);
        const auto r = gmmf::measurement_update(pred, y, meas, 1);
        std::vector<double> raw;
        double total = 0.0;
        for (const auto& c : pred) {
            for (const auto& m : meas) {
                const Matrix s = m.observation * c.covariance() * m.observation.transpose() + m.noise_sqrt.covariance();
                raw.push_back(c.weight * m.weight * oracle::normal_pdf(y, m.observation * c.mean, s));
                total += raw.back();
            }
        }
        EXPECT_NEAR(r.log_likelihood, std::log(total), 1e-10);
        for (std::size_t s = 0; s < raw.size(); ++s) EXPECT_NEAR(r.mixture[s].weight, raw[s] / total, 1e-12);
    }
}

TEST(MeasurementUpdate, MatchesGainFormOnRandomComponents) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = 1 + trial % 4, p = 1 + trial % 3;
        const auto pred = oracle::random_mixture(rng, n, 1);
        const std::vector<MeasurementComponent> meas{
            {1.0, oracle::random_matrix(rng, p, n), OffsetSignal::none(p), oracle::random_factor(rng, p)}};
        const Vector y = oracle::random_matrix(rng, p, 1).col(0);
        const auto r = gmmf::measurement_update(pred, y, meas, 1);
        const Matrix pc = pred[0].covariance();
        const Matrix& c = meas[0].observation;
        const Matrix s = c * pc * c.transpose() + meas[0].noise_sqrt.covariance();
        const Matrix k = pc * c.transpose() * oracle::inverse(s);
        const Vector mean = pred[0].mean + k * (y - c * pred[0].mean);
        const Matrix cov = pc - k * c * pc;
        EXPECT_LT((r.mixture[0].mean - mean).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((r.mixture[0].covariance() - cov).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(MeasurementUpdate, DimensionMismatch) {
    const GaussianMixture pred({scalar(1.0, 0.0, 1.0)});
    const std::vector<MeasurementComponent> meas{scalar_meas(1.0, 1.0, 0.0, 1.0)};
    EXPECT_THROW(gmmf::measurement_update(pred, Vector::Zero(2), meas, 1), gmmf::ArgumentError);
}

TEST(MeasurementUpdate, SingularInnovation) {
    const GaussianMixture pred({scalar(1.0, 0.0, 0.0)});
    const std::vector<MeasurementComponent> meas{scalar_meas(1.0, 1.0, 0.0, 0.0)};
    EXPECT_THROW(gmmf::measurement_update(pred, v1(1.0), meas, 1), gmmf::SingularFactorError);
}

TEST(TimeUpdate, ScalarTextbookCase) {
    const GaussianMixture filt({GaussianComponent(1.0, v1(1.0), sd1(std::sqrt(0.5)))});
    const std::vector<ProcessComponent> proc{scalar_proc(1.0, 1.0, 0.0, 0.1)};
    const auto pred = gmmf::time_update(filt, proc, 1);
    ASSERT_EQ(pred.size(), 1u);
    EXPECT_NEAR(pred[0].mean(0), 1.0, 1e-14);
    EXPECT_NEAR(pred[0].covariance()(0, 0), 0.51, 1e-12);
}

TEST(TimeUpdate, ComponentCountAndOrdering) {
    const GaussianMixture filt({scalar(0.4, 0.0, 1.0), scalar(0.6, 10.0, 1.0)});
    const std::vector<ProcessComponent> proc{scalar_proc(0.25, 1.0, 0.0, 1.0), scalar_proc(0.75, 1.0, 1.0, 1.0)};
    const auto pred = gmmf::time_update(filt, proc, 1);
    ASSERT_EQ(pred.size(), 4u);
    EXPECT_NEAR(pred[3].mean(0), 11.0, 1e-14);
    EXPECT_NEAR(pred[3].weight, 0.45, 1e-15);
    EXPECT_NEAR(pred[1].weight, 0.3, 1e-15);
    EXPECT_NEAR(pred.weight_sum(), 1.0, 1e-15);
}

TEST(TimeUpdate, MatchesCovarianceForm) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = 1 + trial % 4;
        const auto filt = oracle::random_mixture(rng, n, 1);
        const Matrix a = oracle::random_matrix(rng, n, n);
        const std::vector<ProcessComponent> proc{{1.0, a, OffsetSignal::none(n), oracle::random_factor(rng, n)}};
        const auto pred = gmmf::time_update(filt, proc, 1);
        const Matrix want = a * filt[0].covariance() * a.transpose() + proc[0].noise_sqrt.covariance();
        EXPECT_LT((pred[0].covariance() - want).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, want.norm()));
    }
}

TEST(RunFilter, SingleComponentMatchesTextbookKalman) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 2, p = 1;
        const Matrix a = 0.9 * oracle::random_matrix(rng, n, n) / 1.5;
        const auto q = oracle::random_factor(rng, n, 0.3);
        const Matrix c = oracle::random_matrix(rng, p, n);
        const auto r = oracle::random_factor(rng, p, 0.5);
        const StateSpaceModel model{GaussianMixture({GaussianComponent(1.0, Vector::Zero(n), UpperTriangular::identity(n))}),
                                    std::vector<ProcessComponent>{{1.0, a, OffsetSignal::none(n), q}},
                                    std::vector<MeasurementComponent>{{1.0, c, OffsetSignal::none(p), r}}};
        std::mt19937_64 sim(100 + trial);
        const auto traj = gmmf::simulate(model, 30, sim);
        const auto trace = gmmf::run_filter(model, traj.measurements, FilterConfig{});
        const auto ref = textbook_kalman(a, q.covariance(), c, r.covariance(), Vector::Zero(n),
                                         Matrix::Identity(n, n), traj.measurements);
        ASSERT_EQ(trace.steps.size(), 30u);
        for (std::size_t k = 0; k < 30; ++k) {
            EXPECT_EQ(trace.steps[k].t, static_cast<int>(k) + 1);
            EXPECT_LT((trace.steps[k].filtered[0].mean - ref.filtered_means[k]).cwiseAbs().maxCoeff(), 1e-9);
            EXPECT_LT((trace.steps[k].filtered[0].covariance() - ref.filtered_covs[k]).cwiseAbs().maxCoeff(), 1e-9);
            EXPECT_NEAR(trace.steps[k].log_likelihood, ref.log_likelihoods[k], 1e-9);
        }
    }
}

TEST(RunFilter, SingleStep) {
    const StateSpaceModel model{GaussianMixture({scalar(1.0, 0.0, 1.0)}),
                                std::vector<ProcessComponent>{scalar_proc(1.0, 1.0, 0.0, 0.1)},
                                std::vector<MeasurementComponent>{scalar_meas(1.0, 1.0, 0.0, 1.0)}};
    const std::vector<Vector> ys{v1(2.0)};
    const auto trace = gmmf::run_filter(model, ys, FilterConfig{});
    ASSERT_EQ(trace.steps.size(), 1u);
    EXPECT_NEAR(trace.steps[0].filtered_moments.mean(0), 1.0, 1e-12);
    EXPECT_NEAR(trace.final_prediction[0].covariance()(0, 0), 0.51, 1e-12);
}

TEST(RunFilter, AgreesWithNaiveCovarianceFilter) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 6; ++trial) {
        const auto model = random_linear_model(rng, 2, 1, 2, 2, 3);
        std::mt19937_64 sim(trial);
        const auto traj = gmmf::simulate(model, 15, sim);
        FilterConfig cfg;
        cfg.filtering = {1, 12, 0.01};
        cfg.prediction = {1, 12, 0.01};
        const auto a = gmmf::run_filter(model, traj.measurements, cfg);
        const auto b = gmmf::run_filter_naive(model, traj.measurements, cfg);
        for (std::size_t k = 0; k < a.steps.size(); ++k) {
            const auto& x = a.steps[k];
            const auto& y = b.steps[k];
            EXPECT_EQ(x.filtered_post, y.filtered_post);
            EXPECT_EQ(x.predicted_post, y.predicted_post);
            EXPECT_LT((x.filtered_moments.mean - y.filtered_moments.mean).cwiseAbs().maxCoeff(), 1e-7);
            EXPECT_LT((x.filtered_moments.covariance - y.filtered_moments.covariance).cwiseAbs().maxCoeff(), 1e-7);
            EXPECT_NEAR(x.log_likelihood, y.log_likelihood, 1e-7);
        }
    }
}

TEST(RunFilter, LikelihoodIsPredictedMeasurementDensity) {
    std::mt19937_64 rng(23);
    const auto model = random_linear_model(rng, 2, 1, 2, 2, 2);
    std::mt19937_64 sim(5);
    const auto traj = gmmf::simulate(model, 8, sim);
    const auto trace = gmmf::run_filter(model, traj.measurements, FilterConfig{});
    const auto& meas = std::get<std::vector<MeasurementComponent>>(model.measurement);
    for (const auto& step : trace.steps) {
        std::vector<GaussianComponent> ymix;
        for (const auto& c : step.predicted) {
            for (const auto& m : meas) {
                const Matrix s = m.observation * c.covariance() * m.observation.transpose() + m.noise_sqrt.covariance();
                ymix.emplace_back(c.weight * m.weight, m.observation * c.mean + m.offset(step.t),
                                  UpperTriangular::from_covariance(s));
            }
        }
        const double want = std::log(gmmf::evaluate_pdf(GaussianMixture(ymix), traj.measurements[step.t - 1]));
        EXPECT_NEAR(step.log_likelihood, want, 1e-9);
    }
}

TEST(RunFilter, UnreducedGrowthLaw) {
    std::mt19937_64 rng(29);
    const auto model = random_linear_model(rng, 1, 1, 2, 3, 2);
    std::mt19937_64 sim(9);
    const auto traj = gmmf::simulate(model, 4, sim);
    FilterConfig cfg;
    cfg.filtering = {100000, 100000, 1e-300};
    cfg.prediction = {100000, 100000, 1e-300};
    const auto trace = gmmf::run_filter(model, traj.measurements, cfg);
    std::size_t m = 2;
    for (const auto& s : trace.steps) {
        EXPECT_EQ(s.predicted_post, m);
        EXPECT_EQ(s.filtered_pre, m * 3);
        m *= 6;
    }
    EXPECT_EQ(trace.final_prediction.size(), m);
}

TEST(RunFilter, ReducedCountsStayWithinBounds) {
    std::mt19937_64 rng(31);
    const auto model = random_linear_model(rng, 2, 1, 2, 2, 4);
    std::mt19937_64 sim(3);
    const auto traj = gmmf::simulate(model, 20, sim);
    FilterConfig cfg;
    cfg.filtering = {2, 6, 0.01};
    cfg.prediction = {2, 5, 0.01};
    const auto trace = gmmf::run_filter(model, traj.measurements, cfg);
    for (const auto& s : trace.steps) {
        EXPECT_LE(s.filtered_post, 6u);
        EXPECT_GE(s.filtered_post, 1u);
        EXPECT_LE(s.predicted.size(), s.t == 1 ? 4u : 5u);
        EXPECT_NEAR(s.filtered.weight_sum(), 1.0, 1e-12);
    }
}

TEST(RunFilter, SplittingOnlyTouchesNonlinearUpdates) {
    const StateSpaceModel model{GaussianMixture({scalar(1.0, 1.0, 1.0)}),
                                std::vector<ProcessComponent>{scalar_proc(1.0, 1.0, 0.0, 0.1)},
                                gmmf::quadratic_measurement(1.0, 1.0)};
    FilterConfig cfg;
    cfg.split = gmmf::SplitConfig{3, 0.5};
    const std::vector<Vector> ys{v1(1.0), v1(1.2)};
    const auto trace = gmmf::run_filter(model, ys, cfg);
    EXPECT_EQ(trace.steps[0].predicted_used, 3u);
    EXPECT_EQ(trace.steps[0].predicted.size(), 1u);
    EXPECT_EQ(trace.steps[0].filtered_used, trace.steps[0].filtered_post);
}

TEST(RunFilter, ErrorsCarryTheStep) {
    StateSpaceModel model{GaussianMixture({scalar(1.0, 0.0, 1.0)}),
                          std::vector<ProcessComponent>{scalar_proc(1.0, 1.0, 0.0, 0.0)},
                          std::vector<MeasurementComponent>{scalar_meas(1.0, 1.0, 0.0, 0.0)}};
    // Noise-free measurements collapse the posterior; the second innovation is singular.
    const std::vector<Vector> ys{v1(1.0), v1(1.0), v1(1.0)};
    try {
        gmmf::run_filter(model, ys, FilterConfig{});
        FAIL() << "expected StepError";
    } catch (const gmmf::StepError& e) {
        EXPECT_EQ(e.step(), 2);
    }
}

TEST(RunFilter, RejectsEmptyMeasurements) {
    const StateSpaceModel model{GaussianMixture({scalar(1.0, 0.0, 1.0)}),
                                std::vector<ProcessComponent>{scalar_proc(1.0, 1.0, 0.0, 0.1)},
                                std::vector<MeasurementComponent>{scalar_meas(1.0, 1.0, 0.0, 1.0)}};
    EXPECT_THROW(gmmf::run_filter(model, std::vector<Vector>{}, FilterConfig{}), gmmf::ArgumentError);
}

TEST(RunFilterNaive, RejectsSplitting) {
    const StateSpaceModel model{GaussianMixture({scalar(1.0, 0.0, 1.0)}),
                                std::vector<ProcessComponent>{scalar_proc(1.0, 1.0, 0.0, 0.1)},
                                std::vector<MeasurementComponent>{scalar_meas(1.0, 1.0, 0.0, 1.0)}};
    FilterConfig cfg;
    cfg.split = gmmf::SplitConfig{};
    EXPECT_THROW(gmmf::run_filter_naive(model, std::vector<Vector>{v1(0.0)}, cfg), gmmf::ArgumentError);
}
