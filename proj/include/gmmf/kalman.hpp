#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gmmf/filter.hpp"
#include "gmmf/model.hpp"

namespace gmmf {

/// Single-component linear Gaussian model.
struct LinearGaussianModel {
    Matrix transition;
    OffsetSignal process_offset;
    UpperTriangular process_noise_sqrt;
    Matrix observation;
    OffsetSignal measurement_offset;
    UpperTriangular measurement_noise_sqrt;
    Vector prior_mean;
    UpperTriangular prior_cov_sqrt;

    [[nodiscard]] StateSpaceModel as_mixture_model() const {
        return StateSpaceModel{
            GaussianMixture({GaussianComponent(1.0, prior_mean, prior_cov_sqrt)}),
            std::vector<ProcessComponent>{{1.0, transition, process_offset, process_noise_sqrt}},
            std::vector<MeasurementComponent>{{1.0, observation, measurement_offset, measurement_noise_sqrt}},
        };
    }
};

/// Picks one process and one measurement component of a linear mixture model.
inline LinearGaussianModel single_component_model(const StateSpaceModel& model, std::size_t process_index,
                                                  std::size_t measurement_index, const Vector& prior_mean,
                                                  const UpperTriangular& prior_cov_sqrt) {
    if (!model.linear_process() || !model.linear_measurement()) {
        throw ArgumentError("single_component_model: model must be linear");
    }
    const auto& proc = std::get<std::vector<ProcessComponent>>(model.process);
    const auto& meas = std::get<std::vector<MeasurementComponent>>(model.measurement);
    if (process_index >= proc.size() || measurement_index >= meas.size()) {
        throw ArgumentError("single_component_model: component index out of range");
    }
    const auto& p = proc[process_index];
    const auto& m = meas[measurement_index];
    return {p.transition, p.offset, p.noise_sqrt, m.observation, m.offset, m.noise_sqrt, prior_mean, prior_cov_sqrt};
}

struct KalmanResult {
    std::vector<Vector> predicted_means;
    std::vector<Matrix> predicted_covs;
    std::vector<Vector> filtered_means;
    std::vector<Matrix> filtered_covs;
    std::vector<double> log_likelihoods;
    /// Prediction one step past the last measurement (the prior if there were none).
    Vector final_mean;
    Matrix final_cov;
};

/// Square-root Kalman filter: the mixture filter with one component everywhere.
inline KalmanResult kalman_filter(const LinearGaussianModel& lg, std::span<const Vector> measurements,
                                  int first_step = 1) {
    KalmanResult out;
    if (measurements.empty()) {
        out.final_mean = lg.prior_mean;
        out.final_cov = lg.prior_cov_sqrt.covariance();
        return out;
    }
    FilterConfig cfg;
    cfg.filtering = {1, 1, 1.0};
    cfg.prediction = {1, 1, 1.0};
    const FilterTrace trace = run_filter(lg.as_mixture_model(), measurements, cfg, first_step);
    for (const auto& s : trace.steps) {
        out.predicted_means.push_back(s.predicted[0].mean);
        out.predicted_covs.push_back(s.predicted[0].covariance());
        out.filtered_means.push_back(s.filtered[0].mean);
        out.filtered_covs.push_back(s.filtered[0].covariance());
        out.log_likelihoods.push_back(s.log_likelihood);
    }
    out.final_mean = trace.final_prediction[0].mean;
    out.final_cov = trace.final_prediction[0].covariance();
    return out;
}

}  // namespace gmmf
