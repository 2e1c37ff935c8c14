#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vsmd/config.hpp"
#include "vsmd/mat.hpp"
#include "vsmd/rng.hpp"
#include "vsmd/samplers.hpp"
#include "vsmd/schedule.hpp"

namespace vsmd {

// 2D histogram grid; bounds default to the reference's 0.5-99.5 percentile
// box expanded by 10%. Points beyond the bounds clamp into the edge bins so
// normalized counts always sum to one.
struct PmfGrid {
    double x_min = -1.0, x_max = 1.0;
    double y_min = -1.0, y_max = 1.0;
    std::size_t bins = 50;

    static PmfGrid from_reference(const std::vector<Vec>& reference, std::size_t bins = 50);

    // Normalized counts, row-major bins x bins.
    Vec histogram(const std::vector<Vec>& samples) const;
};

// RMSE over bins of the two normalized histograms:
// sqrt(sum_b (p_b - q_b)^2 / B).
double pmf_rmse(const std::vector<Vec>& generated, const std::vector<Vec>& reference,
                const PmfGrid& grid);

// Time-averaged squared deviation of one coordinate's realized step rate from
// its chord rate, averaged over trajectories; zero iff the stored coordinate
// path is linear in time.
double straightness(const TrajectoryBatch& traj, std::size_t axis);

// CRPS of the dimension-summed forecast via the empirical-sample estimator
// mean|X - y| - 1/2 mean|X - X'|, averaged over the horizon and normalized by
// the mean |observed| sum. forecasts: S x P x dims; observed: P x dims.
double crps_sum(const std::vector<std::vector<Vec>>& forecasts,
                const std::vector<Vec>& observed);

struct CovarianceErrorReport {
    Mat empirical;
    Mat target;
    double max_rel_err = 0.0;  // |C_ij - T_ij| / sqrt(T_ii T_jj), max over entries
};

// Simulates the time-invariant forward SDE (EM, step h_sim) to t_long and
// compares the empirical covariance to the stationary diag(B1^-1, B2^-1)
// with B1 = (I - 2 gamma A_x)(I - 2 A_v), B2 = I - 2 A_v.
CovarianceErrorReport invariant_measure_check(const DiffusionConfig& cfg,
                                              const VariationalSchedule& sched, std::size_t n,
                                              double t_long, double h_sim, RngStream& rng);

struct MetricsReport {
    std::string metric;
    double value = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    double wall_time_s = 0.0;
};

// Helpers shared by tests and the CLI.
Mat sample_covariance(const std::vector<Vec>& rows);
Vec sample_mean(const std::vector<Vec>& rows);

}  // namespace vsmd
