#include "vsmd/eval.hpp"

#include <algorithm>
#include <cmath>

namespace vsmd {

namespace {

double percentile(Vec values, double q) {
    const std::size_t n = values.size();
    const std::size_t k = static_cast<std::size_t>(q * static_cast<double>(n - 1) + 0.5);
    std::nth_element(values.begin(), values.begin() + k, values.end());
    return values[k];
}

}  // namespace

PmfGrid PmfGrid::from_reference(const std::vector<Vec>& reference, std::size_t bins) {
    if (reference.empty()) throw std::invalid_argument("pmf grid: empty reference");
    Vec xs(reference.size()), ys(reference.size());
    for (std::size_t i = 0; i < reference.size(); ++i) {
        xs[i] = reference[i][0];
        ys[i] = reference[i][1];
    }
    PmfGrid g;
    g.bins = bins;
    const double x_lo = percentile(xs, 0.005), x_hi = percentile(xs, 0.995);
    const double y_lo = percentile(ys, 0.005), y_hi = percentile(ys, 0.995);
    const double xpad = 0.05 * (x_hi - x_lo), ypad = 0.05 * (y_hi - y_lo);
    g.x_min = x_lo - xpad;
    g.x_max = x_hi + xpad;
    g.y_min = y_lo - ypad;
    g.y_max = y_hi + ypad;
    return g;
}

Vec PmfGrid::histogram(const std::vector<Vec>& samples) const {
    if (samples.empty()) throw std::invalid_argument("pmf histogram: empty sample set");
    Vec counts(bins * bins, 0.0);
    const double dx = (x_max - x_min) / static_cast<double>(bins);
    const double dy = (y_max - y_min) / static_cast<double>(bins);
    const auto clamp_bin = [&](double v, double lo, double dw) {
        const long idx = static_cast<long>(std::floor((v - lo) / dw));
        return static_cast<std::size_t>(std::clamp(idx, 0L, static_cast<long>(bins) - 1L));
    };
    for (const Vec& p : samples)
        counts[clamp_bin(p[1], y_min, dy) * bins + clamp_bin(p[0], x_min, dx)] += 1.0;
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& c : counts) c *= inv;
    return counts;
}

double pmf_rmse(const std::vector<Vec>& generated, const std::vector<Vec>& reference,
                const PmfGrid& grid) {
    const Vec p = grid.histogram(generated);
    const Vec q = grid.histogram(reference);
    double ss = 0.0;
    for (std::size_t b = 0; b < p.size(); ++b) ss += (p[b] - q[b]) * (p[b] - q[b]);
    return std::sqrt(ss / static_cast<double>(p.size()));
}

double straightness(const TrajectoryBatch& traj, std::size_t axis) {
    if (traj.states.size() < 2)
        throw std::invalid_argument("straightness: need at least 2 saved nodes");
    const std::size_t steps = traj.states.size() - 1;
    const double t_first = traj.times.front(), t_last = traj.times.back();
    const double duration = std::fabs(t_first - t_last);

    double acc = 0.0;
    for (std::size_t s = 0; s < traj.n; ++s) {
        const double x_start = traj.states.front()[s * traj.state_dim + axis];
        const double x_end = traj.states.back()[s * traj.state_dim + axis];
        const double chord = (x_end - x_start) / duration;
        double dev = 0.0;
        for (std::size_t k = 0; k < steps; ++k) {
            const double dt = std::fabs(traj.times[k + 1] - traj.times[k]);
            if (dt == 0.0) continue;
            const double rate = (traj.states[k + 1][s * traj.state_dim + axis] -
                                 traj.states[k][s * traj.state_dim + axis]) /
                                dt;
            dev += dt * (chord - rate) * (chord - rate);
        }
        acc += dev / duration;
    }
    return acc / static_cast<double>(traj.n);
}

double crps_sum(const std::vector<std::vector<Vec>>& forecasts,
                const std::vector<Vec>& observed) {
    const std::size_t S = forecasts.size();
    if (S == 0) throw std::invalid_argument("crps_sum: no forecast samples");
    const std::size_t P = observed.size();
    const std::size_t dims = observed[0].size();

    double crps_acc = 0.0, norm_acc = 0.0;
    Vec fsum(S);
    for (std::size_t p = 0; p < P; ++p) {
        double osum = 0.0;
        for (std::size_t j = 0; j < dims; ++j) osum += observed[p][j];
        for (std::size_t s = 0; s < S; ++s) {
            double fs = 0.0;
            for (std::size_t j = 0; j < dims; ++j) fs += forecasts[s][p][j];
            fsum[s] = fs;
        }
        double term1 = 0.0;
        for (std::size_t s = 0; s < S; ++s) term1 += std::fabs(fsum[s] - osum);
        term1 /= static_cast<double>(S);
        double term2 = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t r = 0; r < S; ++r) term2 += std::fabs(fsum[s] - fsum[r]);
        term2 /= static_cast<double>(S) * static_cast<double>(S);
        crps_acc += term1 - 0.5 * term2;
        norm_acc += std::fabs(osum);
    }
    const double norm = std::max(norm_acc / static_cast<double>(P), 1e-300);
    return (crps_acc / static_cast<double>(P)) / norm;
}

CovarianceErrorReport invariant_measure_check(const DiffusionConfig& cfg,
                                              const VariationalSchedule& sched, std::size_t n,
                                              double t_long, double h_sim, RngStream& rng) {
    if (!is_momentum(cfg.mode))
        throw ConfigError("invariant_measure_check requires a momentum mode");
    const std::size_t d = sched.dim;
    const double g = cfg.gamma;
    const double b = cfg.beta_at(0.0);

    // Time-invariant schedule: read node 0.
    Vec fx(d), fv(d);
    for (std::size_t i = 0; i < d; ++i) {
        fx[i] = 1.0 - 2.0 * g * sched.ax(0, i);
        fv[i] = 1.0 - 2.0 * sched.av(0, i);
    }

    const std::size_t steps = static_cast<std::size_t>(std::ceil(t_long / h_sim));
    std::vector<Vec> rows(n, Vec(2 * d, 0.0));
    for (Vec& row : rows)
        for (double& v : row) v = rng.normal();
    for (std::size_t k = 0; k < steps; ++k) {
        for (Vec& row : rows) {
            for (std::size_t i = 0; i < d; ++i) {
                const double x = row[i], v = row[d + i];
                // Forward EM on da = -1/2 beta D a dt + sqrt(beta gamma) J dw.
                row[i] = x + 0.5 * h_sim * b * v;
                row[d + i] = v - 0.5 * h_sim * b * (fx[i] * x + g * fv[i] * v) +
                             std::sqrt(b * g * h_sim) * rng.normal();
            }
        }
    }

    CovarianceErrorReport rep;
    rep.empirical = sample_covariance(rows);
    rep.target = Mat(2 * d, 2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        rep.target(i, i) = 1.0 / (fx[i] * fv[i]);     // B1^-1
        rep.target(d + i, d + i) = 1.0 / fv[i];       // B2^-1
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < 2 * d; ++i)
        for (std::size_t j = 0; j < 2 * d; ++j) {
            const double denom = std::sqrt(rep.target(i, i) * rep.target(j, j));
            worst = std::max(worst,
                             std::fabs(rep.empirical(i, j) - rep.target(i, j)) / denom);
        }
    rep.max_rel_err = worst;
    return rep;
}

Mat sample_covariance(const std::vector<Vec>& rows) {
    const std::size_t n = rows.size();
    const std::size_t d = rows[0].size();
    const Vec mu = sample_mean(rows);
    Mat c(d, d);
    for (const Vec& r : rows)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                c(i, j) += (r[i] - mu[i]) * (r[j] - mu[j]);
    c *= 1.0 / static_cast<double>(n);
    return c;
}

Vec sample_mean(const std::vector<Vec>& rows) {
    const std::size_t d = rows[0].size();
    Vec mu(d, 0.0);
    for (const Vec& r : rows)
        for (std::size_t i = 0; i < d; ++i) mu[i] += r[i];
    for (double& m : mu) m /= static_cast<double>(rows.size());
    return mu;
}

}  // namespace vsmd
