#pragma once

// Test-only reference implementations, kept independent of the library's
// production code paths.

#include <algorithm>
#include <cmath>
#include <functional>

#include "vsmd/mat.hpp"

namespace oracle {

using vsmd::Mat;
using vsmd::Vec;

// Matrix exponential by plain Taylor series with scaling and squaring.
inline Mat taylor_expm(const Mat& m, int terms = 200) {
    int s = 0;
    double nrm = m.norm_inf();
    while (nrm > 0.5) {
        nrm *= 0.5;
        ++s;
    }
    Mat a = m;
    a *= std::ldexp(1.0, -s);

    Mat sum = Mat::identity(m.rows());
    Mat term = Mat::identity(m.rows());
    for (int k = 1; k <= terms; ++k) {
        term = term * a;
        term *= 1.0 / static_cast<double>(k);
        sum += term;
        if (term.norm_inf() < 1e-300) break;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

// Classic RK4 on the matrix ODE dS/dt = F(t, S).
inline Mat rk4_matrix_ode(const std::function<Mat(double, const Mat&)>& f, Mat s0, double t_end,
                          double step) {
    double t = 0.0;
    Mat s = std::move(s0);
    while (t < t_end - 1e-15) {
        const double h = std::min(step, t_end - t);
        const Mat k1 = f(t, s);
        const Mat k2 = f(t + 0.5 * h, s + (0.5 * h) * k1);
        const Mat k3 = f(t + 0.5 * h, s + (0.5 * h) * k2);
        const Mat k4 = f(t + h, s + h * k3);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return s;
}

// Covariance ODE of the linear forward SDE:
// dSigma/dt = -1/2 (BD(t) Sigma + Sigma BD(t)^T) + BJ(t)
// with BD = beta D and BJ = beta gamma J supplied by the caller.
inline Mat rk4_sigma(const std::function<Mat(double)>& bd, const std::function<Mat(double)>& bj,
                     const Mat& sigma0, double t_end, double step = 1e-4) {
    auto f = [&](double t, const Mat& s) {
        const Mat d = bd(t);
        return -0.5 * (d * s + s * d.transpose()) + bj(t);
    };
    return rk4_matrix_ode(f, sigma0, t_end, step);
}

// Central finite differences of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Reference integrator for the probability-flow ODE of a per-coordinate
// Gaussian system with time-invariant drift block bd (= beta * D, 2x2) and
// diffusion bj (= beta gamma J). The marginal covariance is integrated
// forward on a fine grid from diag(var_x, var_v); the state ODE
//   da/dt = -1/2 bd a + 1/2 bj Sigma_m(t)^-1 a
// is then integrated backward from a(T) = a_terminal with RK4.
inline Vec pf_ode_reference(const Mat& bd, const Mat& bj, double var_x, double var_v,
                            double horizon, const Vec& a_terminal, double fine_step = 1e-4) {
    // Forward pass: marginal covariance table.
    const std::size_t n_grid = static_cast<std::size_t>(std::ceil(horizon / fine_step)) + 1;
    const double dt = horizon / static_cast<double>(n_grid - 1);
    std::vector<Mat> table(n_grid);
    Mat s(2, 2);
    s(0, 0) = var_x;
    s(1, 1) = var_v;
    table[0] = s;
    auto f_cov = [&](double, const Mat& m) {
        return -0.5 * (bd * m + m * bd.transpose()) + bj;
    };
    for (std::size_t j = 1; j < n_grid; ++j) {
        const Mat k1 = f_cov(0.0, s);
        const Mat k2 = f_cov(0.0, s + (0.5 * dt) * k1);
        const Mat k3 = f_cov(0.0, s + (0.5 * dt) * k2);
        const Mat k4 = f_cov(0.0, s + dt * k3);
        s += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        table[j] = s;
    }
    auto sigma_at = [&](double t) {
        const double pos = std::clamp(t / dt, 0.0, static_cast<double>(n_grid - 1));
        const std::size_t j = std::min(static_cast<std::size_t>(pos), n_grid - 2);
        const double w = pos - static_cast<double>(j);
        Mat out(2, 2);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c)
                out(r, c) = (1.0 - w) * table[j](r, c) + w * table[j + 1](r, c);
        return out;
    };

    auto f_state = [&](double t, const Vec& a) {
        const Mat sm = sigma_at(t);
        const double det = sm(0, 0) * sm(1, 1) - sm(0, 1) * sm(1, 0);
        const Vec score{-(sm(1, 1) * a[0] - sm(0, 1) * a[1]) / det,
                        -(-sm(1, 0) * a[0] + sm(0, 0) * a[1]) / det};
        Vec out(2);
        out[0] = -0.5 * (bd(0, 0) * a[0] + bd(0, 1) * a[1]);
        out[1] = -0.5 * (bd(1, 0) * a[0] + bd(1, 1) * a[1]) - 0.5 * bj(1, 1) * score[1];
        return out;
    };

    Vec a = a_terminal;
    double t = horizon;
    while (t > 1e-12) {
        const double h = std::min(fine_step, t);
        const auto axpy = [](const Vec& x, double c, const Vec& y) {
            return Vec{x[0] + c * y[0], x[1] + c * y[1]};
        };
        const Vec k1 = f_state(t, a);
        const Vec k2 = f_state(t - 0.5 * h, axpy(a, -0.5 * h, k1));
        const Vec k3 = f_state(t - 0.5 * h, axpy(a, -0.5 * h, k2));
        const Vec k4 = f_state(t - h, axpy(a, -h, k3));
        a[0] -= (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        a[1] -= (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        t -= h;
    }
    return a;
}

// Log-density of N(mu, Sigma) at y (small dense Sigma).
inline double gaussian_log_density(const Vec& y, const Vec& mu, const Mat& sigma) {
    const std::size_t n = y.size();
    Mat l = vsmd::cholesky(sigma);
    Vec r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - mu[i];
    Vec w = vsmd::solve_lower(l, r);
    double quad = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        quad += w[i] * w[i];
        logdet += std::log(l(i, i));
    }
    return -0.5 * quad - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

}  // namespace oracle
