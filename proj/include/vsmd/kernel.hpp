#pragma once

#include <cstddef>
#include <vector>

#include "vsmd/config.hpp"
#include "vsmd/mat.hpp"
#include "vsmd/rng.hpp"
#include "vsmd/schedule.hpp"

namespace vsmd {

// Sample/velocity pair a = (x, v). Stacked vector layout is (x_0..x_{d-1},
// v_0..v_{d-1}) everywhere.
struct AugmentedState {
    Vec x;
    Vec v;

    AugmentedState() = default;
    explicit AugmentedState(std::size_t d) : x(d, 0.0), v(d, 0.0) {}

    std::size_t dim() const { return x.size(); }
};

// Row-major 2x2 block, one per coordinate in the diagonal fast path.
struct Matrix2 {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    static Matrix2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    double det() const { return a * d - b * c; }
};

Matrix2 mat2_mul(const Matrix2& p, const Matrix2& q);
Matrix2 mat2_exp(const Matrix2& m);

// Lower-triangular 2x2 Cholesky factor.
struct Chol2 {
    double l00 = 0.0, l10 = 0.0, l11 = 0.0;
};

Chol2 chol2(const Matrix2& sigma);  // symmetrizes, jitters like cholesky()

struct KernelBuildOptions {
    double sigma0_x = 1e-6;   // x-block variance of Sigma_0 (jitter over the point mass)
    double sigma0_v = 1.0;    // v-block variance of Sigma_0
    bool full_matrix = false; // solve the 2d x 2d block system instead of per-coordinate
};

// Cached per-node forward kernel: mean propagator Phi_t, covariance
// Sigma_{t|0}, Cholesky factor L_t and its inverse transpose. Immutable and
// shareable across threads once built.
class PerturbationKernel {
public:
    PerturbationKernel() = default;

    const DiffusionConfig& config() const { return cfg_; }
    std::size_t dim() const { return dim_; }
    std::size_t n_nodes() const { return cfg_.grid_size; }
    bool momentum() const { return is_momentum(cfg_.mode); }
    bool full_matrix() const { return full_; }
    const KernelBuildOptions& options() const { return opts_; }

    // Diagonal fast path accessors (momentum modes).
    const Matrix2& phi(std::size_t node, std::size_t coord) const;
    const Matrix2& sigma(std::size_t node, std::size_t coord) const;
    const Chol2& chol(std::size_t node, std::size_t coord) const;

    // Overdamped accessors.
    double phi_scalar(std::size_t node, std::size_t coord) const;
    double sigma_scalar(std::size_t node, std::size_t coord) const;

    // Full-matrix accessors (2d x 2d, or d x d when overdamped).
    const Mat& phi_full(std::size_t node) const;
    const Mat& sigma_full(std::size_t node) const;
    const Mat& chol_full(std::size_t node) const;
    const Mat& chol_inv_t_full(std::size_t node) const;

    // Marginal covariance block at a node for Gaussian data:
    // Sigma_t + Phi (diag(var_x, var_v) - Sigma_0) Phi^T. Used by the exact
    // Gaussian score and the oracles.
    Matrix2 marginal_sigma(std::size_t node, std::size_t coord, double var_x,
                           double var_v) const;
    double marginal_sigma_scalar(std::size_t node, std::size_t coord, double var_x) const;

    friend PerturbationKernel build_kernel(const DiffusionConfig& cfg,
                                           const VariationalSchedule& sched,
                                           const KernelBuildOptions& opts);

private:
    DiffusionConfig cfg_;
    KernelBuildOptions opts_;
    std::size_t dim_ = 0;
    bool full_ = false;

    // node-major flat arrays [node * dim + coord]
    std::vector<Matrix2> phi_, sigma_;
    std::vector<Chol2> chol_;
    std::vector<double> phi_s_, sigma_s_, chol_s_;  // overdamped scalars

    std::vector<Mat> full_phi_, full_sigma_, full_chol_, full_chol_inv_t_;
};

// Builds the kernel for every grid node: Phi_t = exp(-1/2 [beta D]_t) with the
// drift integral exact for the piecewise-constant schedule, Sigma_{t|0} =
// C_t H_t^{-1} from the block exponential, Cholesky factors cached.
PerturbationKernel build_kernel(const DiffusionConfig& cfg, const VariationalSchedule& sched,
                                const KernelBuildOptions& opts = {});

struct ForwardSample {
    AugmentedState a;   // a_t
    Vec target_score;   // -L_t^{-T} eps, stacked (x-block then v-block)
};

// Simulation-free draw a_t = Phi_t a0 + L_t eps with its score-matching
// target. eps is a standard normal vector of the stacked state size.
ForwardSample forward_sample(const PerturbationKernel& kernel, const AugmentedState& a0,
                             std::size_t node, const Vec& eps);

// Mean-zero Gaussian prior N(0, Sigma_{T|0}) drawn through L_T.
AugmentedState sample_terminal_prior(const PerturbationKernel& kernel, RngStream& rng);

// Target score via the covariance route, -Sigma_t^{-1} (a - Phi_t a0); used to
// cross-check the -L^{-T} eps expression.
Vec target_score_from_state(const PerturbationKernel& kernel, const AugmentedState& a0,
                            const AugmentedState& a_t, std::size_t node);

}  // namespace vsmd
