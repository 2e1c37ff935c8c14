#pragma once

#include <cstddef>
#include <vector>

#include "vsmd/kernel.hpp"
#include "vsmd/rng.hpp"
#include "vsmd/schedule.hpp"
#include "vsmd/scorenet.hpp"

namespace vsmd {

// Batched score oracle: reads n stacked states at a grid node, writes n
// stacked score vectors.
class ScoreFunction {
public:
    virtual ~ScoreFunction() = default;
    virtual void eval(const double* states, std::size_t n, std::size_t node, double t,
                     double* out) const = 0;
};

class ZeroScore final : public ScoreFunction {
public:
    explicit ZeroScore(std::size_t state_dim) : sd_(state_dim) {}
    void eval(const double*, std::size_t n, std::size_t, double, double* out) const override {
        std::fill(out, out + n * sd_, 0.0);
    }

private:
    std::size_t sd_;
};

// Score network evaluation on a parameter snapshot (live or EMA weights).
// `ctx` rows, when provided, must match the sampled batch row-for-row.
class NetScore final : public ScoreFunction {
public:
    NetScore(const ScoreNetwork& net, double horizon, bool use_ema = true,
             const Vec* ctx = nullptr)
        : net_(net), horizon_(horizon), use_ema_(use_ema), ctx_(ctx) {}

    void eval(const double* states, std::size_t n, std::size_t node, double t,
              double* out) const override;

private:
    const ScoreNetwork& net_;
    double horizon_;
    bool use_ema_;
    const Vec* ctx_;
};

// Analytic score of the forward marginal for Gaussian data
// x ~ N(0, diag(var_x)), v ~ N(0, var_v I): s(a, t) = -Sigma_m(t)^-1 a.
class ExactGaussianScore final : public ScoreFunction {
public:
    ExactGaussianScore(const PerturbationKernel& kernel, Vec var_x, double var_v = 1.0,
                       Vec mean_x = {});

    void eval(const double* states, std::size_t n, std::size_t node, double t,
              double* out) const override;

private:
    const PerturbationKernel& kernel_;
    std::size_t d_;
    bool momentum_;
    std::vector<Matrix2> inv_;   // per node*coord inverse marginal covariance
    Vec inv_s_;                  // overdamped scalars
    Vec mean_;                   // per node*coord marginal mean (x, v) pairs
};

// Reverse-time path batch. Saved states are ordered with descending time,
// index 0 = the terminal prior draw.
struct TrajectoryBatch {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::size_t state_dim = 0;
    std::vector<double> times;        // descending
    std::vector<std::size_t> nodes;   // grid node per saved entry
    std::vector<Vec> states;          // n x state_dim per saved entry

    // Saved states at a grid node (requires save_trajectory).
    const Vec& at_node(std::size_t node) const;
    // Final x-coordinates, n x dim.
    std::vector<Vec> final_x() const;
};

struct SamplerOptions {
    bool save_trajectory = false;   // keep every node (straightness, SA stages)
    double divergence_guard = 1e6;  // abort threshold on max |state|
    double noise_scale = 1.0;       // 0 silences the diffusion term (tests)
};

enum class OdeMethod { EULER, HEUN };

// Euler-Maruyama discretization of the backward SDE. Integration runs from
// t_{N-1} down to t_1, then one noise-free Euler step reaches t = 0.
TrajectoryBatch backward_em(const ScoreFunction& score, const PerturbationKernel& kernel,
                            const VariationalSchedule& sched, std::size_t n_samples,
                            RngStream& rng, const SamplerOptions& opts = {});

// ABOBA symmetric splitting: half kicks of the free flight (A) and the
// position force (B) around a full friction/score/noise step (O). The O step
// damps the linear part exactly and freezes the score over the substep.
TrajectoryBatch backward_aboba(const ScoreFunction& score, const PerturbationKernel& kernel,
                               const VariationalSchedule& sched, std::size_t n_samples,
                               RngStream& rng, const SamplerOptions& opts = {});

// Probability-flow ODE da/dt = -1/2 beta D a - 1/2 beta gamma J s(a, t),
// integrated backward with Euler or Heun steps; deterministic given the
// prior draw.
TrajectoryBatch pf_ode(const ScoreFunction& score, const PerturbationKernel& kernel,
                       const VariationalSchedule& sched, std::size_t n_samples, RngStream& rng,
                       OdeMethod method, const SamplerOptions& opts = {});

}  // namespace vsmd
