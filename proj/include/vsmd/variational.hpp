#pragma once

#include <cstddef>
#include <vector>

#include "vsmd/config.hpp"
#include "vsmd/rng.hpp"
#include "vsmd/samplers.hpp"
#include "vsmd/schedule.hpp"

namespace vsmd {

enum class FkEstimator { FEYNMAN_KAC, CONTROL_COST };

std::string to_string(FkEstimator e);
FkEstimator fk_estimator_from_string(const std::string& s);

struct FKLossConfig {
    double zeta = 1.0;
    FkEstimator estimator = FkEstimator::FEYNMAN_KAC;
    std::size_t samples_per_stage = 2048;
    std::size_t nodes_per_stage = 0;  // 0 = every node
    bool flip_sign = false;           // experimentation switch for the descent direction
    double a_x_min = -12.0;           // projection floor keeping ||D|| bounded
};

// Robbins-Monro stage state. Step sizes decay as eta0 * decay^(k-1) / k^alpha
// with alpha in (1/2, 1].
struct SAState {
    std::size_t k = 0;  // completed stages
    double eta0 = 0.01;
    double alpha = 0.75;
    double step_decay = 1.0;
    bool frozen = false;
    Vec last_grad_norm;  // per node, refreshed each stage for the trace log

    void validate() const;
};

double step_size(const SAState& sa, std::size_t k);

// Per-sample Feynman-Kac integrand, up to A-independent constants:
//   l(A) = 1/2 ||z_bar||^2 + beta sqrt(gamma) tr(A_v) + zeta z_bar . z_fwd
// with z_bar = sqrt(beta gamma)(A_x x + A_v v) and z_fwd = sqrt(beta gamma) s_v.
// Returns d l / d a_x averaged over the batch, A_v held fixed.
// states: n x state_dim rows at this node; score_v: n x d (v-block of the
// learned score; full score when overdamped).
Vec fk_loss_grad(const VariationalSchedule& sched, const DiffusionConfig& cfg,
                 std::size_t node, const Vec& states, std::size_t n, const Vec& score_v,
                 const FKLossConfig& flc);

// Batched loss value used by the finite-difference tests.
double fk_loss_value(const VariationalSchedule& sched, const DiffusionConfig& cfg,
                     std::size_t node, const Vec& states, std::size_t n, const Vec& score_v,
                     const FKLossConfig& flc);

// One SA stage over freshly simulated backward trajectories: descend a_x at
// the selected nodes, project onto feasibility, then re-derive a_v through
// the damping transform at every node.
void sa_step(SAState& sa, VariationalSchedule& sched, const DiffusionConfig& cfg,
             const TrajectoryBatch& traj, const ScoreFunction& score, const FKLossConfig& flc,
             RngStream& rng);

}  // namespace vsmd
