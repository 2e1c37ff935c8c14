#include "vsmd/variational.hpp"

#include <algorithm>
#include <cmath>

namespace vsmd {

std::string to_string(FkEstimator e) {
    return e == FkEstimator::FEYNMAN_KAC ? "feynman_kac" : "control_cost";
}

FkEstimator fk_estimator_from_string(const std::string& s) {
    if (s == "feynman_kac") return FkEstimator::FEYNMAN_KAC;
    if (s == "control_cost") return FkEstimator::CONTROL_COST;
    throw ConfigError("unknown estimator '" + s + "'");
}

void SAState::validate() const {
    if (!(eta0 > 0.0)) throw ConfigError("sa eta0 must be > 0");
    if (!(alpha > 0.5 && alpha <= 1.0))
        throw ConfigError("sa alpha must lie in (1/2, 1]");
    if (!(step_decay > 0.0 && step_decay <= 1.0))
        throw ConfigError("sa step_decay must lie in (0, 1]");
}

double step_size(const SAState& sa, std::size_t k) {
    return sa.eta0 * std::pow(sa.step_decay, static_cast<double>(k - 1)) /
           std::pow(static_cast<double>(k), sa.alpha);
}

namespace {

struct NodeScales {
    double bg;        // beta gamma (momentum) or beta (overdamped)
    bool momentum;
};

NodeScales scales_at(const DiffusionConfig& cfg, std::size_t node) {
    const double b = cfg.beta_at(cfg.time_at(node));
    if (is_momentum(cfg.mode)) return {b * cfg.gamma, true};
    return {b, false};
}

}  // namespace

Vec fk_loss_grad(const VariationalSchedule& sched, const DiffusionConfig& cfg,
                 std::size_t node, const Vec& states, std::size_t n, const Vec& score_v,
                 const FKLossConfig& flc) {
    if (n == 0) throw std::invalid_argument("fk_loss_grad: empty batch");
    const std::size_t d = sched.dim;
    const NodeScales sc = scales_at(cfg, node);
    const std::size_t sd = sc.momentum ? 2 * d : d;
    const bool fk = (flc.estimator == FkEstimator::FEYNMAN_KAC);
    const double zeta = fk ? flc.zeta : 0.0;
    const double b = cfg.beta_at(cfg.time_at(node));

    Vec grad(d, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = states.data() + s * sd;
        const double* sv = score_v.data() + s * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double x = row[i];
            const double u = sc.momentum
                                 ? sched.ax(node, i) * x + sched.av(node, i) * row[d + i]
                                 : sched.ax(node, i) * x;
            grad[i] += sc.bg * (u + zeta * sv[i]) * x;
        }
    }
    const double sign = flc.flip_sign ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) {
        grad[i] /= static_cast<double>(n);
        // Overdamped divergence term beta tr(A_x) differentiates to beta; the
        // momentum trace rides on the frozen A_v and drops out here.
        if (fk && !sc.momentum) grad[i] += b;
        grad[i] *= sign;
    }
    return grad;
}

double fk_loss_value(const VariationalSchedule& sched, const DiffusionConfig& cfg,
                     std::size_t node, const Vec& states, std::size_t n, const Vec& score_v,
                     const FKLossConfig& flc) {
    if (n == 0) throw std::invalid_argument("fk_loss_value: empty batch");
    const std::size_t d = sched.dim;
    const NodeScales sc = scales_at(cfg, node);
    const std::size_t sd = sc.momentum ? 2 * d : d;
    const bool fk = (flc.estimator == FkEstimator::FEYNMAN_KAC);
    const double zeta = fk ? flc.zeta : 0.0;
    const double b = cfg.beta_at(cfg.time_at(node));

    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = states.data() + s * sd;
        const double* sv = score_v.data() + s * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double u = sc.momentum
                                 ? sched.ax(node, i) * row[i] + sched.av(node, i) * row[d + i]
                                 : sched.ax(node, i) * row[i];
            acc += 0.5 * sc.bg * u * u + zeta * sc.bg * u * sv[i];
        }
    }
    acc /= static_cast<double>(n);
    if (fk) {
        for (std::size_t i = 0; i < d; ++i)
            acc += sc.momentum ? b * std::sqrt(cfg.gamma) * sched.av(node, i)
                               : b * sched.ax(node, i);
    }
    return (flc.flip_sign ? -1.0 : 1.0) * acc;
}

void sa_step(SAState& sa, VariationalSchedule& sched, const DiffusionConfig& cfg,
             const TrajectoryBatch& traj, const ScoreFunction& score, const FKLossConfig& flc,
             RngStream& rng) {
    sa.validate();
    if (sa.frozen) return;
    const std::size_t d = sched.dim;
    const std::size_t n_nodes = sched.n_nodes;
    const double eta = step_size(sa, sa.k + 1);
    const double ax_max = (1.0 - cfg.eps_feasible) / (2.0 * (is_momentum(cfg.mode) ? cfg.gamma : 1.0));

    std::vector<std::size_t> selected;
    if (flc.nodes_per_stage == 0 || flc.nodes_per_stage >= n_nodes) {
        selected.resize(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) selected[i] = i;
    } else {
        for (std::size_t i = 0; i < flc.nodes_per_stage; ++i)
            selected.push_back(rng.index(n_nodes));
    }

    sa.last_grad_norm.assign(n_nodes, 0.0);
    Vec score_buf, score_v;
    for (std::size_t node : selected) {
        const Vec& states = traj.at_node(node);
        const std::size_t n = traj.n;
        const std::size_t sd = traj.state_dim;

        score_buf.resize(n * sd);
        score.eval(states.data(), n, node, cfg.time_at(node), score_buf.data());
        // v-block of the score (the full score when overdamped).
        score_v.resize(n * d);
        const std::size_t off = is_momentum(cfg.mode) ? d : 0;
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < d; ++i)
                score_v[s * d + i] = score_buf[s * sd + off + i];

        const Vec grad = fk_loss_grad(sched, cfg, node, states, n, score_v, flc);
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double ax = sched.ax(node, i) - eta * grad[i];
            ax = std::clamp(ax, flc.a_x_min, ax_max);
            sched.ax(node, i) = ax;
            norm += grad[i] * grad[i];
        }
        sa.last_grad_norm[node] = std::sqrt(norm);
    }

    apply_damping_transform(cfg, sched);
    sched.check_feasible(cfg);
    ++sa.k;
}

}  // namespace vsmd
