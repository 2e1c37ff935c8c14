#include "vsmd/schedule.hpp"

#include <cmath>
#include <string>

namespace vsmd {

VariationalSchedule VariationalSchedule::zeros(std::size_t n_nodes, std::size_t dim) {
    VariationalSchedule s;
    s.n_nodes = n_nodes;
    s.dim = dim;
    s.a_x.assign(n_nodes * dim, 0.0);
    s.a_v.assign(n_nodes * dim, 0.0);
    return s;
}

bool VariationalSchedule::is_zero() const {
    for (double x : a_x)
        if (x != 0.0) return false;
    for (double v : a_v)
        if (v != 0.0) return false;
    return true;
}

void VariationalSchedule::check_feasible(const DiffusionConfig& cfg) const {
    const double eps = cfg.eps_feasible;
    // Overdamped drift is I - 2A; the momentum sub-blocks carry the gamma factor.
    const double gx = is_momentum(cfg.mode) ? cfg.gamma : 1.0;
    for (std::size_t t = 0; t < n_nodes; ++t)
        for (std::size_t i = 0; i < dim; ++i) {
            if (1.0 - 2.0 * gx * ax(t, i) < eps)
                throw FeasibilityError("infeasible a_x at node " + std::to_string(t) +
                                       ", coordinate " + std::to_string(i));
            if (is_momentum(cfg.mode) && 1.0 - 2.0 * av(t, i) < eps)
                throw FeasibilityError("infeasible a_v at node " + std::to_string(t) +
                                       ", coordinate " + std::to_string(i));
        }
}

double damping_transform(const DiffusionConfig& cfg, double a_x) {
    const double arg = cfg.damping_ratio * (1.0 - 2.0 * cfg.gamma * a_x);
    if (arg < 0.0) throw FeasibilityError("damping transform: negative square-root argument");
    return 0.5 - std::sqrt(arg) / cfg.gamma;
}

void apply_damping_transform(const DiffusionConfig& cfg, VariationalSchedule& sched) {
    if (!is_momentum(cfg.mode)) return;
    for (std::size_t t = 0; t < sched.n_nodes; ++t)
        for (std::size_t i = 0; i < sched.dim; ++i)
            sched.av(t, i) = damping_transform(cfg, sched.ax(t, i));
}

DriftBlock drift_block(const DiffusionConfig& cfg, const VariationalSchedule& sched,
                       std::size_t node, std::size_t coord) {
    const double eps = cfg.eps_feasible;
    const double fx = 1.0 - 2.0 * cfg.gamma * sched.ax(node, coord);
    const double fv = 1.0 - 2.0 * sched.av(node, coord);
    if (fx < eps || fv < eps)
        throw FeasibilityError("infeasible schedule at node " + std::to_string(node) +
                               ", coordinate " + std::to_string(coord));
    return DriftBlock{0.0, -1.0, fx, cfg.gamma * fv};
}

double drift_scalar_overdamped(const DiffusionConfig& cfg, const VariationalSchedule& sched,
                               std::size_t node, std::size_t coord) {
    const double f = 1.0 - 2.0 * sched.ax(node, coord);
    if (f < cfg.eps_feasible)
        throw FeasibilityError("infeasible a_x at node " + std::to_string(node) +
                               ", coordinate " + std::to_string(coord));
    return f;
}

}  // namespace vsmd
