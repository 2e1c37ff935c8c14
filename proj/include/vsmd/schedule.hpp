#pragma once

#include <cstddef>
#include <vector>

#include "vsmd/config.hpp"

namespace vsmd {

// Per-time-node diagonal variational scores A_x[t], A_v[t].
// Feasibility: 1 - 2 gamma a_x >= eps and 1 - 2 a_v >= eps at every node
// (the positive-definiteness constraint on the drift sub-blocks).
struct VariationalSchedule {
    std::size_t n_nodes = 0;
    std::size_t dim = 0;
    std::vector<double> a_x;  // n_nodes * dim, row-major by node
    std::vector<double> a_v;

    static VariationalSchedule zeros(std::size_t n_nodes, std::size_t dim);

    double ax(std::size_t node, std::size_t i) const { return a_x[node * dim + i]; }
    double av(std::size_t node, std::size_t i) const { return a_v[node * dim + i]; }
    double& ax(std::size_t node, std::size_t i) { return a_x[node * dim + i]; }
    double& av(std::size_t node, std::size_t i) { return a_v[node * dim + i]; }

    bool is_zero() const;

    // Throws FeasibilityError naming node and coordinate.
    void check_feasible(const DiffusionConfig& cfg) const;
};

// Maps a_x to the a_v enforcing damping ratio R:
// a_v = 1/2 - sqrt(R (1 - 2 gamma a_x)) / gamma.
double damping_transform(const DiffusionConfig& cfg, double a_x);

// Applies the transform at every node/coordinate (overdamped mode keeps a_v = 0).
void apply_damping_transform(const DiffusionConfig& cfg, VariationalSchedule& sched);

// Per-coordinate 2x2 drift block of D_t (momentum modes):
// [[0, -1], [1 - 2 gamma a_x, gamma (1 - 2 a_v)]].
// Overdamped mode reduces to the scalar 1 - 2 a_x.
struct DriftBlock {
    double d00, d01, d10, d11;
};

DriftBlock drift_block(const DiffusionConfig& cfg, const VariationalSchedule& sched,
                       std::size_t node, std::size_t coord);

double drift_scalar_overdamped(const DiffusionConfig& cfg, const VariationalSchedule& sched,
                               std::size_t node, std::size_t coord);

}  // namespace vsmd
