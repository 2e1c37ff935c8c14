#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vsmd/errors.hpp"

namespace vsmd {

// Diffusion flavor. The VS* modes optimize the variational scores with
// stochastic approximation; CLD/ULD keep A identically zero.
enum class Mode { CLD, ULD, VSCLD, VSULD, VSDM_OVERDAMPED };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

// True when the dynamics carry a velocity block (everything but overdamped).
bool is_momentum(Mode m);

// True when the variational schedule is trained.
bool is_variational(Mode m);

enum class BetaSchedule { CONSTANT, LINEAR_VP };

// Scalar hyperparameters of the forward diffusion.
struct DiffusionConfig {
    double beta = 5.0;            // noise scale (constant) or beta_max for LINEAR_VP
    double beta_min = 0.1;        // only used by LINEAR_VP
    BetaSchedule beta_schedule = BetaSchedule::CONSTANT;
    double gamma = 2.0;           // friction
    double damping_ratio = 1.0;   // R in (0, 1]; forced to 1 for CLD/VSCLD
    double horizon = 1.0;         // T
    std::size_t grid_size = 125;  // N, uniform grid t_i = i T/(N-1)
    Mode mode = Mode::CLD;
    double eps_feasible = 1e-3;

    // Throws ConfigError on any invariant violation.
    void validate() const;

    double dt() const { return horizon / static_cast<double>(grid_size - 1); }
    double time_at(std::size_t node) const { return dt() * static_cast<double>(node); }
    std::vector<double> time_grid() const;

    double beta_at(double t) const;
    // Exact integral of beta over grid segment [t_n, t_{n+1}] divided by dt
    // (betas are constant or linear in t, so the trapezoid is exact).
    double beta_segment_avg(std::size_t seg) const;
};

}  // namespace vsmd
