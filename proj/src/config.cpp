#include "vsmd/config.hpp"

#include <cmath>

namespace vsmd {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::CLD: return "cld";
        case Mode::ULD: return "uld";
        case Mode::VSCLD: return "vscld";
        case Mode::VSULD: return "vsuld";
        case Mode::VSDM_OVERDAMPED: return "vsdm_overdamped";
    }
    return "cld";
}

Mode mode_from_string(const std::string& s) {
    if (s == "cld") return Mode::CLD;
    if (s == "uld") return Mode::ULD;
    if (s == "vscld") return Mode::VSCLD;
    if (s == "vsuld") return Mode::VSULD;
    if (s == "vsdm_overdamped") return Mode::VSDM_OVERDAMPED;
    throw ConfigError("unknown mode '" + s + "'");
}

bool is_momentum(Mode m) { return m != Mode::VSDM_OVERDAMPED; }

bool is_variational(Mode m) {
    return m == Mode::VSCLD || m == Mode::VSULD || m == Mode::VSDM_OVERDAMPED;
}

void DiffusionConfig::validate() const {
    if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
    if (beta_schedule == BetaSchedule::LINEAR_VP && !(beta_min > 0.0 && beta_min <= beta))
        throw ConfigError("linear_vp schedule requires 0 < beta_min <= beta");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (!(damping_ratio > 0.0 && damping_ratio <= 1.0))
        throw ConfigError("damping_ratio must lie in (0, 1]");
    if ((mode == Mode::CLD || mode == Mode::VSCLD) && damping_ratio != 1.0)
        throw ConfigError("CLD/VSCLD require damping_ratio = 1");
    if ((mode == Mode::ULD || mode == Mode::VSULD) && !(damping_ratio < 1.0))
        throw ConfigError("ULD/VSULD require damping_ratio < 1");
    if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
    if (grid_size < 2) throw ConfigError("grid_size must be >= 2");
    if (!(eps_feasible > 0.0 && eps_feasible < 1.0))
        throw ConfigError("eps_feasible must lie in (0, 1)");
}

std::vector<double> DiffusionConfig::time_grid() const {
    std::vector<double> t(grid_size);
    for (std::size_t i = 0; i < grid_size; ++i) t[i] = time_at(i);
    return t;
}

double DiffusionConfig::beta_at(double t) const {
    if (beta_schedule == BetaSchedule::CONSTANT) return beta;
    const double frac = std::min(std::max(t / horizon, 0.0), 1.0);
    return beta_min + (beta - beta_min) * frac;
}

double DiffusionConfig::beta_segment_avg(std::size_t seg) const {
    return 0.5 * (beta_at(time_at(seg)) + beta_at(time_at(seg + 1)));
}

}  // namespace vsmd
