#include "vsmd/data.hpp"

#include <cmath>

#include "vsmd/errors.hpp"

namespace vsmd {

std::string to_string(ToyKind k) {
    switch (k) {
        case ToyKind::SPIRAL: return "spiral";
        case ToyKind::CHECKERBOARD: return "checkerboard";
        case ToyKind::GAUSSIAN: return "gaussian";
        case ToyKind::ANISOTROPIC_GAUSSIAN: return "anisotropic_gaussian";
    }
    return "spiral";
}

ToyKind toy_kind_from_string(const std::string& s) {
    if (s == "spiral") return ToyKind::SPIRAL;
    if (s == "checkerboard") return ToyKind::CHECKERBOARD;
    if (s == "gaussian") return ToyKind::GAUSSIAN;
    if (s == "anisotropic_gaussian") return ToyKind::ANISOTROPIC_GAUSSIAN;
    throw ConfigError("unknown toy kind '" + s + "'");
}

std::string to_string(StretchAxis a) {
    switch (a) {
        case StretchAxis::X: return "x";
        case StretchAxis::Y: return "y";
        case StretchAxis::NONE: return "none";
    }
    return "none";
}

StretchAxis stretch_axis_from_string(const std::string& s) {
    if (s == "x") return StretchAxis::X;
    if (s == "y") return StretchAxis::Y;
    if (s == "none") return StretchAxis::NONE;
    throw ConfigError("unknown stretch axis '" + s + "'");
}

void ToySpec::validate() const {
    if (!(stretch_factor >= 1.0)) throw ConfigError("stretch_factor must be >= 1");
    if (n_points == 0) throw ConfigError("n_points must be positive");
}

namespace {

void stretch_inplace(std::vector<Vec>& pts, StretchAxis axis, double factor) {
    if (axis == StretchAxis::NONE || factor == 1.0) return;
    const std::size_t idx = (axis == StretchAxis::X) ? 0 : 1;
    for (Vec& p : pts) p[idx] *= factor;
}

// Scale both coordinates so the axis that stays unstretched ends up with unit
// sample variance.
void normalize_unstretched(std::vector<Vec>& pts, StretchAxis axis) {
    const std::size_t ref = (axis == StretchAxis::X) ? 1 : 0;
    double ss = 0.0, mean = 0.0;
    for (const Vec& p : pts) mean += p[ref];
    mean /= static_cast<double>(pts.size());
    for (const Vec& p : pts) ss += (p[ref] - mean) * (p[ref] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(pts.size()));
    if (sd <= 0.0) return;
    for (Vec& p : pts) {
        p[0] /= sd;
        p[1] /= sd;
    }
}

}  // namespace

std::vector<Vec> gen_toy(const ToySpec& spec) {
    spec.validate();
    RngStream rng(spec.seed);
    std::vector<Vec> pts(spec.n_points, Vec(2, 0.0));

    switch (spec.kind) {
        case ToyKind::SPIRAL: {
            // Two-arm Archimedean spiral, one and a half turns per arm.
            const double theta_lo = 0.4 * M_PI, theta_hi = 3.4 * M_PI;
            for (Vec& p : pts) {
                const double theta = rng.uniform(theta_lo, theta_hi);
                const double r = theta / theta_hi;
                const double arm = (rng.bits() & 1u) ? 1.0 : -1.0;
                p[0] = arm * r * std::cos(theta) + spec.spiral_jitter * rng.normal();
                p[1] = arm * r * std::sin(theta) + spec.spiral_jitter * rng.normal();
            }
            normalize_unstretched(pts, spec.stretch_axis);
            break;
        }
        case ToyKind::CHECKERBOARD: {
            // Alternating unit cells of the 4x4 board on [-2, 2]^2.
            std::vector<std::pair<int, int>> cells;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    if ((i + j) % 2 == 0) cells.emplace_back(i, j);
            for (Vec& p : pts) {
                const auto [ci, cj] = cells[rng.index(cells.size())];
                p[0] = -2.0 + ci + rng.uniform();
                p[1] = -2.0 + cj + rng.uniform();
            }
            normalize_unstretched(pts, spec.stretch_axis);
            break;
        }
        case ToyKind::GAUSSIAN:
        case ToyKind::ANISOTROPIC_GAUSSIAN: {
            for (Vec& p : pts) {
                p[0] = rng.normal();
                p[1] = rng.normal();
            }
            break;
        }
    }
    stretch_inplace(pts, spec.stretch_axis, spec.stretch_factor);
    return pts;
}

void SeriesSpec::validate() const {
    if (dims == 0) throw ConfigError("series dims must be positive");
    if (length <= context + horizon)
        throw ConfigError("series length must exceed context + horizon");
}

std::vector<Vec> gen_series(const SeriesSpec& spec) {
    spec.validate();
    RngStream rng(spec.seed);

    // Per-dimension phases and trend slopes.
    std::vector<double> phase1(spec.dims), phase2(spec.dims), slope(spec.dims),
        ar(spec.dims, 0.0);
    for (std::size_t j = 0; j < spec.dims; ++j) {
        phase1[j] = rng.uniform(0.0, 2.0 * M_PI);
        phase2[j] = rng.uniform(0.0, 2.0 * M_PI);
        slope[j] = spec.trend_amp * rng.uniform(-1.0, 1.0);
    }

    std::vector<Vec> rows(spec.length, Vec(spec.dims, 0.0));
    const double mid = 0.5 * static_cast<double>(spec.length);
    for (std::size_t t = 0; t < spec.length; ++t) {
        const double tt = static_cast<double>(t);
        for (std::size_t j = 0; j < spec.dims; ++j) {
            ar[j] = spec.ar_coef * ar[j] + spec.noise_scale * rng.normal();
            rows[t][j] = slope[j] * (tt - mid) / static_cast<double>(spec.length) +
                         spec.seasonal_amp1 *
                             std::sin(2.0 * M_PI * tt / spec.seasonal_period1 + phase1[j]) +
                         spec.seasonal_amp2 *
                             std::sin(2.0 * M_PI * tt / spec.seasonal_period2 + phase2[j]) +
                         ar[j];
        }
    }
    return rows;
}

AffineScaler AffineScaler::fit(const std::vector<Vec>& rows) {
    const std::size_t d = rows[0].size();
    AffineScaler s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    for (const Vec& r : rows)
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    for (double& m : s.mean) m /= static_cast<double>(rows.size());
    Vec ss(d, 0.0);
    for (const Vec& r : rows)
        for (std::size_t j = 0; j < d; ++j) ss[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(ss[j] / static_cast<double>(rows.size()));
        s.scale[j] = (sd > 1e-12) ? sd : 1.0;
    }
    return s;
}

Vec AffineScaler::transform(const Vec& row) const {
    Vec out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
    return out;
}

Vec AffineScaler::inverse(const Vec& row) const {
    Vec out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] * scale[j] + mean[j];
    return out;
}

ContextEncoder::ContextEncoder(std::size_t window, std::size_t dims, std::size_t embed_dim,
                               std::uint64_t init_seed, std::vector<std::size_t> hidden) {
    MlpConfig cfg;
    cfg.state_dim = window * dims;
    cfg.output_dim = embed_dim;
    cfg.hidden = std::move(hidden);
    cfg.time_frequencies = 0;
    cfg.context_dim = 0;
    mlp_ = ScoreNetwork(cfg, init_seed);
    // The zero-initialized final layer would erase all conditioning signal;
    // give the head the same fan-in init as the hidden layers.
    RngStream rng(init_seed + 1);
    const std::size_t head_in = cfg.hidden.empty() ? cfg.state_dim : cfg.hidden.back();
    const std::size_t head_params = cfg.out_dim() * head_in + cfg.out_dim();
    const double scale = std::sqrt(1.0 / static_cast<double>(head_in));
    const std::size_t off = mlp_.n_params() - head_params;
    for (std::size_t i = 0; i < cfg.out_dim() * head_in; ++i)
        mlp_.params()[off + i] = scale * rng.normal();
    mlp_.ema_params() = mlp_.params();
}

Vec ContextEncoder::flatten(const std::vector<Vec>& window) const {
    Vec flat;
    flat.reserve(input_dim());
    for (const Vec& r : window) flat.insert(flat.end(), r.begin(), r.end());
    if (flat.size() != input_dim())
        throw std::invalid_argument("encode_context: window shape mismatch");
    return flat;
}

Vec ContextEncoder::encode(const std::vector<Vec>& window) const {
    const Vec flat = flatten(window);
    Vec out;
    mlp_.forward(mlp_.params(), flat.data(), nullptr, nullptr, 1, out);
    return out;
}

void ContextEncoder::forward(const Vec& flat_windows, std::size_t n, Vec& out,
                             MlpTape* tape) const {
    mlp_.forward(mlp_.params(), flat_windows.data(), nullptr, nullptr, n, out, tape);
}

void ContextEncoder::backward(const MlpTape& tape, const Vec& dout, Vec& grad) const {
    mlp_.backward(mlp_.params(), tape, dout, grad);
}

}  // namespace vsmd
