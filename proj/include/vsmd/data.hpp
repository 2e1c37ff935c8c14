#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vsmd/mat.hpp"
#include "vsmd/rng.hpp"
#include "vsmd/scorenet.hpp"

namespace vsmd {

enum class ToyKind { SPIRAL, CHECKERBOARD, GAUSSIAN, ANISOTROPIC_GAUSSIAN };
enum class StretchAxis { X, Y, NONE };

std::string to_string(ToyKind k);
ToyKind toy_kind_from_string(const std::string& s);
std::string to_string(StretchAxis a);
StretchAxis stretch_axis_from_string(const std::string& s);

// 2D toy dataset description. Spiral/checkerboard clouds are scaled so the
// unstretched axis has unit variance, then the named axis is multiplied by
// stretch_factor (spiral-8Y = spiral with factor 8 on Y).
struct ToySpec {
    ToyKind kind = ToyKind::SPIRAL;
    StretchAxis stretch_axis = StretchAxis::NONE;
    double stretch_factor = 1.0;
    std::size_t n_points = 10000;
    std::uint64_t seed = 0;
    double spiral_jitter = 0.05;  // pre-stretch Gaussian jitter

    void validate() const;
};

std::vector<Vec> gen_toy(const ToySpec& spec);

// Synthetic multivariate series: linear trend + two sinusoidal seasonalities
// + AR(1) noise per dimension, deterministic given the seed.
struct SeriesSpec {
    std::size_t dims = 4;
    std::size_t length = 400;
    double trend_amp = 0.5;
    double seasonal_amp1 = 1.0;
    double seasonal_period1 = 24.0;
    double seasonal_amp2 = 0.5;
    double seasonal_period2 = 7.0;
    double ar_coef = 0.8;
    double noise_scale = 0.3;
    std::size_t context = 24;   // C
    std::size_t horizon = 8;    // P
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<Vec> gen_series(const SeriesSpec& spec);  // length rows of dims

// Per-dimension affine standardization with stored parameters.
struct AffineScaler {
    Vec mean, scale;

    static AffineScaler fit(const std::vector<Vec>& rows);
    Vec transform(const Vec& row) const;
    Vec inverse(const Vec& row) const;
};

// MLP encoder mapping a flattened lag window [C x dims] to an embedding that
// conditions the score network by input concatenation.
class ContextEncoder {
public:
    ContextEncoder() = default;
    ContextEncoder(std::size_t window, std::size_t dims, std::size_t embed_dim,
                   std::uint64_t init_seed, std::vector<std::size_t> hidden = {64});

    std::size_t embed_dim() const { return mlp_.config().out_dim(); }
    std::size_t input_dim() const { return mlp_.config().state_dim; }
    ScoreNetwork& mlp() { return mlp_; }
    const ScoreNetwork& mlp() const { return mlp_; }

    // window rows are oldest-first; result has embed_dim entries.
    Vec encode(const std::vector<Vec>& window) const;
    Vec flatten(const std::vector<Vec>& window) const;

    // Batched forward over flattened windows (n x input_dim), with tape for
    // training through the encoder.
    void forward(const Vec& flat_windows, std::size_t n, Vec& out, MlpTape* tape) const;
    void backward(const MlpTape& tape, const Vec& dout, Vec& grad) const;

private:
    ScoreNetwork mlp_;
};

}  // namespace vsmd
