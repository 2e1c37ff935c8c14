#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "vsmd/kernel.hpp"
#include "vsmd/mat.hpp"
#include "vsmd/rng.hpp"

namespace vsmd {

enum class Activation { TANH, SILU };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpConfig {
    std::size_t state_dim = 4;                     // 2d (momentum) or d (overdamped)
    std::size_t context_dim = 0;                   // conditioning embedding width
    std::size_t output_dim = 0;                    // 0 = state_dim (score head)
    std::vector<std::size_t> hidden = {128, 128, 128};
    Activation activation = Activation::SILU;
    std::size_t time_frequencies = 8;              // sin/cos pairs on t/T
    double ema_beta = 0.9999;

    std::size_t out_dim() const { return output_dim ? output_dim : state_dim; }
};

// Stored layer activations for the backward pass.
struct MlpTape {
    std::size_t n = 0;
    std::vector<Vec> inputs;   // input of each affine layer, n x in
    std::vector<Vec> preact;   // pre-activation of each hidden layer, n x out
};

// MLP score s_theta(a, t [, h]) -> R^{state_dim} with an EMA shadow copy.
// Parameters live in a single flat vector; layers address slices of it.
class ScoreNetwork {
public:
    ScoreNetwork() = default;
    ScoreNetwork(const MlpConfig& cfg, std::uint64_t init_seed);

    const MlpConfig& config() const { return cfg_; }
    std::size_t n_params() const { return params_.size(); }
    std::size_t feature_dim() const;

    Vec& params() { return params_; }
    const Vec& params() const { return params_; }
    Vec& ema_params() { return ema_; }
    const Vec& ema_params() const { return ema_; }

    void ema_update(double ema_beta);

    // Builds [state | time features | context] rows for a batch.
    void assemble_features(const double* states, const double* times_normalized,
                           const double* ctx, std::size_t n, Vec& features) const;

    // Batched forward; out is n x state_dim. Uses `theta` (live or EMA).
    void forward(const Vec& theta, const double* states, const double* times_normalized,
                 const double* ctx, std::size_t n, Vec& out, MlpTape* tape = nullptr) const;

    // Accumulates dL/dtheta into grad given dL/dout; optionally returns
    // dL/dfeatures rows (for chaining into a context encoder).
    void backward(const Vec& theta, const MlpTape& tape, const Vec& dout, Vec& grad,
                  Vec* dfeatures = nullptr) const;

    // Gradient of output w.r.t. the context slice of the features.
    std::size_t context_offset() const;

private:
    MlpConfig cfg_;
    std::vector<std::size_t> w_off_, b_off_;  // per affine layer
    std::vector<std::size_t> in_dim_, out_dim_;
    Vec params_;
    Vec ema_;
};

// Adam with bias correction over a flat parameter vector.
struct AdamOptimizer {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t t = 0;
    Vec m, v;

    void init(std::size_t n);
    void step(Vec& params, const Vec& grad);
};

// Optimizer state plus bookkeeping for the score-training loop.
struct TrainState {
    std::uint64_t step = 0;
    AdamOptimizer opt;
    double score_lr = 3e-4;
    double variational_lr = 3e-6;
    std::deque<double> loss_history;  // ring buffer
    std::size_t loss_history_cap = 200;

    void record_loss(double loss);
};

// One assembled denoising-score-matching batch.
struct DsmBatch {
    std::size_t n = 0;
    std::size_t state_dim = 0;
    Vec states;   // n x state_dim (a_t)
    Vec times;    // n, normalized t/T
    Vec targets;  // n x state_dim (-L^-T eps)
    Vec ctx;      // n x context_dim, empty when unconditional
    std::vector<std::size_t> nodes;  // grid node per example (weighted loss)
};

// Draws nodes/eps and forms (a_t, target) pairs through the cached kernel.
// data_x rows are the x-coordinates; fresh v ~ N(0, I) per example.
DsmBatch assemble_dsm_batch(const PerturbationKernel& kernel,
                            const std::vector<Vec>& data_x, std::size_t batch_size,
                            RngStream& rng, const std::vector<Vec>* ctx_rows = nullptr);

// Mean over the batch of ||target - s_theta(a_t, t)||^2 and its parameter
// gradient. Optionally returns dL/dctx rows for the encoder chain.
double dsm_loss_and_grad(const ScoreNetwork& net, const DsmBatch& batch, Vec& grad,
                         Vec* dctx = nullptr);

// Loss only (no gradient); used by finite-difference checks.
double dsm_loss(const ScoreNetwork& net, const DsmBatch& batch);

// Sigma_t-preconditioned form of the same objective, mean ||L_t^T s + eps||^2
// = mean ||L_t^T (s - target)||^2. Shares its minimizer (the marginal score)
// with dsm_loss but stays bounded as t -> 0, where the conditional kernel
// degenerates; this is the loss the training loop descends.
double dsm_weighted_loss_and_grad(const ScoreNetwork& net, const PerturbationKernel& kernel,
                                  const DsmBatch& batch, Vec& grad, Vec* dctx = nullptr);
double dsm_weighted_loss(const ScoreNetwork& net, const PerturbationKernel& kernel,
                         const DsmBatch& batch);

// One Adam step on a freshly drawn batch; updates EMA. Returns the
// (weighted) loss.
double train_step(TrainState& state, ScoreNetwork& net, const PerturbationKernel& kernel,
                  const std::vector<Vec>& data_x, std::size_t batch_size, RngStream& rng);

}  // namespace vsmd
