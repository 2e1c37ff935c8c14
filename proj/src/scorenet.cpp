#include "vsmd/scorenet.hpp"

#include <cmath>
#include <cstring>

#include "vsmd/errors.hpp"

namespace vsmd {

std::string to_string(Activation a) { return a == Activation::TANH ? "tanh" : "silu"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::TANH;
    if (s == "silu") return Activation::SILU;
    throw ConfigError("unknown activation '" + s + "'");
}

namespace {

inline double act_eval(Activation a, double z) {
    if (a == Activation::TANH) return std::tanh(z);
    return z / (1.0 + std::exp(-z));  // silu
}

inline double act_deriv(Activation a, double z) {
    if (a == Activation::TANH) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// C (n x out) = X (n x in) W^T + b, W stored out x in row-major.
void affine_forward(const double* x, const double* w, const double* b, std::size_t n,
                    std::size_t in, std::size_t out, double* c) {
    for (std::size_t s = 0; s < n; ++s) {
        const double* xr = x + s * in;
        double* cr = c + s * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = w + o * in;
            double acc = b[o];
            for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
            cr[o] = acc;
        }
    }
}

// gW (out x in) += dZ^T X ; gb += column sums of dZ.
void affine_backward_params(const double* x, const double* dz, std::size_t n, std::size_t in,
                            std::size_t out, double* gw, double* gb) {
    for (std::size_t s = 0; s < n; ++s) {
        const double* xr = x + s * in;
        const double* dr = dz + s * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double coef = dr[o];
            if (coef == 0.0) continue;
            double* gwr = gw + o * in;
            for (std::size_t k = 0; k < in; ++k) gwr[k] += coef * xr[k];
            gb[o] += coef;
        }
    }
}

// dX (n x in) = dZ (n x out) W (out x in).
void affine_backward_input(const double* w, const double* dz, std::size_t n, std::size_t in,
                           std::size_t out, double* dx) {
    std::memset(dx, 0, sizeof(double) * n * in);
    for (std::size_t s = 0; s < n; ++s) {
        const double* dr = dz + s * out;
        double* dxr = dx + s * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double coef = dr[o];
            if (coef == 0.0) continue;
            const double* wr = w + o * in;
            for (std::size_t k = 0; k < in; ++k) dxr[k] += coef * wr[k];
        }
    }
}

}  // namespace

ScoreNetwork::ScoreNetwork(const MlpConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    const std::size_t n_layers = cfg.hidden.size() + 1;
    std::size_t in = feature_dim();
    std::size_t total = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t out = (l < cfg.hidden.size()) ? cfg.hidden[l] : cfg.out_dim();
        w_off_.push_back(total);
        total += out * in;
        b_off_.push_back(total);
        total += out;
        in_dim_.push_back(in);
        out_dim_.push_back(out);
        in = out;
    }
    params_.assign(total, 0.0);

    RngStream rng(init_seed);
    const double gain = (cfg.activation == Activation::SILU) ? 2.0 : 1.0;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        const double scale = std::sqrt(gain / static_cast<double>(in_dim_[l]));
        double* w = params_.data() + w_off_[l];
        for (std::size_t k = 0; k < out_dim_[l] * in_dim_[l]; ++k) w[k] = scale * rng.normal();
    }
    // Final layer zero-initialized: the raw network starts as the zero score.
    ema_ = params_;
}

std::size_t ScoreNetwork::feature_dim() const {
    return cfg_.state_dim + 2 * cfg_.time_frequencies + cfg_.context_dim;
}

std::size_t ScoreNetwork::context_offset() const {
    return cfg_.state_dim + 2 * cfg_.time_frequencies;
}

void ScoreNetwork::ema_update(double ema_beta) {
    for (std::size_t i = 0; i < params_.size(); ++i)
        ema_[i] = ema_beta * ema_[i] + (1.0 - ema_beta) * params_[i];
}

void ScoreNetwork::assemble_features(const double* states, const double* times_normalized,
                                     const double* ctx, std::size_t n, Vec& features) const {
    const std::size_t sd = cfg_.state_dim;
    const std::size_t nf = cfg_.time_frequencies;
    const std::size_t cd = cfg_.context_dim;
    const std::size_t f = feature_dim();
    features.assign(n * f, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        double* row = features.data() + s * f;
        std::memcpy(row, states + s * sd, sizeof(double) * sd);
        const double t = (nf > 0) ? times_normalized[s] : 0.0;
        double omega = 2.0 * M_PI;
        for (std::size_t k = 0; k < nf; ++k) {
            row[sd + 2 * k] = std::sin(omega * t);
            row[sd + 2 * k + 1] = std::cos(omega * t);
            omega *= 2.0;
        }
        if (cd > 0) std::memcpy(row + sd + 2 * nf, ctx + s * cd, sizeof(double) * cd);
    }
}

void ScoreNetwork::forward(const Vec& theta, const double* states,
                           const double* times_normalized, const double* ctx, std::size_t n,
                           Vec& out, MlpTape* tape) const {
    const std::size_t n_layers = in_dim_.size();
    Vec x;
    assemble_features(states, times_normalized, ctx, n, x);
    if (tape) {
        tape->n = n;
        tape->inputs.assign(n_layers, Vec{});
        tape->preact.assign(n_layers - 1, Vec{});
    }
    Vec z;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t in = in_dim_[l], o = out_dim_[l];
        z.assign(n * o, 0.0);
        affine_forward(x.data(), theta.data() + w_off_[l], theta.data() + b_off_[l], n, in, o,
                       z.data());
        if (tape) tape->inputs[l] = x;
        if (l + 1 < n_layers) {
            if (tape) tape->preact[l] = z;
            x.resize(n * o);
            for (std::size_t k = 0; k < n * o; ++k) x[k] = act_eval(cfg_.activation, z[k]);
        } else {
            out = z;
        }
    }
    for (double v : out)
        if (!std::isfinite(v)) throw NumericalError("score network produced non-finite output");
}

void ScoreNetwork::backward(const Vec& theta, const MlpTape& tape, const Vec& dout, Vec& grad,
                            Vec* dfeatures) const {
    const std::size_t n_layers = in_dim_.size();
    const std::size_t n = tape.n;
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);

    Vec dz = dout;
    Vec dx;
    for (std::size_t li = n_layers; li-- > 0;) {
        const std::size_t in = in_dim_[li], o = out_dim_[li];
        affine_backward_params(tape.inputs[li].data(), dz.data(), n, in, o,
                               grad.data() + w_off_[li], grad.data() + b_off_[li]);
        if (li == 0) {
            if (dfeatures) {
                dfeatures->assign(n * in, 0.0);
                affine_backward_input(theta.data() + w_off_[li], dz.data(), n, in, o,
                                      dfeatures->data());
            }
            break;
        }
        dx.assign(n * in, 0.0);
        affine_backward_input(theta.data() + w_off_[li], dz.data(), n, in, o, dx.data());
        const Vec& pre = tape.preact[li - 1];
        dz.resize(n * in);
        for (std::size_t k = 0; k < n * in; ++k)
            dz[k] = dx[k] * act_deriv(cfg_.activation, pre[k]);
    }
}

void AdamOptimizer::init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
}

void AdamOptimizer::step(Vec& params, const Vec& grad) {
    if (m.size() != params.size()) init(params.size());
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

void TrainState::record_loss(double loss) {
    loss_history.push_back(loss);
    while (loss_history.size() > loss_history_cap) loss_history.pop_front();
}

DsmBatch assemble_dsm_batch(const PerturbationKernel& kernel, const std::vector<Vec>& data_x,
                            std::size_t batch_size, RngStream& rng,
                            const std::vector<Vec>* ctx_rows) {
    if (data_x.empty()) throw std::invalid_argument("assemble_dsm_batch: empty dataset");
    const std::size_t d = kernel.dim();
    const bool momentum = kernel.momentum();
    const std::size_t sd = momentum ? 2 * d : d;
    const std::size_t n_nodes = kernel.n_nodes();
    const double horizon = kernel.config().horizon;

    DsmBatch b;
    b.n = batch_size;
    b.state_dim = sd;
    b.states.resize(batch_size * sd);
    b.times.resize(batch_size);
    b.targets.resize(batch_size * sd);
    const std::size_t cd = ctx_rows ? (*ctx_rows)[0].size() : 0;
    if (cd > 0) b.ctx.resize(batch_size * cd);

    b.nodes.resize(batch_size);
    AugmentedState a0(d);
    Vec eps(sd);
    for (std::size_t s = 0; s < batch_size; ++s) {
        const std::size_t row = rng.index(data_x.size());
        for (std::size_t i = 0; i < d; ++i) a0.x[i] = data_x[row][i];
        if (momentum)
            for (std::size_t i = 0; i < d; ++i) a0.v[i] = rng.normal();
        const std::size_t node = 1 + rng.index(n_nodes - 1);
        b.nodes[s] = node;
        rng.normal_fill(eps.data(), sd);
        ForwardSample fs = forward_sample(kernel, a0, node, eps);
        double* st = b.states.data() + s * sd;
        for (std::size_t i = 0; i < d; ++i) st[i] = fs.a.x[i];
        if (momentum)
            for (std::size_t i = 0; i < d; ++i) st[d + i] = fs.a.v[i];
        std::memcpy(b.targets.data() + s * sd, fs.target_score.data(), sizeof(double) * sd);
        b.times[s] = kernel.config().time_at(node) / horizon;
        if (cd > 0)
            std::memcpy(b.ctx.data() + s * cd, (*ctx_rows)[row].data(), sizeof(double) * cd);
    }
    return b;
}

double dsm_loss_and_grad(const ScoreNetwork& net, const DsmBatch& batch, Vec& grad,
                         Vec* dctx) {
    if (batch.n == 0) throw std::invalid_argument("dsm_loss: empty batch");
    MlpTape tape;
    Vec out;
    const double* ctx = batch.ctx.empty() ? nullptr : batch.ctx.data();
    net.forward(net.params(), batch.states.data(), batch.times.data(), ctx, batch.n, out,
                &tape);

    const double inv_n = 1.0 / static_cast<double>(batch.n);
    double loss = 0.0;
    Vec dout(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double r = out[k] - batch.targets[k];
        loss += r * r;
        dout[k] = 2.0 * r * inv_n;
    }
    loss *= inv_n;

    grad.assign(net.n_params(), 0.0);
    if (dctx) {
        Vec dfeat;
        net.backward(net.params(), tape, dout, grad, &dfeat);
        const std::size_t cd = net.config().context_dim;
        const std::size_t off = net.context_offset();
        const std::size_t f = net.feature_dim();
        dctx->assign(batch.n * cd, 0.0);
        for (std::size_t s = 0; s < batch.n; ++s)
            std::memcpy(dctx->data() + s * cd, dfeat.data() + s * f + off,
                        sizeof(double) * cd);
    } else {
        net.backward(net.params(), tape, dout, grad);
    }
    return loss;
}

double dsm_loss(const ScoreNetwork& net, const DsmBatch& batch) {
    if (batch.n == 0) throw std::invalid_argument("dsm_loss: empty batch");
    Vec out;
    const double* ctx = batch.ctx.empty() ? nullptr : batch.ctx.data();
    net.forward(net.params(), batch.states.data(), batch.times.data(), ctx, batch.n, out);
    double loss = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double r = out[k] - batch.targets[k];
        loss += r * r;
    }
    return loss / static_cast<double>(batch.n);
}

namespace {

// Per-sample ||L^T (s - target)||^2; writes dL/ds rows when dout != null.
double weighted_residual(const PerturbationKernel& kernel, const DsmBatch& batch,
                         const Vec& out, Vec* dout) {
    const std::size_t d = kernel.dim();
    const std::size_t sd = batch.state_dim;
    const double inv_n = 1.0 / static_cast<double>(batch.n);
    double loss = 0.0;
    if (dout) dout->assign(out.size(), 0.0);
    for (std::size_t s = 0; s < batch.n; ++s) {
        const std::size_t node = batch.nodes[s];
        const double* e_row = out.data() + s * sd;
        const double* t_row = batch.targets.data() + s * sd;
        if (kernel.momentum()) {
            for (std::size_t i = 0; i < d; ++i) {
                const Chol2& l = kernel.chol(node, i);
                const double ex = e_row[i] - t_row[i];
                const double ev = e_row[d + i] - t_row[d + i];
                const double rx = l.l00 * ex + l.l10 * ev;
                const double rv = l.l11 * ev;
                loss += rx * rx + rv * rv;
                if (dout) {
                    (*dout)[s * sd + i] = 2.0 * l.l00 * rx * inv_n;
                    (*dout)[s * sd + d + i] = 2.0 * (l.l10 * rx + l.l11 * rv) * inv_n;
                }
            }
        } else {
            for (std::size_t i = 0; i < d; ++i) {
                const double lv = std::sqrt(std::max(kernel.sigma_scalar(node, i), 1e-300));
                const double r = lv * (e_row[i] - t_row[i]);
                loss += r * r;
                if (dout) (*dout)[s * sd + i] = 2.0 * lv * r * inv_n;
            }
        }
    }
    return loss * inv_n;
}

}  // namespace

double dsm_weighted_loss_and_grad(const ScoreNetwork& net, const PerturbationKernel& kernel,
                                  const DsmBatch& batch, Vec& grad, Vec* dctx) {
    if (batch.n == 0) throw std::invalid_argument("dsm_weighted_loss: empty batch");
    MlpTape tape;
    Vec out;
    const double* ctx = batch.ctx.empty() ? nullptr : batch.ctx.data();
    net.forward(net.params(), batch.states.data(), batch.times.data(), ctx, batch.n, out,
                &tape);
    Vec dout;
    const double loss = weighted_residual(kernel, batch, out, &dout);

    grad.assign(net.n_params(), 0.0);
    if (dctx) {
        Vec dfeat;
        net.backward(net.params(), tape, dout, grad, &dfeat);
        const std::size_t cd = net.config().context_dim;
        const std::size_t off = net.context_offset();
        const std::size_t f = net.feature_dim();
        dctx->assign(batch.n * cd, 0.0);
        for (std::size_t s = 0; s < batch.n; ++s)
            std::memcpy(dctx->data() + s * cd, dfeat.data() + s * f + off,
                        sizeof(double) * cd);
    } else {
        net.backward(net.params(), tape, dout, grad);
    }
    return loss;
}

double dsm_weighted_loss(const ScoreNetwork& net, const PerturbationKernel& kernel,
                         const DsmBatch& batch) {
    if (batch.n == 0) throw std::invalid_argument("dsm_weighted_loss: empty batch");
    Vec out;
    const double* ctx = batch.ctx.empty() ? nullptr : batch.ctx.data();
    net.forward(net.params(), batch.states.data(), batch.times.data(), ctx, batch.n, out);
    return weighted_residual(kernel, batch, out, nullptr);
}

double train_step(TrainState& state, ScoreNetwork& net, const PerturbationKernel& kernel,
                  const std::vector<Vec>& data_x, std::size_t batch_size, RngStream& rng) {
    const DsmBatch batch = assemble_dsm_batch(kernel, data_x, batch_size, rng);
    Vec grad;
    const double loss = dsm_weighted_loss_and_grad(net, kernel, batch, grad);
    state.opt.lr = state.score_lr;
    state.opt.step(net.params(), grad);
    net.ema_update(net.config().ema_beta);
    ++state.step;
    state.record_loss(loss);
    return loss;
}

}  // namespace vsmd
