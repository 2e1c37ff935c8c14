#include "vsmd/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace vsmd {

void NetScore::eval(const double* states, std::size_t n, std::size_t /*node*/, double t,
                    double* out) const {
    Vec times(n, t / horizon_);
    Vec result;
    const double* ctx = ctx_ ? ctx_->data() : nullptr;
    net_.forward(use_ema_ ? net_.ema_params() : net_.params(), states, times.data(), ctx, n,
                 result);
    std::memcpy(out, result.data(), sizeof(double) * result.size());
}

ExactGaussianScore::ExactGaussianScore(const PerturbationKernel& kernel, Vec var_x,
                                       double var_v, Vec mean_x)
    : kernel_(kernel), d_(kernel.dim()), momentum_(kernel.momentum()) {
    const std::size_t n_nodes = kernel.n_nodes();
    const bool has_mean = !mean_x.empty();
    if (momentum_) {
        inv_.resize(n_nodes * d_);
        mean_.assign(n_nodes * d_ * 2, 0.0);
        for (std::size_t m = 0; m < n_nodes; ++m)
            for (std::size_t i = 0; i < d_; ++i) {
                const Matrix2 s = kernel.marginal_sigma(m, i, var_x[i], var_v);
                const double det = s.a * s.d - s.b * s.c;
                inv_[m * d_ + i] = Matrix2{s.d / det, -s.b / det, -s.c / det, s.a / det};
                if (has_mean) {
                    const Matrix2& p = kernel.phi(m, i);
                    mean_[(m * d_ + i) * 2] = p.a * mean_x[i];
                    mean_[(m * d_ + i) * 2 + 1] = p.c * mean_x[i];
                }
            }
    } else {
        inv_s_.resize(n_nodes * d_);
        mean_.assign(n_nodes * d_ * 2, 0.0);
        for (std::size_t m = 0; m < n_nodes; ++m)
            for (std::size_t i = 0; i < d_; ++i) {
                inv_s_[m * d_ + i] = 1.0 / kernel.marginal_sigma_scalar(m, i, var_x[i]);
                if (has_mean)
                    mean_[(m * d_ + i) * 2] = kernel.phi_scalar(m, i) * mean_x[i];
            }
    }
}

void ExactGaussianScore::eval(const double* states, std::size_t n, std::size_t node,
                              double /*t*/, double* out) const {
    if (momentum_) {
        const std::size_t sd = 2 * d_;
        for (std::size_t s = 0; s < n; ++s) {
            const double* a = states + s * sd;
            double* o = out + s * sd;
            for (std::size_t i = 0; i < d_; ++i) {
                const Matrix2& w = inv_[node * d_ + i];
                const double rx = a[i] - mean_[(node * d_ + i) * 2];
                const double rv = a[d_ + i] - mean_[(node * d_ + i) * 2 + 1];
                o[i] = -(w.a * rx + w.b * rv);
                o[d_ + i] = -(w.c * rx + w.d * rv);
            }
        }
    } else {
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < d_; ++i)
                out[s * d_ + i] = -inv_s_[node * d_ + i] *
                                  (states[s * d_ + i] - mean_[(node * d_ + i) * 2]);
    }
}

const Vec& TrajectoryBatch::at_node(std::size_t node) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] == node) return states[i];
    throw std::invalid_argument("trajectory does not store node " + std::to_string(node));
}

std::vector<Vec> TrajectoryBatch::final_x() const {
    const Vec& last = states.back();
    std::vector<Vec> rows(n, Vec(dim));
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < dim; ++i) rows[s][i] = last[s * state_dim + i];
    return rows;
}

namespace {

struct Integrator {
    const PerturbationKernel& kernel;
    const VariationalSchedule& sched;
    const DiffusionConfig& cfg;
    const ScoreFunction& score;
    const SamplerOptions& opts;
    std::size_t n;
    std::size_t d;
    std::size_t sd;
    double h;

    Vec states;  // n x sd
    Vec sc;      // score buffer

    Integrator(const ScoreFunction& s, const PerturbationKernel& k,
               const VariationalSchedule& sch, std::size_t n_samples,
               const SamplerOptions& o)
        : kernel(k),
          sched(sch),
          cfg(k.config()),
          score(s),
          opts(o),
          n(n_samples),
          d(k.dim()),
          sd(k.momentum() ? 2 * d : d),
          h(cfg.dt()) {
        states.resize(n * sd);
        sc.resize(n * sd);
    }

    void draw_prior(RngStream& rng) {
        for (std::size_t s = 0; s < n; ++s) {
            AugmentedState a = sample_terminal_prior(kernel, rng);
            double* row = states.data() + s * sd;
            for (std::size_t i = 0; i < d; ++i) row[i] = a.x[i];
            if (kernel.momentum())
                for (std::size_t i = 0; i < d; ++i) row[d + i] = a.v[i];
        }
    }

    void guard(std::size_t node, const char* who) const {
        for (double v : states)
            if (!(std::fabs(v) <= opts.divergence_guard))
                throw DivergedError(std::string(who) + " diverged at node " +
                                    std::to_string(node) + " (h=" + std::to_string(h) + ")");
    }

    void eval_score(std::size_t node) {
        score.eval(states.data(), n, node, cfg.time_at(node), sc.data());
    }

    void save(TrajectoryBatch& traj, std::size_t node, bool force) const {
        if (!(opts.save_trajectory || force || node == 0)) return;
        traj.times.push_back(cfg.time_at(node));
        traj.nodes.push_back(node);
        traj.states.push_back(states);
    }

    TrajectoryBatch make_traj() const {
        TrajectoryBatch t;
        t.n = n;
        t.dim = d;
        t.state_dim = sd;
        return t;
    }
};

}  // namespace

TrajectoryBatch backward_em(const ScoreFunction& score, const PerturbationKernel& kernel,
                            const VariationalSchedule& sched, std::size_t n_samples,
                            RngStream& rng, const SamplerOptions& opts) {
    Integrator it(score, kernel, sched, n_samples, opts);
    const DiffusionConfig& cfg = it.cfg;
    const std::size_t last = kernel.n_nodes() - 1;
    const bool momentum = kernel.momentum();

    it.draw_prior(rng);
    TrajectoryBatch traj = it.make_traj();
    it.save(traj, last, true);

    for (std::size_t m = last; m >= 1; --m) {
        const double b = cfg.beta_at(cfg.time_at(m));
        const bool noise_free = (m == 1);  // final Euler step to t = 0
        it.eval_score(m);
        if (momentum) {
            const double g = cfg.gamma;
            const double sig = noise_free ? 0.0 : opts.noise_scale * std::sqrt(b * g * it.h);
            for (std::size_t s = 0; s < it.n; ++s) {
                double* row = it.states.data() + s * it.sd;
                const double* sv = it.sc.data() + s * it.sd + it.d;
                for (std::size_t i = 0; i < it.d; ++i) {
                    const double fx = 1.0 - 2.0 * g * sched.ax(m, i);
                    const double fv = 1.0 - 2.0 * sched.av(m, i);
                    const double x = row[i], v = row[it.d + i];
                    row[i] = x - 0.5 * it.h * b * v;
                    row[it.d + i] = v + 0.5 * it.h * b * fx * x +
                                    0.5 * it.h * b * g * fv * v + it.h * b * g * sv[i] +
                                    sig * (noise_free ? 0.0 : rng.normal());
                }
            }
        } else {
            const double sig = noise_free ? 0.0 : opts.noise_scale * std::sqrt(b * it.h);
            for (std::size_t s = 0; s < it.n; ++s) {
                double* row = it.states.data() + s * it.sd;
                const double* sv = it.sc.data() + s * it.sd;
                for (std::size_t i = 0; i < it.d; ++i) {
                    const double fx = 1.0 - 2.0 * sched.ax(m, i);
                    row[i] += 0.5 * it.h * b * fx * row[i] + it.h * b * sv[i] +
                              sig * (noise_free ? 0.0 : rng.normal());
                }
            }
        }
        it.guard(m - 1, "backward_em");
        it.save(traj, m - 1, false);
    }
    return traj;
}

TrajectoryBatch backward_aboba(const ScoreFunction& score, const PerturbationKernel& kernel,
                               const VariationalSchedule& sched, std::size_t n_samples,
                               RngStream& rng, const SamplerOptions& opts) {
    if (!kernel.momentum())
        throw ConfigError("backward_aboba requires a momentum mode (use backward_em)");

    Integrator it(score, kernel, sched, n_samples, opts);
    const DiffusionConfig& cfg = it.cfg;
    const double g = cfg.gamma;
    const std::size_t last = kernel.n_nodes() - 1;

    it.draw_prior(rng);
    TrajectoryBatch traj = it.make_traj();
    it.save(traj, last, true);

    for (std::size_t m = last; m >= 1; --m) {
        const double b = cfg.beta_at(cfg.time_at(m));
        const double h = it.h;

        if (m == 1) {
            // Final noise-free Euler step to t = 0, as in backward_em.
            it.eval_score(m);
            for (std::size_t s = 0; s < it.n; ++s) {
                double* row = it.states.data() + s * it.sd;
                const double* sv = it.sc.data() + s * it.sd + it.d;
                for (std::size_t i = 0; i < it.d; ++i) {
                    const double fx = 1.0 - 2.0 * g * sched.ax(m, i);
                    const double fv = 1.0 - 2.0 * sched.av(m, i);
                    const double x = row[i], v = row[it.d + i];
                    row[i] = x - 0.5 * h * b * v;
                    row[it.d + i] =
                        v + 0.5 * h * b * fx * x + 0.5 * h * b * g * fv * v + h * b * g * sv[i];
                }
            }
            it.guard(0, "backward_aboba");
            it.save(traj, 0, false);
            break;
        }

        // A then B half kicks.
        for (std::size_t s = 0; s < it.n; ++s) {
            double* row = it.states.data() + s * it.sd;
            for (std::size_t i = 0; i < it.d; ++i) {
                const double fx = 1.0 - 2.0 * g * sched.ax(m, i);
                row[i] -= 0.25 * h * b * row[it.d + i];
                row[it.d + i] += 0.25 * h * b * fx * row[i];
            }
        }
        // O step: exact damping of the linear part, frozen score, exact OU noise.
        it.eval_score(m);
        for (std::size_t s = 0; s < it.n; ++s) {
            double* row = it.states.data() + s * it.sd;
            const double* sv = it.sc.data() + s * it.sd + it.d;
            for (std::size_t i = 0; i < it.d; ++i) {
                const double fv = 1.0 - 2.0 * sched.av(m, i);
                const double c = 0.5 * b * g * fv;
                const double e = std::exp(c * h);
                // Frozen score integrated exactly against the damping
                // (variation of constants), exact OU noise variance.
                const double phi1 = (std::fabs(c * h) > 1e-12) ? (e - 1.0) / (c * h) : 1.0;
                const double var =
                    (std::fabs(c) > 1e-12) ? b * g * (e * e - 1.0) / (2.0 * c) : b * g * h;
                row[it.d + i] = e * row[it.d + i] + phi1 * h * b * g * sv[i] +
                                opts.noise_scale * std::sqrt(var) * rng.normal();
            }
        }
        // B then A half kicks; the B force reads the segment entered.
        for (std::size_t s = 0; s < it.n; ++s) {
            double* row = it.states.data() + s * it.sd;
            for (std::size_t i = 0; i < it.d; ++i) {
                const double fx = 1.0 - 2.0 * g * sched.ax(m - 1, i);
                row[it.d + i] += 0.25 * h * b * fx * row[i];
                row[i] -= 0.25 * h * b * row[it.d + i];
            }
        }
        it.guard(m - 1, "backward_aboba");
        it.save(traj, m - 1, false);
    }
    return traj;
}

TrajectoryBatch pf_ode(const ScoreFunction& score, const PerturbationKernel& kernel,
                       const VariationalSchedule& sched, std::size_t n_samples, RngStream& rng,
                       OdeMethod method, const SamplerOptions& opts) {
    Integrator it(score, kernel, sched, n_samples, opts);
    const DiffusionConfig& cfg = it.cfg;
    const bool momentum = kernel.momentum();
    const std::size_t last = kernel.n_nodes() - 1;

    // drift f(a, node) = -1/2 beta D a - 1/2 beta gamma J s(a).
    auto drift = [&](const Vec& st, const Vec& scr, std::size_t node, Vec& out) {
        const double b = cfg.beta_at(cfg.time_at(node));
        if (momentum) {
            const double g = cfg.gamma;
            for (std::size_t s = 0; s < it.n; ++s) {
                const double* row = st.data() + s * it.sd;
                const double* sv = scr.data() + s * it.sd + it.d;
                double* o = out.data() + s * it.sd;
                for (std::size_t i = 0; i < it.d; ++i) {
                    const double fx = 1.0 - 2.0 * g * sched.ax(node, i);
                    const double fv = 1.0 - 2.0 * sched.av(node, i);
                    o[i] = 0.5 * b * row[it.d + i];
                    o[it.d + i] = -0.5 * b * fx * row[i] - 0.5 * b * g * fv * row[it.d + i] -
                                  0.5 * b * g * sv[i];
                }
            }
        } else {
            for (std::size_t s = 0; s < it.n; ++s)
                for (std::size_t i = 0; i < it.d; ++i) {
                    const double fx = 1.0 - 2.0 * sched.ax(node, i);
                    out[s * it.sd + i] = -0.5 * b * fx * st[s * it.sd + i] -
                                         0.5 * b * scr[s * it.sd + i];
                }
        }
    };

    it.draw_prior(rng);
    TrajectoryBatch traj = it.make_traj();
    it.save(traj, last, true);

    Vec k1(it.n * it.sd), k2(it.n * it.sd), mid(it.n * it.sd);
    for (std::size_t m = last; m >= 1; --m) {
        score.eval(it.states.data(), it.n, m, cfg.time_at(m), it.sc.data());
        drift(it.states, it.sc, m, k1);
        if (method == OdeMethod::EULER) {
            for (std::size_t kk = 0; kk < it.states.size(); ++kk)
                it.states[kk] -= it.h * k1[kk];
        } else {
            for (std::size_t kk = 0; kk < it.states.size(); ++kk)
                mid[kk] = it.states[kk] - it.h * k1[kk];
            score.eval(mid.data(), it.n, m - 1, cfg.time_at(m - 1), it.sc.data());
            drift(mid, it.sc, m - 1, k2);
            for (std::size_t kk = 0; kk < it.states.size(); ++kk)
                it.states[kk] -= 0.5 * it.h * (k1[kk] + k2[kk]);
        }
        it.guard(m - 1, "pf_ode");
        it.save(traj, m - 1, false);
    }
    return traj;
}

}  // namespace vsmd
