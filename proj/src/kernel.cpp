#include "vsmd/kernel.hpp"

#include <cmath>
#include <string>

namespace vsmd {

Matrix2 mat2_mul(const Matrix2& p, const Matrix2& q) {
    return {p.a * q.a + p.b * q.c, p.a * q.b + p.b * q.d, p.c * q.a + p.d * q.c,
            p.c * q.b + p.d * q.d};
}

Matrix2 mat2_exp(const Matrix2& m) {
    Mat mm(2, 2);
    mm(0, 0) = m.a;
    mm(0, 1) = m.b;
    mm(1, 0) = m.c;
    mm(1, 1) = m.d;
    const Mat e = mat_exp(mm);
    return {e(0, 0), e(0, 1), e(1, 0), e(1, 1)};
}

Chol2 chol2(const Matrix2& sigma) {
    Mat s(2, 2);
    s(0, 0) = sigma.a;
    s(0, 1) = sigma.b;
    s(1, 0) = sigma.c;
    s(1, 1) = sigma.d;
    const Mat l = cholesky(s);
    return {l(0, 0), l(1, 0), l(1, 1)};
}

namespace {

Matrix2 symposed(const Matrix2& m) {
    const double off = 0.5 * (m.b + m.c);
    return {m.a, off, off, m.d};
}

// Sigma_t = C H^-1 for the per-coordinate 2x2 system, via the 4x4 block exp.
Matrix2 sigma_from_blockexp(const Matrix2& d_int, double j_int, const Matrix2& sigma0,
                            std::size_t node) {
    Mat di(2, 2), ji(2, 2), s0(2, 2);
    di(0, 0) = d_int.a;
    di(0, 1) = d_int.b;
    di(1, 0) = d_int.c;
    di(1, 1) = d_int.d;
    ji(1, 1) = j_int;  // beta gamma J has only the v-entry
    s0(0, 0) = sigma0.a;
    s0(0, 1) = sigma0.b;
    s0(1, 0) = sigma0.c;
    s0(1, 1) = sigma0.d;
    const BlockExpResult r = lyapunov_blockexp(di, ji, s0);
    Mat sig = solve_right(r.c, r.h, "node " + std::to_string(node));
    sig.symmetrize();
    return {sig(0, 0), sig(0, 1), sig(1, 0), sig(1, 1)};
}

}  // namespace

const Matrix2& PerturbationKernel::phi(std::size_t node, std::size_t coord) const {
    return phi_[node * dim_ + coord];
}
const Matrix2& PerturbationKernel::sigma(std::size_t node, std::size_t coord) const {
    return sigma_[node * dim_ + coord];
}
const Chol2& PerturbationKernel::chol(std::size_t node, std::size_t coord) const {
    return chol_[node * dim_ + coord];
}
double PerturbationKernel::phi_scalar(std::size_t node, std::size_t coord) const {
    return phi_s_[node * dim_ + coord];
}
double PerturbationKernel::sigma_scalar(std::size_t node, std::size_t coord) const {
    return sigma_s_[node * dim_ + coord];
}
const Mat& PerturbationKernel::phi_full(std::size_t node) const { return full_phi_[node]; }
const Mat& PerturbationKernel::sigma_full(std::size_t node) const { return full_sigma_[node]; }
const Mat& PerturbationKernel::chol_full(std::size_t node) const { return full_chol_[node]; }
const Mat& PerturbationKernel::chol_inv_t_full(std::size_t node) const {
    return full_chol_inv_t_[node];
}

Matrix2 PerturbationKernel::marginal_sigma(std::size_t node, std::size_t coord, double var_x,
                                           double var_v) const {
    const Matrix2& p = phi(node, coord);
    const Matrix2& s = sigma(node, coord);
    const double dx = var_x - opts_.sigma0_x;
    const double dv = var_v - opts_.sigma0_v;
    // Phi diag(dx, dv) Phi^T
    Matrix2 add{p.a * p.a * dx + p.b * p.b * dv, p.a * p.c * dx + p.b * p.d * dv,
                p.c * p.a * dx + p.d * p.b * dv, p.c * p.c * dx + p.d * p.d * dv};
    return symposed(Matrix2{s.a + add.a, s.b + add.b, s.c + add.c, s.d + add.d});
}

double PerturbationKernel::marginal_sigma_scalar(std::size_t node, std::size_t coord,
                                                 double var_x) const {
    const double p = phi_scalar(node, coord);
    return sigma_scalar(node, coord) + p * p * (var_x - opts_.sigma0_x);
}

PerturbationKernel build_kernel(const DiffusionConfig& cfg, const VariationalSchedule& sched,
                                const KernelBuildOptions& opts) {
    cfg.validate();
    sched.check_feasible(cfg);
    const std::size_t n = cfg.grid_size;
    const std::size_t d = sched.dim;
    const double h = cfg.dt();

    PerturbationKernel k;
    k.cfg_ = cfg;
    k.opts_ = opts;
    k.dim_ = d;
    k.full_ = opts.full_matrix;

    if (!is_momentum(cfg.mode)) {
        // Overdamped: d independent scalar processes, 2x2 block system each.
        k.phi_s_.assign(n * d, 0.0);
        k.sigma_s_.assign(n * d, 0.0);
        k.chol_s_.assign(n * d, 0.0);
        std::vector<double> d_int(d, 0.0);
        double j_int = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            for (std::size_t i = 0; i < d; ++i) {
                const double di = d_int[i];  // [beta D]_t for this coordinate
                // Scalar Lyapunov: dsigma/dt = -beta D sigma + beta.
                Mat dd(1, 1), jj(1, 1), ss(1, 1);
                dd(0, 0) = di;
                jj(0, 0) = j_int;
                ss(0, 0) = opts.sigma0_x;
                const BlockExpResult r = lyapunov_blockexp(dd, jj, ss);
                Mat sig = solve_right(r.c, r.h, "node " + std::to_string(m));
                const double var = sig(0, 0);
                if (!(var > 0.0) && m > 0)
                    throw SingularKernelError("non-positive variance at node " +
                                              std::to_string(m));
                k.phi_s_[m * d + i] = std::exp(-0.5 * di);
                k.sigma_s_[m * d + i] = std::max(var, 0.0);
                k.chol_s_[m * d + i] = std::sqrt(std::max(var, 1e-300));
            }
            if (m + 1 < n) {
                const double bseg = cfg.beta_segment_avg(m) * h;
                for (std::size_t i = 0; i < d; ++i)
                    d_int[i] += bseg * drift_scalar_overdamped(cfg, sched, m, i);
                j_int += bseg;  // g g^T = beta I for the overdamped process
            }
        }
        return k;
    }

    if (!opts.full_matrix) {
        k.phi_.assign(n * d, Matrix2{});
        k.sigma_.assign(n * d, Matrix2{});
        k.chol_.assign(n * d, Chol2{});
        std::vector<Matrix2> d_int(d, Matrix2{});
        double j_int = 0.0;
        const Matrix2 s0{opts.sigma0_x, 0.0, 0.0, opts.sigma0_v};
        for (std::size_t m = 0; m < n; ++m) {
            for (std::size_t i = 0; i < d; ++i) {
                const Matrix2& di = d_int[i];
                const Matrix2 p = mat2_exp(Matrix2{-0.5 * di.a, -0.5 * di.b, -0.5 * di.c,
                                                   -0.5 * di.d});
                const Matrix2 sig =
                    (m == 0) ? s0 : sigma_from_blockexp(di, j_int, s0, m);
                k.phi_[m * d + i] = p;
                k.sigma_[m * d + i] = sig;
                k.chol_[m * d + i] = chol2(sig);
            }
            if (m + 1 < n) {
                const double bseg = cfg.beta_segment_avg(m) * h;
                for (std::size_t i = 0; i < d; ++i) {
                    const DriftBlock blk = drift_block(cfg, sched, m, i);
                    Matrix2& di = d_int[i];
                    di.a += bseg * blk.d00;
                    di.b += bseg * blk.d01;
                    di.c += bseg * blk.d10;
                    di.d += bseg * blk.d11;
                }
                j_int += bseg * cfg.gamma;
            }
        }
        return k;
    }

    // Full 2d x 2d mode.
    const std::size_t s2 = 2 * d;
    k.full_phi_.reserve(n);
    k.full_sigma_.reserve(n);
    k.full_chol_.reserve(n);
    k.full_chol_inv_t_.reserve(n);
    Mat d_int(s2, s2);
    double j_scalar = 0.0;
    Mat sigma0(s2, s2);
    for (std::size_t i = 0; i < d; ++i) {
        sigma0(i, i) = opts.sigma0_x;
        sigma0(d + i, d + i) = opts.sigma0_v;
    }
    for (std::size_t m = 0; m < n; ++m) {
        Mat j_int(s2, s2);
        for (std::size_t i = 0; i < d; ++i) j_int(d + i, d + i) = j_scalar;
        k.full_phi_.push_back(mat_exp(-0.5 * d_int));
        Mat sig = sigma0;
        if (m > 0) {
            const BlockExpResult r = lyapunov_blockexp(d_int, j_int, sigma0);
            sig = solve_right(r.c, r.h, "node " + std::to_string(m));
            sig.symmetrize();
        }
        k.full_sigma_.push_back(sig);
        k.full_chol_.push_back(cholesky(sig));
        k.full_chol_inv_t_.push_back(lower_inverse_transpose(k.full_chol_.back()));
        if (m + 1 < n) {
            const double bseg = cfg.beta_segment_avg(m) * h;
            for (std::size_t i = 0; i < d; ++i) {
                const DriftBlock blk = drift_block(cfg, sched, m, i);
                d_int(i, d + i) += bseg * blk.d01;
                d_int(d + i, i) += bseg * blk.d10;
                d_int(d + i, d + i) += bseg * blk.d11;
            }
            j_scalar += bseg * cfg.gamma;
        }
    }
    return k;
}

ForwardSample forward_sample(const PerturbationKernel& kernel, const AugmentedState& a0,
                             std::size_t node, const Vec& eps) {
    const std::size_t d = kernel.dim();
    ForwardSample out;

    if (!kernel.momentum()) {
        out.a = AugmentedState(d);
        out.target_score.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double p = kernel.phi_scalar(node, i);
            const double l = std::sqrt(std::max(kernel.sigma_scalar(node, i), 1e-300));
            out.a.x[i] = p * a0.x[i] + l * eps[i];
            out.target_score[i] = -eps[i] / l;
        }
        return out;
    }

    out.a = AugmentedState(d);
    out.target_score.assign(2 * d, 0.0);

    if (kernel.full_matrix()) {
        const Mat& p = kernel.phi_full(node);
        const Mat& l = kernel.chol_full(node);
        const Mat& linv_t = kernel.chol_inv_t_full(node);
        Vec a0s(2 * d);
        for (std::size_t i = 0; i < d; ++i) {
            a0s[i] = a0.x[i];
            a0s[d + i] = a0.v[i];
        }
        Vec mean = p.apply(a0s);
        for (std::size_t i = 0; i < 2 * d; ++i) {
            double noise = 0.0, score = 0.0;
            for (std::size_t j = 0; j < 2 * d; ++j) {
                noise += l(i, j) * eps[j];
                score -= linv_t(i, j) * eps[j];
            }
            const double val = mean[i] + noise;
            if (i < d)
                out.a.x[i] = val;
            else
                out.a.v[i - d] = val;
            out.target_score[i] = score;
        }
        return out;
    }

    for (std::size_t i = 0; i < d; ++i) {
        const Matrix2& p = kernel.phi(node, i);
        const Chol2& l = kernel.chol(node, i);
        const double ex = eps[i], ev = eps[d + i];
        out.a.x[i] = p.a * a0.x[i] + p.b * a0.v[i] + l.l00 * ex;
        out.a.v[i] = p.c * a0.x[i] + p.d * a0.v[i] + l.l10 * ex + l.l11 * ev;
        // Solve L^T s = eps, negate.
        const double sv = ev / l.l11;
        const double sx = (ex - l.l10 * sv) / l.l00;
        out.target_score[i] = -sx;
        out.target_score[d + i] = -sv;
    }
    return out;
}

AugmentedState sample_terminal_prior(const PerturbationKernel& kernel, RngStream& rng) {
    const std::size_t d = kernel.dim();
    const std::size_t last = kernel.n_nodes() - 1;
    AugmentedState a(d);

    if (!kernel.momentum()) {
        for (std::size_t i = 0; i < d; ++i)
            a.x[i] = std::sqrt(std::max(kernel.sigma_scalar(last, i), 0.0)) * rng.normal();
        return a;
    }
    if (kernel.full_matrix()) {
        const Mat& l = kernel.chol_full(last);
        Vec eps = rng.normal_vec(2 * d);
        for (std::size_t i = 0; i < 2 * d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j <= i; ++j) s += l(i, j) * eps[j];
            if (i < d)
                a.x[i] = s;
            else
                a.v[i - d] = s;
        }
        return a;
    }
    for (std::size_t i = 0; i < d; ++i) {
        const Chol2& l = kernel.chol(last, i);
        const double ex = rng.normal(), ev = rng.normal();
        a.x[i] = l.l00 * ex;
        a.v[i] = l.l10 * ex + l.l11 * ev;
    }
    return a;
}

Vec target_score_from_state(const PerturbationKernel& kernel, const AugmentedState& a0,
                            const AugmentedState& a_t, std::size_t node) {
    const std::size_t d = kernel.dim();

    if (!kernel.momentum()) {
        Vec s(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double r = a_t.x[i] - kernel.phi_scalar(node, i) * a0.x[i];
            s[i] = -r / kernel.sigma_scalar(node, i);
        }
        return s;
    }

    Vec s(2 * d, 0.0);
    if (kernel.full_matrix()) {
        const Mat& p = kernel.phi_full(node);
        Vec a0s(2 * d), ats(2 * d);
        for (std::size_t i = 0; i < d; ++i) {
            a0s[i] = a0.x[i];
            a0s[d + i] = a0.v[i];
            ats[i] = a_t.x[i];
            ats[d + i] = a_t.v[i];
        }
        Vec mean = p.apply(a0s);
        Vec r(2 * d);
        for (std::size_t i = 0; i < 2 * d; ++i) r[i] = ats[i] - mean[i];
        // -Sigma^-1 r through the Cholesky factor.
        Vec w = solve_lower(kernel.chol_full(node), r);
        Vec sol = solve_lower_transpose(kernel.chol_full(node), w);
        for (std::size_t i = 0; i < 2 * d; ++i) s[i] = -sol[i];
        return s;
    }
    for (std::size_t i = 0; i < d; ++i) {
        const Matrix2& p = kernel.phi(node, i);
        const Matrix2& sig = kernel.sigma(node, i);
        const double rx = a_t.x[i] - (p.a * a0.x[i] + p.b * a0.v[i]);
        const double rv = a_t.v[i] - (p.c * a0.x[i] + p.d * a0.v[i]);
        const double det = sig.a * sig.d - sig.b * sig.c;
        s[i] = -(sig.d * rx - sig.b * rv) / det;
        s[d + i] = -(-sig.c * rx + sig.a * rv) / det;
    }
    return s;
}

}  // namespace vsmd
