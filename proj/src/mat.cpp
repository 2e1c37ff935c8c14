#include "vsmd/mat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vsmd {

namespace {

double norm_1(const Mat& a) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) s += std::fabs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

}  // namespace

Mat mat_exp(const Mat& m) {
    if (m.rows() != m.cols()) throw NumericalError("mat_exp: matrix must be square");
    if (!m.finite()) throw std::invalid_argument("mat_exp: non-finite input");
    const std::size_t n = m.rows();

    // Pade(13) coefficients (Higham 2005).
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const double theta13 = 5.371920351148152;

    int s = 0;
    const double nrm = norm_1(m);
    if (nrm > theta13) s = static_cast<int>(std::ceil(std::log2(nrm / theta13)));

    Mat a = m;
    if (s > 0) a *= std::ldexp(1.0, -s);

    const Mat id = Mat::identity(n);
    const Mat a2 = a * a;
    const Mat a4 = a2 * a2;
    const Mat a6 = a4 * a2;

    Mat w1 = b[13] * a6 + b[11] * a4 + b[9] * a2;
    Mat w2 = a6 * w1 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
    Mat u = a * w2;
    Mat z1 = b[12] * a6 + b[10] * a4 + b[8] * a2;
    Mat v = a6 * z1 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

    Mat r = lu_solve(v - u, v + u);
    for (int i = 0; i < s; ++i) r = r * r;
    return r;
}

BlockExpResult lyapunov_blockexp(const Mat& d_int, const Mat& j_int, const Mat& sigma0) {
    const std::size_t n = d_int.rows();
    if (d_int.cols() != n || j_int.rows() != n || j_int.cols() != n || sigma0.rows() != n ||
        sigma0.cols() != n)
        throw std::invalid_argument("lyapunov_blockexp: inconsistent shapes");

    Mat block(2 * n, 2 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            block(i, j) = -0.5 * d_int(i, j);
            block(i, n + j) = j_int(i, j);
            block(n + i, n + j) = 0.5 * d_int(j, i);
        }

    const Mat e = mat_exp(block);

    BlockExpResult out{Mat(n, n), Mat(n, n)};
    // (C; H) = e * (Sigma0; I)
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double c = 0.0, h = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                c += e(i, k) * sigma0(k, j);
                h += e(n + i, k) * sigma0(k, j);
            }
            c += e(i, n + j);
            h += e(n + i, n + j);
            out.c(i, j) = c;
            out.h(i, j) = h;
        }
    return out;
}

Mat solve_right(const Mat& c, const Mat& h, const std::string& where) {
    if (condition_estimate(h) > 1e12)
        throw SingularKernelError("perturbation kernel H_t numerically singular at " + where);
    // X = C H^-1  <=>  H^T X^T = C^T
    return lu_solve(h.transpose(), c.transpose()).transpose();
}

Mat cholesky(Mat sigma) {
    const std::size_t n = sigma.rows();
    sigma.symmetrize();
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += sigma(i, i);
    const double base = std::max(tr / static_cast<double>(n), 1e-300);

    static const double jitters[] = {0.0, 1e-12, 1e-10, 1e-8};
    for (double j : jitters) {
        Mat l(n, n);
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t k = 0; k <= i; ++k) {
                double s = sigma(i, k) + (i == k ? j * base : 0.0);
                for (std::size_t p = 0; p < k; ++p) s -= l(i, p) * l(k, p);
                if (i == k) {
                    if (s <= 0.0) {
                        ok = false;
                        break;
                    }
                    l(i, i) = std::sqrt(s);
                } else {
                    l(i, k) = s / l(k, k);
                }
            }
        }
        if (ok) return l;
    }
    throw NumericalError("cholesky: matrix indefinite after maximum jitter");
}

Vec solve_lower_transpose(const Mat& l, const Vec& y) {
    const std::size_t n = l.rows();
    Vec x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        if (l(ii, ii) == 0.0) throw NumericalError("solve_lower_transpose: zero diagonal");
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= l(j, ii) * x[j];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

Vec solve_lower(const Mat& l, const Vec& y) {
    const std::size_t n = l.rows();
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (l(i, i) == 0.0) throw NumericalError("solve_lower: zero diagonal");
        double s = y[i];
        for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * x[j];
        x[i] = s / l(i, i);
    }
    return x;
}

Mat lower_inverse_transpose(const Mat& l) {
    const std::size_t n = l.rows();
    Mat out(n, n);
    Vec e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e.assign(n, 0.0);
        e[j] = 1.0;
        Vec col = solve_lower_transpose(l, e);
        for (std::size_t i = 0; i < n; ++i) out(i, j) = col[i];
    }
    return out;
}

Mat lu_solve(Mat a, Mat b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n) throw std::invalid_argument("lu_solve: bad shapes");

    std::vector<std::size_t> piv(n);
    for (std::size_t i = 0; i < n; ++i) piv[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::fabs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(a(i, k));
            if (v > best) {
                best = v;
                p = i;
            }
        }
        if (best == 0.0) throw NumericalError("lu_solve: singular matrix");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
            for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(k, j), b(p, j));
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            a(i, k) = f;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
            for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) -= f * b(k, j);
        }
    }
    // Back substitution.
    for (std::size_t jj = 0; jj < b.cols(); ++jj) {
        for (std::size_t ii = n; ii-- > 0;) {
            double s = b(ii, jj);
            for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * b(j, jj);
            b(ii, jj) = s / a(ii, ii);
        }
    }
    return b;
}

double condition_estimate(const Mat& a) {
    Mat inv;
    try {
        inv = lu_solve(a, Mat::identity(a.rows()));
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    }
    return norm_1(a) * norm_1(inv);
}

}  // namespace vsmd
