#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vsmd/errors.hpp"

namespace vsmd {

using Vec = std::vector<double>;

// Dense row-major matrix sized for the small block systems of the forward
// kernel (dimension <= 4d). Not intended for large linear algebra.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    Mat transpose() const {
        Mat t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Mat& operator+=(const Mat& o) {
        for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
        return *this;
    }

    Mat& operator*=(double s) {
        for (double& x : a_) x *= s;
        return *this;
    }

    friend Mat operator+(Mat a, const Mat& b) { return a += b; }

    friend Mat operator-(const Mat& a, const Mat& b) {
        Mat r = a;
        for (std::size_t k = 0; k < r.a_.size(); ++k) r.a_[k] -= b.a_[k];
        return r;
    }

    friend Mat operator*(const Mat& a, const Mat& b) {
        Mat r(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) r(i, j) += aik * b(k, j);
            }
        return r;
    }

    friend Mat operator*(double s, Mat a) { return a *= s; }

    Vec apply(const Vec& x) const {
        Vec y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) acc += (*this)(i, j) * x[j];
            y[i] = acc;
        }
        return y;
    }

    double norm_inf() const {
        double best = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) s += std::fabs((*this)(i, j));
            best = std::max(best, s);
        }
        return best;
    }

    double norm_fro() const {
        double s = 0.0;
        for (double x : a_) s += x * x;
        return std::sqrt(s);
    }

    bool finite() const {
        for (double x : a_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void symmetrize() {
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = i + 1; j < cols_; ++j) {
                const double m = 0.5 * ((*this)(i, j) + (*this)(j, i));
                (*this)(i, j) = m;
                (*this)(j, i) = m;
            }
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    Vec a_;
};

struct BlockExpResult {
    Mat c;  // C_t
    Mat h;  // H_t
};

// e^M by scaling-and-squaring with a diagonal Pade(13) approximant.
Mat mat_exp(const Mat& m);

// Solves the differential Lyapunov system behind the covariance process:
// (C_t; H_t) = exp([[-1/2 Dint, Jint], [0, 1/2 Dint^T]]) (Sigma0; I).
// Dint = [beta D]_t and Jint = [beta gamma J]_t are the accumulated drift and
// diffusion integrals; the caller forms Sigma_{t|0} = C_t H_t^{-1}.
BlockExpResult lyapunov_blockexp(const Mat& d_int, const Mat& j_int, const Mat& sigma0);

// C * H^-1 with a conditioning guard; `where` names the time node in errors.
Mat solve_right(const Mat& c, const Mat& h, const std::string& where);

// Lower-triangular L with L L^T = Sigma. Symmetrizes and applies escalating
// diagonal jitter before giving up.
Mat cholesky(Mat sigma);

// Solves L^T x = y for lower-triangular L.
Vec solve_lower_transpose(const Mat& l, const Vec& y);

// Solves L x = y for lower-triangular L.
Vec solve_lower(const Mat& l, const Vec& y);

// Inverse of a lower-triangular matrix, transposed: returns L^-T.
Mat lower_inverse_transpose(const Mat& l);

// General LU solve A X = B with partial pivoting; returns X.
Mat lu_solve(Mat a, Mat b);

// 1-norm condition estimate via explicit inverse (fine at these sizes).
double condition_estimate(const Mat& a);

}  // namespace vsmd
