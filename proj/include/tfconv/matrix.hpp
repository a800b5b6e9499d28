#pragma once

// Dense row-major matrices and the handful of linear-algebra kernels the rest
// of the library needs: products, Hadamard products, norms and a one-sided
// Jacobi SVD. Sizes here are small (at most a few hundred rows), so every
// kernel is a plain loop nest.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfconv/scalar.hpp"

namespace tfconv {

/// Raised when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by condition_number() when the smallest singular value is zero.
class SingularMatrixError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when the Jacobi sweeps hit the iteration cap.
class SvdConvergenceError : public std::runtime_error {
public:
    SvdConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    /// Largest normalized off-diagonal Gram entry at the time of failure.
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

template <Real T = double>
class Matrix {
public:
    using value_type = T;

    Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != checked_size(rows, cols))
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match " + shape_str(rows, cols));
    }

    Matrix(std::initializer_list<std::initializer_list<T>> rows)
        : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
        checked_size(rows_, cols_);
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }
    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, T(0)); }
    static Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, T(1)); }
    static Matrix diag(const std::vector<T>& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::string shape() const { return shape_str(rows_, cols_); }
    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    /// Copy of row i as a 1 x cols matrix.
    Matrix row_matrix(std::size_t i) const {
        return Matrix(1, cols_, std::vector<T>(row(i).begin(), row(i).end()));
    }

    template <Real U>
    Matrix<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t k = 0; k < data_.size(); ++k) out[k] = U(data_[k]);
        return Matrix<U>(rows_, cols_, std::move(out));
    }

    Matrix& operator+=(const Matrix& o) {
        require_same(o, "operator+=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same(o, "operator-=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Matrix& operator*=(const T& s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, const T& s) { return a *= s; }
    friend Matrix operator*(const T& s, Matrix a) { return a *= s; }
    friend Matrix operator-(Matrix a) { return a *= T(-1); }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](const T& v) { return is_finite(v); });
    }

private:
    static std::size_t checked_size(std::size_t r, std::size_t c) {
        if (r == 0 || c == 0)
            throw ShapeError("Matrix: degenerate shape " + shape_str(r, c));
        return r * c;
    }
    void require_same(const Matrix& o, const char* op) const {
        if (!same_shape(o))
            throw ShapeError(std::string(op) + ": shape mismatch " + shape() + " vs " + o.shape());
    }

    std::size_t rows_;
    std::size_t cols_;
    std::vector<T> data_;
};

template <Real T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: shape mismatch " + a.shape() + " * " + b.shape());
    Matrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

/// a^T * b without materializing the transpose.
template <Real T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: shape mismatch " + a.shape() + "^T * " + b.shape());
    Matrix<T> c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const T aki = a(k, i);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
        }
    }
    return c;
}

/// a * b^T without materializing the transpose.
template <Real T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: shape mismatch " + a.shape() + " * " + b.shape() + "^T");
    Matrix<T> c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            T s(0);
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
    return c;
}

template <Real T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

template <Real T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("hadamard: shape mismatch " + a.shape() + " vs " + b.shape());
    Matrix<T> c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t k = 0; k < cd.size(); ++k) cd[k] *= bd[k];
    return c;
}

/// Horizontal concatenation [a b ...]; all blocks share the row count.
template <Real T>
Matrix<T> hstack(const std::vector<Matrix<T>>& blocks) {
    if (blocks.empty()) throw ShapeError("hstack: no blocks");
    const std::size_t r = blocks.front().rows();
    std::size_t c = 0;
    for (const auto& b : blocks) {
        if (b.rows() != r)
            throw ShapeError("hstack: row mismatch " + blocks.front().shape() + " vs " + b.shape());
        c += b.cols();
    }
    Matrix<T> out(r, c);
    std::size_t off = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, off + j) = b(i, j);
        off += b.cols();
    }
    return out;
}

/// Vertical concatenation; all blocks share the column count.
template <Real T>
Matrix<T> vstack(const std::vector<Matrix<T>>& blocks) {
    if (blocks.empty()) throw ShapeError("vstack: no blocks");
    const std::size_t c = blocks.front().cols();
    std::vector<T> data;
    std::size_t r = 0;
    for (const auto& b : blocks) {
        if (b.cols() != c)
            throw ShapeError("vstack: column mismatch " + blocks.front().shape() + " vs " + b.shape());
        data.insert(data.end(), b.data().begin(), b.data().end());
        r += b.rows();
    }
    return Matrix<T>(r, c, std::move(data));
}

/// Column-major vectorization, vec(A).
template <Real T>
std::vector<T> vec(const Matrix<T>& a) {
    std::vector<T> v;
    v.reserve(a.size());
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) v.push_back(a(i, j));
    return v;
}

template <Real T>
T frobenius_norm(const Matrix<T>& a) {
    using std::sqrt;
    T s(0);
    for (const T& v : a.data()) s += v * v;
    return sqrt(s);
}

template <Real T>
T max_abs(const Matrix<T>& a) {
    using std::abs;
    T m(0);
    for (const T& v : a.data()) m = std::max<T>(m, abs(v));
    return m;
}

template <Real T>
T dot(std::span<const T> a, std::span<const T> b) {
    T s(0);
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

template <Real T>
T row_norm(const Matrix<T>& a, std::size_t i) {
    using std::sqrt;
    auto r = a.row(i);
    return sqrt(dot<T>(r, r));
}

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

template <Real T>
struct SvdResult {
    Matrix<T> u;        ///< rows x k, orthonormal columns
    std::vector<T> s;   ///< k = min(rows, cols), nonincreasing
    Matrix<T> v;        ///< cols x k, orthonormal columns
};

namespace detail {

// Completes the columns of q flagged in `missing` to an orthonormal set using
// standard basis vectors and two rounds of Gram-Schmidt.
template <Real T>
void complete_orthonormal(Matrix<T>& q, const std::vector<bool>& missing) {
    using std::sqrt;
    const std::size_t m = q.rows(), k = q.cols();
    std::vector<bool> have(k);
    for (std::size_t j = 0; j < k; ++j) have[j] = !missing[j];
    std::size_t next_basis = 0;
    for (std::size_t j = 0; j < k; ++j) {
        if (have[j]) continue;
        while (next_basis < m) {
            std::vector<T> cand(m, T(0));
            cand[next_basis++] = T(1);
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t o = 0; o < k; ++o) {
                    if (!have[o]) continue;
                    T proj(0);
                    for (std::size_t i = 0; i < m; ++i) proj += q(i, o) * cand[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * q(i, o);
                }
            }
            T nrm(0);
            for (const T& c : cand) nrm += c * c;
            nrm = sqrt(nrm);
            if (nrm > T(0.5)) {
                for (std::size_t i = 0; i < m; ++i) q(i, j) = cand[i] / nrm;
                have[j] = true;
                break;
            }
        }
    }
}

// Hestenes one-sided Jacobi on a tall (rows >= cols) matrix.
template <Real T>
SvdResult<T> svd_tall(const Matrix<T>& a, int max_sweeps) {
    using std::abs;
    using std::sqrt;
    const std::size_t m = a.rows(), n = a.cols();
    Matrix<T> w = a;
    Matrix<T> v = Matrix<T>::identity(n);
    const T eps = epsilon_of<T>();
    const T tol = eps * T(static_cast<double>(m));
    T fro2(0);
    for (const T& x : a.data()) fro2 += x * x;
    const T floor = eps * eps * fro2;

    double worst = 0.0;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        worst = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                T alpha(0), beta(0), gamma(0);
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += w(i, p) * w(i, p);
                    beta += w(i, q) * w(i, q);
                    gamma += w(i, p) * w(i, q);
                }
                if (abs(gamma) <= floor) continue;
                const T scale = sqrt(alpha * beta);
                if (scale > T(0)) worst = std::max(worst, to_double(abs(gamma) / scale));
                if (abs(gamma) <= tol * scale) continue;
                converged = false;
                const T zeta = (beta - alpha) / (T(2) * gamma);
                const T t = (zeta >= T(0) ? T(1) : T(-1)) / (abs(zeta) + sqrt(T(1) + zeta * zeta));
                const T c = T(1) / sqrt(T(1) + t * t);
                const T s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const T wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const T vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged)
        throw SvdConvergenceError("svd: no convergence after " + std::to_string(max_sweeps) +
                                      " sweeps, residual " + std::to_string(worst),
                                  worst);

    std::vector<T> sv(n);
    for (std::size_t j = 0; j < n; ++j) {
        T s2(0);
        for (std::size_t i = 0; i < m; ++i) s2 += w(i, j) * w(i, j);
        sv[j] = sqrt(s2);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

    SvdResult<T> out{Matrix<T>(m, n), std::vector<T>(n), Matrix<T>(n, n)};
    const T smax = sv[order.front()];
    std::vector<bool> missing(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.s[k] = sv[j];
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
        // Columns whose norm is at roundoff level carry no direction.
        if (sv[j] <= smax * eps * T(static_cast<double>(m)) || sv[j] == T(0)) {
            missing[k] = true;
            continue;
        }
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w(i, j) / sv[j];
    }
    complete_orthonormal(out.u, missing);
    return out;
}

}  // namespace detail

/// Thin SVD: a = u * diag(s) * v^T with s of length min(rows, cols).
template <Real T>
SvdResult<T> svd(const Matrix<T>& a, int max_sweeps = 60) {
    if (!a.all_finite()) throw std::domain_error("svd: non-finite entries in " + a.shape());
    if (a.rows() >= a.cols()) return detail::svd_tall(a, max_sweeps);
    auto r = detail::svd_tall(transpose(a), max_sweeps);
    return SvdResult<T>{std::move(r.v), std::move(r.s), std::move(r.u)};
}

template <Real T>
std::vector<T> singular_values(const Matrix<T>& a) {
    return svd(a).s;
}

template <Real T>
T spectral_norm(const Matrix<T>& a) {
    return singular_values(a).front();
}

/// min(rows, cols)-th singular value.
template <Real T>
T min_singular_value(const Matrix<T>& a) {
    return singular_values(a).back();
}

template <Real T>
T condition_number(const Matrix<T>& a) {
    const auto s = singular_values(a);
    if (!(s.back() > T(0)))
        throw SingularMatrixError("condition_number: singular matrix " + a.shape());
    return s.front() / s.back();
}

}  // namespace tfconv
