#pragma once

// Forward semantics of the single-layer transformer
//
//   S    = softmax_rows(X Wq Wk^T X^T / sqrt(d_qk))
//   Attn = S X Wv
//   Z    = Attn + beta X
//   F    = (act(Z W1) W2 + beta Z) Wu
//
// and the squared-Frobenius training loss 1/2 sum_p ||F(X_p) - Y_p||_F^2.
// beta = 1 is the standard residual block; beta = 0 removes both residual
// paths.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tfconv/matrix.hpp"

namespace tfconv {

struct Activation {
    enum class Kind { relu, smoothed_relu };
    Kind kind = Kind::relu;
    /// Gaussian smoothing width of smoothed_relu.
    double tau = 0.05;

    static Activation relu() { return {Kind::relu, 0.05}; }
    static Activation smoothed(double tau = 0.05) { return {Kind::smoothed_relu, tau}; }

    std::string name() const { return kind == Kind::relu ? "relu" : "smoothed"; }
};

struct ModelConfig {
    std::size_t m = 8;     ///< tokens per sample
    std::size_t d = 6;     ///< embedding dimension
    std::size_t d_qk = 4;  ///< query/key dimension
    std::size_t d1 = 64;   ///< FFN hidden width
    std::size_t n = 4;     ///< output (vocabulary) dimension
    std::size_t p = 4;     ///< sample count
    double beta = 1.0;     ///< residual coefficient in [0, 1]
    Activation activation{};

    void validate() const {
        if (m < 1 || d < 1 || d_qk < 1 || d1 < 1 || n < 1 || p < 1)
            throw std::invalid_argument("ModelConfig: every dimension must be >= 1");
        if (!(beta >= 0.0 && beta <= 1.0))
            throw std::invalid_argument("ModelConfig: beta must lie in [0, 1], got " + std::to_string(beta));
        if (activation.kind == Activation::Kind::smoothed_relu && !(activation.tau > 0.0))
            throw std::invalid_argument("ModelConfig: smoothing width must be > 0");
    }
};

enum class WeightId : std::size_t { w1 = 0, w2, wq, wk, wv, wu };

inline constexpr std::array<WeightId, 6> kWeightIds{WeightId::w1, WeightId::w2, WeightId::wq,
                                                     WeightId::wk, WeightId::wv, WeightId::wu};

inline std::string_view weight_name(WeightId id) {
    static constexpr std::array<std::string_view, 6> names{"w1", "w2", "wq", "wk", "wv", "wu"};
    return names[static_cast<std::size_t>(id)];
}

/// The six weight matrices. Also used to hold gradients.
template <Real T = double>
struct Weights {
    Matrix<T> w1;  ///< d x d1
    Matrix<T> w2;  ///< d1 x d
    Matrix<T> wq;  ///< d x d_qk
    Matrix<T> wk;  ///< d x d_qk
    Matrix<T> wv;  ///< d x d
    Matrix<T> wu;  ///< d x n

    static Weights zeros(const ModelConfig& c) {
        return {Matrix<T>(c.d, c.d1), Matrix<T>(c.d1, c.d), Matrix<T>(c.d, c.d_qk),
                Matrix<T>(c.d, c.d_qk), Matrix<T>(c.d, c.d), Matrix<T>(c.d, c.n)};
    }

    Matrix<T>& operator[](WeightId id) {
        switch (id) {
            case WeightId::w1: return w1;
            case WeightId::w2: return w2;
            case WeightId::wq: return wq;
            case WeightId::wk: return wk;
            case WeightId::wv: return wv;
            default: return wu;
        }
    }
    const Matrix<T>& operator[](WeightId id) const { return const_cast<Weights&>(*this)[id]; }

    template <Real U>
    Weights<U> cast() const {
        return {w1.template cast<U>(), w2.template cast<U>(), wq.template cast<U>(),
                wk.template cast<U>(), wv.template cast<U>(), wu.template cast<U>()};
    }

    void validate(const ModelConfig& c) const {
        const Weights ref = zeros(c);
        for (WeightId id : kWeightIds) {
            if (!(*this)[id].same_shape(ref[id]))
                throw ShapeError(std::string(weight_name(id)) + ": expected " + ref[id].shape() + ", got " +
                                 (*this)[id].shape());
        }
    }

    friend bool operator==(const Weights&, const Weights&) = default;
};

template <Real T = double>
using Params = Weights<T>;

template <Real T = double>
using Gradients = Weights<T>;

template <Real T = double>
struct Dataset {
    std::vector<Matrix<T>> xs;  ///< P matrices, M x d
    std::vector<Matrix<T>> ys;  ///< P matrices, M x N

    std::size_t size() const noexcept { return xs.size(); }

    void validate(const ModelConfig& c) const {
        if (xs.size() != ys.size())
            throw ShapeError("Dataset: " + std::to_string(xs.size()) + " inputs but " +
                             std::to_string(ys.size()) + " targets");
        if (xs.size() != c.p)
            throw ShapeError("Dataset: expected P=" + std::to_string(c.p) + " samples, got " +
                             std::to_string(xs.size()));
        for (std::size_t k = 0; k < xs.size(); ++k) {
            if (xs[k].rows() != c.m || xs[k].cols() != c.d)
                throw ShapeError("Dataset: X_" + std::to_string(k) + " is " + xs[k].shape() + ", expected " +
                                 shape_str(c.m, c.d));
            if (ys[k].rows() != c.m || ys[k].cols() != c.n)
                throw ShapeError("Dataset: Y_" + std::to_string(k) + " is " + ys[k].shape() + ", expected " +
                                 shape_str(c.m, c.n));
        }
    }

    template <Real U>
    Dataset<U> cast() const {
        Dataset<U> out;
        for (const auto& x : xs) out.xs.push_back(x.template cast<U>());
        for (const auto& y : ys) out.ys.push_back(y.template cast<U>());
        return out;
    }
};

template <Real T = double>
struct ForwardTrace {
    Matrix<T> attn_weights;  ///< M x M softmax map
    Matrix<T> attn;          ///< M x d
    Matrix<T> z;             ///< M x d, Attn + beta X
    Matrix<T> preact;        ///< M x d1, Z W1
    Matrix<T> hidden;        ///< M x d1, act(Z W1)
    Matrix<T> ffn_out;       ///< M x d, act(Z W1) W2
    Matrix<T> output;        ///< M x N
};

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Row-wise softmax with per-row max subtraction.
template <Real T>
Matrix<T> softmax_rows(const Matrix<T>& a) {
    using std::exp;
    Matrix<T> out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        T mx = r[0];
        for (const T& v : r) mx = std::max<T>(mx, v);
        T sum(0);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(i, j) = exp(r[j] - mx);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

namespace detail {
template <Real T>
Matrix<T> softmax_jacobian_unchecked(std::span<const T> s) {
    const std::size_t m = s.size();
    Matrix<T> j(m, m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) j(a, b) = (a == b ? s[a] : T(0)) - s[a] * s[b];
    return j;
}
}  // namespace detail

/// diag(s) - s^T s for a probability row s.
template <Real T>
Matrix<T> softmax_jacobian(std::span<const T> s) {
    using std::abs;
    if (s.empty()) throw std::invalid_argument("softmax_jacobian: empty input");
    T sum(0);
    for (const T& v : s) {
        if (!(v >= T(0) && v <= T(1)))
            throw std::invalid_argument("softmax_jacobian: entry outside [0, 1]: " + fmt17(v));
        sum += v;
    }
    if (!(abs(sum - T(1)) <= T(1e-10)))
        throw std::invalid_argument("softmax_jacobian: entries sum to " + fmt17(sum) + ", not 1");
    return detail::softmax_jacobian_unchecked(s);
}

template <Real T>
Matrix<T> softmax_jacobian(const std::vector<T>& s) {
    return softmax_jacobian(std::span<const T>(s));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// relu: max(0, x). smoothed: E[relu(x + tau g)] = x Phi(x/tau) + tau phi(x/tau).
template <Real T>
T activation_value(const T& x, const Activation& act) {
    if (act.kind == Activation::Kind::relu) return x > T(0) ? x : T(0);
    const T tau(act.tau);
    const T u = x / tau;
    return x * normal_cdf(u) + tau * normal_pdf(u);
}

/// relu: 1 for x > 0 and 0 otherwise (0 at the kink). smoothed: Phi(x/tau).
template <Real T>
T activation_slope(const T& x, const Activation& act) {
    if (act.kind == Activation::Kind::relu) return x > T(0) ? T(1) : T(0);
    return normal_cdf(x / T(act.tau));
}

template <Real T>
Matrix<T> activation_apply(const Matrix<T>& a, const Activation& act) {
    Matrix<T> out = a;
    for (auto& v : out.data()) v = activation_value(v, act);
    return out;
}

template <Real T>
Matrix<T> activation_derivative(const Matrix<T>& a, const Activation& act) {
    Matrix<T> out = a;
    for (auto& v : out.data()) v = activation_slope(v, act);
    return out;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// X Wq Wk^T X^T / sqrt(d_qk).
template <Real T>
Matrix<T> attention_logits(const Matrix<T>& x, const Params<T>& w) {
    using std::sqrt;
    const Matrix<T> q = matmul(x, w.wq);
    const Matrix<T> k = matmul(x, w.wk);
    Matrix<T> logits = matmul_nt(q, k);
    logits *= T(1) / sqrt(T(static_cast<double>(w.wq.cols())));
    return logits;
}

namespace detail {
template <Real T>
void check_input(const Matrix<T>& x, const Params<T>& w, const ModelConfig& cfg) {
    w.validate(cfg);
    if (x.rows() != cfg.m || x.cols() != cfg.d)
        throw ShapeError("input X is " + x.shape() + ", expected " + shape_str(cfg.m, cfg.d));
}
}  // namespace detail

template <Real T>
Matrix<T> attention(const Matrix<T>& x, const Params<T>& w, const ModelConfig& cfg) {
    detail::check_input(x, w, cfg);
    const Matrix<T> s = softmax_rows(attention_logits(x, w));
    return matmul(s, matmul(x, w.wv));
}

template <Real T>
ForwardTrace<T> forward(const Matrix<T>& x, const Params<T>& w, const ModelConfig& cfg) {
    detail::check_input(x, w, cfg);
    const T beta(cfg.beta);
    Matrix<T> s = softmax_rows(attention_logits(x, w));
    Matrix<T> attn = matmul(s, matmul(x, w.wv));
    Matrix<T> z = attn + beta * x;
    Matrix<T> pre = matmul(z, w.w1);
    Matrix<T> hid = activation_apply(pre, cfg.activation);
    Matrix<T> ffn = matmul(hid, w.w2);
    Matrix<T> out = matmul(ffn + beta * z, w.wu);
    return {std::move(s), std::move(attn), std::move(z), std::move(pre),
            std::move(hid), std::move(ffn), std::move(out)};
}

/// 1/2 sum_p ||F(X_p) - Y_p||_F^2.
template <Real T>
T loss(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    data.validate(cfg);
    T total(0);
    for (std::size_t p = 0; p < data.size(); ++p) {
        const Matrix<T> r = forward(data.xs[p], w, cfg).output - data.ys[p];
        for (const T& v : r.data()) total += v * v;
    }
    return total / T(2);
}

/// Outputs stacked vertically over samples, MP x N.
template <Real T>
Matrix<T> stacked_output(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    data.validate(cfg);
    std::vector<Matrix<T>> blocks;
    for (const auto& x : data.xs) blocks.push_back(forward(x, w, cfg).output);
    return vstack(blocks);
}

/// Least-squares form 1/2 ||f_theta(X) - y||_2^2 with f_theta = vec(stacked
/// outputs) and y = vec(stacked targets).
template <Real T>
T vectorized_loss(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    const std::vector<T> f = vec(stacked_output(w, data, cfg));
    const std::vector<T> y = vec(vstack(data.ys));
    T total(0);
    for (std::size_t k = 0; k < f.size(); ++k) total += (f[k] - y[k]) * (f[k] - y[k]);
    return total / T(2);
}

}  // namespace tfconv
