#pragma once

// Closed-form loss gradients for all six weight matrices, a central
// finite-difference oracle, and the gradient-check report that compares them.
//
// With R = F - Y, O = act(Z W1) W2 + beta Z and J(s) = diag(s) - s^T s the
// per-sample contributions are
//
//   dWu = O^T R                      dO = R Wu^T
//   dW2 = act(Z W1)^T dO             dH = act'(Z W1) .* (dO W2^T)
//   dW1 = Z^T dH                     dZ = dH W1^T + beta dO
//   dWv = (S X)^T dZ                 dS = dZ (X Wv)^T
//   D(i,:) = dS(i,:) J(S(i,:))
//   dWq = X^T D X Wk / sqrt(d_qk)    dWk = X^T D^T X Wq / sqrt(d_qk)
//
// For beta = 1 these are the textbook single-layer formulas term for term.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfconv/model.hpp"

namespace tfconv {

template <Real T>
Gradients<T> grad_all(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    using std::sqrt;
    data.validate(cfg);
    w.validate(cfg);
    const T beta(cfg.beta);
    const T inv_sqrt_dqk = T(1) / sqrt(T(static_cast<double>(cfg.d_qk)));
    Gradients<T> g = Gradients<T>::zeros(cfg);

    for (std::size_t p = 0; p < data.size(); ++p) {
        const Matrix<T>& x = data.xs[p];
        const ForwardTrace<T> tr = forward(x, w, cfg);
        const Matrix<T> r = tr.output - data.ys[p];
        const Matrix<T> o = tr.ffn_out + beta * tr.z;

        g.wu += matmul_tn(o, r);
        const Matrix<T> d_o = matmul_nt(r, w.wu);
        g.w2 += matmul_tn(tr.hidden, d_o);
        const Matrix<T> d_h = hadamard(activation_derivative(tr.preact, cfg.activation), matmul_nt(d_o, w.w2));
        g.w1 += matmul_tn(tr.z, d_h);
        const Matrix<T> d_z = matmul_nt(d_h, w.w1) + beta * d_o;

        const Matrix<T> sx = matmul(tr.attn_weights, x);
        g.wv += matmul_tn(sx, d_z);
        const Matrix<T> xwv = matmul(x, w.wv);
        const Matrix<T> d_s = matmul_nt(d_z, xwv);

        Matrix<T> d_logits(cfg.m, cfg.m);
        for (std::size_t i = 0; i < cfg.m; ++i) {
            const Matrix<T> jac = detail::softmax_jacobian_unchecked(tr.attn_weights.row(i));
            const Matrix<T> row = matmul(d_s.row_matrix(i), jac);
            for (std::size_t j = 0; j < cfg.m; ++j) d_logits(i, j) = row(0, j);
        }
        const Matrix<T> xtd = matmul_tn(x, d_logits);           // X^T D
        g.wq += inv_sqrt_dqk * matmul(xtd, matmul(x, w.wk));
        const Matrix<T> dx = matmul(d_logits, x);               // (X^T D^T)^T
        g.wk += inv_sqrt_dqk * matmul_tn(dx, matmul(x, w.wq));
    }
    return g;
}

/// Euclidean norm of the full gradient, sqrt(sum_b ||dW_b||_F^2).
template <Real T>
T gradient_norm(const Gradients<T>& g) {
    using std::sqrt;
    T s(0);
    for (WeightId id : kWeightIds) {
        const T f = frobenius_norm(g[id]);
        s += f * f;
    }
    return sqrt(s);
}

namespace detail {

inline void check_step(double h) {
    if (!(h >= 1e-8 && h <= 1e-3))
        throw std::invalid_argument("finite difference step must lie in [1e-8, 1e-3], got " + std::to_string(h));
}

// Sign pattern of every preactivation across the dataset.
template <Real T>
std::vector<bool> relu_pattern(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    std::vector<bool> pattern;
    for (const auto& x : data.xs) {
        const ForwardTrace<T> tr = forward(x, w, cfg);
        for (const T& v : tr.preact.data()) pattern.push_back(v > T(0));
    }
    return pattern;
}

}  // namespace detail

/// Central differences (f(w + h e_ij) - f(w - h e_ij)) / 2h over every scalar
/// coordinate of every weight matrix of an arbitrary objective.
template <Real T>
Gradients<T> finite_diff_grad(const std::function<T(const Params<T>&)>& objective, const Params<T>& w,
                              double h) {
    detail::check_step(h);
    Gradients<T> g{w};
    Params<T> probe = w;
    const T step(h);
    for (WeightId id : kWeightIds) {
        auto cell = probe[id].data();
        auto out = g[id].data();
        for (std::size_t k = 0; k < cell.size(); ++k) {
            const T orig = cell[k];
            cell[k] = orig + step;
            const T up = objective(probe);
            cell[k] = orig - step;
            const T down = objective(probe);
            cell[k] = orig;
            out[k] = (up - down) / (T(2) * step);
        }
    }
    return g;
}

template <Real T>
Gradients<T> finite_diff_grad(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg,
                              double h = 1e-5) {
    data.validate(cfg);
    w.validate(cfg);
    return finite_diff_grad<T>([&](const Params<T>& q) { return loss(q, data, cfg); }, w, h);
}

struct GradCheckReport {
    std::array<double, 6> rel_error{};       ///< per weight matrix, in kWeightIds order
    std::array<std::size_t, 6> skipped{};    ///< coordinates whose stencil crossed a ReLU kink
    double step = 1e-5;
    double tol = 1e-5;
    ModelConfig config{};
    bool pass = false;

    double worst() const { return *std::max_element(rel_error.begin(), rel_error.end()); }

    /// First matrix exceeding the tolerance, or the worst one when all pass.
    WeightId flagged() const {
        for (WeightId id : kWeightIds)
            if (!(rel_error[static_cast<std::size_t>(id)] <= tol)) return id;
        const auto it = std::max_element(rel_error.begin(), rel_error.end());
        return kWeightIds[static_cast<std::size_t>(it - rel_error.begin())];
    }

    /// Flat key=value report, one line per matrix.
    std::string to_text() const {
        std::ostringstream os;
        os << "config=m:" << config.m << ",d:" << config.d << ",d_qk:" << config.d_qk << ",d1:" << config.d1
           << ",n:" << config.n << ",p:" << config.p << ",beta:" << fmt17(config.beta)
           << ",activation:" << config.activation.name() << "\n";
        os << "step=" << fmt17(step) << "\n";
        os << "tol=" << fmt17(tol) << "\n";
        for (WeightId id : kWeightIds) {
            const auto k = static_cast<std::size_t>(id);
            os << weight_name(id) << "=" << fmt17(rel_error[k]) << " skipped=" << skipped[k] << "\n";
        }
        os << "pass=" << (pass ? "true" : "false") << "\n";
        return os.str();
    }
};

/// ||a - n||_F / max(1e-12, ||a||_F + ||n||_F).
inline double relative_error(const Matrix<double>& analytic, const Matrix<double>& numeric) {
    const double num = frobenius_norm(Matrix<double>(analytic - numeric));
    return num / std::max(1e-12, frobenius_norm(analytic) + frobenius_norm(numeric));
}

/// Compares an analytic gradient routine (grad_all by default) with central
/// differences. For ReLU, coordinates whose +-h stencil flips the sign of any
/// preactivation are excluded from both sides and counted in `skipped`.
template <Real T>
GradCheckReport grad_check(
    const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg, double tol, double h = 1e-5,
    const std::function<Gradients<T>(const Params<T>&, const Dataset<T>&, const ModelConfig&)>& analytic_fn = {}) {
    if (!(tol > 0.0)) throw std::invalid_argument("grad_check: tol must be > 0");
    detail::check_step(h);
    data.validate(cfg);
    w.validate(cfg);

    const Gradients<T> analytic = analytic_fn ? analytic_fn(w, data, cfg) : grad_all(w, data, cfg);
    const bool relu = cfg.activation.kind == Activation::Kind::relu;
    const std::vector<bool> base = relu ? detail::relu_pattern(w, data, cfg) : std::vector<bool>{};

    GradCheckReport rep;
    rep.step = h;
    rep.tol = tol;
    rep.config = cfg;

    Params<T> probe = w;
    const T step(h);
    for (WeightId id : kWeightIds) {
        const auto slot = static_cast<std::size_t>(id);
        auto cell = probe[id].data();
        std::vector<double> a_kept, n_kept;
        for (std::size_t k = 0; k < cell.size(); ++k) {
            const T orig = cell[k];
            cell[k] = orig + step;
            const T up = loss(probe, data, cfg);
            const bool crossed_up = relu && detail::relu_pattern(probe, data, cfg) != base;
            cell[k] = orig - step;
            const T down = loss(probe, data, cfg);
            const bool crossed_down = relu && detail::relu_pattern(probe, data, cfg) != base;
            cell[k] = orig;
            if (crossed_up || crossed_down) {
                ++rep.skipped[slot];
                continue;
            }
            n_kept.push_back(to_double((up - down) / (T(2) * step)));
            a_kept.push_back(to_double(analytic[id].data()[k]));
        }
        if (a_kept.empty()) {
            rep.rel_error[slot] = 0.0;
            continue;
        }
        const Matrix<double> a(1, a_kept.size(), a_kept);
        const Matrix<double> n(1, n_kept.size(), n_kept);
        rep.rel_error[slot] = relative_error(a, n);
    }
    rep.pass = std::all_of(rep.rel_error.begin(), rep.rel_error.end(), [&](double e) { return e <= tol; });
    return rep;
}

}  // namespace tfconv
