#pragma once

// Constants and diagnostics of the linear-convergence analysis for gradient
// descent on the single-layer transformer.
//
// Everything is evaluated at the initialization theta^(0):
//   alpha  = sigma_min^2(Wu) sigma_min^2(phi_P) / 16, the per-step contraction
//            constant, Phi(t+1) <= (1 - mu alpha) Phi(t);
//   C      = the smoothness constant (explicit form below), mu <= min(1/C, 1/alpha);
//   C1, C2 = constants of the initialization requirement;
//   C_F    = max of five spectral candidates entering C;
//   C_W    = parameter-drift constant, ||theta^(k) - theta*|| <=
//            (1 - mu alpha)^(k/2) (C_W / alpha) Phi^(1/2)(theta^(0)).
// Norms are spectral unless written ||.||_F; sigma_min of a non-square matrix
// is its min(rows, cols)-th singular value.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfconv/grad.hpp"
#include "tfconv/model.hpp"
#include "tfconv/quadrature.hpp"
#include "tfconv/random.hpp"
#include "tfconv/trace.hpp"

namespace tfconv {

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Z^(0)(X) = softmax(X Wq Wk^T X^T / sqrt(d_qk)) X Wv + beta X.
template <Real T>
Matrix<T> z0(const Matrix<T>& x, const Params<T>& w, const ModelConfig& cfg) {
    return attention(x, w, cfg) + T(cfg.beta) * x;
}

/// phi_P = [act(Z(X_1) W1)^T ... act(Z(X_P) W1)^T], d1 x MP.
template <Real T>
Matrix<T> phi_p(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    data.validate(cfg);
    std::vector<Matrix<T>> blocks;
    for (const auto& x : data.xs) blocks.push_back(transpose(forward(x, w, cfg).hidden));
    return hstack(blocks);
}

template <Real T>
T alpha(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    const T su = min_singular_value(w.wu);
    const T sp = min_singular_value(phi_p(w, data, cfg));
    return su * su * sp * sp / T(16);
}

/// min_p sigma_min^2(Z(X_p)) / max_p ||Z(X_p)||.
template <Real T>
T conditioning_ratio(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    data.validate(cfg);
    T num = std::numeric_limits<T>::max();
    T den(0);
    for (const auto& x : data.xs) {
        const auto s = singular_values(z0(x, w, cfg));
        num = std::min<T>(num, s.back() * s.back());
        den = std::max<T>(den, s.front());
    }
    return num / den;
}

/// mu_1 = E[act(g) g] for g ~ N(0, 1).
inline double hermite_mu1(const std::function<double(double)>& act, std::size_t nodes = 64) {
    if (nodes < 64) throw std::invalid_argument("hermite_mu1: use at least 64 nodes");
    return gaussian_expectation([&](double g) { return act(g) * g; }, nodes);
}

inline double hermite_mu1(const Activation& act, std::size_t nodes = 64) {
    return hermite_mu1([&](double g) { return activation_value(g, act); }, nodes);
}

/// Spectral quantities of theta^(0) and the data that every constant uses.
template <Real T>
struct SpectralSummary {
    std::array<T, 6> norm{};       ///< ||W_b||, kWeightIds order
    std::array<T, 6> sigma_min{};  ///< sigma_min(W_b)
    T lambda_bar{};                ///< max_b ||W_b||
    T lambda_underbar{};           ///< min_b sigma_min(W_b)
    T x_norm{};                    ///< max_p ||X_p||
    T x_row{};                     ///< max_{i,p} ||X_p(i,:)||_2
    T x_row_spec{};                ///< max_{i,p} ||X_p(i,:)||_2 ||X_p||^2
    T z_norm{};                    ///< max_p ||Z(X_p)||
    T z_sigma_min{};               ///< min_p sigma_min(Z(X_p))
    std::vector<T> z_norms;        ///< per sample
    std::vector<T> z_sigma_mins;   ///< per sample
    T hidden_sigma_min{};          ///< min_p sigma_min(act(Z(X_p) W1))
    T phi_sigma_min{};             ///< sigma_min(phi_P)
    T wu_sigma_min{};
    T alpha{};
    T phi0{};                      ///< Phi(theta^(0))

    T n(WeightId id) const { return norm[static_cast<std::size_t>(id)]; }
    T s(WeightId id) const { return sigma_min[static_cast<std::size_t>(id)]; }
};

template <Real T>
SpectralSummary<T> spectral_summary(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    data.validate(cfg);
    w.validate(cfg);
    SpectralSummary<T> s;
    for (WeightId id : kWeightIds) {
        const auto sv = singular_values(w[id]);
        s.norm[static_cast<std::size_t>(id)] = sv.front();
        s.sigma_min[static_cast<std::size_t>(id)] = sv.back();
    }
    s.lambda_bar = *std::max_element(s.norm.begin(), s.norm.end());
    s.lambda_underbar = *std::min_element(s.sigma_min.begin(), s.sigma_min.end());
    s.z_sigma_min = std::numeric_limits<T>::max();
    s.hidden_sigma_min = std::numeric_limits<T>::max();
    std::vector<Matrix<T>> blocks;
    for (const auto& x : data.xs) {
        const T xn = spectral_norm(x);
        s.x_norm = std::max<T>(s.x_norm, xn);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const T rn = row_norm(x, i);
            s.x_row = std::max<T>(s.x_row, rn);
            s.x_row_spec = std::max<T>(s.x_row_spec, rn * xn * xn);
        }
        const ForwardTrace<T> tr = forward(x, w, cfg);
        const auto zsv = singular_values(tr.z);
        s.z_norms.push_back(zsv.front());
        s.z_sigma_mins.push_back(zsv.back());
        s.z_norm = std::max<T>(s.z_norm, zsv.front());
        s.z_sigma_min = std::min<T>(s.z_sigma_min, zsv.back());
        s.hidden_sigma_min = std::min<T>(s.hidden_sigma_min, min_singular_value(tr.hidden));
        blocks.push_back(transpose(tr.hidden));
    }
    s.phi_sigma_min = min_singular_value(hstack(blocks));
    s.wu_sigma_min = s.s(WeightId::wu);
    s.alpha = s.wu_sigma_min * s.wu_sigma_min * s.phi_sigma_min * s.phi_sigma_min / T(16);
    s.phi0 = loss(w, data, cfg);
    return s;
}

// ---------------------------------------------------------------------------
// Explicit constants
// ---------------------------------------------------------------------------

/// The five candidates whose maximum is C_F.
template <Real T>
std::array<T, 5> cf_candidates(const SpectralSummary<T>& s, const ModelConfig& cfg) {
    using std::sqrt;
    const T M(static_cast<double>(cfg.m)), P(static_cast<double>(cfg.p)), dqk(static_cast<double>(cfg.d_qk));
    const T n1 = s.n(WeightId::w1), n2 = s.n(WeightId::w2), nu = s.n(WeightId::wu);
    const T nv = s.n(WeightId::wv), nq = s.n(WeightId::wq), nk = s.n(WeightId::wk);
    const T zn2 = s.z_norm * s.z_norm;
    const T xn = s.x_norm;
    const T ffn = T(729) * n1 * n1 * n2 * n2 * nu * nu / T(16) + T(9) * zn2;
    const T attn = T(243) * M * sqrt(P) * xn * xn * xn * s.x_row_spec * nv * nv / (T(4) * dqk);
    return {
        T(729) * n2 * n2 * nu * nu * zn2 / T(16),
        ffn * attn * nq * nq,
        ffn * attn * nk * nk,
        T(27) * M * sqrt(P) * xn * xn * (zn2 + T(81) * n1 * n1 * n2 * n2 * nu * nu / T(16)),
        T(9) * zn2,
    };
}

/// Smoothness constant C of the step-size condition, fully explicit.
template <Real T>
T c_detailed(const SpectralSummary<T>& s, const ModelConfig& cfg) {
    using std::sqrt;
    const auto cand = cf_candidates(s, cfg);
    const T cf = *std::max_element(cand.begin(), cand.end());
    const T M(static_cast<double>(cfg.m)), P(static_cast<double>(cfg.p)), dqk(static_cast<double>(cfg.d_qk));
    const T n1 = s.n(WeightId::w1), n2 = s.n(WeightId::w2), nu = s.n(WeightId::wu);
    const T nv = s.n(WeightId::wv), nq = s.n(WeightId::wq), nk = s.n(WeightId::wk);
    const T zn2 = s.z_norm * s.z_norm;
    const T xn2 = s.x_norm * s.x_norm;
    const T xn4 = xn2 * xn2, xn6 = xn4 * xn2;
    const T r2 = s.x_row * s.x_row;
    const T w12 = n1 * n1 * n2 * n2;
    const T c_sq = T(2187) * P * cf / T(32) * zn2 * nu * nu * (n1 * n1 + n2 * n2) +
                   P * cf * zn2 * (T(2187) / T(16) * w12 + T(27)) +
                   P * cf / dqk * xn6 * nu * nu * nq * nq * nk * nk * (T(2187) / T(16) + T(177147) / T(256) * w12) +
                   T(2187) * P * cf * M / T(4) * r2 * xn4 * nu * nu * nv * nv * (nk * nk + nq * nq) +
                   T(177147) * P * cf * M / T(64) * r2 * xn4 * w12 * nu * nu * nv * nv * (nk * nk + nq * nq);
    return sqrt(c_sq);
}

/// alpha (1 - sqrt(1 - mu alpha)), evaluated without cancellation.
template <Real T>
T drift_factor(const T& alpha_v, const T& mu) {
    using std::sqrt;
    const T x = mu * alpha_v;
    if (!(x <= T(1))) return T(0) / T(0);
    return alpha_v * x / (T(1) + sqrt(T(1) - x));
}

template <Real T>
T c1_constant(const SpectralSummary<T>& s, const ModelConfig& cfg, const T& mu) {
    using std::sqrt;
    const T g = drift_factor(s.alpha, mu);
    const T M(static_cast<double>(cfg.m)), P(static_cast<double>(cfg.p)), dqk(static_cast<double>(cfg.d_qk));
    const T n1 = s.n(WeightId::w1), n2 = s.n(WeightId::w2), nu = s.n(WeightId::wu);
    const T nv = s.n(WeightId::wv), nq = s.n(WeightId::wq), nk = s.n(WeightId::wk);
    const T xn = s.x_norm;
    const T ffn = T(1) + n1 * n2;
    return T(2187) * M * sqrt(T(2) * P) * xn * xn * xn * s.x_row_spec * nu * nv * nv * (nq * nq + nk * nk) /
               (T(32) * sqrt(dqk) * g) * ffn +
           T(27) * sqrt(T(2)) * M * sqrt(P) * xn * xn * nu / (T(8) * g) * ffn;
}

template <Real T>
T c2_constant(const SpectralSummary<T>& s, const ModelConfig& cfg) {
    using std::sqrt;
    const T M(static_cast<double>(cfg.m)), P(static_cast<double>(cfg.p)), dqk(static_cast<double>(cfg.d_qk));
    const T n1 = s.n(WeightId::w1), n2 = s.n(WeightId::w2), nu = s.n(WeightId::wu);
    const T nv = s.n(WeightId::wv), nq = s.n(WeightId::wq), nk = s.n(WeightId::wk);
    const T s1 = s.s(WeightId::w1), su = s.s(WeightId::wu), sv = s.s(WeightId::wv);
    const T sq = s.s(WeightId::wq), sk = s.s(WeightId::wk);
    const T zn2 = s.z_norm * s.z_norm;
    const T xn = s.x_norm;
    const T attn = T(2187) * M * sqrt(P) * xn * xn * xn * s.x_row_spec * nv * nv / (T(16) * dqk);
    return T(6561) * n2 * n2 * nu * nu * zn2 * s1 * s1 / T(64) + T(81) * zn2 * su * su / T(4) +
           (T(9) * zn2 + T(729) * n1 * n1 * n2 * n2 * nu * nu / T(16)) *
               (T(27) * M * sqrt(P) * xn * xn * sv * sv / T(4) + attn * nq * nq * sk * sk + attn * nk * nk * sq * sq);
}

template <Real T>
T cw_constant(const SpectralSummary<T>& s, const ModelConfig& cfg) {
    using std::sqrt;
    const T M(static_cast<double>(cfg.m)), P(static_cast<double>(cfg.p));
    const T n1 = s.n(WeightId::w1), n2 = s.n(WeightId::w2), nu = s.n(WeightId::wu);
    const T nv = s.n(WeightId::wv), nq = s.n(WeightId::wq), nk = s.n(WeightId::wk);
    const T k = T(27) * sqrt(T(2) * P) / T(8);
    return k * s.z_norm * nu * (n1 + n2) + k * (T(1) + n1 * n2) * (s.z_norm + sqrt(M) * s.x_norm * nu) +
           T(243) * sqrt(T(2) * M * P) / T(16) * s.x_row_spec * (T(1) + n1 * n2) * nu * nv * (nk + nq);
}

/// Simplified smoothness constant C_tilde lambda_bar^5 max||X||^3 max||Z|| with
/// the unspecified universal factor C_tilde.
template <Real T>
T c_main(const SpectralSummary<T>& s, const T& c_tilde = T(1)) {
    const T l = s.lambda_bar;
    const T x = s.x_norm;
    return c_tilde * l * l * l * l * l * x * x * x * s.z_norm;
}

inline constexpr std::array<const char*, 6> kInitBoundNames{
    "w1_w2_drift", "wu_wv_drift", "wq_wk_drift", "z_sigma_min", "two_sqrt_c2", "hidden_sigma_min"};

template <Real T>
struct InitVerdict {
    bool met = false;
    T lhs{};                   ///< Phi^(1/2)(theta^(0))
    T bound{};                 ///< min over `bounds`
    std::size_t binding = 0;   ///< index of the smallest bound
    std::array<T, 6> bounds{};
    T mu{};

    std::string binding_name() const { return kInitBoundNames[binding]; }
};

/// Evaluates the six initialization bounds at step size mu.
template <Real T>
std::array<T, 6> init_bounds(const SpectralSummary<T>& s, const ModelConfig& cfg, const T& mu) {
    using std::sqrt;
    const T M(static_cast<double>(cfg.m)), P(static_cast<double>(cfg.p));
    const T n1 = s.n(WeightId::w1), n2 = s.n(WeightId::w2), nu = s.n(WeightId::wu);
    const T nv = s.n(WeightId::wv), nq = s.n(WeightId::wq), nk = s.n(WeightId::wk);
    const T s1 = s.s(WeightId::w1), s2 = s.s(WeightId::w2), su = s.s(WeightId::wu);
    const T sv = s.s(WeightId::wv), sq = s.s(WeightId::wq), sk = s.s(WeightId::wk);
    const T g = drift_factor(s.alpha, mu);
    const T ffn = T(1) + n1 * n2;
    const T c1 = c1_constant(s, cfg, mu);
    const T c2 = c2_constant(s, cfg);

    std::array<T, 6> b;
    b[0] = T(2) * sqrt(T(2)) * g / (T(27) * sqrt(P) * s.z_norm) * std::min<T>(s1 / (n2 * nu), s2 / (n1 * nu));
    b[1] = T(2) * sqrt(T(2)) * g / (T(27) * sqrt(P) * ffn) *
           std::min<T>(su / s.z_norm, sv / (sqrt(M) * s.x_norm * nu));
    b[2] = T(4) * sqrt(T(2)) * g / (T(243) * sqrt(M * P) * s.x_row_spec * ffn * nu * nv) *
           std::min<T>(sq / nk, sk / nq);
    b[3] = s.z_sigma_min / (T(2) * c1);
    b[4] = T(2) * sqrt(c2);
    b[5] = std::min<T>(s.hidden_sigma_min, s.phi_sigma_min) /
           (T(3) * c1 * P * n1 + T(27) * sqrt(T(2)) * P * sqrt(P) / (T(4) * g) * s.z_norm * s.z_norm * n2 * nu);
    for (auto& v : b)
        if (!(v == v)) v = T(0);  // 0/0 from a degenerate factor: the bound cannot be met
    return b;
}

template <Real T>
InitVerdict<T> init_requirement_check(const SpectralSummary<T>& s, const ModelConfig& cfg, const T& mu) {
    using std::sqrt;
    InitVerdict<T> v;
    v.mu = mu;
    v.bounds = init_bounds(s, cfg, mu);
    v.binding = static_cast<std::size_t>(std::min_element(v.bounds.begin(), v.bounds.end()) - v.bounds.begin());
    v.bound = v.bounds[v.binding];
    v.lhs = sqrt(s.phi0);
    v.met = v.lhs <= v.bound;
    return v;
}

template <Real T>
InitVerdict<T> init_requirement_check(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg,
                                      const T& mu) {
    return init_requirement_check(spectral_summary(w, data, cfg), cfg, mu);
}

template <Real T = double>
struct TheoryReport {
    T alpha{};
    T c_tilde{1};
    T c_main{};
    T c_detailed{};
    T c1{}, c2{}, c_f{}, c_w{};
    std::array<T, 5> c_f_candidates{};
    T lambda_bar{};
    T lambda_underbar{};
    T mu_theory{};
    T conditioning_ratio{};
    T phi0{};
    T sigma_min_phi_p{};
    T sigma_min_wu{};
    std::vector<T> sigma_min_z;  ///< per sample
    std::vector<T> norm_z;       ///< per sample
    InitVerdict<T> init{};
    ModelConfig config{};
};

/// mu_theory = min(1/C, 1/alpha) with C the explicit smoothness constant.
template <Real T>
TheoryReport<T> constants(const Params<T>& w, const Dataset<T>& data, const ModelConfig& cfg) {
    const SpectralSummary<T> s = spectral_summary(w, data, cfg);
    TheoryReport<T> r;
    r.config = cfg;
    r.alpha = s.alpha;
    r.c_main = c_main(s, r.c_tilde);
    r.c_detailed = c_detailed(s, cfg);
    r.c_f_candidates = cf_candidates(s, cfg);
    r.c_f = *std::max_element(r.c_f_candidates.begin(), r.c_f_candidates.end());
    r.c_w = cw_constant(s, cfg);
    r.lambda_bar = s.lambda_bar;
    r.lambda_underbar = s.lambda_underbar;
    const T inv_c = T(1) / r.c_detailed;
    const T inv_a = T(1) / r.alpha;
    r.mu_theory = std::min<T>(inv_c, inv_a);
    r.c1 = c1_constant(s, cfg, r.mu_theory);
    r.c2 = c2_constant(s, cfg);
    r.conditioning_ratio = s.z_sigma_min * s.z_sigma_min / s.z_norm;
    r.phi0 = s.phi0;
    r.sigma_min_phi_p = s.phi_sigma_min;
    r.sigma_min_wu = s.wu_sigma_min;
    r.sigma_min_z = s.z_sigma_mins;
    r.norm_z = s.z_norms;
    r.init = init_requirement_check(s, cfg, r.mu_theory);
    return r;
}

// ---------------------------------------------------------------------------
// Lower bound on alpha for Gaussian initialization
// ---------------------------------------------------------------------------

struct GaussianScales {
    double gamma1 = 1.0;  ///< std of W1 entries
    double gamma_u = 1.0; ///< std of Wu entries
};

/// (d1 g1^2 gU^2 mu1^2 / 128) (sqrt(N)/2 - sqrt(d))^2 (sqrt(d1)/2 - sqrt(d))^2
/// min_p sigma_min^2(Z(X_p)). Empty when d1/4 >= d and N/4 >= d do not hold.
template <Real T>
std::optional<T> alpha_lower_bound(const ModelConfig& cfg, const GaussianScales& gammas, const Dataset<T>& data,
                                   const Params<T>& w) {
    using std::sqrt;
    if (!(4 * cfg.d <= cfg.d1 && 4 * cfg.d <= cfg.n)) return std::nullopt;
    data.validate(cfg);
    T zmin = std::numeric_limits<T>::max();
    for (const auto& x : data.xs) zmin = std::min<T>(zmin, min_singular_value(z0(x, w, cfg)));
    const T mu1(hermite_mu1(cfg.activation));
    const T d(static_cast<double>(cfg.d)), d1(static_cast<double>(cfg.d1)), n(static_cast<double>(cfg.n));
    const T g1(gammas.gamma1), gu(gammas.gamma_u);
    const T a = sqrt(n) / T(2) - sqrt(d);
    const T b = sqrt(d1) / T(2) - sqrt(d);
    return d1 * g1 * g1 * gu * gu * mu1 * mu1 / T(128) * a * a * b * b * zmin * zmin;
}

struct SvBoundsResult {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double lower = 0.0;          ///< gamma (sqrt(d1)/2 - sqrt(d2))
    double upper = 0.0;          ///< gamma (3 sqrt(d1)/2 + sqrt(d2))
    double failure_bound = 0.0;  ///< 2 exp(-d1/8)
    double rate() const { return trials ? static_cast<double>(violations) / static_cast<double>(trials) : 0.0; }
};

/// Monte Carlo check of the singular-value sandwich for d1 x d2 Gaussian
/// matrices with entry std gamma.
inline SvBoundsResult gaussian_sv_bounds_check(std::size_t d1, std::size_t d2, double gamma, std::size_t trials,
                                               std::uint64_t seed = 0) {
    if (!(d2 >= 1 && 4 * d2 < d1)) throw std::invalid_argument("gaussian_sv_bounds_check: requires d1/4 > d2");
    if (!(gamma > 0.0)) throw std::invalid_argument("gaussian_sv_bounds_check: gamma must be > 0");
    SvBoundsResult r;
    r.trials = trials;
    r.lower = gamma * (std::sqrt(double(d1)) / 2.0 - std::sqrt(double(d2)));
    r.upper = gamma * (1.5 * std::sqrt(double(d1)) + std::sqrt(double(d2)));
    r.failure_bound = 2.0 * std::exp(-double(d1) / 8.0);
    Rng rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto sv = singular_values(gaussian_matrix<double>(rng, d1, d2, gamma));
        if (sv.back() < r.lower || sv.front() > r.upper) ++r.violations;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Rank collapse
// ---------------------------------------------------------------------------

struct SpectralProbe {
    std::string label;
    double scale = 1.0;
    std::vector<double> singular_values;
    std::size_t rank = 0;  ///< count of sigma_i > 1e-10 sigma_1
    double ratio = 0.0;    ///< sigma_2 / sigma_1 (0 when there is one value)
};

template <Real T>
SpectralProbe make_probe(std::string label, double scale, const Matrix<T>& a) {
    SpectralProbe p;
    p.label = std::move(label);
    p.scale = scale;
    for (const T& v : singular_values(a)) p.singular_values.push_back(to_double(v));
    const double s1 = p.singular_values.front();
    for (double v : p.singular_values)
        if (v > 1e-10 * s1) ++p.rank;
    p.ratio = p.singular_values.size() > 1 && s1 > 0 ? p.singular_values[1] / s1 : 0.0;
    return p;
}

/// For each logit scale s (attention logits multiplied by s; s = 0 is exactly
/// uniform attention) probes Attn(X), Z with the residual (Attn + X) and Z
/// without it (Attn).
template <Real T>
std::vector<SpectralProbe> rank_collapse_probe(const Matrix<T>& x, const Params<T>& w, const ModelConfig& cfg,
                                               const std::vector<double>& scales) {
    std::vector<SpectralProbe> out;
    for (double sc : scales) {
        Params<T> scaled = w;
        scaled.wq *= T(sc);
        const Matrix<T> attn = attention(x, scaled, cfg);
        out.push_back(make_probe("attn", sc, attn));
        out.push_back(make_probe("z_residual", sc, Matrix<T>(attn + x)));
        out.push_back(make_probe("z_no_residual", sc, attn));
    }
    return out;
}

inline void write_probes_csv(std::ostream& os, const std::vector<SpectralProbe>& probes) {
    os << "label,scale,sigma1,sigma2,ratio,rank\n";
    for (const auto& p : probes) {
        const double s1 = p.singular_values.front();
        const double s2 = p.singular_values.size() > 1 ? p.singular_values[1] : 0.0;
        os << p.label << "," << fmt17(p.scale) << "," << fmt17(s1) << "," << fmt17(s2) << "," << fmt17(p.ratio)
           << "," << p.rank << "\n";
    }
}

// ---------------------------------------------------------------------------
// Certificate
// ---------------------------------------------------------------------------

template <Real T>
struct Certificate {
    std::vector<bool> contraction_ok;  ///< per consecutive record pair
    std::vector<bool> theta_ok;        ///< per record
    std::size_t contraction_violations = 0;
    std::size_t theta_violations = 0;
    T worst_ratio{};                   ///< max Phi(t+k) / ((1 - mu alpha)^k Phi(t))

    bool certified() const { return contraction_violations == 0 && theta_violations == 0; }
    std::string summary() const {
        std::ostringstream os;
        os << "steps_checked=" << contraction_ok.size() << " contraction_violations=" << contraction_violations
           << " theta_violations=" << theta_violations << " worst_ratio=" << fmt17(worst_ratio)
           << " certified=" << (certified() ? "true" : "false");
        return os.str();
    }
};

/// Checks Phi(t+k) <= (1 - mu alpha)^k Phi(t) between consecutive records and
/// ||theta^(t) - theta^(final)|| <= (1 - mu alpha)^(t/2) (C_W / alpha) Phi^(1/2)(theta^(0)).
/// The trace must have been produced with mu = report.mu_theory.
template <Real T>
Certificate<T> convergence_certificate(const LossTrace<T>& trace, const TheoryReport<T>& report) {
    using std::abs;
    using std::pow;
    using std::sqrt;
    if (trace.empty()) throw std::invalid_argument("convergence_certificate: empty trace");
    if (!(abs(trace.mu - report.mu_theory) <= T(1e-12) * report.mu_theory))
        throw std::invalid_argument("convergence_certificate: trace was run with mu=" + fmt17(trace.mu) +
                                    " but the certificate needs mu_theory=" + fmt17(report.mu_theory));
    Certificate<T> c;
    const T q = T(1) - report.mu_theory * report.alpha;
    for (std::size_t k = 0; k + 1 < trace.records.size(); ++k) {
        const auto& a = trace.records[k];
        const auto& b = trace.records[k + 1];
        const T factor = pow(q, T(static_cast<double>(b.t - a.t)));
        const bool ok = b.phi <= factor * a.phi;
        if (a.phi > T(0)) c.worst_ratio = std::max<T>(c.worst_ratio, b.phi / (factor * a.phi));
        c.contraction_ok.push_back(ok);
        if (!ok) ++c.contraction_violations;
    }
    const T root_phi0 = sqrt(trace.records.front().phi);
    const T scale = report.c_w / report.alpha * root_phi0;
    for (const auto& r : trace.records) {
        const T bound = pow(q, T(static_cast<double>(r.t)) / T(2)) * scale;
        const bool ok = r.theta_dist <= bound || r.theta_dist == T(0);
        c.theta_ok.push_back(ok);
        if (!ok) ++c.theta_violations;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Report document
// ---------------------------------------------------------------------------

namespace detail {

template <Real T>
std::string json_number(const T& v) {
    const std::string s = fmt17(v);
    return is_finite(v) ? s : "\"" + s + "\"";
}

template <Real T>
std::string json_array(const std::vector<T>& v) {
    std::string s = "[";
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + json_number(v[k]);
    return s + "]";
}

}  // namespace detail

/// JSON document with every constant at 17 significant digits. Non-finite
/// values are written as the strings "inf", "-inf" or "nan".
template <Real T>
void write_theory_json(std::ostream& os, const TheoryReport<T>& r, std::uint64_t seed) {
    using detail::json_number;
    const ModelConfig& c = r.config;
    os << "{\n";
    os << "  \"seed\": " << seed << ",\n";
    os << "  \"config\": {\"m\": " << c.m << ", \"d\": " << c.d << ", \"d_qk\": " << c.d_qk << ", \"d1\": " << c.d1
       << ", \"n\": " << c.n << ", \"p\": " << c.p << ", \"beta\": " << fmt17(c.beta) << ", \"activation\": \""
       << c.activation.name() << "\"},\n";
    os << "  \"alpha\": " << json_number(r.alpha) << ",\n";
    os << "  \"c_tilde\": " << json_number(r.c_tilde) << ",\n";
    os << "  \"c_tilde_note\": \"C_tilde=1 (universal constant left unspecified; fixed to 1)\",\n";
    os << "  \"c_main\": " << json_number(r.c_main) << ",\n";
    os << "  \"c_detailed\": " << json_number(r.c_detailed) << ",\n";
    os << "  \"c1\": " << json_number(r.c1) << ",\n";
    os << "  \"c2\": " << json_number(r.c2) << ",\n";
    os << "  \"c_f\": " << json_number(r.c_f) << ",\n";
    os << "  \"c_f_candidates\": "
       << detail::json_array(std::vector<T>(r.c_f_candidates.begin(), r.c_f_candidates.end())) << ",\n";
    os << "  \"c_w\": " << json_number(r.c_w) << ",\n";
    os << "  \"lambda_bar\": " << json_number(r.lambda_bar) << ",\n";
    os << "  \"lambda_underbar\": " << json_number(r.lambda_underbar) << ",\n";
    os << "  \"mu_theory\": " << json_number(r.mu_theory) << ",\n";
    os << "  \"conditioning_ratio\": " << json_number(r.conditioning_ratio) << ",\n";
    os << "  \"phi0\": " << json_number(r.phi0) << ",\n";
    os << "  \"sigma_min_phi_p\": " << json_number(r.sigma_min_phi_p) << ",\n";
    os << "  \"sigma_min_wu\": " << json_number(r.sigma_min_wu) << ",\n";
    os << "  \"sigma_min_z\": " << detail::json_array(r.sigma_min_z) << ",\n";
    os << "  \"norm_z\": " << detail::json_array(r.norm_z) << ",\n";
    os << "  \"init_requirement\": {\n";
    os << "    \"met\": " << (r.init.met ? "true" : "false") << ",\n";
    os << "    \"lhs\": " << json_number(r.init.lhs) << ",\n";
    os << "    \"bound\": " << json_number(r.init.bound) << ",\n";
    os << "    \"binding\": \"" << r.init.binding_name() << "\",\n";
    os << "    \"mu\": " << json_number(r.init.mu) << ",\n";
    os << "    \"bounds\": {";
    for (std::size_t k = 0; k < r.init.bounds.size(); ++k)
        os << (k ? ", " : "") << "\"" << kInitBoundNames[k] << "\": " << json_number(r.init.bounds[k]);
    os << "}\n  }\n}\n";
}

}  // namespace tfconv
