#pragma once

// Full-batch gradient descent W_b <- W_b - mu dW_b on all six matrices at
// once, with loss-trace recording.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfconv/grad.hpp"
#include "tfconv/model.hpp"
#include "tfconv/random.hpp"
#include "tfconv/theory.hpp"
#include "tfconv/trace.hpp"

namespace tfconv {

struct InitScheme {
    enum class Kind { gaussian_per_matrix, lecun, explicit_params };

    Kind kind = Kind::lecun;
    std::array<double, 6> gammas{1, 1, 1, 1, 1, 1};  ///< entry std per matrix, kWeightIds order
    std::optional<Params<double>> params;            ///< used by explicit_params
    bool uniform_attention = false;                  ///< zero Wq and Wk after drawing

    static InitScheme gaussian(const std::array<double, 6>& g) {
        InitScheme s;
        s.kind = Kind::gaussian_per_matrix;
        s.gammas = g;
        return s;
    }
    static InitScheme lecun() { return InitScheme{}; }
    static InitScheme from_params(Params<double> p) {
        InitScheme s;
        s.kind = Kind::explicit_params;
        s.params = std::move(p);
        return s;
    }

    void validate(const ModelConfig& cfg) const {
        if (kind == Kind::gaussian_per_matrix)
            for (double g : gammas)
                if (!(g > 0.0 && std::isfinite(g)))
                    throw std::invalid_argument("InitScheme: every gamma must be finite and > 0");
        if (kind == Kind::explicit_params) {
            if (!params) throw std::invalid_argument("InitScheme: explicit init without parameters");
            params->validate(cfg);
        }
    }
};

/// Draws theta^(0). Matrices are drawn in the order W1, W2, Wq, Wk, Wv, Wu.
/// LeCun scaling uses std 1/sqrt(fan_in) for each matrix.
template <Real T = double>
Params<T> init_params(const InitScheme& scheme, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    scheme.validate(cfg);
    Params<double> w = Params<double>::zeros(cfg);
    if (scheme.kind == InitScheme::Kind::explicit_params) {
        w = *scheme.params;
    } else {
        std::array<double, 6> g = scheme.gammas;
        if (scheme.kind == InitScheme::Kind::lecun) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.d));
            g = {sd, 1.0 / std::sqrt(static_cast<double>(cfg.d1)), sd, sd, sd, sd};
        }
        for (WeightId id : kWeightIds) {
            Matrix<double>& m = w[id];
            m = gaussian_matrix<double>(rng, m.rows(), m.cols(), g[static_cast<std::size_t>(id)]);
        }
    }
    if (scheme.uniform_attention) {
        w.wq = Matrix<double>(cfg.d, cfg.d_qk);
        w.wk = Matrix<double>(cfg.d, cfg.d_qk);
    }
    return w.template cast<T>();
}

struct LearningRate {
    enum class Kind { value, theory, practical };
    Kind kind = Kind::value;
    double value = 1e-3;

    static LearningRate fixed(double mu) { return {Kind::value, mu}; }
    static LearningRate theory() { return {Kind::theory, 0.0}; }
    static LearningRate practical() { return {Kind::practical, 0.0}; }

    std::string describe() const {
        switch (kind) {
            case Kind::theory: return "theory";
            case Kind::practical: return "practical";
            default: return fmt17(value);
        }
    }
};

struct TrainSpec {
    std::size_t steps = 2000;
    LearningRate mu{};
    std::uint64_t seed = 0;
    InitScheme init{};
    std::size_t record_every = 1;

    void validate() const {
        if (steps < 1) throw std::invalid_argument("TrainSpec: steps must be >= 1");
        if (record_every < 1) throw std::invalid_argument("TrainSpec: record_every must be >= 1");
        if (mu.kind == LearningRate::Kind::value && !(mu.value > 0.0 && std::isfinite(mu.value)))
            throw std::invalid_argument("TrainSpec: explicit mu must be finite and > 0");
    }
};

template <Real T>
Params<T> gd_step(const Params<T>& w, const Gradients<T>& g, const T& mu) {
    if (!(mu > T(0))) throw std::invalid_argument("gd_step: mu must be > 0");
    Params<T> out = w;
    for (WeightId id : kWeightIds) out[id] -= mu * g[id];
    return out;
}

/// theta = [vec(W1); vec(W2); vec(Wu); vec(Wv); vec(Wq); vec(Wk)], column-major.
template <Real T>
std::vector<T> vectorize_theta(const Params<T>& w) {
    std::vector<T> out;
    for (WeightId id : {WeightId::w1, WeightId::w2, WeightId::wu, WeightId::wv, WeightId::wq, WeightId::wk}) {
        const auto v = vec(w[id]);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

/// Thrown when the loss turns non-finite. Carries the trace up to the last
/// finite step.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(std::size_t step, LossTrace<double> last)
        : std::runtime_error("training aborted: non-finite loss at step " + std::to_string(step)),
          step_(step),
          trace_(std::move(last)) {}
    std::size_t step() const noexcept { return step_; }
    const LossTrace<double>& trace() const noexcept { return trace_; }

private:
    std::size_t step_;
    LossTrace<double> trace_;
};

template <Real T>
LossTrace<double> to_double_trace(const LossTrace<T>& t) {
    LossTrace<double> out;
    out.mu = to_double(t.mu);
    out.seed = t.seed;
    for (const auto& r : t.records) {
        TraceRecord<double> d;
        d.t = r.t;
        d.phi = to_double(r.phi);
        d.grad_norm = to_double(r.grad_norm);
        for (int k = 0; k < 6; ++k) d.g[k] = to_double(r.g[k]);
        d.theta_dist = to_double(r.theta_dist);
        out.records.push_back(d);
    }
    return out;
}

template <Real T>
struct TrainRun {
    LossTrace<T> trace;
    Params<T> initial;
    Params<T> final_params;
};

/// Runs exactly `steps` updates from w0 at fixed mu. Records t = 0, every
/// multiple of record_every, and the last step; theta_dist is filled at the end.
template <Real T>
TrainRun<T> run_gd(const Params<T>& w0, const Dataset<T>& data, const ModelConfig& cfg, std::size_t steps,
                   const T& mu, std::size_t record_every = 1, std::uint64_t seed = 0) {
    using std::sqrt;
    if (steps < 1) throw std::invalid_argument("run_gd: steps must be >= 1");
    if (record_every < 1) throw std::invalid_argument("run_gd: record_every must be >= 1");
    if (!(mu > T(0))) throw std::invalid_argument("run_gd: mu must be > 0");
    data.validate(cfg);
    w0.validate(cfg);

    TrainRun<T> run{LossTrace<T>{}, w0, w0};
    run.trace.mu = mu;
    run.trace.seed = seed;
    std::vector<std::vector<T>> thetas;
    Params<T>& w = run.final_params;
    for (std::size_t t = 0;; ++t) {
        const T phi = loss(w, data, cfg);
        if (!is_finite(phi)) throw TrainingAborted(t, to_double_trace(run.trace));
        const Gradients<T> g = grad_all(w, data, cfg);
        if (t % record_every == 0 || t == steps) {
            TraceRecord<T> r;
            r.t = t;
            r.phi = phi;
            r.grad_norm = gradient_norm(g);
            for (WeightId id : kWeightIds) r.g[static_cast<std::size_t>(id)] = frobenius_norm(g[id]);
            run.trace.records.push_back(r);
            thetas.push_back(vectorize_theta(w));
        }
        if (t == steps) break;
        w = gd_step(w, g, mu);
    }
    const std::vector<T> last = vectorize_theta(w);
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        T s(0);
        for (std::size_t i = 0; i < last.size(); ++i) {
            const T diff = thetas[k][i] - last[i];
            s += diff * diff;
        }
        run.trace.records[k].theta_dist = sqrt(s);
    }
    return run;
}

/// Doubling line search: starting at mu0, doubles mu while `probe_steps` GD
/// steps strictly decrease the loss at every step; returns half of the first
/// mu that fails.
template <Real T>
T practical_mu(const Params<T>& w0, const Dataset<T>& data, const ModelConfig& cfg, double mu0 = 1e-6,
               std::size_t probe_steps = 20) {
    T mu(mu0);
    for (int k = 0; k < 60; ++k) {
        Params<T> w = w0;
        T prev = loss(w, data, cfg);
        bool ok = true;
        for (std::size_t s = 0; s < probe_steps && ok; ++s) {
            w = gd_step(w, grad_all(w, data, cfg), mu);
            const T cur = loss(w, data, cfg);
            ok = is_finite(cur) && cur < prev;
            prev = cur;
        }
        if (!ok) return mu / T(2);
        mu *= T(2);
    }
    return mu;
}

template <Real T>
T resolve_mu(const LearningRate& lr, const Params<T>& w0, const Dataset<T>& data, const ModelConfig& cfg) {
    switch (lr.kind) {
        case LearningRate::Kind::theory: {
            const T mu = constants(w0, data, cfg).mu_theory;
            if (!(mu > T(0)) || !is_finite(mu))
                throw std::runtime_error("theory learning rate is not a positive finite number (alpha = 0?)");
            return mu;
        }
        case LearningRate::Kind::practical: return practical_mu(w0, data, cfg);
        default: return T(lr.value);
    }
}

/// Draws theta^(0) from spec.init with spec.seed, resolves mu and trains.
template <Real T = double>
TrainRun<T> train_run(const Dataset<T>& data, const ModelConfig& cfg, const TrainSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const Params<T> w0 = init_params<T>(spec.init, cfg, rng);
    const T mu = resolve_mu(spec.mu, w0, data, cfg);
    return run_gd(w0, data, cfg, spec.steps, mu, spec.record_every, spec.seed);
}

template <Real T = double>
LossTrace<T> train(const Dataset<T>& data, const ModelConfig& cfg, const TrainSpec& spec) {
    return train_run(data, cfg, spec).trace;
}

}  // namespace tfconv
