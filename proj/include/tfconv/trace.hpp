#pragma once

// Per-iteration training records and the log-linear rate fit.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfconv/scalar.hpp"

namespace tfconv {

inline constexpr const char* kTraceCsvHeader = "t,phi,grad_norm,g1,g2,gq,gk,gv,gu,theta_dist";

template <Real T = double>
struct TraceRecord {
    std::size_t t = 0;
    T phi{};                ///< loss at theta^(t)
    T grad_norm{};          ///< ||grad Phi(theta^(t))||_2
    T g[6]{};               ///< per-matrix Frobenius norms (w1, w2, wq, wk, wv, wu)
    T theta_dist{};         ///< ||theta^(t) - theta^(final)||_2, filled after the run
};

template <Real T = double>
struct LossTrace {
    std::vector<TraceRecord<T>> records;
    T mu{};                       ///< learning rate used for every step
    std::uint64_t seed = 0;

    bool empty() const noexcept { return records.empty(); }
    const TraceRecord<T>& front() const { return records.front(); }
    const TraceRecord<T>& back() const { return records.back(); }

    std::vector<double> phis() const {
        std::vector<double> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(to_double(r.phi));
        return out;
    }
};

template <Real T>
void write_trace_csv(std::ostream& os, const LossTrace<T>& trace) {
    os << kTraceCsvHeader << "\n";
    for (const auto& r : trace.records) {
        os << r.t << "," << fmt17(r.phi) << "," << fmt17(r.grad_norm);
        for (const T& g : r.g) os << "," << fmt17(g);
        os << "," << fmt17(r.theta_dist) << "\n";
    }
}

/// Parses the CSV written by write_trace_csv. Lines starting with '#' are
/// treated as comments.
inline LossTrace<double> read_trace_csv(std::istream& is) {
    LossTrace<double> trace;
    std::string line;
    bool header = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != kTraceCsvHeader)
                throw std::runtime_error("trace csv: unexpected header on line " + std::to_string(lineno));
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 10)
            throw std::runtime_error("trace csv: expected 10 fields on line " + std::to_string(lineno));
        TraceRecord<double> r;
        r.t = std::stoull(cells[0]);
        r.phi = std::stod(cells[1]);
        r.grad_norm = std::stod(cells[2]);
        for (int k = 0; k < 6; ++k) r.g[k] = std::stod(cells[3 + k]);
        r.theta_dist = std::stod(cells[9]);
        trace.records.push_back(r);
    }
    return trace;
}

struct RateFit {
    double rho = 1.0;              ///< fitted per-step ratio exp(slope)
    double r_squared = 1.0;
    bool already_converged = false;  ///< every recorded loss was exactly zero
};

/// Least-squares fit of log(phi) against t over the strictly positive points.
inline RateFit fit_linear_rate(const std::vector<double>& ts, const std::vector<double>& phis) {
    if (ts.size() != phis.size()) throw std::invalid_argument("fit_linear_rate: length mismatch");
    bool all_zero = !phis.empty();
    for (double v : phis) all_zero = all_zero && v == 0.0;
    if (all_zero) return RateFit{0.0, 1.0, true};

    std::vector<double> x, y;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        if (phis[k] > 0.0 && std::isfinite(phis[k])) {
            x.push_back(ts[k]);
            y.push_back(std::log(phis[k]));
        }
    }
    if (x.size() < 10)
        throw std::invalid_argument("fit_linear_rate: need at least 10 positive loss values, got " +
                                    std::to_string(x.size()));
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    const double slope = sxx > 0 ? sxy / sxx : 0.0;
    double ss_res = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = y[k] - (my + slope * (x[k] - mx));
        ss_res += e * e;
    }
    // A perfectly flat trace is fit exactly.
    const double r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
    return RateFit{std::exp(slope), r2, false};
}

template <Real T>
RateFit fit_linear_rate(const LossTrace<T>& trace) {
    std::vector<double> ts, phis;
    for (const auto& r : trace.records) {
        ts.push_back(static_cast<double>(r.t));
        phis.push_back(to_double(r.phi));
    }
    return fit_linear_rate(ts, phis);
}

}  // namespace tfconv
