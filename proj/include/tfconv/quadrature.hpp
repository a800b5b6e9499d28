#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace tfconv {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Hermite rule for the weight exp(-x^2): roots of H_n found by
/// Newton iteration on the orthonormal three-term recurrence.
inline QuadratureRule gauss_hermite(std::size_t n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
    constexpr double kPiM4 = 0.7511255444649425;  // pi^(-1/4)
    QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
    auto& x = rule.nodes;
    auto& w = rule.weights;
    const double dn = static_cast<double>(n);
    const std::size_t half = (n + 1) / 2;
    double z = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * dn + 1.0) - 1.85575 * std::pow(2.0 * dn + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(dn, 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = kPiM4, p2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                const double dj = static_cast<double>(j);
                p1 = z * std::sqrt(2.0 / (dj + 1.0)) * p2 - std::sqrt(dj / (dj + 1.0)) * p3;
            }
            pp = std::sqrt(2.0 * dn) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    return rule;
}

/// E[f(g)] for g ~ N(0, 1) with an n-point Gauss-Hermite rule.
inline double gaussian_expectation(const std::function<double(double)>& f, std::size_t n = 64) {
    const QuadratureRule rule = gauss_hermite(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += rule.weights[i] * f(std::sqrt(2.0) * rule.nodes[i]);
    return s / std::sqrt(3.14159265358979323846);
}

}  // namespace tfconv
