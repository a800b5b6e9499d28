#pragma once

// Scalar helpers shared by every header. All numeric code is templated on the
// scalar type T; double is the working precision and
// boost::multiprecision::float128 (see quad.hpp) is used where a run has to
// resolve changes far below double's unit roundoff.

#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <sstream>
#include <iomanip>

namespace tfconv {

template <typename T>
concept Real = requires(T a, T b) {
    { a + b } -> std::convertible_to<T>;
    { a - b } -> std::convertible_to<T>;
    { a * b } -> std::convertible_to<T>;
    { a / b } -> std::convertible_to<T>;
    { -a } -> std::convertible_to<T>;
    { a < b } -> std::convertible_to<bool>;
} && std::numeric_limits<T>::is_specialized;

template <Real T>
inline bool is_finite(const T& x) {
    using std::isfinite;
    return static_cast<bool>(isfinite(x));
}

template <Real T>
inline double to_double(const T& x) {
    return static_cast<double>(x);
}

template <Real T>
inline T epsilon_of() {
    return std::numeric_limits<T>::epsilon();
}

/// Standard normal cumulative distribution function.
template <Real T>
inline T normal_cdf(const T& x) {
    using std::erfc;
    using std::sqrt;
    return T(0.5) * erfc(-x / sqrt(T(2)));
}

/// Standard normal density.
template <Real T>
inline T normal_pdf(const T& x) {
    using std::acos;
    using std::exp;
    using std::sqrt;
    const T inv_sqrt_2pi = T(1) / sqrt(T(2) * acos(T(-1)));
    return inv_sqrt_2pi * exp(-x * x / T(2));
}

/// Formats a value with 17 significant digits (the exchange format of every
/// CSV and report file). Non-finite values print as nan / inf / -inf.
template <Real T>
inline std::string fmt17(const T& x) {
    const double v = to_double(x);
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace tfconv
