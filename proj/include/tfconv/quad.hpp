#pragma once

// Quad-precision scalar (113-bit mantissa) for runs whose per-step changes sit
// far below double's unit roundoff. Requires libquadmath and GNU extensions.

#include <boost/multiprecision/float128.hpp>

#include "tfconv/scalar.hpp"

namespace tfconv {

using quad = boost::multiprecision::float128;

static_assert(Real<quad>);

}  // namespace tfconv
