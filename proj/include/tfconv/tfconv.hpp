#pragma once

// Umbrella header. quad.hpp is left out: it needs libquadmath.

#include "tfconv/grad.hpp"
#include "tfconv/harness.hpp"
#include "tfconv/matrix.hpp"
#include "tfconv/model.hpp"
#include "tfconv/optimizer.hpp"
#include "tfconv/quadrature.hpp"
#include "tfconv/random.hpp"
#include "tfconv/scalar.hpp"
#include "tfconv/spec_io.hpp"
#include "tfconv/theory.hpp"
#include "tfconv/trace.hpp"
