#pragma once

#include <vector>

namespace mwb::bessel {

/// Bessel function of the first kind J_order(x) for real order >= 0 and x >= 0.
double cyl_j(double order, double x);

/// Modified Bessel function of the second kind K_0(x), x > 0.
double k0(double x);

/**
 * First `count` positive zeros of J_order, ascending.
 *
 * Zeros are isolated by a sign-change scan starting at x = order (no zero of
 * J_order lies below it) with a step well under the minimal zero spacing,
 * then refined by bracketing to full double precision.
 *
 * Throws std::invalid_argument for non-finite or negative order, count < 1.
 */
std::vector<double> zeros(double order, int count);

/// All positive zeros of J_order that are <= x_max, ascending.
std::vector<double> zeros_below(double order, double x_max);

}  // namespace mwb::bessel
