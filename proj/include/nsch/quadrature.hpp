#pragma once

#include <functional>
#include <vector>

namespace nsch {

// Adaptive Simpson on [a, b] with absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth = 50);

// Root of a sign-changing f on [lo, hi] by bisection until the bracket is below tol.
double bisect(const std::function<double(double)>& f, double lo, double hi, double tol);

// Chebyshev-Lobatto points on [a, b], ascending, endpoints included.
std::vector<double> chebyshev_lobatto(double a, double b, int n);

}  // namespace nsch
