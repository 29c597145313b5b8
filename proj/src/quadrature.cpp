#include "nsch/quadrature.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nsch {

namespace {

double simpson_step(const std::function<double(double)>& f, double a, double fa, double b,
                    double fb, double m, double fm, double whole, double tol, int depth) {
    double lm = 0.5 * (a + m);
    double rm = 0.5 * (m + b);
    double flm = f(lm);
    double frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    // The relative floor stops refinement once the estimate is at round-off level.
    double floor = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(left) + std::abs(right));
    if (depth <= 0 || std::abs(delta) <= std::max(15.0 * tol, floor)) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
    if (a == b) return 0.0;
    if (a > b) return -adaptive_simpson(f, b, a, tol, max_depth);
    // Split into a few panels first so narrow features are not missed by the first estimate.
    const int panels = 8;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        double x0 = a + (b - a) * p / panels;
        double x1 = (p + 1 == panels) ? b : a + (b - a) * (p + 1) / panels;
        double xm = 0.5 * (x0 + x1);
        double f0 = f(x0), f1 = f(x1), fm = f(xm);
        double whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        sum += simpson_step(f, x0, f0, x1, f1, xm, fm, whole, tol / panels, max_depth);
    }
    return sum;
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double tol) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo < 0.0) == (fhi < 0.0)) throw std::invalid_argument("bisect: root not bracketed");
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

std::vector<double> chebyshev_lobatto(double a, double b, int n) {
    if (n < 2) throw std::invalid_argument("chebyshev_lobatto: need at least two points");
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
        double t = -std::cos(std::numbers::pi * i / (n - 1));
        x[i] = 0.5 * (a + b) + 0.5 * (b - a) * t;
    }
    x.front() = a;
    x.back() = b;
    return x;
}

}  // namespace nsch
