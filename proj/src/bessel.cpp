#include "mwb/bessel.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/roots.hpp>

namespace mwb::bessel {

namespace {

// Consecutive positive zeros of J_nu (nu >= 0) are more than 3 apart, so a
// unit scan step never steps over two of them.
constexpr double kScanStep = 1.0;

void check_order(double order) {
    if (!std::isfinite(order) || order < 0.0) {
        throw std::invalid_argument("bessel: order must be finite and nonnegative");
    }
}

double refine(double order, double lo, double hi) {
    auto f = [order](double x) { return cyl_j(order, x); };
    std::uintmax_t max_iter = 200;
    boost::math::tools::eps_tolerance<double> tol(std::numeric_limits<double>::digits - 1);
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, max_iter);
    return 0.5 * (a + b);
}

// Visits zeros in ascending order until `keep_going(zero)` returns false.
template <typename Visitor>
void scan_zeros(double order, double x_limit, Visitor&& keep_going) {
    double x = order;
    double fx = cyl_j(order, x);
    if (order == 0.0) {
        fx = 1.0;
    }
    while (x < x_limit) {
        const double next = x + kScanStep;
        const double fn = cyl_j(order, next);
        if (fn == 0.0) {
            if (!keep_going(next)) return;
            x = next + 1e-9 * next;
            fx = cyl_j(order, x);
            continue;
        }
        if ((fx > 0.0) != (fn > 0.0)) {
            if (!keep_going(refine(order, x, next))) return;
        }
        x = next;
        fx = fn;
    }
}

}  // namespace

double cyl_j(double order, double x) {
    return boost::math::cyl_bessel_j(order, x);
}

double k0(double x) {
    if (!(x > 0.0)) {
        throw std::invalid_argument("bessel::k0: argument must be positive");
    }
    return boost::math::cyl_bessel_k(0, x);
}

std::vector<double> zeros(double order, int count) {
    check_order(order);
    if (count < 1) {
        throw std::invalid_argument("bessel::zeros: count must be >= 1");
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    scan_zeros(order, std::numeric_limits<double>::max(), [&](double z) {
        out.push_back(z);
        return static_cast<int>(out.size()) < count;
    });
    return out;
}

std::vector<double> zeros_below(double order, double x_max) {
    check_order(order);
    std::vector<double> out;
    if (!(x_max > order)) {
        return out;
    }
    scan_zeros(order, x_max + kScanStep, [&](double z) {
        if (z > x_max) return false;
        out.push_back(z);
        return true;
    });
    return out;
}

}  // namespace mwb::bessel
