#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "resmin/errors.hpp"

namespace resmin {

namespace detail {

/// Halley refinement of w*e^w = x from a given start; converges cubically.
inline double lambert_halley(double w, double x) {
    for (int it = 0; it < 60; ++it) {
        const double ew = std::exp(w);
        const double r = w * ew - x;
        if (std::abs(r) <= 1e-16 * (std::abs(x) + std::abs(w * ew)) + 5e-324) break;
        const double wp1 = w + 1.0;
        const double denom = ew * wp1 - (w + 2.0) * r / (2.0 * wp1);
        const double dw = r / denom;
        w -= dw;
        if (std::abs(dw) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(w)) break;
    }
    return w;
}

}  // namespace detail

/// Principal branch W0 of w*e^w = x, defined for x >= -1/e, with w >= -1.
inline double lambert_w0(double x) {
    const double inv_e = std::exp(-1.0);
    if (x < -inv_e) {
        if (x > -inv_e * (1.0 + 1e-12)) return -1.0;  // branch point within rounding
        throw OutOfBranch("lambert_w0: argument " + std::to_string(x) + " below -1/e");
    }
    if (x == 0.0) return 0.0;
    double w;
    if (x < -0.25) {
        const double p = std::sqrt(2.0 * (std::exp(1.0) * x + 1.0));
        w = -1.0 + p - p * p / 3.0 + 11.0 * p * p * p / 72.0;
    } else if (x < 2.0) {
        w = std::log1p(x) * 0.7;  // crude but inside Halley's basin
    } else {
        const double l = std::log(x);
        w = l - std::log(l);
    }
    return detail::lambert_halley(w, x);
}

/// Lower real branch W-1, defined for -1/e <= x < 0, with w <= -1.
inline double lambert_wm1(double x) {
    const double inv_e = std::exp(-1.0);
    if (x >= 0.0 || x < -inv_e) {
        if (x < 0.0 && x > -inv_e * (1.0 + 1e-12)) return -1.0;
        throw OutOfBranch("lambert_wm1: argument " + std::to_string(x) + " outside [-1/e, 0)");
    }
    double w;
    if (x < -0.25) {
        const double p = std::sqrt(2.0 * (std::exp(1.0) * x + 1.0));
        w = -1.0 - p - p * p / 3.0;
    } else {
        const double l = std::log(-x);
        w = l - std::log(-l);
    }
    return detail::lambert_halley(w, x);
}

}  // namespace resmin
