#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "resmin/errors.hpp"
#include "resmin/problems.hpp"
#include "resmin/skeleton.hpp"

namespace resmin {

// ---------------------------------------------------------------------------
// Dormand-Prince RK(5,4) tableau
// ---------------------------------------------------------------------------

/// Coefficients of the 7-stage Dormand-Prince pair. The b row advances the
/// solution (local extrapolation); bhat is the embedded fourth-order row used
/// only for the error estimate. b[6] == 0 is the FSAL property: the seventh
/// stage of an accepted step is reused as the first stage of the next.
struct ButcherTableau {
    std::array<std::array<double, 7>, 7> a;
    std::array<double, 7> b;
    std::array<double, 7> bhat;
    std::array<double, 7> c;
};

inline const ButcherTableau& dp45_tableau() {
    static const ButcherTableau t = [] {
        ButcherTableau tb{};
        tb.c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
        tb.a = {};
        tb.a[1][0] = 1.0 / 5;
        tb.a[2][0] = 3.0 / 40;
        tb.a[2][1] = 9.0 / 40;
        tb.a[3][0] = 44.0 / 45;
        tb.a[3][1] = -56.0 / 15;
        tb.a[3][2] = 32.0 / 9;
        tb.a[4][0] = 19372.0 / 6561;
        tb.a[4][1] = -25360.0 / 2187;
        tb.a[4][2] = 64448.0 / 6561;
        tb.a[4][3] = -212.0 / 729;
        tb.a[5][0] = 9017.0 / 3168;
        tb.a[5][1] = -355.0 / 33;
        tb.a[5][2] = 46732.0 / 5247;
        tb.a[5][3] = 49.0 / 176;
        tb.a[5][4] = -5103.0 / 18656;
        tb.a[6][0] = 35.0 / 384;
        tb.a[6][1] = 0.0;
        tb.a[6][2] = 500.0 / 1113;
        tb.a[6][3] = 125.0 / 192;
        tb.a[6][4] = -2187.0 / 6784;
        tb.a[6][5] = 11.0 / 84;
        tb.b = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
        tb.bhat = {5179.0 / 57600, 0.0,           7571.0 / 16695, 393.0 / 640,
                   -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
        return tb;
    }();
    return t;
}

// ---------------------------------------------------------------------------
// Continuous extension
// ---------------------------------------------------------------------------

/// Interpolation weight d_j(s), s = (t - t_n)/h, j in 0..6. All weights
/// vanish at s = 0; at s = 1 they reproduce the b row except d_7(1) = 0.
inline double dp45_d(int j, double s) {
    switch (j) {
        case 0: return -s * (((435.0 * s - 1184.0) * s + 1098.0) * s - 384.0) / 384.0;
        case 1: return 0.0;
        case 2: return 500.0 * s * s * ((6.0 * s - 14.0) * s + 9.0) / 1113.0;
        case 3: return -125.0 * s * s * ((9.0 * s - 16.0) * s + 6.0) / 192.0;
        case 4: return 729.0 * s * s * ((35.0 * s - 64.0) * s + 26.0) / 6784.0;
        case 5: return -11.0 * s * s * (3.0 * s - 2.0) * (5.0 * s - 6.0) / 84.0;
        case 6: return 0.5 * s * s * (5.0 * s - 3.0) * (s - 1.0);
        default: return 0.0;
    }
}

/// d/ds of dp45_d. d_1'(0) = 1 and d_7'(1) = 1; all other weights have zero
/// slope at both ends, which makes the piecewise interpolant C^1.
inline double dp45_ddot(int j, double s) {
    switch (j) {
        case 0: return -(((1740.0 * s - 3552.0) * s + 2196.0) * s - 384.0) / 384.0;
        case 1: return 0.0;
        case 2: return 500.0 * s * ((24.0 * s - 42.0) * s + 18.0) / 1113.0;
        case 3: return -125.0 * s * ((36.0 * s - 48.0) * s + 12.0) / 192.0;
        case 4: return 729.0 * s * ((140.0 * s - 192.0) * s + 52.0) / 6784.0;
        case 5: return -11.0 * s * ((60.0 * s - 84.0) * s + 24.0) / 84.0;
        case 6: return 0.5 * s * ((20.0 * s - 24.0) * s + 6.0);
        default: return 0.0;
    }
}

// ---------------------------------------------------------------------------
// Solution storage
// ---------------------------------------------------------------------------

/// One accepted step: left endpoint, stepsize, and the seven stage values.
struct StepRecord {
    double t = 0.0;
    double h = 0.0;
    Vector y;
    std::array<Vector, 7> k;
};

/// A trajectory as a sequence of accepted steps covering [t0, tf], plus the
/// terminal value. Immutable once built; dense evaluation is reentrant.
struct DenseSolution {
    double t0 = 0.0;
    double tf = 0.0;
    std::vector<StepRecord> steps;
    Vector y_final;
    long accepted = 0;
    long rejected = 0;

    double mean_step() const {
        return steps.empty() ? 0.0 : (tf - t0) / static_cast<double>(steps.size());
    }
};

struct IntegrateOptions {
    long max_steps = 1'000'000;
    double initial_step = 0.0;  // 0 = automatic
};

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

namespace detail {

/// Classical starting-step heuristic from the scaled magnitudes of y0 and
/// f(t0, y0), capped at a tenth of the interval.
inline double initial_step_guess(const OdeSystem& sys, double t0, double tf, const Vector& y0,
                                 const Vector& f0, double rtol, double atol) {
    const auto scaled_rms = [&](const Vector& v) {
        double acc = 0.0;
        for (int i = 0; i < v.size(); ++i) {
            const double sc = atol + rtol * std::abs(y0[i]);
            acc += (v[i] / sc) * (v[i] / sc);
        }
        return std::sqrt(acc / static_cast<double>(v.size()));
    };
    const double span = tf - t0;
    const double d0 = scaled_rms(y0);
    const double d1 = scaled_rms(f0);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    double d2 = 0.0;
    try {
        const Vector f1 = sys.f(t0 + h0, y0 + h0 * f0);
        d2 = scaled_rms(f1 - f0) / h0;
    } catch (const DomainError&) {
        // Probe left the domain; fall back to the first-order guess.
    }
    double h1;
    if (std::max(d1, d2) <= 1e-15)
        h1 = std::max(1e-6, h0 * 1e-3);
    else
        h1 = std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min({100.0 * h0, h1, span / 10.0});
}

struct TrialStep {
    Vector y_next;
    std::array<Vector, 7> k;
    double err = 0.0;  // scaled RMS error estimate; accept when <= 1
};

inline TrialStep try_step(const OdeSystem& sys, double t, double h, const Vector& y,
                          const Vector& k1, double rtol, double atol) {
    const auto& tb = dp45_tableau();
    TrialStep out;
    out.k[0] = k1;
    for (int j = 1; j < 6; ++j) {
        Vector arg = y;
        for (int l = 0; l < j; ++l)
            if (tb.a[j][l] != 0.0) arg += (h * tb.a[j][l]) * out.k[l];
        out.k[j] = sys.f(t + tb.c[j] * h, arg);
    }
    out.y_next = y;
    for (int j = 0; j < 6; ++j)
        if (tb.b[j] != 0.0) out.y_next += (h * tb.b[j]) * out.k[j];
    out.k[6] = sys.f(t + h, out.y_next);

    Vector e = Vector::Zero(y.size());
    for (int j = 0; j < 7; ++j) {
        const double d = tb.b[j] - tb.bhat[j];
        if (d != 0.0) e += (h * d) * out.k[j];
    }
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(out.y_next[i]));
        acc += (e[i] / sc) * (e[i] / sc);
    }
    out.err = std::sqrt(acc / static_cast<double>(y.size()));
    return out;
}

}  // namespace detail

/// Adaptive integration of sys from (t0, y0) to tf. The returned solution's
/// nodes are the accepted step endpoints; each record keeps all seven stages
/// so the continuous extension can be evaluated later.
inline DenseSolution integrate(const OdeSystem& sys, double t0, double tf, const Vector& y0,
                               double rtol, double atol, const IntegrateOptions& opts = {}) {
    if (tf < t0) throw ValidationError("integrate: tf must be >= t0");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ValidationError("integrate: tolerances must be positive");
    if (y0.size() != sys.dim) throw ValidationError("integrate: y0 has wrong dimension");
    if (!sys.in_domain(t0, y0)) throw DomainError("integrate: y0 outside the problem domain");

    DenseSolution sol;
    sol.t0 = t0;
    sol.tf = tf;
    sol.y_final = y0;
    if (tf == t0) return sol;

    const double eps = std::numeric_limits<double>::epsilon();
    Vector y = y0;
    double t = t0;
    Vector k1 = sys.f(t0, y0);
    double h = opts.initial_step > 0.0 ? opts.initial_step
                                       : detail::initial_step_guess(sys, t0, tf, y0, k1, rtol, atol);
    h = std::min(h, tf - t0);

    long total = 0;
    while (t < tf) {
        if (++total > opts.max_steps)
            throw MaxStepsExceeded("integrate: more than " + std::to_string(opts.max_steps) + " steps");
        if (h < 16.0 * eps * std::abs(t))
            throw StepsizeUnderflow("integrate: stepsize underflow at t = " + std::to_string(t));
        bool last = false;
        if (t + h >= tf) {
            h = tf - t;
            last = true;
        }
        auto trial = detail::try_step(sys, t, h, y, k1, rtol, atol);
        const double err = trial.err;
        if (err <= 1.0) {
            sol.steps.push_back(StepRecord{t, h, y, trial.k});
            ++sol.accepted;
            t = last ? tf : t + h;
            y = std::move(trial.y_next);
            k1 = sol.steps.back().k[6];  // FSAL
        } else {
            ++sol.rejected;
            last = false;
        }
        const double factor =
            err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        h *= factor;
    }
    sol.y_final = y;
    return sol;
}

/// Fixed-step integration (no error control); used for order studies.
inline DenseSolution integrate_fixed(const OdeSystem& sys, double t0, double tf, const Vector& y0,
                                     long nsteps) {
    if (tf <= t0) throw ValidationError("integrate_fixed: tf must be > t0");
    if (nsteps < 1) throw ValidationError("integrate_fixed: nsteps must be >= 1");
    DenseSolution sol;
    sol.t0 = t0;
    sol.tf = tf;
    const double h = (tf - t0) / static_cast<double>(nsteps);
    Vector y = y0;
    Vector k1 = sys.f(t0, y0);
    for (long n = 0; n < nsteps; ++n) {
        const double t = t0 + n * h;
        auto trial = detail::try_step(sys, t, h, y, k1, 1.0, 1.0);
        sol.steps.push_back(StepRecord{t, h, y, trial.k});
        ++sol.accepted;
        y = std::move(trial.y_next);
        k1 = sol.steps.back().k[6];
    }
    sol.y_final = y;
    return sol;
}

/// Value and derivative of the continuous extension at t. At a node shared
/// by two steps the right step is used; by construction the two sides agree
/// up to rounding.
inline std::pair<Vector, Vector> dense_eval(const DenseSolution& sol, double t) {
    if (t < sol.t0 || t > sol.tf)
        throw OutOfRange("dense_eval: t = " + std::to_string(t) + " outside [" +
                         std::to_string(sol.t0) + ", " + std::to_string(sol.tf) + "]");
    if (sol.steps.empty()) {
        // Zero-length run: only t == t0 is admissible.
        return {sol.y_final, Vector::Zero(sol.y_final.size())};
    }
    // Last step whose left endpoint is <= t.
    auto it = std::upper_bound(sol.steps.begin(), sol.steps.end(), t,
                               [](double v, const StepRecord& r) { return v < r.t; });
    const StepRecord& rec = it == sol.steps.begin() ? *it : *(it - 1);
    const double s = (t - rec.t) / rec.h;
    Vector y = rec.y;
    Vector ydot = Vector::Zero(rec.y.size());
    for (int j = 0; j < 7; ++j) {
        if (j == 1) continue;  // d_2 == 0
        const double dj = dp45_d(j, s);
        const double djd = dp45_ddot(j, s);
        if (dj != 0.0) y += (rec.h * dj) * rec.k[j];
        if (djd != 0.0) ydot += djd * rec.k[j];
    }
    return {y, ydot};
}

/// Accepted-step endpoints as a Skeleton.
inline Skeleton skeleton_of(const DenseSolution& sol) {
    if (sol.steps.empty()) throw ValidationError("skeleton_of: empty solution");
    std::vector<double> t;
    std::vector<Vector> z;
    t.reserve(sol.steps.size() + 1);
    z.reserve(sol.steps.size() + 1);
    for (const auto& st : sol.steps) {
        t.push_back(st.t);
        z.push_back(st.y);
    }
    t.push_back(sol.tf);
    z.push_back(sol.y_final);
    const int n = static_cast<int>(sol.y_final.size());
    return Skeleton(n, std::move(t), std::move(z));
}

}  // namespace resmin
