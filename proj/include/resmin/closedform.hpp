#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "resmin/errors.hpp"
#include "resmin/lambert_w.hpp"
#include "resmin/skeleton.hpp"

namespace resmin {

// ---------------------------------------------------------------------------
// Dahlquist test problem, dx/dt = a*x
// ---------------------------------------------------------------------------

/// Minimal-L2 residual interpolant of one stage for dx/dt = a*x.
/// The residual is the exponential u(t) = r * exp(a*(t_end - t)); its
/// modulus is decreasing on the stage when a > 0 and increasing when a < 0.
struct DahlquistStageL2 {
    double a = 0.0;
    double t_start = 0.0, t_end = 0.0;
    double z_start = 0.0, z_end = 0.0;
    double r = 0.0;  // leading coefficient of u

    double tau() const { return t_end - t_start; }

    double u(double t) const { return r * std::exp(a * (t_end - t)); }

    double x(double t) const {
        const double tau_ = tau();
        const double growth = (z_end - std::exp(-a * tau_) * z_start) / (2.0 * std::sinh(a * tau_));
        return growth * std::exp(a * (t - t_start)) - u(t) / (2.0 * a);
    }

    /// Max of |u| over the stage (attained at t_start for a > 0, t_end for a < 0).
    double max_abs_u() const { return std::abs(r) * std::max(1.0, std::exp(a * tau())); }

    /// Stage objective 0.5 * integral of u^2.
    double objective() const {
        const double d = z_end - std::exp(a * tau()) * z_start;
        return a * d * d / std::expm1(2.0 * a * tau());
    }

    /// L2 norm sqrt(integral of u^2).
    double l2_norm() const { return std::sqrt(2.0 * objective()); }
};

inline DahlquistStageL2 dahlquist_l2(double a, double t_start, double t_end, double z_start,
                                     double z_end) {
    if (a == 0.0) throw ZeroParameter("dahlquist_l2: a must be nonzero");
    if (!(t_end > t_start)) throw ValidationError("dahlquist_l2: stage duration must be positive");
    DahlquistStageL2 st{a, t_start, t_end, z_start, z_end, 0.0};
    const double tau = t_end - t_start;
    // r = -2a (z_i - e^{a tau} z_{i-1}) / (1 - e^{2 a tau}), via expm1 to
    // avoid cancellation for small |a tau|.
    st.r = 2.0 * a * (z_end - std::exp(a * tau) * z_start) / std::expm1(2.0 * a * tau);
    return st;
}

/// Minimal stage-Linf residual interpolant of one stage for dx/dt = a*x.
/// The optimal residual is the constant u_bar; alpha = |u_bar|.
struct DahlquistStageLinf {
    double a = 0.0;
    double t_start = 0.0, t_end = 0.0;
    double z_start = 0.0, z_end = 0.0;
    double u_bar = 0.0;
    double alpha = 0.0;

    double tau() const { return t_end - t_start; }
    double u(double) const { return u_bar; }
    double x(double t) const {
        return (z_start + u_bar / a) * std::exp(a * (t - t_start)) - u_bar / a;
    }
};

inline DahlquistStageLinf dahlquist_linf(double a, double t_start, double t_end, double z_start,
                                         double z_end) {
    if (a == 0.0) throw ZeroParameter("dahlquist_linf: a must be nonzero");
    if (!(t_end > t_start)) throw ValidationError("dahlquist_linf: stage duration must be positive");
    DahlquistStageLinf st{a, t_start, t_end, z_start, z_end, 0.0, 0.0};
    const double tau = t_end - t_start;
    // u_bar = -a (z_i - e^{a tau} z_{i-1}) / (1 - e^{a tau}); this is the form
    // that reproduces both endpoints through the constant-control flow.
    st.u_bar = a * (z_end - std::exp(a * tau) * z_start) / std::expm1(a * tau);
    st.alpha = std::abs(st.u_bar);
    return st;
}

struct NormComparison {
    double alpha = 0.0;    // minimal stage-Linf value
    double l2_max = 0.0;   // max |u_L2| over the stage, == ratio * alpha
    double ratio = 0.0;    // 2/(1+e^{a tau}) for a < 0, 2 e^{a tau}/(1+e^{a tau}) for a > 0
};

/// Relates the two minimal residuals on one Dahlquist stage. The ratio
/// exceeds 1 for every a != 0 and tends to 2 as |a| tau grows.
inline NormComparison compare_norms(double a, double t_start, double t_end, double z_start,
                                    double z_end) {
    if (a == 0.0) throw ZeroParameter("compare_norms: a must be nonzero");
    const double tau = t_end - t_start;
    const double e_atau = std::exp(a * tau);
    NormComparison cmp;
    cmp.alpha = dahlquist_linf(a, t_start, t_end, z_start, z_end).alpha;
    cmp.ratio = a < 0.0 ? 2.0 / (1.0 + e_atau) : 2.0 * e_atau / (1.0 + e_atau);
    cmp.l2_max = cmp.ratio * cmp.alpha;
    return cmp;
}

// ---------------------------------------------------------------------------
// Square-root flow, dx/dt = sqrt(x)
// ---------------------------------------------------------------------------

/// Minimal-L2 residual interpolant of one stage for dx/dt = sqrt(x):
/// a quadratic x(t) = t^2/4 + c1 t + c2 with residual u = t/2 + c1 - sqrt(x).
struct SqrtStageL2 {
    double t_start = 0.0, t_end = 0.0;
    double z_start = 0.0, z_end = 0.0;
    double c1 = 0.0, c2 = 0.0;
    bool domain_warning = false;  // x dips to <= 0 somewhere inside the stage

    double x(double t) const { return (0.25 * t + c1) * t + c2; }

    double u(double t) const {
        const double xv = x(t);
        if (!(xv > 0.0))
            throw DomainError("sqrt L2 interpolant nonpositive at t = " + std::to_string(t));
        return 0.5 * t + c1 - std::sqrt(xv);
    }
};

inline SqrtStageL2 sqrt_l2(double t_start, double t_end, double z_start, double z_end) {
    if (!(z_start > 0.0) || !(z_end > 0.0))
        throw DomainError("sqrt_l2: endpoints must be positive");
    if (!(t_end > t_start)) throw ValidationError("sqrt_l2: stage duration must be positive");
    SqrtStageL2 st{t_start, t_end, z_start, z_end, 0.0, 0.0, false};
    const double tau = t_end - t_start;
    st.c1 = (z_end - z_start - 0.25 * (t_end * t_end - t_start * t_start)) / tau;
    st.c2 = z_start - 0.25 * t_start * t_start - t_start * st.c1;
    const double t_vertex = -2.0 * st.c1;
    if (t_vertex > t_start && t_vertex < t_end && st.x(t_vertex) <= 0.0) st.domain_warning = true;
    return st;
}

/// Minimal stage-Linf residual interpolant of one stage for dx/dt = sqrt(x).
/// The constant residual u_bar solves
///   u_bar * ln((sqrt(z_i)+u_bar)/(sqrt(z_{i-1})+u_bar))
///     = sqrt(z_i) - sqrt(z_{i-1}) - tau/2,
/// and the state is recovered implicitly (or via Lambert W where the branch
/// argument stays in range).
struct SqrtStageLinf {
    double t_start = 0.0, t_end = 0.0;
    double z_start = 0.0, z_end = 0.0;
    double u_bar = 0.0;
    double alpha = 0.0;

    double u(double) const { return u_bar; }

    /// Solves the implicit state equation for x(t) by safeguarded Newton in
    /// w = sqrt(x).
    double x(double t) const {
        const double w0 = std::sqrt(z_start);
        if (u_bar == 0.0) {
            const double w = w0 + 0.5 * (t - t_start);
            return w * w;
        }
        if (w0 + u_bar == 0.0) return z_start;  // equilibrium hold
        const double rhs = w0 + 0.5 * (t - t_start);
        // F(w) = w - u_bar*ln((w+u_bar)/(w0+u_bar)) - rhs, F'(w) = w/(w+u_bar).
        auto F = [&](double w) { return w - u_bar * std::log((w + u_bar) / (w0 + u_bar)) - rhs; };
        // The constant-control flow is monotone: ascending stages (flow speed
        // w0 + u_bar > 0) keep w >= w0, descending ones keep 0 < w <= w0.
        double lo, hi;
        if (w0 + u_bar > 0.0) {
            lo = w0;
            hi = std::max({w0, std::sqrt(z_end), rhs}) + std::abs(u_bar) + 1.0;
            for (int i = 0; i < 200 && F(hi) < 0.0; ++i) hi *= 2.0;
        } else {
            lo = 1e-12 * w0;
            hi = w0;
        }
        double flo = F(lo);
        double w = 0.5 * (lo + hi);
        for (int it = 0; it < 100; ++it) {
            const double fw = F(w);
            if ((fw <= 0.0) == (flo <= 0.0))
                lo = w;
            else
                hi = w;
            const double dw = fw * (w + u_bar) / w;  // Newton step
            double w_next = w - dw;
            const double wa = std::min(lo, hi), wb = std::max(lo, hi);
            if (!(w_next > wa && w_next < wb)) w_next = 0.5 * (lo + hi);
            if (std::abs(w_next - w) <= 1e-15 * std::max(1.0, std::abs(w))) {
                w = w_next;
                break;
            }
            w = w_next;
        }
        return w * w;
    }

    /// Explicit Lambert-W form of x(t). Empty when the branch argument falls
    /// outside the representable range (the implicit form still applies).
    std::optional<double> x_lambert(double t) const {
        if (u_bar == 0.0) return x(t);
        const double w0 = std::sqrt(z_start);
        const double R = 0.5 * (t - t_start) + w0 - u_bar * std::log(w0 + u_bar);
        // sqrt(x) = -u_bar (W(-exp(-R/u_bar - 1)/u_bar) + 1); branch W-1 for
        // u_bar > 0, W0 for u_bar < 0, by continuity with x(t_start) = z_start.
        const double log_mag = -R / u_bar - 1.0 - std::log(std::abs(u_bar));
        if (log_mag > 700.0) return std::nullopt;  // would overflow
        const double mag = std::exp(log_mag);
        const double arg = (u_bar > 0.0 ? -1.0 : 1.0) * mag;
        double w;
        try {
            w = u_bar > 0.0 ? lambert_wm1(arg) : lambert_w0(arg);
        } catch (const OutOfBranch&) {
            return std::nullopt;
        }
        const double sq = -u_bar * (w + 1.0);
        if (!(sq > 0.0) || !std::isfinite(sq)) return std::nullopt;
        return sq * sq;
    }
};

namespace detail {

/// phi(u) = u * ln((sqrt(z1)+u)/(sqrt(z0)+u)), the left side of the implicit
/// stage-Linf equation for the sqrt flow.
inline double sqrt_linf_phi(double u, double w0, double w1) {
    if (u == 0.0) return 0.0;
    return u * std::log((w1 + u) / (w0 + u));
}

inline double sqrt_linf_phi_prime(double u, double w0, double w1) {
    return std::log((w1 + u) / (w0 + u)) + u * (1.0 / (w1 + u) - 1.0 / (w0 + u));
}

}  // namespace detail

inline SqrtStageLinf sqrt_linf(double t_start, double t_end, double z_start, double z_end) {
    if (!(z_start > 0.0) || !(z_end > 0.0))
        throw DomainError("sqrt_linf: endpoints must be positive");
    if (!(t_end > t_start)) throw ValidationError("sqrt_linf: stage duration must be positive");
    SqrtStageLinf st{t_start, t_end, z_start, z_end, 0.0, 0.0};
    const double tau = t_end - t_start;
    const double w0 = std::sqrt(z_start), w1 = std::sqrt(z_end);
    const double rhs = w1 - w0 - 0.5 * tau;
    if (rhs == 0.0) return st;  // skeleton on the exact flow
    if (z_start == z_end) {
        // Equilibrium hold: the flow never moves, u_bar = -sqrt(z).
        st.u_bar = -w0;
        st.alpha = w0;
        return st;
    }

    // The constant-control flow is monotone, so the root lies in
    // (-min(w0,w1), inf) for ascending stages and (-inf, -max(w0,w1)) for
    // descending ones.
    const bool ascending = z_end > z_start;
    auto g = [&](double u) { return detail::sqrt_linf_phi(u, w0, w1) - rhs; };

    double lo, hi;
    if (ascending) {
        const double bound = -std::min(w0, w1);
        double probe = std::max((z_end - z_start) / tau - 0.5 * (w0 + w1), 0.5 * (bound + 0.0));
        hi = std::max(probe, 1.0);
        int guard = 0;
        while (g(hi) < 0.0 && guard++ < 200) hi = 2.0 * hi + 1.0;
        if (g(hi) < 0.0) throw BracketFailure("sqrt_linf: no upper bracket");
        lo = 0.5 * (bound + std::min(probe, 0.0));
        guard = 0;
        while (g(lo) > 0.0 && guard++ < 200) lo = bound + 0.5 * (lo - bound);
        if (g(lo) > 0.0) throw BracketFailure("sqrt_linf: no lower bracket");
    } else {
        const double bound = -std::max(w0, w1);
        hi = bound - 1e-8 * std::max(1.0, std::abs(bound));
        int guard = 0;
        while (g(hi) > 0.0 && guard++ < 400) hi = bound + 0.5 * (hi - bound);
        if (g(hi) > 0.0) throw BracketFailure("sqrt_linf: no bracket near the domain edge");
        lo = 2.0 * bound - 1.0;
        guard = 0;
        while (g(lo) < 0.0 && guard++ < 200) lo = 2.0 * lo;
        if (g(lo) < 0.0) throw BracketFailure("sqrt_linf: no far bracket");
        std::swap(lo, hi);  // keep g(lo) < 0 <= g(hi) ordering below
    }

    // Safeguarded Newton: keep the bracket, bisect when the step escapes.
    double glo = g(lo), ghi = g(hi);
    if (glo > 0.0 || ghi < 0.0) std::swap(lo, hi), std::swap(glo, ghi);
    double u = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double gu = g(u);
        if (gu < 0.0)
            lo = u;
        else
            hi = u;
        const double dphi = detail::sqrt_linf_phi_prime(u, w0, w1);
        double u_next = dphi != 0.0 ? u - gu / dphi : 0.5 * (lo + hi);
        if (!(u_next > std::min(lo, hi) && u_next < std::max(lo, hi))) u_next = 0.5 * (lo + hi);
        if (std::abs(u_next - u) <= 1e-16 * std::max(1.0, std::abs(u)) ||
            std::abs(gu) <= 1e-16 * std::max(1.0, std::abs(rhs))) {
            u = u_next;
            break;
        }
        u = u_next;
    }
    st.u_bar = u;
    st.alpha = std::abs(u);
    return st;
}

}  // namespace resmin
