#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "resmin/dp45.hpp"
#include "resmin/errors.hpp"
#include "resmin/problems.hpp"
#include "resmin/skeleton.hpp"

namespace resmin {

enum class Continuity { c0, c1, unknown };

/// Evaluation contract for a continuous extension: t -> (y, ydot) on a
/// stated interval.
struct CurveEval {
    std::function<std::pair<Vector, Vector>(double)> eval;
    double t_begin = 0.0;
    double t_end = 0.0;
    Continuity continuity = Continuity::unknown;
};

/// Wraps a DenseSolution's continuous extension as a CurveEval.
inline CurveEval dense_curve(const DenseSolution& sol) {
    return CurveEval{[&sol](double t) { return dense_eval(sol, t); }, sol.t0, sol.tf,
                     Continuity::c1};
}

/// Concatenates per-stage evaluators into one (generally only C^0) curve.
/// Node times own the right stage; the final node belongs to the last stage.
inline CurveEval piecewise_curve(std::vector<double> times,
                                 std::vector<std::function<std::pair<Vector, Vector>(double)>> stages) {
    if (times.size() != stages.size() + 1)
        throw ValidationError("piecewise_curve: need one evaluator per stage");
    const double t0 = times.front(), tf = times.back();
    auto eval = [times = std::move(times), stages = std::move(stages), t0, tf](double t) {
        if (t < t0 || t > tf) throw OutOfRange("piecewise_curve: t outside interval");
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
        if (i >= stages.size()) i = stages.size() - 1;
        return stages[i](t);
    };
    return CurveEval{std::move(eval), t0, tf, Continuity::c0};
}

/// Pointwise residual r(t) = ydot(t) - f(t, y(t)).
inline Vector residual_at(const OdeSystem& sys, const CurveEval& curve, double t) {
    if (t < curve.t_begin || t > curve.t_end)
        throw OutOfRange("residual_at: t outside the curve's interval");
    auto [y, ydot] = curve.eval(t);
    if (!sys.in_domain(t, y)) throw DomainError("residual_at: curve left the problem domain");
    return ydot - sys.f(t, y);
}

/// Sampled residual of a curve on the skeleton's refined mesh, with
/// per-stage norms. Per-stage sups are grid maxima of the componentwise
/// max-abs; per-stage L2 values are composite-trapezoid norms on the
/// refined sub-grid.
struct ResidualReport {
    std::vector<double> sample_times;
    std::vector<Vector> samples;            // r(t) per sample
    std::vector<int> sample_stage;          // 1-based owning stage per sample
    std::vector<double> stage_sup;          // per stage: max-abs over owned samples
    std::vector<double> stage_l2;           // per stage: sqrt(trapezoid of |r|^2)
    double global_max = 0.0;                // == max over stage_sup
    double mean_h = 0.0;                    // mean stepsize of the skeleton
    std::vector<std::string> warnings;
};

inline ResidualReport report(const OdeSystem& sys, const CurveEval& curve, const Skeleton& skel,
                             unsigned refine = 8) {
    if (curve.t_begin > skel.t_front() || curve.t_end < skel.t_back())
        throw ValidationError("report: curve does not cover the skeleton interval");
    ResidualReport rep;
    if (refine == 1)
        rep.warnings.push_back("refine = 1 samples only at the nodes; stage sups will be underestimated");

    const auto mesh = refine_mesh(skel.times(), refine);
    rep.sample_times = mesh;
    rep.samples.reserve(mesh.size());
    rep.sample_stage.reserve(mesh.size());

    const int nstages = skel.n_stages();
    rep.stage_sup.assign(nstages, 0.0);
    rep.stage_l2.assign(nstages, 0.0);

    // Sample ownership: points in [t_{i-1}, t_i) belong to stage i; the last
    // node belongs to stage N. This matches right-step evaluation at shared
    // nodes, so every sample is credited to exactly one stage.
    std::size_t mi = 0;
    for (int i = 1; i <= nstages; ++i) {
        const double t_end = skel.times()[i];
        std::vector<double> seg_t;
        std::vector<double> seg_sq;
        while (mi < mesh.size() && (mesh[mi] < t_end || i == nstages)) {
            const double t = mesh[mi];
            Vector r = residual_at(sys, curve, t);
            const double sup = r.lpNorm<Eigen::Infinity>();
            rep.stage_sup[i - 1] = std::max(rep.stage_sup[i - 1], sup);
            seg_t.push_back(t);
            seg_sq.push_back(r.squaredNorm());
            rep.samples.push_back(std::move(r));
            rep.sample_stage.push_back(i);
            ++mi;
        }
        // Close the trapezoid at the stage's right endpoint (sampled with the
        // right-stage convention for interior nodes).
        if (i < nstages) {
            Vector r = residual_at(sys, curve, t_end);
            seg_t.push_back(t_end);
            seg_sq.push_back(r.squaredNorm());
        }
        double integral = 0.0;
        for (std::size_t k = 0; k + 1 < seg_t.size(); ++k)
            integral += 0.5 * (seg_sq[k] + seg_sq[k + 1]) * (seg_t[k + 1] - seg_t[k]);
        rep.stage_l2[i - 1] = std::sqrt(integral);
    }
    rep.global_max = rep.stage_sup.empty()
                         ? 0.0
                         : *std::max_element(rep.stage_sup.begin(), rep.stage_sup.end());
    const auto& times = skel.times();
    rep.mean_h = (times.back() - times.front()) / static_cast<double>(skel.n_stages());
    return rep;
}

/// CSV rows t, r_1..r_n, stage_index for every sample of a report.
inline void write_residual_csv(std::ostream& os, const ResidualReport& rep, bool header = true) {
    const int n = rep.samples.empty() ? 0 : static_cast<int>(rep.samples[0].size());
    if (header) {
        os << "t";
        for (int j = 1; j <= n; ++j) os << ",r" << j;
        os << ",stage_index\n";
    }
    for (std::size_t i = 0; i < rep.samples.size(); ++i) {
        os << detail::fmt17(rep.sample_times[i]);
        for (int j = 0; j < n; ++j) os << "," << detail::fmt17(rep.samples[i][j]);
        os << "," << rep.sample_stage[i] << "\n";
    }
}

// ---------------------------------------------------------------------------
// Work-precision sweep
// ---------------------------------------------------------------------------

struct WorkPrecisionRow {
    int k = 0;
    double rtol = 0.0;
    double atol = 0.0;
    double mean_h = 0.0;
    double max_residual = 0.0;
    bool ok = false;
    std::string error;
};

struct WorkPrecisionResult {
    std::vector<WorkPrecisionRow> rows;
    double slope = 0.0;       // log-log LS fit over the smaller-h half
    int fit_points = 0;
    bool low_confidence = false;  // fewer than 4 points in the fit
    double const4 = 0.0;      // reference curve anchors at the middle sample
    double const5 = 0.0;
};

/// Runs the integrator at tolerances rtol = 2^-k, atol = 2^-(k+1) for
/// k = 1..nsamp, measuring the max-abs dense-output residual on the factor-8
/// refined mesh against the mean stepsize. Failed samples are recorded and
/// skipped.
inline WorkPrecisionResult work_precision(const OdeSystem& sys, double t0, double tf,
                                          const Vector& y0, int nsamp, unsigned refine = 8) {
    if (nsamp < 4) throw ValidationError("work_precision: nsamp must be >= 4");
    WorkPrecisionResult out;
    out.rows.reserve(nsamp);
    for (int k = 1; k <= nsamp; ++k) {
        WorkPrecisionRow row;
        row.k = k;
        row.rtol = std::pow(2.0, -k);
        row.atol = std::pow(2.0, -(k + 1));
        try {
            const DenseSolution sol = integrate(sys, t0, tf, y0, row.rtol, row.atol);
            const Skeleton skel = skeleton_of(sol);
            const auto rep = report(sys, dense_curve(sol), skel, refine);
            row.mean_h = rep.mean_h;
            row.max_residual = rep.global_max;
            row.ok = true;
        } catch (const Error& e) {
            row.error = e.what();
        }
        out.rows.push_back(std::move(row));
    }

    std::vector<std::pair<double, double>> pts;  // (mean_h, err)
    for (const auto& r : out.rows)
        if (r.ok && r.max_residual > 0.0) pts.emplace_back(r.mean_h, r.max_residual);
    std::sort(pts.begin(), pts.end());
    const std::size_t nfit = (pts.size() + 1) / 2;
    out.fit_points = static_cast<int>(nfit);
    out.low_confidence = nfit < 4;
    if (nfit >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < nfit; ++i) {
            const double x = std::log(pts[i].first), y = std::log(pts[i].second);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(nfit);
        const double denom = n * sxx - sx * sx;
        if (denom > 1e-300) {
            out.slope = (n * sxy - sx * sy) / denom;
        } else {
            // All fit samples landed on the same mean stepsize.
            out.low_confidence = true;
        }
    }
    // Anchor the h^4 / h^5 reference curves at the middle sample, when it ran.
    const int mid_k = nsamp / 2;
    for (const auto& r : out.rows) {
        if (r.k == mid_k && r.ok && r.mean_h > 0.0) {
            out.const4 = r.max_residual / std::pow(r.mean_h, 4);
            out.const5 = r.max_residual / std::pow(r.mean_h, 5);
        }
    }
    return out;
}

}  // namespace resmin
