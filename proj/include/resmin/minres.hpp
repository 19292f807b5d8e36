#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "resmin/errors.hpp"
#include "resmin/lm.hpp"
#include "resmin/problems.hpp"
#include "resmin/skeleton.hpp"

namespace resmin {

enum class Scheme { midpoint, trapezoid };
enum class ResidualNorm { l2, stage_linf };

inline const char* to_string(ResidualNorm n) {
    return n == ResidualNorm::l2 ? "l2" : "stage-linf";
}
inline const char* to_string(Scheme s) {
    return s == Scheme::midpoint ? "midpoint" : "trapezoid";
}

/// Discretization and optimizer settings for the per-stage minimization.
struct TranscriptionConfig {
    int subintervals = 2000;  // M
    Scheme scheme = Scheme::midpoint;
    double gradient_tol = 1e-10;
    double step_tol = 1e-12;
    int max_iterations = 500;
    std::vector<int> p_ladder = {2, 4, 8, 16, 32, 64, 128};
    double switch_threshold = 0.02;  // fraction of alpha separating bang from singular
    double degenerate_alpha = 1e-15;
    bool throw_on_nonconvergence = true;
    /// Newton endgame solving u_k = s*alpha exactly, applied when the ladder
    /// lands on a scalar all-bang constant-sign stage.
    bool polish_minimax = true;
};

struct StageDiagnostics {
    bool converged = false;
    int iterations = 0;         // LM iterations summed over all solves
    double gradient_norm = 0.0; // final LM gradient norm
    int final_p = 2;
    bool polished = false;
    std::string message;
};

/// Per-stage minimal-residual result. States are the grid X_0..X_M with the
/// endpoints pinned to the skeleton; u holds the residual at the M
/// collocation points.
struct StageSolution {
    Stage stage;
    ResidualNorm norm = ResidualNorm::l2;
    Scheme scheme = Scheme::midpoint;
    int subintervals = 0;
    std::vector<double> grid_times;         // M+1
    std::vector<Vector> states;             // M+1, endpoints exact
    std::vector<double> collocation_times;  // M (interval midpoints)
    std::vector<Vector> u;                  // M residual samples
    std::vector<Vector> lambda;             // -u (l2 only)
    std::vector<Vector> v;                  // u/alpha (stage-linf only)
    std::vector<std::vector<double>> switch_times;  // per component (stage-linf only)
    double objective = 0.0;  // l2: 0.5*sum h|u|^2; stage-linf: alpha
    double alpha = 0.0;      // stage-linf only
    double max_abs_u = 0.0;  // grid max of componentwise |u|
    StageDiagnostics diagnostics;

    /// Discrete stage L2 norm sqrt(sum h |u|^2).
    double l2_norm() const {
        double acc = 0.0;
        const double h = (stage.t_end - stage.t_start) / subintervals;
        for (const auto& uk : u) acc += h * uk.squaredNorm();
        return std::sqrt(acc);
    }
};

namespace detail {

/// Stage transcription with the controls eliminated: u_k is the defect of
/// the chosen two-point scheme on interval k, a function of the interior
/// states only. Endpoints are never variables.
class StageNlp {
public:
    StageNlp(const OdeSystem& sys, const Stage& stage, const TranscriptionConfig& cfg)
        : sys_(sys), stage_(stage), scheme_(cfg.scheme), M_(cfg.subintervals), n_(sys.dim),
          h_((stage.t_end - stage.t_start) / cfg.subintervals) {
        if (M_ < 2) throw ValidationError("transcription needs at least 2 subintervals");
        if (!(h_ > 0.0)) throw ValidationError("stage duration must be positive");
    }

    int M() const { return M_; }
    int n() const { return n_; }
    double h() const { return h_; }
    int n_vars() const { return (M_ - 1) * n_; }

    double node_time(int k) const { return stage_.t_start + k * h_; }
    double collocation_time(int k) const { return stage_.t_start + (k + 0.5) * h_; }

    Vector state(int k, const Eigen::VectorXd& xint) const {
        if (k == 0) return stage_.z_start;
        if (k == M_) return stage_.z_end;
        return xint.segment(static_cast<Eigen::Index>(k - 1) * n_, n_);
    }

    Eigen::VectorXd chord_init() const {
        Eigen::VectorXd x(n_vars());
        for (int k = 1; k < M_; ++k) {
            const double s = static_cast<double>(k) / M_;
            x.segment(static_cast<Eigen::Index>(k - 1) * n_, n_) =
                (1.0 - s) * stage_.z_start + s * stage_.z_end;
        }
        return x;
    }

    /// Stacked residual samples u_0..u_{M-1}; DomainError is re-thrown with
    /// the violating grid index attached.
    Eigen::VectorXd controls(const Eigen::VectorXd& xint) const {
        Eigen::VectorXd u(static_cast<Eigen::Index>(M_) * n_);
        for (int k = 0; k < M_; ++k) {
            const Vector xk = state(k, xint);
            const Vector xk1 = state(k + 1, xint);
            Vector fval;
            try {
                if (scheme_ == Scheme::midpoint) {
                    fval = sys_.f(collocation_time(k), 0.5 * (xk + xk1));
                } else {
                    fval = 0.5 * (sys_.f(node_time(k), xk) + sys_.f(node_time(k + 1), xk1));
                }
            } catch (const DomainError& e) {
                throw DomainError("grid interval " + std::to_string(k) + ": " + e.what());
            }
            u.segment(static_cast<Eigen::Index>(k) * n_, n_) = (xk1 - xk) / h_ - fval;
        }
        return u;
    }

    /// d u / d X_interior as a sparse (M n) x ((M-1) n) matrix.
    Eigen::SparseMatrix<double> control_jacobian(const Eigen::VectorXd& xint) const {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(M_) * 2 * n_ * n_);
        for (int k = 0; k < M_; ++k) {
            const Vector xk = state(k, xint);
            const Vector xk1 = state(k + 1, xint);
            Matrix dk, dk1;  // d u_k / d X_k, d u_k / d X_{k+1}
            if (scheme_ == Scheme::midpoint) {
                const Matrix fx = sys_.jacobian(collocation_time(k), 0.5 * (xk + xk1));
                dk = -Matrix::Identity(n_, n_) / h_ - 0.5 * fx;
                dk1 = Matrix::Identity(n_, n_) / h_ - 0.5 * fx;
            } else {
                dk = -Matrix::Identity(n_, n_) / h_ - 0.5 * sys_.jacobian(node_time(k), xk);
                dk1 = Matrix::Identity(n_, n_) / h_ - 0.5 * sys_.jacobian(node_time(k + 1), xk1);
            }
            for (int i = 0; i < n_; ++i) {
                const int row = k * n_ + i;
                if (k >= 1)
                    for (int j = 0; j < n_; ++j) trips.emplace_back(row, (k - 1) * n_ + j, dk(i, j));
                if (k + 1 <= M_ - 1)
                    for (int j = 0; j < n_; ++j) trips.emplace_back(row, k * n_ + j, dk1(i, j));
            }
        }
        Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(M_) * n_, n_vars());
        J.setFromTriplets(trips.begin(), trips.end());
        return J;
    }

private:
    const OdeSystem& sys_;
    const Stage& stage_;
    Scheme scheme_;
    int M_;
    int n_;
    double h_;
};

inline void fill_solution_grid(StageSolution& sol, const StageNlp& nlp,
                               const Eigen::VectorXd& xint) {
    const int M = nlp.M(), n = nlp.n();
    sol.grid_times.resize(M + 1);
    sol.states.resize(M + 1);
    for (int k = 0; k <= M; ++k) {
        sol.grid_times[k] = nlp.node_time(k);
        sol.states[k] = nlp.state(k, xint);
    }
    sol.grid_times[M] = sol.stage.t_end;  // exact, not t_start + M*h
    sol.collocation_times.resize(M);
    for (int k = 0; k < M; ++k) sol.collocation_times[k] = nlp.collocation_time(k);
    const Eigen::VectorXd u = nlp.controls(xint);
    sol.u.resize(M);
    sol.max_abs_u = 0.0;
    for (int k = 0; k < M; ++k) {
        sol.u[k] = u.segment(static_cast<Eigen::Index>(k) * n, n);
        sol.max_abs_u = std::max(sol.max_abs_u, sol.u[k].lpNorm<Eigen::Infinity>());
    }
}

}  // namespace detail

/// Minimizes the squared stage-L2 norm of the residual over interpolants of
/// one stage, by unconstrained nonlinear least squares in the interior grid
/// states. The reported objective is 0.5*sum_k h |u_k|^2.
inline StageSolution minimize_l2_stage(const OdeSystem& sys, const Stage& stage,
                                       const TranscriptionConfig& cfg = {}) {
    detail::StageNlp nlp(sys, stage, cfg);
    const double sqrt_h = std::sqrt(nlp.h());

    LmOptions lopt;
    lopt.gradient_tol = cfg.gradient_tol;
    lopt.step_tol = cfg.step_tol;
    lopt.max_iterations = cfg.max_iterations;
    auto res = lm_minimize(
        [&](const Eigen::VectorXd& x) { return (sqrt_h * nlp.controls(x)).eval(); },
        [&](const Eigen::VectorXd& x) {
            return Eigen::SparseMatrix<double>(sqrt_h * nlp.control_jacobian(x));
        },
        nlp.chord_init(), lopt);

    StageSolution sol;
    sol.stage = stage;
    sol.norm = ResidualNorm::l2;
    sol.scheme = cfg.scheme;
    sol.subintervals = cfg.subintervals;
    detail::fill_solution_grid(sol, nlp, res.x);
    sol.objective = res.cost;
    sol.lambda.resize(sol.u.size());
    for (std::size_t k = 0; k < sol.u.size(); ++k) sol.lambda[k] = -sol.u[k];
    sol.diagnostics.converged = res.converged;
    sol.diagnostics.iterations = res.iterations;
    sol.diagnostics.gradient_norm = res.gradient_norm;
    sol.diagnostics.message = res.message;
    if (!res.converged && cfg.throw_on_nonconvergence)
        throw NonConvergence("minimize_l2_stage: " + res.message + " after " +
                             std::to_string(res.iterations) + " iterations, |g| = " +
                             std::to_string(res.gradient_norm));
    return sol;
}

struct ComponentBangBang {
    double bang_fraction = 0.0;  // fraction of points with |u_j| >= (1-thr)*alpha
    int switch_count = 0;        // sign changes outside the singular band
    std::vector<double> switch_times;
    bool has_singular_interval = false;  // >= 5 consecutive points inside the band
    bool totally_singular = false;
};

struct BangBangDiagnostics {
    std::vector<ComponentBangBang> components;
    double alpha = 0.0;
};

inline BangBangDiagnostics bangbang_check_linf(const StageSolution& sol,
                                               double switch_threshold = 0.02);

namespace detail {

/// Newton endgame for scalar all-bang stages: solve u_k(X) = s*alpha for the
/// interior states and alpha jointly. This is the stationary system of the
/// discrete minimax problem when every collocation point is active, which is
/// the generic situation for n = 1. Returns false when Newton fails, in
/// which case the caller keeps the ladder result.
inline bool polish_scalar_minimax(const StageNlp& nlp, Eigen::VectorXd& xint, double& alpha,
                                  double sign) {
    const int M = nlp.M();
    Eigen::VectorXd x = xint;
    double a = alpha;

    const auto residual = [&](const Eigen::VectorXd& xv, double av) {
        Eigen::VectorXd g = nlp.controls(xv);
        for (int k = 0; k < M; ++k) g[k] -= sign * av;
        return g;
    };

    Eigen::VectorXd g;
    try {
        g = residual(x, a);
    } catch (const DomainError&) {
        return false;
    }
    double gnorm = g.lpNorm<Eigen::Infinity>();
    double x_scale = std::max(1.0, x.size() ? x.lpNorm<Eigen::Infinity>() : 1.0);
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() *
                       (x_scale / nlp.h() + std::abs(a) + 1.0);

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    for (int it = 0; it < 40 && gnorm > tol; ++it) {
        Eigen::SparseMatrix<double> Ju = nlp.control_jacobian(x);
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(Ju.nonZeros()) + M);
        for (int c = 0; c < Ju.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator jt(Ju, c); jt; ++jt)
                trips.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()),
                                   jt.value());
        for (int k = 0; k < M; ++k) trips.emplace_back(k, M - 1, -sign);
        Eigen::SparseMatrix<double> Jg(M, M);
        Jg.setFromTriplets(trips.begin(), trips.end());
        lu.compute(Jg);
        if (lu.info() != Eigen::Success) return false;
        Eigen::VectorXd delta = lu.solve(-g);
        if (!delta.allFinite()) return false;
        Eigen::VectorXd x_new = x + delta.head(M - 1);
        const double a_new = a + delta[M - 1];
        Eigen::VectorXd g_new;
        try {
            g_new = residual(x_new, a_new);
        } catch (const DomainError&) {
            return false;
        }
        const double gnorm_new = g_new.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(gnorm_new) || gnorm_new > 0.9 * gnorm + tol) {
            // No contraction; accept only if already essentially converged.
            if (gnorm <= 16.0 * tol) break;
            return false;
        }
        x = std::move(x_new);
        a = a_new;
        g = std::move(g_new);
        gnorm = gnorm_new;
    }
    if (gnorm > 16.0 * tol || !(a > 0.0)) return false;
    xint = std::move(x);
    alpha = a;
    return true;
}

}  // namespace detail

/// Minimizes the stage-Linf norm (max over collocation points and components
/// of |u|) by p-norm continuation warm-started from the L2 solution, with a
/// Newton endgame on scalar constant-sign stages. alpha is the grid max of
/// the reported residual field.
inline StageSolution minimize_linf_stage(const OdeSystem& sys, const Stage& stage,
                                         const TranscriptionConfig& cfg = {}) {
    detail::StageNlp nlp(sys, stage, cfg);
    const double sqrt_h = std::sqrt(nlp.h());
    const int M = nlp.M(), n = nlp.n();

    TranscriptionConfig warm_cfg = cfg;
    warm_cfg.throw_on_nonconvergence = false;
    StageSolution warm = minimize_l2_stage(sys, stage, warm_cfg);

    StageSolution sol;
    sol.stage = stage;
    sol.norm = ResidualNorm::stage_linf;
    sol.scheme = cfg.scheme;
    sol.subintervals = cfg.subintervals;
    sol.diagnostics = warm.diagnostics;

    Eigen::VectorXd xint(nlp.n_vars());
    for (int k = 1; k < M; ++k)
        xint.segment(static_cast<Eigen::Index>(k - 1) * n, n) = warm.states[k];

    double alpha = warm.max_abs_u;
    if (alpha < cfg.degenerate_alpha) {
        // Degenerate stage: skeleton already on an exact trajectory.
        detail::fill_solution_grid(sol, nlp, xint);
        for (auto& uk : sol.u) uk.setZero();
        sol.max_abs_u = 0.0;
        sol.alpha = 0.0;
        sol.objective = 0.0;
        sol.v.assign(M, Vector::Zero(n));
        sol.diagnostics.converged = true;
        sol.diagnostics.message = "degenerate stage (alpha below threshold)";
        return sol;
    }

    LmOptions lopt;
    lopt.gradient_tol = cfg.gradient_tol;
    lopt.step_tol = cfg.step_tol;
    lopt.max_iterations = cfg.max_iterations;

    bool ladder_converged = sol.diagnostics.converged;
    for (int p : cfg.p_ladder) {
        if (p <= 2) continue;  // the L2 solve is the p = 2 rung
        const double sigma = std::max(nlp.controls(xint).lpNorm<Eigen::Infinity>(), 1e-300);
        const double half_p = 0.5 * p;
        auto weighted = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXd u = nlp.controls(x);
            Eigen::VectorXd rho(u.size());
            for (Eigen::Index i = 0; i < u.size(); ++i) {
                const double w = std::abs(u[i]) / sigma;
                rho[i] = sqrt_h * sigma * std::copysign(std::pow(w, half_p), u[i]);
            }
            return rho;
        };
        auto weighted_jac = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXd u = nlp.controls(x);
            Eigen::VectorXd d(u.size());
            for (Eigen::Index i = 0; i < u.size(); ++i) {
                const double w = std::abs(u[i]) / sigma;
                d[i] = sqrt_h * half_p * std::pow(w, half_p - 1.0);
            }
            Eigen::SparseMatrix<double> J = nlp.control_jacobian(x);
            return Eigen::SparseMatrix<double>(d.asDiagonal() * J);
        };
        auto res = lm_minimize(weighted, weighted_jac, xint, lopt);
        xint = res.x;
        sol.diagnostics.iterations += res.iterations;
        sol.diagnostics.gradient_norm = res.gradient_norm;
        sol.diagnostics.final_p = p;
        ladder_converged = res.converged;
    }

    detail::fill_solution_grid(sol, nlp, xint);
    alpha = sol.max_abs_u;
    sol.diagnostics.converged = ladder_converged;
    sol.diagnostics.message = ladder_converged ? "p-ladder converged" : "p-ladder hit limits";

    // Scalar all-bang constant-sign stages admit an exact Newton endgame.
    if (cfg.polish_minimax && n == 1 && alpha > 0.0) {
        double min_abs = alpha;
        bool same_sign = true;
        const double s0 = sol.u[0][0] >= 0.0 ? 1.0 : -1.0;
        for (int k = 0; k < M; ++k) {
            min_abs = std::min(min_abs, std::abs(sol.u[k][0]));
            if (sol.u[k][0] * s0 < 0.0) same_sign = false;
        }
        if (same_sign && min_abs >= 0.5 * alpha) {
            Eigen::VectorXd xp = xint;
            double ap = alpha;
            if (detail::polish_scalar_minimax(nlp, xp, ap, s0)) {
                detail::fill_solution_grid(sol, nlp, xp);
                alpha = sol.max_abs_u;
                sol.diagnostics.polished = true;
                sol.diagnostics.converged = true;
                sol.diagnostics.message = "minimax stationary point (Newton)";
            }
        }
    }

    sol.alpha = alpha;
    sol.objective = alpha;
    sol.v.resize(M);
    for (int k = 0; k < M; ++k)
        sol.v[k] = alpha > 0.0 ? Vector(sol.u[k] / alpha) : Vector(Vector::Zero(n));
    const auto bb = bangbang_check_linf(sol, cfg.switch_threshold);
    sol.switch_times.resize(bb.components.size());
    for (std::size_t j = 0; j < bb.components.size(); ++j)
        sol.switch_times[j] = bb.components[j].switch_times;
    if (!sol.diagnostics.converged && cfg.throw_on_nonconvergence)
        throw NonConvergence("minimize_linf_stage: " + sol.diagnostics.message + " after " +
                             std::to_string(sol.diagnostics.iterations) + " iterations");
    return sol;
}

inline StageSolution minimize_stage(const OdeSystem& sys, const Stage& stage, ResidualNorm norm,
                                    const TranscriptionConfig& cfg = {}) {
    return norm == ResidualNorm::l2 ? minimize_l2_stage(sys, stage, cfg)
                                    : minimize_linf_stage(sys, stage, cfg);
}

// ---------------------------------------------------------------------------
// Skeleton-level driver
// ---------------------------------------------------------------------------

/// Worker cap for stage-parallel runs: RESMIN_THREADS when set, otherwise
/// the hardware concurrency.
inline unsigned thread_budget() {
    if (const char* env = std::getenv("RESMIN_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

struct SkeletonMinimization {
    ResidualNorm norm = ResidualNorm::l2;
    std::vector<StageSolution> stages;      // index i-1 = stage i
    std::vector<std::string> stage_errors;  // empty when the stage solved
    double total_objective = 0.0;           // sum of per-stage objectives
    double global_max_residual = 0.0;       // max over per-stage grid maxima
    /// Observed jump of u across each interior node (next stage's first
    /// sample minus previous stage's last); for the L2 norm the adjoint jump
    /// is the negative of this.
    std::vector<Vector> node_jumps;
    bool all_converged = true;
};

/// Solves every stage independently (in parallel, capped by RESMIN_THREADS).
/// Per-stage failures are collected and the run continues.
inline SkeletonMinimization minimize_skeleton(const OdeSystem& sys, const Skeleton& skel,
                                              ResidualNorm norm,
                                              const TranscriptionConfig& cfg = {}) {
    const int N = skel.n_stages();
    SkeletonMinimization out;
    out.norm = norm;
    out.stages.resize(N);
    out.stage_errors.assign(N, "");

    TranscriptionConfig stage_cfg = cfg;
    stage_cfg.throw_on_nonconvergence = false;

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= N) return;
            try {
                out.stages[i] = minimize_stage(sys, skel.stage(i + 1), norm, stage_cfg);
            } catch (const Error& e) {
                out.stage_errors[i] = e.what();
            }
        }
    };
    const unsigned nt = std::min<unsigned>(thread_budget(), static_cast<unsigned>(N));
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nt);
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (int i = 0; i < N; ++i) {
        if (!out.stage_errors[i].empty()) {
            out.all_converged = false;
            continue;
        }
        const auto& st = out.stages[i];
        out.total_objective += st.objective;
        out.global_max_residual = std::max(out.global_max_residual, st.max_abs_u);
        if (!st.diagnostics.converged) out.all_converged = false;
    }
    for (int i = 0; i + 1 < N; ++i) {
        if (out.stage_errors[i].empty() && out.stage_errors[i + 1].empty() &&
            !out.stages[i].u.empty() && !out.stages[i + 1].u.empty())
            out.node_jumps.push_back(out.stages[i + 1].u.front() - out.stages[i].u.back());
        else
            out.node_jumps.push_back(Vector());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimality-structure diagnostics
// ---------------------------------------------------------------------------

struct AdjointDiagnostics {
    double max_defect = 0.0;
    std::vector<double> defects;  // per interior collocation point
};

/// Checks the first-order optimality structure of an L2 stage solution: with
/// lambda = -u, the adjoint equation dlambda/dt = -f_x^T lambda should hold
/// up to discretization error. Returns the max finite-difference defect,
/// normalized by 1 + |lambda|. Diagnostic only; never throws on a bad fit.
inline AdjointDiagnostics adjoint_check_l2(const StageSolution& sol, const OdeSystem& sys) {
    AdjointDiagnostics diag;
    const int M = static_cast<int>(sol.u.size());
    if (M < 3) return diag;
    for (int k = 1; k + 1 < M; ++k) {
        const Vector lam_prev = -sol.u[k - 1];
        const Vector lam = -sol.u[k];
        const Vector lam_next = -sol.u[k + 1];
        const double dt = sol.collocation_times[k + 1] - sol.collocation_times[k - 1];
        const Vector dlam = (lam_next - lam_prev) / dt;
        const Vector x_mid = 0.5 * (sol.states[k] + sol.states[k + 1]);
        const Matrix fx = sys.jacobian(sol.collocation_times[k], x_mid);
        const double defect = (dlam + fx.transpose() * lam).norm() / (1.0 + lam.norm());
        diag.defects.push_back(defect);
        diag.max_defect = std::max(diag.max_defect, defect);
    }
    return diag;
}

/// Classifies the normalized control of a stage-Linf solution per component:
/// bang fraction, switching structure, and singular intervals. For scalar
/// problems a totally singular component signals a failed solve (the theory
/// rules it out), which is reported, not thrown.
inline BangBangDiagnostics bangbang_check_linf(const StageSolution& sol,
                                               double switch_threshold) {
    BangBangDiagnostics diag;
    diag.alpha = sol.alpha;
    const int M = static_cast<int>(sol.u.size());
    if (M == 0) return diag;
    const int n = static_cast<int>(sol.u[0].size());
    const double band = switch_threshold * sol.alpha;
    for (int j = 0; j < n; ++j) {
        ComponentBangBang c;
        int bang = 0, run = 0, max_run = 0;
        double prev_sign = 0.0;
        double prev_time = sol.collocation_times.front();
        for (int k = 0; k < M; ++k) {
            const double uj = sol.u[k][j];
            if (sol.alpha > 0.0 && std::abs(uj) >= (1.0 - switch_threshold) * sol.alpha) ++bang;
            if (std::abs(uj) < band) {
                ++run;
                max_run = std::max(max_run, run);
                continue;
            }
            run = 0;
            const double s = uj > 0.0 ? 1.0 : -1.0;
            if (prev_sign != 0.0 && s != prev_sign) {
                ++c.switch_count;
                c.switch_times.push_back(0.5 * (prev_time + sol.collocation_times[k]));
            }
            prev_sign = s;
            prev_time = sol.collocation_times[k];
        }
        c.bang_fraction = static_cast<double>(bang) / M;
        c.has_singular_interval = max_run >= 5;
        c.totally_singular = (prev_sign == 0.0);
        diag.components.push_back(std::move(c));
    }
    return diag;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// CSV rows t, x_1..x_n, u_1..u_n at the collocation points (states averaged
/// onto the midpoints).
inline void write_stage_csv(std::ostream& os, const StageSolution& sol, bool header = true) {
    const int n = sol.states.empty() ? 0 : static_cast<int>(sol.states[0].size());
    if (header) {
        os << "t";
        for (int j = 1; j <= n; ++j) os << ",x" << j;
        for (int j = 1; j <= n; ++j) os << ",u" << j;
        os << "\n";
    }
    for (std::size_t k = 0; k < sol.u.size(); ++k) {
        const Vector x_mid = 0.5 * (sol.states[k] + sol.states[k + 1]);
        os << detail::fmt17(sol.collocation_times[k]);
        for (int j = 0; j < n; ++j) os << "," << detail::fmt17(x_mid[j]);
        for (int j = 0; j < n; ++j) os << "," << detail::fmt17(sol.u[k][j]);
        os << "\n";
    }
}

/// Compact JSON object with the grids, residual field, and diagnostics.
inline std::string stage_solution_json(const StageSolution& sol) {
    std::string s = "{";
    s += "\"stage\": " + std::to_string(sol.stage.index);
    s += ", \"norm\": \"" + std::string(to_string(sol.norm)) + "\"";
    s += ", \"scheme\": \"" + std::string(to_string(sol.scheme)) + "\"";
    s += ", \"subintervals\": " + std::to_string(sol.subintervals);
    s += ", \"t_start\": " + detail::fmt17(sol.stage.t_start);
    s += ", \"t_end\": " + detail::fmt17(sol.stage.t_end);
    s += ", \"objective\": " + detail::fmt17(sol.objective);
    s += ", \"alpha\": " + detail::fmt17(sol.alpha);
    s += ", \"max_abs_u\": " + detail::fmt17(sol.max_abs_u);
    s += ", \"l2_norm\": " + detail::fmt17(sol.l2_norm());
    s += ", \"converged\": " + std::string(sol.diagnostics.converged ? "true" : "false");
    s += ", \"iterations\": " + std::to_string(sol.diagnostics.iterations);
    s += ", \"gradient_norm\": " + detail::fmt17(sol.diagnostics.gradient_norm);
    s += ", \"polished\": " + std::string(sol.diagnostics.polished ? "true" : "false");
    auto vec_field = [&](const char* name, const std::vector<Vector>& vs) {
        s += ", \"" + std::string(name) + "\": [";
        for (std::size_t k = 0; k < vs.size(); ++k) {
            s += k ? ", [" : "[";
            for (Eigen::Index j = 0; j < vs[k].size(); ++j)
                s += (j ? ", " : "") + detail::fmt17(vs[k][j]);
            s += "]";
        }
        s += "]";
    };
    s += ", \"t\": [";
    for (std::size_t k = 0; k < sol.collocation_times.size(); ++k)
        s += (k ? ", " : "") + detail::fmt17(sol.collocation_times[k]);
    s += "]";
    vec_field("u", sol.u);
    s += "}";
    return s;
}

}  // namespace resmin
