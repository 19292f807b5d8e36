#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <string>

#include "resmin/errors.hpp"

namespace resmin {

struct LmOptions {
    double gradient_tol = 1e-10;  // stop when ||J^T rho||_inf falls below this
    double step_tol = 1e-12;      // stop when ||dx|| <= step_tol*(||x|| + step_tol)
    int max_iterations = 500;
    double initial_mu_scale = 1e-3;
};

struct LmResult {
    Eigen::VectorXd x;
    double cost = 0.0;        // 0.5 * ||rho||^2
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

/// Dense-residual / sparse-Jacobian Levenberg-Marquardt with the
/// Madsen-Nielsen damping update. The residual functor may throw DomainError
/// at a trial point; such steps are rejected and the damping is increased.
inline LmResult lm_minimize(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                            const std::function<Eigen::SparseMatrix<double>(const Eigen::VectorXd&)>& jac,
                            Eigen::VectorXd x0, const LmOptions& opts = {}) {
    using SpMat = Eigen::SparseMatrix<double>;
    LmResult out;
    out.x = std::move(x0);
    const Eigen::Index n = out.x.size();

    Eigen::VectorXd rho = residual(out.x);  // DomainError at x0 propagates
    double cost = 0.5 * rho.squaredNorm();

    SpMat J = jac(out.x);
    SpMat A = SpMat(J.transpose()) * J;
    Eigen::VectorXd g = J.transpose() * rho;

    SpMat id(n, n);
    id.setIdentity();

    double max_diag = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) max_diag = std::max(max_diag, A.coeff(i, i));
    double mu = opts.initial_mu_scale * std::max(max_diag, 1e-300);
    double nu = 2.0;

    Eigen::SimplicialLDLT<SpMat> solver;

    for (out.iterations = 0; out.iterations < opts.max_iterations; ++out.iterations) {
        out.gradient_norm = g.lpNorm<Eigen::Infinity>();
        if (out.gradient_norm <= opts.gradient_tol) {
            out.converged = true;
            out.message = "gradient below tolerance";
            break;
        }

        // Recompute the full factorization: the numeric pattern of J^T J can
        // change between iterates when entries cancel exactly.
        SpMat M = A + mu * id;
        solver.compute(M);
        if (solver.info() != Eigen::Success) {
            mu *= 10.0;
            nu = 2.0;
            continue;
        }
        Eigen::VectorXd dx = solver.solve(-g);

        if (dx.norm() <= opts.step_tol * (out.x.norm() + opts.step_tol)) {
            out.converged = true;
            out.message = "step below tolerance";
            break;
        }

        bool domain_reject = false;
        Eigen::VectorXd x_new = out.x + dx;
        Eigen::VectorXd rho_new;
        double cost_new = 0.0;
        try {
            rho_new = residual(x_new);
            cost_new = 0.5 * rho_new.squaredNorm();
        } catch (const DomainError&) {
            domain_reject = true;
        }

        const double predicted = 0.5 * dx.dot(mu * dx - g);
        const double gain = domain_reject ? -1.0 : (cost - cost_new) / std::max(predicted, 1e-300);
        if (!domain_reject && gain > 0.0 && std::isfinite(cost_new)) {
            out.x = std::move(x_new);
            rho = std::move(rho_new);
            cost = cost_new;
            J = jac(out.x);
            A = SpMat(J.transpose()) * J;
            g = J.transpose() * rho;
            const double shrink = 1.0 - std::pow(2.0 * gain - 1.0, 3);
            mu *= std::max(1.0 / 3.0, shrink);
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
            if (!std::isfinite(mu)) {
                out.message = "damping overflow";
                break;
            }
        }
    }
    if (!out.converged && out.message.empty()) out.message = "iteration limit reached";
    out.cost = cost;
    out.gradient_norm = g.lpNorm<Eigen::Infinity>();
    return out;
}

}  // namespace resmin
