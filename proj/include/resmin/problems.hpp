#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "resmin/errors.hpp"
#include "resmin/skeleton.hpp"

namespace resmin {

using Matrix = Eigen::MatrixXd;

/// A first-order ODE right-hand side with its Jacobian, an optional domain
/// predicate, and, where known, the exact flow map. Immutable and stateless;
/// evaluation is reentrant.
struct OdeSystem {
    int dim = 0;
    std::string name;
    std::map<std::string, double> params;

    /// f(t, x)
    std::function<Vector(double, const Vector&)> f;
    /// df/dx as an n x n matrix
    std::function<Matrix(double, const Vector&)> jacobian;
    /// true when (t, x) is inside the domain of f
    std::function<bool(double, const Vector&)> in_domain = [](double, const Vector&) { return true; };

    bool has_exact = false;
    /// Exact solution through (t0, y0), evaluated at t. Only meaningful when
    /// has_exact is set.
    std::function<Vector(double t, double t0, const Vector& y0)> exact;
};

/// dx/dt = a*x with a != 0. Exact flow y0*exp(a*(t-t0)).
inline OdeSystem dahlquist(double a) {
    if (a == 0.0) throw ZeroParameter("dahlquist: a must be nonzero");
    OdeSystem s;
    s.dim = 1;
    s.name = "dahlquist";
    s.params["a"] = a;
    s.f = [a](double, const Vector& x) { return Vector::Constant(1, a * x[0]); };
    s.jacobian = [a](double, const Vector&) { return Matrix::Constant(1, 1, a); };
    s.has_exact = true;
    s.exact = [a](double t, double t0, const Vector& y0) {
        return Vector::Constant(1, y0[0] * std::exp(a * (t - t0)));
    };
    return s;
}

/// dx/dt = sqrt(x) on x > 0. Exact flow (sqrt(y0) + (t-t0)/2)^2.
inline OdeSystem sqrt_flow() {
    OdeSystem s;
    s.dim = 1;
    s.name = "sqrt";
    s.f = [](double, const Vector& x) {
        if (!(x[0] > 0.0)) throw DomainError("sqrt flow evaluated at x = " + std::to_string(x[0]));
        return Vector::Constant(1, std::sqrt(x[0]));
    };
    s.jacobian = [](double, const Vector& x) {
        if (!(x[0] > 0.0)) throw DomainError("sqrt flow Jacobian at x = " + std::to_string(x[0]));
        return Matrix::Constant(1, 1, 0.5 / std::sqrt(x[0]));
    };
    s.in_domain = [](double, const Vector& x) { return x[0] > 0.0; };
    s.has_exact = true;
    s.exact = [](double t, double t0, const Vector& y0) {
        const double r = std::sqrt(y0[0]) + 0.5 * (t - t0);
        return Vector::Constant(1, r * r);
    };
    return s;
}

/// Van der Pol oscillator with unit damping:
/// dx1/dt = x2, dx2/dt = -x1 - (x1^2 - 1)*x2.
inline OdeSystem van_der_pol() {
    OdeSystem s;
    s.dim = 2;
    s.name = "vdp";
    s.f = [](double, const Vector& x) {
        Vector out(2);
        out[0] = x[1];
        out[1] = -x[0] - (x[0] * x[0] - 1.0) * x[1];
        return out;
    };
    s.jacobian = [](double, const Vector& x) {
        Matrix j(2, 2);
        j(0, 0) = 0.0;
        j(0, 1) = 1.0;
        j(1, 0) = -1.0 - 2.0 * x[0] * x[1];
        j(1, 1) = -(x[0] * x[0] - 1.0);
        return j;
    };
    return s;
}

/// Simple harmonic oscillator written as a first-order system:
/// dx1/dt = x2, dx2/dt = -x1. Exact flow is a rotation.
inline OdeSystem sho() {
    OdeSystem s;
    s.dim = 2;
    s.name = "sho";
    s.f = [](double, const Vector& x) {
        Vector out(2);
        out[0] = x[1];
        out[1] = -x[0];
        return out;
    };
    s.jacobian = [](double, const Vector&) {
        Matrix j(2, 2);
        j << 0.0, 1.0, -1.0, 0.0;
        return j;
    };
    s.has_exact = true;
    s.exact = [](double t, double t0, const Vector& y0) {
        const double c = std::cos(t - t0), sn = std::sin(t - t0);
        Vector out(2);
        out[0] = y0[0] * c + y0[1] * sn;
        out[1] = -y0[0] * sn + y0[1] * c;
        return out;
    };
    return s;
}

/// Parses a CLI problem spec: "dahlquist:a=3", "sqrt", "vdp", "sho".
inline OdeSystem parse_problem(const std::string& spec) {
    std::string name = spec;
    std::map<std::string, double> kv;
    if (const auto colon = spec.find(':'); colon != std::string::npos) {
        name = spec.substr(0, colon);
        std::string rest = spec.substr(colon + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            const auto comma = rest.find(',', pos);
            const std::string item = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ParseError("problem spec: expected key=value in '" + item + "'");
            try {
                kv[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
            } catch (const std::exception&) {
                throw ParseError("problem spec: bad value in '" + item + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    if (name == "dahlquist") {
        if (!kv.count("a")) throw ParseError("problem spec: dahlquist needs a=<value>");
        return dahlquist(kv.at("a"));
    }
    if (name == "sqrt") return sqrt_flow();
    if (name == "vdp") return van_der_pol();
    if (name == "sho") return sho();
    throw ParseError("unknown problem '" + name + "' (known: dahlquist:a=..., sqrt, vdp, sho)");
}

}  // namespace resmin
