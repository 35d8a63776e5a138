#include "softguide/specfun.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "softguide/errors.hpp"

namespace softguide::specfun {

namespace {

// Power series with the logarithmic term, accurate for 0 < x <= 2.
double k0_series(double x) {
    const double y = 0.25 * x * x;
    double term = 1.0;
    double harmonic = 0.0;
    double i0 = 1.0;
    double rest = 0.0;
    for (int k = 1; k < 40; ++k) {
        term *= y / (static_cast<double>(k) * k);
        harmonic += 1.0 / k;
        i0 += term;
        rest += term * harmonic;
        if (term * (harmonic + 1.0) < 1e-18 * (i0 + rest)) break;
    }
    return -(std::log(0.5 * x) + kEulerGamma) * i0 + rest;
}

// e^x K0(x) = int_0^inf exp(-x (cosh t - 1)) dt, evaluated with the trapezoid rule.
// The integrand is analytic and decays double-exponentially, so the rule converges
// geometrically once the step resolves the Gaussian core of width 1/sqrt(x).
double k0_scaled_integral(double x) {
    const double h = std::min(0.2, 0.5 / std::sqrt(x));
    double sum = 0.5;
    for (int j = 1;; ++j) {
        const double t = j * h;
        const double f = std::exp(-x * (std::cosh(t) - 1.0));
        sum += f;
        if (f < 1e-18 * sum) break;
    }
    return h * sum;
}

// Returns (x ln(x/2) I1(x), (x^2/4) sum_k [psi(k+1) + psi(k+2)] y^k / (k! (k+1)!)) with y = x^2/4,
// so that x K1(x) = 1 + first - second.
std::pair<double, double> k1_series_parts(double x) {
    const double y = 0.25 * x * x;
    double term = 1.0;  // y^k / (k! (k+1)!)
    double psi1 = -kEulerGamma;        // psi(k+1)
    double psi2 = 1.0 - kEulerGamma;   // psi(k+2)
    double i1sum = 0.0, psisum = 0.0;
    for (int k = 0; k < 40; ++k) {
        if (k > 0) {
            term *= y / (static_cast<double>(k) * (k + 1));
            psi1 += 1.0 / k;
            psi2 += 1.0 / (k + 1);
        }
        i1sum += term;
        psisum += (psi1 + psi2) * term;
        if (term < 1e-18 * i1sum) break;
    }
    return {x * std::log(0.5 * x) * 0.5 * x * i1sum, y * psisum};
}

double k1_scaled_integral(double x) {
    const double h = std::min(0.2, 0.5 / std::sqrt(x));
    double sum = 0.5;
    for (int j = 1;; ++j) {
        const double t = j * h;
        const double f = std::cosh(t) * std::exp(-x * (std::cosh(t) - 1.0));
        sum += f;
        if (f < 1e-18 * sum) break;
    }
    return h * sum;
}

}  // namespace

double macdonald_k1(double x) {
    if (!(x > 0.0)) throw DomainError("macdonald_k1: argument must be positive");
    if (x <= 2.0) {
        const auto [a, b] = k1_series_parts(x);
        return (1.0 + a - b) / x;
    }
    if (x > 700.0) return 0.0;
    return std::exp(-x) * k1_scaled_integral(x);
}

double one_minus_x_k1(double x) {
    if (!(x > 0.0)) return 0.0;
    if (x <= 2.0) {
        const auto [a, b] = k1_series_parts(x);
        return b - a;
    }
    return 1.0 - x * macdonald_k1(x);
}

double macdonald_k0(double x) {
    if (!(x > 0.0)) throw DomainError("macdonald_k0: argument must be positive, got " + std::to_string(x));
    if (x <= 2.0) return k0_series(x);
    if (x > 700.0) return 0.0;
    return std::exp(-x) * k0_scaled_integral(x);
}

double macdonald_k0_scaled(double x) {
    if (!(x > 0.0)) throw DomainError("macdonald_k0_scaled: argument must be positive");
    if (x <= 2.0) return std::exp(x) * k0_series(x);
    return k0_scaled_integral(x);
}

Kernel3D::Kernel3D(double k) : kappa(k) {
    if (!(k > 0.0)) throw DomainError("Kernel3D: kappa must be positive");
}

double Kernel3D::operator()(const Eigen::Vector3d& x, const Eigen::Vector3d& y) const { return green3(x, y, kappa); }

double Kernel3D::at_distance(double d) const {
    if (!(d > 0.0)) throw DomainError("Kernel3D: coincident points");
    return std::exp(-kappa * d) / (4.0 * kPi * d);
}

double green3(const Eigen::Vector3d& x, const Eigen::Vector3d& y, double kappa) {
    const double d = (x - y).norm();
    if (!(d > 0.0)) throw DomainError("green3: coincident points");
    return std::exp(-kappa * d) / (4.0 * kPi * d);
}

}  // namespace softguide::specfun
