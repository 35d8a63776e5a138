#pragma once

#include <Eigen/Core>

namespace softguide::specfun {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEulerGamma = 0.57721566490153286061;

// Macdonald function K0 for x > 0. Returns 0 for x > 700 where the value underflows.
double macdonald_k0(double x);

// e^x K0(x), safe for large arguments.
double macdonald_k0_scaled(double x);

// K1, used internally for closed-form disc integrals of K0.
double macdonald_k1(double x);

// 1 - x K1(x), evaluated without cancellation for small x.
// It equals q^2 times the integral of K0(q rho) rho d rho over [0, x / q].
double one_minus_x_k1(double x);

// Yukawa kernel e^{-kappa d} / (4 pi d), the integral kernel of (-Delta + kappa^2)^{-1} in R^3.
struct Kernel3D {
    double kappa;

    explicit Kernel3D(double k);
    double operator()(const Eigen::Vector3d& x, const Eigen::Vector3d& y) const;
    double at_distance(double d) const;
};

double green3(const Eigen::Vector3d& x, const Eigen::Vector3d& y, double kappa);

}  // namespace softguide::specfun
