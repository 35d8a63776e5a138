#pragma once

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>

namespace softguide::oracle {

// Matching condition of the disc well depth V0, radius a at binding kappa:
// q J1(q a) K0(kappa a) = kappa K1(kappa a) J0(q a), q^2 = V0 - kappa^2.
inline double disc_matching(double V0, double a, double kappa) {
    using boost::math::cyl_bessel_j;
    using boost::math::cyl_bessel_k;
    const double q = std::sqrt(V0 - kappa * kappa);
    return q * cyl_bessel_j(1, q * a) * cyl_bessel_k(0, kappa * a) -
           kappa * cyl_bessel_k(1, kappa * a) * cyl_bessel_j(0, q * a);
}

// Ground state binding kappa0 of the flat disc; the ground state has q a below the first zero of J0.
inline double disc_kappa0(double V0, double a) {
    const double lo = std::sqrt(std::max(0.0, V0 - std::pow(2.404825557695773 / a, 2))) + 1e-12;
    std::uintmax_t it = 200;
    const auto r = boost::math::tools::toms748_solve([&](double k) { return disc_matching(V0, a, k); }, lo,
                                                     std::sqrt(V0) * (1 - 1e-12), boost::math::tools::eps_tolerance<double>(50), it);
    return 0.5 * (r.first + r.second);
}

// Depth of the disc of radius a with ground state -kappa^2.
inline double disc_depth(double a, double kappa) {
    const double j0 = 2.404825557695773;
    const double lo = kappa * kappa + 1e-9, hi = kappa * kappa + std::pow(j0 / a, 2) * (1 - 1e-12);
    std::uintmax_t it = 200;
    const auto r = boost::math::tools::toms748_solve([&](double V0) { return disc_matching(V0, a, kappa); }, lo, hi,
                                                     boost::math::tools::eps_tolerance<double>(50), it);
    return 0.5 * (r.first + r.second);
}

}  // namespace softguide::oracle
