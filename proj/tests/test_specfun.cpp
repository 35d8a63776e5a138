#include <doctest.h>

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>

#include "softguide/specfun.hpp"

using namespace softguide::specfun;

TEST_CASE("K0 and K1 match reference values") {
    // Abramowitz-Stegun table values.
    CHECK(macdonald_k0(0.1) == doctest::Approx(2.4270690247020166).epsilon(1e-14));
    CHECK(macdonald_k0(1.0) == doctest::Approx(0.42102443824070834).epsilon(1e-14));
    CHECK(macdonald_k0(5.0) == doctest::Approx(0.0036910983340425942).epsilon(1e-13));
    CHECK(macdonald_k1(1.0) == doctest::Approx(0.60190723019723457).epsilon(1e-14));
    CHECK(macdonald_k0(800.0) == 0.0);
}

TEST_CASE("K0 agrees with Boost across the range") {
    for (double x = 1e-6; x < 600.0; x *= 1.37) {
        const double ref = boost::math::cyl_bessel_k(0, x);
        CHECK(macdonald_k0(x) == doctest::Approx(ref).epsilon(1e-13));
        CHECK(macdonald_k0_scaled(x) == doctest::Approx(std::exp(x) * ref).epsilon(1e-12));
    }
}

TEST_CASE("1 - x K1(x) has no cancellation at small x") {
    for (double x : {1e-8, 1e-4, 0.01, 0.5, 2.0, 10.0}) {
        const double ref = 1.0 - x * boost::math::cyl_bessel_k(1, x);
        CHECK(one_minus_x_k1(x) == doctest::Approx(ref).epsilon(x < 1e-3 ? 1e-6 : 1e-12));
    }
    // Leading term x^2/2 (log(2/x) - gamma + 1/2).
    const double x = 1e-6;
    CHECK(one_minus_x_k1(x) == doctest::Approx(0.5 * x * x * (std::log(2 / x) - kEulerGamma + 0.5)).epsilon(1e-9));
}

TEST_CASE("Yukawa kernel") {
    const Eigen::Vector3d x(0.1, 0.2, 0.3), y(1.0, -0.5, 0.2);
    const double d = (x - y).norm();
    CHECK(green3(x, y, 0.7) == doctest::Approx(std::exp(-0.7 * d) / (4 * kPi * d)).epsilon(1e-15));
    CHECK(green3(x, y, 0.7) == green3(y, x, 0.7));
    CHECK(Kernel3D(0.7)(x, y) == doctest::Approx(green3(x, y, 0.7)).epsilon(1e-15));
}
