#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "softguide/errors.hpp"
#include "softguide/specfun.hpp"
#include "softguide/transverse.hpp"

using namespace softguide;

TEST_CASE("Bessel oracle: disc depth 10, radius 1") {
    // Frozen from the matching condition solved in extended precision.
    const double k = oracle::disc_kappa0(10.0, 1.0);
    CHECK(-k * k == doctest::Approx(-6.76686551904).epsilon(1e-11));
    CHECK(oracle::disc_depth(1.0, k) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("profiles") {
    const auto disc = ProfilePotential::flat_disc(10.0, 0.3);
    CHECK(disc(0.29, 1.0) == 10.0);
    CHECK(disc(0.31, 1.0) == 0.0);
    CHECK(disc.support_radius() == 0.3);
    CHECK(disc.scaled(0.5).sup_norm() == 5.0);

    const auto ann = ProfilePotential::flat_annulus(4.0, 0.2, 0.5);
    CHECK(ann(0.1, 0.0) == 0.0);
    CHECK(ann(0.3, 0.0) == 4.0);

    const auto ell = ProfilePotential::flat_ellipse(2.0, 0.5, 0.2);
    CHECK(ell.at_xy(0.45, 0.0) == 2.0);
    CHECK(ell.at_xy(0.0, 0.25) == 0.0);
    CHECK_FALSE(ell.is_radial());

    const auto rad = ProfilePotential::radial({0.0, 0.5, 1.0}, {2.0, 4.0, 0.0});
    CHECK(rad(0.25, 0.3) == doctest::Approx(3.0));
    CHECK(rad(0.75, -2.0) == doctest::Approx(2.0));
    CHECK(rad(1.2, 0.0) == 0.0);
    CHECK(rad.sup_norm() == 4.0);

    CHECK_THROWS_AS(ProfilePotential::flat_disc(-1.0, 0.3), InputError);
}

TEST_CASE("polar rule integrates polynomials over the disc exactly") {
    const auto V = ProfilePotential::flat_disc(1.0, 0.7);
    const PolarRule rule = make_polar_rule(V);
    double area = 0.0, second = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        area += rule.w[i];
        second += rule.w[i] * rule.u[i] * rule.u[i];
    }
    CHECK(area == doctest::Approx(specfun::kPi * 0.49).epsilon(1e-13));
    CHECK(second == doctest::Approx(specfun::kPi * std::pow(0.7, 4) / 4).epsilon(1e-13));
}

TEST_CASE("fiber route reproduces the Bessel binding of a narrow disc") {
    const auto V = ProfilePotential::flat_disc(10.0, 0.3);
    const double kf = fiber_kappa0(V, make_polar_rule(V));
    CHECK(kf == doctest::Approx(oracle::disc_kappa0(10.0, 0.3)).epsilon(1e-6));
    // mu_max(kappa0, 0) = 1 by construction; below kappa0 it exceeds 1.
    CHECK(fiber_top_eigenvalue(V, kf, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fiber_top_eigenvalue(V, 0.9 * kf, 0.0) > 1.0);
    CHECK(fiber_top_eigenvalue(V, kf, 0.3) < 1.0);
}

TEST_CASE("finite differences converge to the oracle at coarse tolerance") {
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    GroundStateOptions o;
    o.route = "fd";
    o.tol = 1e-3;
    o.max_levels = 2;
    const auto gs = solve_ground_state(V, o);
    const double k = oracle::disc_kappa0(10.0, 1.0);
    CHECK(gs.route == "fd");
    CHECK(std::abs(gs.eps0 + k * k) < 2e-3);
    CHECK(gs.gap > 0.0);
    // phi0 is positive and normalised on its grid.
    CHECK(gs.phi0.minCoeff() > -1e-8);
    CHECK(gs.phi0.norm() * gs.h == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("ground state options are validated") {
    GroundStateOptions o;
    o.tol = 0.0;
    CHECK_THROWS_AS(solve_ground_state(ProfilePotential::flat_disc(10.0, 1.0), o), InputError);
}

TEST_CASE("ground state CSV round trip") {
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    GroundStateOptions o;
    o.route = "fd";
    o.tol = 1e-3;
    o.max_levels = 2;
    const auto gs = solve_ground_state(V, o);
    const std::string path = "test_ground_state.csv";
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        const std::string s = ground_state_csv(gs);
        std::fwrite(s.data(), 1, s.size(), f);
        std::fclose(f);
    }
    const auto back = load_ground_state_csv(path, V);
    CHECK(back.eps0 == doctest::Approx(gs.eps0).epsilon(1e-14));
    CHECK(back.kappa0 == doctest::Approx(gs.kappa0).epsilon(1e-14));
    std::remove(path.c_str());
}
