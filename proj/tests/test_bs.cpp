#include <doctest.h>

#include "softguide/bs_spectrum.hpp"

using namespace softguide;

namespace {

TransverseGroundState coarse_state(const ProfilePotential& V) {
    // A coarse finite-difference state keeps the tests quick.
    GroundStateOptions o;
    o.route = "fd";
    o.tol = 1e-3;
    o.max_levels = 2;
    return solve_ground_state(V, o);
}

}  // namespace

TEST_CASE("straight tube: the discrete symbol sits at 1 at its own threshold") {
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    const auto gs = coarse_state(V);
    const FramedCurve fc = build_frames(straight_curve(), -20, 20, 0.02);
    BSQuadConfig cfg;
    cfg.ds = 0.2;
    const BSOperator op(fc, V, gs.kappa0, 8.0, cfg);
    const double k0 = op.discrete_kappa0();
    CHECK(k0 == doctest::Approx(gs.kappa0).epsilon(2e-3));
    CHECK(op.symbol_top(k0) == doctest::Approx(1.0).epsilon(1e-9));
    // The symbol decreases in kappa.
    CHECK(op.symbol_top(1.01 * k0) < 1.0);
    CHECK(op.symbol_top(0.99 * k0) > 1.0);
}

TEST_CASE("BS matrix is symmetric and its top eigenvalue decreases in kappa") {
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    const auto gs = coarse_state(V);
    const FramedCurve fc = build_frames(bump_bend(0.5, 2.0), -20, 20, 0.02);
    BSQuadConfig cfg;
    cfg.ds = 0.2;
    cfg.modes = 2;
    const BSOperator op(fc, V, gs.kappa0, 8.0, cfg);
    const BSMatrix m1 = op.assemble(1.02 * gs.kappa0);
    const BSMatrix m2 = op.assemble(1.10 * gs.kappa0);
    CHECK((m1.A - m1.A.transpose()).norm() < 1e-12 * m1.A.norm());
    CHECK(top_eigenvalue(m1) > top_eigenvalue(m2));
}

TEST_CASE("straight tube has no bound state") {
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    const auto gs = coarse_state(V);
    const FramedCurve fc = build_frames(straight_curve(), -30, 30, 0.02);
    BSQuadConfig cfg;
    cfg.ds = 0.2;
    CHECK_FALSE(solve_binding(fc, V, gs, std::sqrt(10.0), cfg).has_value());
}
