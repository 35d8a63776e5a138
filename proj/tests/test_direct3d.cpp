#include <doctest.h>

#include <cmath>

#include "softguide/direct3d.hpp"
#include "softguide/specfun.hpp"

using namespace softguide;

namespace {

// Lowest eigenvalue of the 1D cell-centred second difference on n cells of width h, with the
// Dirichlet condition on the outer faces: eigenvectors sin(k pi (i + 1/2) / n).
double dirichlet_1d(int n, double h, int k = 1) { return (2.0 - 2.0 * std::cos(k * specfun::kPi / n)) / (h * h); }

}  // namespace

TEST_CASE("empty box matches the separable discrete Laplacian") {
    GridOptions g;
    g.h = 0.1;
    const SampledPotential3D p = empty_grid(Box3{Vec3(0, 0, 0), Vec3(1.0, 0.8, 0.6)}, g);
    REQUIRE(p.nx == 10);
    REQUIRE(p.ny == 8);
    REQUIRE(p.nz == 6);
    EigenSolveOptions o;
    o.tol = 1e-10;
    o.max_iter = 2000;
    const DirectEigen e = lowest_eigenvalues(p, 2, o);
    const double ex = dirichlet_1d(10, 0.1), ey = dirichlet_1d(8, 0.1), ez = dirichlet_1d(6, 0.1);
    CHECK(e.values[0] == doctest::Approx(ex + ey + ez).epsilon(1e-9));
    // Second level: the longest side takes its second mode.
    const double ex2 = dirichlet_1d(10, 0.1, 2);
    CHECK(e.values[1] == doctest::Approx(ex2 + ey + ez).epsilon(1e-8));
}

TEST_CASE("mirror plane halves the box with a Neumann face") {
    GridOptions g;
    g.h = 0.1;
    g.mirror_x = true;
    // The full box [-1, 1] in x reduces to [0, 1]; the symmetric ground state is unchanged.
    const SampledPotential3D p = empty_grid(Box3{Vec3(-1, 0, 0), Vec3(1, 0.8, 0.6)}, g);
    CHECK(p.box.lo.x() == 0.0);
    EigenSolveOptions o;
    o.tol = 1e-10;
    o.max_iter = 2000;
    const DirectEigen e = lowest_eigenvalues(p, 1, o);
    CHECK(e.values[0] == doctest::Approx(dirichlet_1d(20, 0.1) + dirichlet_1d(8, 0.1) + dirichlet_1d(6, 0.1))
                             .epsilon(1e-9));
}

TEST_CASE("tube locator on a straight line") {
    const FramedCurve fc = build_frames(straight_curve(), -5, 5, 0.02);
    const TubeLocator loc(fc, 0.5);
    const TubePoint tp = tube_point(fc, 1.3, 0.2, 0.7);
    const TubeCoord c = loc.locate(tp.x);
    CHECK(c.s == doctest::Approx(1.3).epsilon(1e-10));
    CHECK(c.r == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(c.theta == doctest::Approx(0.7).epsilon(1e-10));
    // Far from the line there is nothing within reach.
    CHECK(std::isinf(loc.locate(tube_point(fc, 0.0, 3.0, 0.0).x).r));
}

TEST_CASE("sampled potential of a straight disc tube") {
    const FramedCurve fc = build_frames(straight_curve(), -3, 3, 0.02);
    const auto V = ProfilePotential::flat_disc(2.0, 0.3);
    GridOptions g;
    g.h = 0.05;
    g.subsamples = 0;
    const Frame f = fc.frame_at(0.0);
    const Vec3 c = f.point;
    const Box3 box{c - Vec3::Constant(1.0), c + Vec3::Constant(1.0)};
    const SampledPotential3D p = sample_potential(fc, V, box, g);
    CHECK(p.tube_nodes > 0);
    double vmax = 0.0;
    for (double v : p.values) vmax = std::max(vmax, v);
    CHECK(vmax == 2.0);
}
