#include <doctest.h>

#include <Eigen/Geometry>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "softguide/criterion.hpp"
#include "softguide/errors.hpp"
#include "softguide/specfun.hpp"

using namespace softguide;

namespace {

// Straightforward adaptive double integral of K0(k |Gamma(s) - Gamma(s')|) - K0(k |s - s'|) over
// [-S, S]^2 for a circle arc of radius R and angle A, using the closed-form chord.
double circle_onaxis_oracle(double R, double A, double k, double S) {
    const double h = 0.5 * R * A;
    auto pos = [&](double s) {
        // Arc in the plane; straight legs tangent at the ends.
        auto arc = [&](double u) { return Eigen::Vector2d(R * std::sin(u / R), R * (1 - std::cos(u / R))); };
        if (std::abs(s) <= h) return arc(s);
        const double e = s > 0 ? h : -h;
        const Eigen::Vector2d t(std::cos(e / R), std::sin(e / R));
        return Eigen::Vector2d(arc(e) + (s - e) * t);
    };
    using boost::math::quadrature::gauss_kronrod;
    auto inner = [&](double s) {
        auto f = [&](double sp) {
            const double d = std::abs(s - sp);
            if (d < 1e-300) return 0.0;
            return specfun::macdonald_k0(k * (pos(s) - pos(sp)).norm()) - specfun::macdonald_k0(k * d);
        };
        double total = 0.0;
        std::vector<double> cuts{-S, -h, s, h, S};
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            if (cuts[i + 1] > cuts[i]) total += gauss_kronrod<double, 31>::integrate(f, cuts[i], cuts[i + 1], 10, 1e-10);
        return total;
    };
    double total = 0.0;
    for (double a : {-S, -h, 0.0, h})
        total += gauss_kronrod<double, 31>::integrate(inner, a, a == h ? S : (a == 0.0 ? h : (a == -h ? 0.0 : -h)), 8, 1e-9);
    return total;
}

}  // namespace

TEST_CASE("on-axis value of a circle arc against a brute-force double integral") {
    const double R = 2.0, A = 1.0, k = 0.8, S = 8.0;
    const FramedCurve fc = build_frames(circle_arc(R, A), -S - 1, S + 1, 0.02);
    const double F = onaxis_F(fc, k, S);
    CHECK(F > 0.0);
    CHECK(F == doctest::Approx(circle_onaxis_oracle(R, A, k, S)).epsilon(1e-6));
}

TEST_CASE("on-axis value is invariant under rigid motions and gauge shifts") {
    const FramedCurve fc = build_frames(helix(0.25, 0.15, 6.0), -20, 20, 0.02);
    const double F = onaxis_F(fc, 0.6, 12.0);
    const Eigen::Matrix3d R = Eigen::AngleAxisd(1.1, Vec3(0.3, -1, 2).normalized()).toRotationMatrix();
    CHECK(onaxis_F(fc.transformed(R, Vec3(3, 1, -2)), 0.6, 12.0) == doctest::Approx(F).epsilon(1e-10));
    CHECK(onaxis_F(fc.gauge_shifted(0.9), 0.6, 12.0) == doctest::Approx(F).epsilon(1e-10));
    // Mirror image (a reflection is allowed for the scalar value).
    const Eigen::Matrix3d P = Eigen::Vector3d(1, 1, -1).asDiagonal();
    CHECK(onaxis_F(fc.transformed(P, Vec3::Zero()), 0.6, 12.0) == doctest::Approx(F).epsilon(1e-10));
}

TEST_CASE("straight pieces cancel numerically inside a nominal support") {
    // Zero curvature tabulated on [-1, 1]: the general quadrature path runs and must cancel.
    const CurveSpec spec = tabulated_curve({-1.0, 0.0, 1.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0});
    const FramedCurve fc = build_frames(spec, -15, 15, 0.02);
    CHECK(std::abs(onaxis_F(fc, 0.7, 10.0)) < 1e-10);
    CHECK(onaxis_F(build_frames(straight_curve(), -15, 15, 0.02), 0.7, 10.0) == 0.0);
}

TEST_CASE("criterion of a bent tube with a wide well") {
    // A cheap configuration: the value must be positive and stable between refinement levels.
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    GroundStateOptions go;
    go.route = "fd";
    go.tol = 1e-3;
    go.max_levels = 2;
    const auto gs = solve_ground_state(V, go);
    const FramedCurve fc = build_frames(bump_bend(0.3, 2.0), -40, 40, 0.02);
    CriterionConfig cfg;
    cfg.order = 6;
    const auto res = evaluate_criterion(fc, V, gs, cfg);
    CHECK(res.value > 0.0);
    CHECK(res.quadrature_error < 0.5 * res.value);
    CHECK(res.level_values.size() == 2);
    CHECK(res.verdict == (res.value - res.quadrature_error - res.truncation_bound > 0 ? Verdict::BoundStateGuaranteed
                                                                                    : Verdict::Inconclusive));
    const std::string csv = criterion_csv(res);
    CHECK(csv.rfind("value,quadrature_error,truncation_bound,verdict,", 0) == 0);
}

TEST_CASE("the criterion refuses a curve that never straightens") {
    const auto V = ProfilePotential::flat_disc(10.0, 1.0);
    GroundStateOptions go;
    go.route = "fd";
    go.tol = 1e-3;
    go.max_levels = 2;
    const auto gs = solve_ground_state(V, go);
    const FramedCurve fc = build_frames(helix(0.1, 0.1), -20, 20, 0.02);
    CHECK_THROWS_AS(evaluate_criterion(fc, V, gs), AssumptionError);
}
