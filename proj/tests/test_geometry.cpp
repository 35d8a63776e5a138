#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "softguide/direct3d.hpp"
#include "softguide/errors.hpp"
#include "softguide/geometry.hpp"
#include "softguide/specfun.hpp"

using namespace softguide;

TEST_CASE("straight curve keeps the initial frame") {
    const FramedCurve fc = build_frames(straight_curve(), -5.0, 5.0, 0.1);
    for (std::size_t i = 0; i < fc.size(); ++i) {
        const Frame& f = fc.frames()[i];
        CHECK((f.point - Vec3(fc.grid()[i] - fc.s_min(), 0, 0)).norm() < 1e-12);
        CHECK((f.m1 - Vec3::UnitY()).norm() < 1e-15);
    }
    CHECK(fc.is_straight());
}

TEST_CASE("planar bump stays in its plane and turns by the integrated curvature") {
    const double H = 0.5, W = 2.0;
    const FramedCurve fc = build_frames(bump_bend(H, W), -30.0, 30.0, 0.02);
    double zmax = 0.0;
    for (const Frame& f : fc.frames()) zmax = std::max(zmax, std::abs(f.point.z()));
    CHECK(zmax < 1e-12);
    const Vec3 t0 = fc.frames().front().t, t1 = fc.frames().back().t;
    const double turn = std::acos(std::clamp(t0.dot(t1), -1.0, 1.0));
    CHECK(turn == doctest::Approx(H * W * std::sqrt(2 * specfun::kPi)).epsilon(1e-8));
    CHECK(fc.orthonormality_drift() < 1e-12);
}

TEST_CASE("circle arc chords follow 2R sin(ds / 2R), including across the arc ends") {
    const double R = 1.5, A = 2.0;
    const FramedCurve fc = build_frames(circle_arc(R, A), -4.0, 4.0, 0.01);
    for (double s = -0.5 * R * A + 0.01; s < 0.5 * R * A; s += 0.1) {
        const double ds = 0.5 * R * A - s;
        const double chord = (fc.frame_at(0.5 * R * A).point - fc.frame_at(s).point).norm();
        CHECK(chord == doctest::Approx(2 * R * std::sin(ds / (2 * R))).epsilon(1e-8));
    }
    // Beyond the arc the legs are straight with the turned tangent.
    const double turn = std::acos(fc.frame_at(-4.0).t.dot(fc.frame_at(4.0).t));
    CHECK(turn == doctest::Approx(A).epsilon(1e-8));
}

TEST_CASE("rigid motions and gauge shifts leave chords and tube distances unchanged") {
    const FramedCurve fc = build_frames(helix(0.3, 0.2, 8.0), -10.0, 10.0, 0.02);
    const Eigen::Matrix3d R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    const FramedCurve moved = fc.transformed(R, Vec3(1, -2, 0.5));
    const FramedCurve gauged = fc.gauge_shifted(0.4);
    for (double s1 : {-9.0, -2.5, 0.3, 4.0})
        for (double s2 : {-3.0, 1.1, 8.0}) {
            const double d = (fc.frame_at(s1).point - fc.frame_at(s2).point).norm();
            CHECK((moved.frame_at(s1).point - moved.frame_at(s2).point).norm() == doctest::Approx(d).epsilon(1e-12));
            const double dt = (tube_point(fc, s1, 0.2, 1.0).x - tube_point(fc, s2, 0.1, -2.0).x).norm();
            const double dg = (tube_point(gauged, s1, 0.2, 1.0 + 0.4).x - tube_point(gauged, s2, 0.1, -2.0 + 0.4).x).norm();
            CHECK(dg == doctest::Approx(dt).epsilon(1e-12));
        }
}

TEST_CASE("effective support") {
    CHECK(straight_curve().effective_support() == 0.0);
    CHECK(circle_arc(2.0, 1.0).effective_support() == doctest::Approx(1.0));
    const double s0 = bump_bend(0.5, 2.0).effective_support(1e-14);
    CHECK(0.5 * std::exp(-0.5 * s0 * s0 / 4.0) <= 1.0001e-14);
    CHECK(std::isinf(helix(0.2, 0.1).effective_support()));
}

TEST_CASE("assumption checks") {
    const CurveSpec tight = circle_arc(0.5, 1.0);
    const FramedCurve fc = build_frames(tight, -5, 5, 0.02);
    CHECK(validate_assumptions(fc, tight, 0.3).all_ok());
    const auto bad = validate_assumptions(fc, tight, 0.6);
    CHECK_FALSE(bad.local_ok);
    // A near-closed loop brings distant arcs together.
    const CurveSpec loop = circle_arc(1.0, 2 * specfun::kPi - 0.2);
    const FramedCurve fl = build_frames(loop, -10, 10, 0.02);
    CHECK_FALSE(validate_assumptions(fl, loop, 0.3).all_ok());
}

TEST_CASE("tube coordinates round trip on a circle arc") {
    const CurveSpec spec = circle_arc(2.0, 1.5);
    const FramedCurve fc = build_frames(spec, -6.0, 6.0, 0.02);
    const TubeLocator loc(fc, 0.5);
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> us(-5.0, 5.0), ur(0.0, 0.45), ut(-3.1, 3.1);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double s = us(gen), r = ur(gen), th = ut(gen);
        const TubeCoord c = loc.locate(tube_point(fc, s, r, th).x);
        worst = std::max({worst, std::abs(c.s - s), std::abs(c.r - r),
                          r * std::abs(std::remainder(c.theta - th, 2 * specfun::kPi))});
    }
    CHECK(worst < 1e-6);
    CHECK(std::isinf(loc.locate(Vec3(0, 30, 0)).r));
}

TEST_CASE("nearest point is ambiguous where two arcs come close") {
    const CurveSpec spec = circle_arc(1.0, 2 * specfun::kPi - 0.3);
    const FramedCurve fc = build_frames(spec, -6.0, 6.0, 0.02);
    const TubeLocator loc(fc, 0.6);
    // The two legs leave the loop almost on top of each other.
    const Vec3 x = 0.5 * (fc.frame_at(-4.0).point + fc.frame_at(4.0).point);
    CHECK_THROWS_AS(loc.locate(x), GeometryError);
}

TEST_CASE("tabulated curves stop frame steps at their nodes") {
    const CurveSpec spec = tabulated_curve({-1.0, -0.37, 0.41, 1.0}, {0.0, 0.8, 0.8, 0.0}, {0.0, 0.3, 0.3, 0.0});
    const FramedCurve fc = build_frames(spec, -5.0, 5.0, 0.02);
    CHECK(fc.orthonormality_drift() < 1e-9);
    CHECK_THROWS_AS(tabulated_curve({0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}), InputError);
}

TEST_CASE("frames CSV has one row per sample") {
    const FramedCurve fc = build_frames(bump_bend(0.2, 1.0), -2.0, 2.0, 0.05);
    const std::string csv = frames_csv(fc);
    CHECK(csv.rfind("s,Gx,Gy,Gz,", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == fc.size() + 1);
    CHECK(csv.find('\r') == std::string::npos);
}
