// Acceptance gate: one pass/fail line per criterion, with the measured numbers and runtime.
// Usage: acceptance [--cli PATH] [N ...]   (no numbers runs every criterion)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "softguide/bs_spectrum.hpp"
#include "softguide/cli.hpp"
#include "softguide/config.hpp"
#include "softguide/criterion.hpp"
#include "softguide/csv.hpp"
#include "softguide/direct3d.hpp"
#include "softguide/geometry.hpp"
#include "softguide/parallel.hpp"
#include "softguide/specfun.hpp"
#include "softguide/transverse.hpp"

using namespace softguide;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit;  // seconds
    std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 6) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

std::string cli_path;

// Shared fixtures.
ProfilePotential bump_well() { return ProfilePotential::flat_disc(10.0, 0.3); }
ProfilePotential annular_well() { return ProfilePotential::radial({0.0, 0.3, 0.6, 0.9, 1.2}, {1.0, 1.0, 6.0, 1.0, 0.0}); }

FramedCurve frames_for(const CurveSpec& spec, double extra = 40.0) {
    const double s0 = spec.effective_support(1e-14);
    const double S = (std::isfinite(s0) ? s0 : 0.0) + extra;
    return build_frames(spec, -S, S, 0.02);
}

double kappa_for_onaxis() {
    const ProfilePotential V = bump_well();
    return fiber_kappa0(V, make_polar_rule(V));
}

double onaxis_window(const CurveSpec& spec, double kappa0) {
    return spec.effective_support(1e-13) + 12.0 / kappa0;
}

// ------------------------------------------------------------------------------------------------

Outcome transverse_oracle() {
    const double V0 = 10.0, a = 1.0;
    const double k = oracle::disc_kappa0(V0, a);
    GroundStateOptions o;
    o.route = "fd";
    o.tol = 1e-5;
    const auto gs = solve_ground_state(ProfilePotential::flat_disc(V0, a), o);
    const double diff = std::abs(gs.eps0 + k * k);
    return {diff <= 1e-5, "fd eps0 " + fmt(gs.eps0, 12) + " vs Bessel " + fmt(-k * k, 12) + ", |diff| " + fmt(diff, 3)};
}

Outcome fiber_consistency() {
    Outcome out{true, ""};
    const std::vector<std::pair<std::string, ProfilePotential>> wells{{"disc", ProfilePotential::flat_disc(10.0, 1.0)},
                                                                      {"annular", annular_well()}};
    for (const auto& [name, V] : wells) {
        const auto t0 = Clock::now();
        GroundStateOptions o;
        o.route = "fd";
        o.tol = 1e-5;
        if (V.kind() != ProfilePotential::Kind::FlatBottom) o.subsamples = 8;
        const auto gs = solve_ground_state(V, o);
        const double mu = fiber_top_eigenvalue(V, gs.kappa0, 0.0);
        const double t = since(t0);
        const bool ok = std::abs(mu - 1.0) <= 2e-3 && t < 60.0;
        out.pass = out.pass && ok;
        out.detail += (out.detail.empty() ? "" : "; ") + name + " mu_max " + fmt(mu, 8) + " (" + fmt(t, 3) + " s)";
    }
    return out;
}

Outcome monotonicity() {
    Outcome out{true, ""};
    const std::vector<std::pair<std::string, ProfilePotential>> wells{{"disc", bump_well()}, {"annular", annular_well()}};
    for (const auto& [name, V] : wells) {
        double prev = std::numeric_limits<double>::infinity(), worst_bound = -1e300;
        bool decreasing = true;
        for (int i = 0; i < 8; ++i) {
            const double kappa = 0.2 * std::pow(1.5, i);
            const double mu = fiber_top_eigenvalue(V, kappa, 0.0);
            decreasing = decreasing && mu < prev;
            worst_bound = std::max(worst_bound, mu - V.sup_norm() / (kappa * kappa));
            prev = mu;
        }
        const bool ok = decreasing && worst_bound <= 1e-6;
        out.pass = out.pass && ok;
        out.detail += (out.detail.empty() ? "" : "; ") + name + (decreasing ? " decreasing" : " NOT decreasing") +
                      ", max(mu - |V|/kappa^2) " + fmt(worst_bound, 3);
    }
    return out;
}

Outcome straight_nullity() {
    const ProfilePotential V = bump_well();
    const CurveSpec spec = straight_curve();
    const FramedCurve fc = frames_for(spec);
    const auto gs = solve_ground_state(V);
    const auto c = evaluate_criterion(fc, V, gs);
    const auto b = solve_binding(fc, V, gs, std::sqrt(V.sup_norm()));
    const bool ok = std::abs(c.value) <= c.quadrature_error && c.quadrature_error <= 1e-8 && !b;
    return {ok, "value " + fmt(c.value, 3) + ", quadrature_error " + fmt(c.quadrature_error, 3) + ", binding " +
                    (b ? "found kappa* " + fmt(b->kappa_star) : std::string("none"))};
}

Outcome bump_soundness() {
    const ProfilePotential V = bump_well();
    const CurveSpec spec = bump_bend(0.5, 2.0);
    const FramedCurve fc = frames_for(spec);
    const auto gs = solve_ground_state(V);
    const auto c = evaluate_criterion(fc, V, gs);
    const auto b = solve_binding(fc, V, gs, std::sqrt(V.sup_norm()));
    const auto d = direct_binding(fc, V, gs);
    const bool verdict = c.verdict == Verdict::BoundStateGuaranteed;
    const bool bound = b && b->kappa_star > gs.kappa0;
    const bool below = d.energies[0] < d.reference;
    const double rel = b ? std::abs(d.binding - b->binding) / b->binding : 1.0;
    return {verdict && bound && below && rel <= 0.05,
            "criterion " + fmt(c.value) + " (" + to_string(c.verdict) + "), kappa* " + (b ? fmt(b->kappa_star, 8) : "none") +
                " > kappa0 " + fmt(gs.kappa0, 8) + ", E-eps0: BS " + (b ? fmt(-b->binding, 6) : "none") + " direct " +
                fmt(-d.binding, 6) + " (rel " + fmt(rel, 3) + ", refinement delta " + fmt(d.refinement_delta, 3) + ")"};
}

Outcome onaxis_inequality() {
    const double k0 = kappa_for_onaxis();
    const std::vector<std::pair<std::string, CurveSpec>> curves{
        {"circle arc", circle_arc(2.0, 1.0)}, {"bump bend", bump_bend(0.5, 2.0)}, {"helix", helix(0.2, 0.1, 10.0)},
        {"straight", straight_curve()}};
    Outcome out{true, ""};
    for (const auto& [name, spec] : curves) {
        const auto t0 = Clock::now();
        const FramedCurve fc = frames_for(spec);
        const double F = onaxis_F(fc, k0, onaxis_window(spec, k0));
        const double t = since(t0);
        const bool ok = (spec.kind == "straight" ? F == 0.0 : F > 0.0) && t < 30.0;
        out.pass = out.pass && ok;
        out.detail += (out.detail.empty() ? "" : "; ") + name + " " + fmt(F) + " (" + fmt(t, 3) + " s)";
    }
    return out;
}

Outcome shrinking_radius() {
    const CurveSpec spec = bump_bend(0.5, 2.0);
    const FramedCurve fc = frames_for(spec);
    Outcome out{true, ""};
    for (double a : {0.5, 0.3, 0.2, 0.1}) {
        // Depth from the Bessel condition, then secant steps on the solver's own eps0.
        double d0 = oracle::disc_depth(a, 1.0);
        auto eps = [&](double depth) { return solve_ground_state(ProfilePotential::flat_disc(depth, a)); };
        TransverseGroundState g0 = eps(d0);
        double d1 = d0 * (1.0 + 1e-3);
        TransverseGroundState g1 = eps(d1);
        for (int it = 0; it < 6 && std::abs(g1.eps0 + 1.0) > 1e-4; ++it) {
            const double d2 = d1 - (g1.eps0 + 1.0) * (d1 - d0) / (g1.eps0 - g0.eps0);
            d0 = d1;
            g0 = g1;
            d1 = d2;
            g1 = eps(d1);
        }
        const ProfilePotential V = ProfilePotential::flat_disc(d1, a);
        const auto c = evaluate_criterion(fc, V, g1);
        const bool held = std::abs(g1.eps0 + 1.0) <= 1e-3;
        const bool ok = held && (a > 0.3 || c.value > 0.0);
        out.pass = out.pass && ok;
        out.detail += (out.detail.empty() ? "" : "; ") + std::string("a=") + fmt(a) + " depth " + fmt(d1, 8) + " eps0 " +
                      fmt(g1.eps0, 8) + " value " + fmt(c.value, 5) + " +- " + fmt(c.quadrature_error, 2);
    }
    return out;
}

Outcome geometry_integrity() {
    double drift = 0.0, roundtrip = 0.0, chord_excess = -1e300;
    const std::vector<CurveSpec> specs{circle_arc(2.0, 1.0), helix(0.2, 0.1), helix(0.3, 0.4, 12.0), bump_bend(0.5, 2.0)};
    for (const CurveSpec& spec : specs) {
        const FramedCurve fc = build_frames(spec, -30.0, 30.0, 0.02);
        drift = std::max(drift, fc.orthonormality_drift());
        const auto& g = fc.grid();
        for (std::size_t i = 0; i < g.size(); i += 7)
            for (std::size_t j = i + 1; j < g.size(); j += 13)
                chord_excess = std::max(chord_excess, (fc.frames()[j].point - fc.frames()[i].point).norm() - (g[j] - g[i]));
    }
    // Closed-form chords: circle 2R sin(|ds| / 2R); helix 2 rho^2 (1 - cos w ds) + c^2 w^2 ds^2.
    {
        const double R = 2.0, A = 1.0;
        const FramedCurve fc = build_frames(circle_arc(R, A), -5.0, 5.0, 0.02);
        for (double s1 = -0.5 * R * A; s1 <= 0.5 * R * A; s1 += 0.13)
            for (double s2 = s1; s2 <= 0.5 * R * A; s2 += 0.17) {
                const double exact = 2.0 * R * std::sin(std::abs(s2 - s1) / (2.0 * R));
                roundtrip = std::max(roundtrip, std::abs((fc.frame_at(s2).point - fc.frame_at(s1).point).norm() - exact));
            }
    }
    {
        const double gm = 0.3, tau = 0.4, w = std::hypot(gm, tau), rho = gm / (w * w), c = tau / (w * w);
        const FramedCurve fc = build_frames(helix(gm, tau), -20.0, 20.0, 0.02);
        for (double s1 = -19.0; s1 <= 19.0; s1 += 1.3)
            for (double s2 = s1; s2 <= 19.0; s2 += 1.7) {
                const double ds = s2 - s1;
                const double exact = std::sqrt(2 * rho * rho * (1 - std::cos(w * ds)) + c * c * w * w * ds * ds);
                roundtrip = std::max(roundtrip, std::abs((fc.frame_at(s2).point - fc.frame_at(s1).point).norm() - exact));
            }
        // Tube coordinates through the nearest-point inversion.
        const TubeLocator loc(fc, 0.45);
        std::mt19937_64 gen(7);
        std::uniform_real_distribution<double> us(-15, 15), ur(0, 0.4), ut(-3.1, 3.1);
        for (int i = 0; i < 100; ++i) {
            const double s = us(gen), r = ur(gen), th = ut(gen);
            const TubePoint p = tube_point(fc, s, r, th);
            const TubeCoord q = loc.locate(p.x);
            roundtrip = std::max({roundtrip, std::abs(q.s - s), std::abs(q.r - r),
                                  r * std::abs(std::remainder(q.theta - th, 2 * specfun::kPi))});
        }
    }
    const bool ok = drift < 1e-8 && roundtrip < 1e-6 && chord_excess <= 1e-12;
    return {ok, "orthonormality drift " + fmt(drift, 3) + ", closed-form round trips " + fmt(roundtrip, 3) +
                    ", max(|chord| - |ds|) " + fmt(chord_excess, 3)};
}

Outcome hardwall_trend_check() {
    const CurveSpec spec = bump_bend(0.5, 2.0);
    const FramedCurve fc = frames_for(spec);
    const auto rows = hardwall_trend(fc, ProfilePotential::flat_disc(1.0, 1.0), {5.0, 15.0, 50.0});
    bool mono = true;
    std::string d;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0) mono = mono && rows[i].lambda1 > rows[i - 1].lambda1;
        d += (d.empty() ? "" : "; ") + std::string("eps ") + fmt(rows[i].eps) + " lambda1+eps " + fmt(rows[i].lambda1, 8) +
             " gap " + fmt(rows[i].gap, 4);
    }
    return {mono && rows.back().gap > 0.0, d};
}

// CSV output of criteria 4 to 6 at a given worker count.
std::string determinism_bundle(int threads) {
    set_thread_count(threads);
    std::string out;
    const ProfilePotential V = bump_well();
    const auto gs = solve_ground_state(V);
    out += ground_state_csv(gs);
    for (const CurveSpec& spec : {straight_curve(), bump_bend(0.5, 2.0)}) {
        const FramedCurve fc = frames_for(spec);
        out += criterion_csv(evaluate_criterion(fc, V, gs));
        const auto b = solve_binding(fc, V, gs, std::sqrt(V.sup_norm()));
        out += b ? binding_trace_csv(*b) : std::string("none\n");
    }
    out += direct_csv(direct_binding(frames_for(bump_bend(0.5, 2.0)), V, gs));
    const double k0 = gs.kappa0;
    for (const CurveSpec& spec : {circle_arc(2.0, 1.0), bump_bend(0.5, 2.0), helix(0.2, 0.1, 10.0), straight_curve()})
        out += csv::row({onaxis_F(frames_for(spec), k0, onaxis_window(spec, k0))});
    return out;
}

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream o;
    o << in.rdbuf();
    return o.str();
}

Outcome determinism() {
    const int many = 4;
    const std::string a = determinism_bundle(1), b = determinism_bundle(many);
    set_thread_count(1);
    Outcome out{a == b, "in-process CSV bundle (" + std::to_string(a.size()) + " bytes) threads 1 vs " +
                            std::to_string(many) + (a == b ? ": identical" : ": DIFFERENT")};
    if (!cli_path.empty()) {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "softguide_acceptance_c10";
        fs::create_directories(dir);
        const fs::path cfg = dir / "straight.json";
        std::ofstream(cfg) << R"({"curve": {"kind": "straight"}, "potential": {"kind": "flat_disc", "flat_disc": {"depth": 10, "radius": 0.3}}})";
        bool same = true;
        for (const char* cmd : {"criterion", "bind"}) {
            for (int t : {1, many}) {
                const std::string line = "\"" + cli_path + "\" " + cmd + " --config \"" + cfg.string() + "\" --out \"" +
                                         (dir / ("t" + std::to_string(t))).string() + "\" --threads " + std::to_string(t) +
                                         " > /dev/null";
                if (std::system(line.c_str()) != 0) same = false;
            }
            for (const char* f : {"criterion.csv", "onaxis.csv", "binding.csv"}) {
                const fs::path p1 = dir / "t1" / f, p2 = dir / ("t" + std::to_string(many)) / f;
                if (fs::exists(p1) || fs::exists(p2)) same = same && read_all(p1.string()) == read_all(p2.string());
            }
        }
        out.pass = out.pass && same;
        out.detail += std::string("; CLI criterion/bind CSV ") + (same ? "identical" : "DIFFERENT");
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc)
            cli_path = argv[++i];
        else
            only.push_back(std::atoi(arg.c_str()));
    }
    set_thread_count(1);

    const std::vector<Criterion> all{
        {1, "transverse oracle", 30, transverse_oracle},
        {2, "fiber consistency", 120, fiber_consistency},
        {3, "monotonicity", 60, monotonicity},
        {4, "straight nullity", 120, straight_nullity},
        {5, "bump soundness", 900, bump_soundness},
        {6, "on-axis inequality", 120, onaxis_inequality},
        {7, "shrinking radius", 1200, shrinking_radius},
        {8, "geometry integrity", 60, geometry_integrity},
        {9, "hard-wall trend", 1200, hardwall_trend_check},
        {10, "determinism", 1e9, determinism},
    };

    int failures = 0;
    for (const Criterion& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double t = since(t0);
        const bool pass = o.pass && t < c.limit;
        failures += pass ? 0 : 1;
        std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
                  << fmt(t, 4) << " s" << (c.limit < 1e8 ? " of " + fmt(c.limit) + " s" : std::string()) << "]"
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
