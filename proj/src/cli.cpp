#include "softguide/cli.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <random>
#include <sstream>

#include "softguide/csv.hpp"
#include "softguide/errors.hpp"
#include "softguide/specfun.hpp"

namespace softguide {

namespace {

namespace fs = std::filesystem;

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

void prepare_output(const RunConfig& cfg, const std::string& command) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw InputError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    csv::write_file(out_path(cfg, command + ".config.json"), cfg.resolved.dump(2) + "\n");
}

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(name + ": " + e.what(), e.exit_code());
    } catch (const std::bad_alloc&) {
        throw Error(name + ": out of memory", 4);
    }
}

void log_lines(RunContext& ctx, const std::string& prefix, const std::vector<std::string>& lines) {
    if (!ctx.verbose) return;
    for (const auto& l : lines) ctx.log << prefix << l << "\n";
}

struct Inputs {
    CurveSpec spec;
    FramedCurve frames;
    ProfilePotential V;
};

Inputs inputs(const RunConfig& cfg) {
    return stage("frames", [&] {
        CurveSpec spec = make_curve(cfg.curve);
        FramedCurve fc = make_frames(cfg.curve, spec);
        return Inputs{spec, std::move(fc), make_potential(cfg.potential)};
    });
}

TransverseGroundState ground_state(const RunConfig& cfg, const ProfilePotential& V, RunContext& ctx) {
    auto gs = stage("transverse", [&] { return solve_ground_state(V, cfg.transverse); });
    log_lines(ctx, "[transverse] ", gs.log);
    return gs;
}

double onaxis_window(const RunConfig& cfg, const CurveSpec& spec, double kappa0) {
    if (cfg.criterion.S > 0.0) return cfg.criterion.S;
    const double s0 = spec.effective_support(cfg.criterion.support_eps);
    if (!std::isfinite(s0)) throw AssumptionError("the curvature does not decay; the criterion needs a bend of finite extent");
    return s0 + 12.0 / kappa0;
}

void frames_command(const RunConfig& cfg, RunContext& ctx) {
    Inputs in = inputs(cfg);
    csv::write_file(out_path(cfg, "frames.csv"), frames_csv(in.frames));
    const double a = in.V.support_radius();
    const AssumptionReport rep = stage("frames", [&] { return validate_assumptions(in.frames, in.spec, a); });
    ctx.out << "frames: " << in.frames.size() << " samples on [" << in.frames.s_min() << ", " << in.frames.s_max()
            << "], orthonormality drift " << csv::num(in.frames.orthonormality_drift()) << "\n"
            << rep.summary() << "\n";

    // Round trip of random tube points through the nearest-point inversion.
    if (cfg.roundtrip_samples > 0 && rep.all_ok()) {
        const double S = std::min(-in.frames.s_min(), in.frames.s_max()) - 2.0 * a;
        std::mt19937_64 gen(cfg.seed);
        std::uniform_real_distribution<double> us(-S, S), ur(0.0, 0.95 * a), ut(-specfun::kPi, specfun::kPi);
        const TubeLocator loc(in.frames, 1.5 * a);
        double worst = 0.0;
        std::string rows = csv::header({"s", "r", "theta", "s_found", "r_found", "theta_found"});
        for (int i = 0; i < cfg.roundtrip_samples; ++i) {
            const double s = us(gen), r = ur(gen), th = ut(gen);
            const TubeCoord c = stage("frames", [&] { return loc.locate(tube_point(in.frames, s, r, th).x); });
            double dth = std::remainder(c.theta - th, 2.0 * specfun::kPi);
            if (r < 1e-9) dth = 0.0;
            worst = std::max({worst, std::abs(c.s - s), std::abs(c.r - r), r * std::abs(dth)});
            rows += csv::row({s, r, th, c.s, c.r, c.theta});
        }
        csv::write_file(out_path(cfg, "roundtrip.csv"), rows);
        ctx.out << "roundtrip: " << cfg.roundtrip_samples << " points, max error " << csv::num(worst) << "\n";
    }
    if (!rep.all_ok()) throw Error("frames: assumption validation failed: " + rep.summary(), 3);
}

void transverse_command(const RunConfig& cfg, RunContext& ctx) {
    const ProfilePotential V = make_potential(cfg.potential);
    const auto gs = ground_state(cfg, V, ctx);
    csv::write_file(out_path(cfg, "ground_state.csv"), ground_state_csv(gs));
    ctx.out << "eps0 = " << csv::num(gs.eps0) << "  kappa0 = " << csv::num(gs.kappa0) << "  route = " << gs.route
            << "  error_estimate = " << csv::num(gs.error_estimate) << "\n";
}

void criterion_command(const RunConfig& cfg, RunContext& ctx) {
    Inputs in = inputs(cfg);
    const auto gs = ground_state(cfg, in.V, ctx);
    const auto res = stage("criterion", [&] { return evaluate_criterion(in.frames, in.V, gs, cfg.criterion); });
    csv::write_file(out_path(cfg, "criterion.csv"), criterion_csv(res));
    const double S = stage("criterion", [&] { return onaxis_window(cfg, in.spec, gs.kappa0); });
    const double F = stage("criterion", [&] { return onaxis_F(in.frames, gs.kappa0, S, cfg.criterion); });
    csv::write_file(out_path(cfg, "onaxis.csv"),
                    csv::header({"onaxis_F", "kappa0", "S"}) + csv::row({F, gs.kappa0, S}));
    ctx.out << "criterion = " << csv::num(res.value) << " +- " << csv::num(res.quadrature_error)
            << " (truncation <= " << csv::num(res.truncation_bound) << ")  verdict = " << to_string(res.verdict)
            << "\nonaxis_F = " << csv::num(F) << "\n";
}

double kappa_max(const RunConfig& cfg, const ProfilePotential& V) {
    return cfg.kappa_max > 0.0 ? cfg.kappa_max : std::sqrt(V.sup_norm());
}

void bind_command(const RunConfig& cfg, RunContext& ctx) {
    Inputs in = inputs(cfg);
    const auto gs = ground_state(cfg, in.V, ctx);
    const auto res = stage("bind", [&] { return solve_binding(in.frames, in.V, gs, kappa_max(cfg, in.V), cfg.binding); });
    std::string body = "bound,kappa0,kappa0_discrete,kappa_raw,kappa_star,energy,binding,S\n";
    if (res) {
        body += "1," + csv::row({res->kappa0, res->kappa0_discrete, res->kappa_raw, res->kappa_star, res->energy,
                                 res->binding, res->S});
        csv::write_file(out_path(cfg, "binding_trace.csv"), binding_trace_csv(*res));
        ctx.out << "kappa* = " << csv::num(res->kappa_star) << "  E = " << csv::num(res->energy)
                << "  binding = " << csv::num(res->binding) << "\n";
    } else {
        body += "0," + csv::row({gs.kappa0, std::nan(""), std::nan(""), std::nan(""), std::nan(""), 0.0, std::nan("")});
        ctx.out << "no bound state below eps0 = " << csv::num(gs.eps0) << "\n";
    }
    csv::write_file(out_path(cfg, "binding.csv"), body);
}

void direct_command(const RunConfig& cfg, RunContext& ctx) {
    Inputs in = inputs(cfg);
    if (cfg.direct_mode == "hardwall") {
        const ProfilePotential region = in.V.scaled(1.0 / in.V.sup_norm());
        const auto rows =
            stage("direct", [&] { return hardwall_trend(in.frames, region, cfg.hardwall.eps, cfg.hardwall.options); });
        csv::write_file(out_path(cfg, "hardwall.csv"), hardwall_csv(rows));
        for (const auto& r : rows)
            ctx.out << "eps = " << csv::num(r.eps) << "  lambda1 = " << csv::num(r.lambda1)
                    << "  threshold = " << csv::num(r.threshold) << "  gap = " << csv::num(r.gap) << "\n";
        return;
    }
    const auto gs = ground_state(cfg, in.V, ctx);
    const auto res = stage("direct", [&] { return direct_binding(in.frames, in.V, gs, cfg.direct); });
    log_lines(ctx, "[direct] ", res.log);
    csv::write_file(out_path(cfg, "direct.csv"), direct_csv(res));
    ctx.out << "E1 = " << csv::num(res.energies[0]) << "  reference = " << csv::num(res.reference)
            << "  binding = " << csv::num(res.binding) << "  refinement_delta = " << csv::num(res.refinement_delta)
            << "\n";
}

void sweep_command(const RunConfig& cfg, const SweepSpec& sw, RunContext& ctx) {
    if (sw.param.empty()) throw ConfigError("sweep: --param is required");
    if (sw.steps < 1) throw ConfigError("sweep: --steps must be at least 1");
    std::string body = sweep_header(sw.param);
    Json cached_key;
    TransverseGroundState gs;
    for (int i = 0; i < sw.steps; ++i) {
        const double v = sw.steps == 1 ? sw.from : sw.from + (sw.to - sw.from) * i / (sw.steps - 1);
        const RunConfig row_cfg = with_parameter(cfg, sw.param, v);
        const Json key = {row_cfg.resolved["potential"], row_cfg.resolved["transverse"]};
        if (i == 0 || key != cached_key) {
            gs = ground_state(row_cfg, make_potential(row_cfg.potential), ctx);
            cached_key = key;
        }
        const std::string row = sweep_row(row_cfg, v, gs);
        body += row;
        if (ctx.verbose) ctx.log << "[sweep] " << row;
    }
    csv::write_file(out_path(cfg, "sweep.csv"), body);
    ctx.out << "sweep: " << sw.steps << " rows written to " << out_path(cfg, "sweep.csv") << "\n";
}

}  // namespace

std::string sweep_header(const std::string& param) {
    return csv::header({param, "criterion_value", "quadrature_error", "truncation_bound", "verdict", "kappa0",
                        "kappa_star", "energy", "binding"});
}

std::string sweep_row(const RunConfig& cfg, double param_value, const TransverseGroundState& gs) {
    Inputs in = inputs(cfg);
    const auto crit = stage("criterion", [&] { return evaluate_criterion(in.frames, in.V, gs, cfg.criterion); });
    const auto b = stage("bind", [&] { return solve_binding(in.frames, in.V, gs, kappa_max(cfg, in.V), cfg.binding); });
    std::string row = csv::num(param_value) + "," + csv::num(crit.value) + "," + csv::num(crit.quadrature_error) + "," +
                      csv::num(crit.truncation_bound) + "," + to_string(crit.verdict) + "," + csv::num(gs.kappa0) + ",";
    if (b)
        row += csv::num(b->kappa_star) + "," + csv::num(b->energy) + "," + csv::num(b->binding) + "\n";
    else
        row += "none,none,0\n";
    return row;
}

void run_command(const std::string& command, const RunConfig& cfg, const SweepSpec& sweep, RunContext& ctx) {
    prepare_output(cfg, command);
    if (command == "frames") frames_command(cfg, ctx);
    else if (command == "transverse") transverse_command(cfg, ctx);
    else if (command == "criterion") criterion_command(cfg, ctx);
    else if (command == "bind") bind_command(cfg, ctx);
    else if (command == "direct") direct_command(cfg, ctx);
    else if (command == "sweep") sweep_command(cfg, sweep, ctx);
    else throw ConfigError("unknown command '" + command + "'");
}

}  // namespace softguide
