#include "softguide/criterion.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "softguide/csv.hpp"
#include "softguide/errors.hpp"
#include "softguide/parallel.hpp"
#include "softguide/quadrature.hpp"
#include "softguide/specfun.hpp"

namespace softguide {

using specfun::kPi;

std::string to_string(Verdict v) { return v == Verdict::BoundStateGuaranteed ? "bound_state_guaranteed" : "inconclusive"; }

namespace {

struct Xi {
    double r, theta, c, s;
};

std::vector<Xi> make_xi(const std::vector<double>& r, const std::vector<double>& th) {
    std::vector<Xi> out;
    for (std::size_t i = 0; i < r.size(); ++i) out.push_back({r[i], th[i], std::cos(th[i]), std::sin(th[i])});
    return out;
}

struct Window {
    double S, s0, ell, delta, kappa;
    int order;
};

double kernel_value(FKernel k, double kappa, double d) {
    if (k == FKernel::Green) return std::exp(-kappa * d) / (4 * kPi * d);
    return specfun::macdonald_k0(kappa * d);
}

void split_panels(std::vector<double>& out, double a, double b, double len) {
    const int m = std::max(1, static_cast<int>(std::ceil((b - a) / len - 1e-9)));
    for (int i = 1; i <= m; ++i) out.push_back(a + (b - a) * i / m);
}

// Panel edges in u = s - s' > 0: graded from delta up to the panel length, then steps growing
// with u but never beyond 2 / kappa, with the kinks of the window forced onto edges.
std::vector<double> u_breaks(const Window& w, int level) {
    const double umax = 2 * w.S;
    std::vector<double> b{0.0};
    double cur = std::min(w.delta, umax);
    while (cur < w.ell && cur < umax) {
        b.push_back(cur);
        cur *= 2;
    }
    cur = b.back();
    while (cur < umax) {
        const double step = std::clamp(0.25 * cur, w.ell, std::max(w.ell, 2.0 / w.kappa));
        cur = std::min(cur + step, umax);
        b.push_back(cur);
    }
    for (double kink : {2 * w.s0, w.S - w.s0})
        if (kink > 0.0 && kink < umax) b.push_back(kink);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }), b.end());
    std::vector<double> fine{0.0};
    const int parts = 1 << level;
    for (std::size_t i = 0; i + 1 < b.size(); ++i)
        for (int p = 1; p <= parts; ++p) fine.push_back(b[i] + (b[i + 1] - b[i]) * p / parts);
    return fine;
}

// Gauss nodes in sigma = (s + s') / 2 where the integrand can be nonzero at this u.
Rule1D sigma_rule(const Window& w, double u, int level) {
    // Pairs on one straight piece cancel exactly; with no curvature support there are no others.
    const double A = std::min(w.S - 0.5 * u, w.s0 + 0.5 * u);
    if (!(A > 0.0) || !(w.s0 > 0.0)) return {};
    std::vector<double> cuts{-A, A};
    for (double c : {w.s0 - 0.5 * u, -w.s0 + 0.5 * u})
        if (c > -A && c < A) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    const double len = w.ell / (1 << level);
    std::vector<double> br{cuts.front()};
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] - cuts[i] > 1e-12) split_panels(br, cuts[i], cuts[i + 1], len);
    return composite_gauss(br, w.order);
}

struct Placed {
    std::vector<Vec3> x;
    std::vector<double> sh;  // h^{1/2}
};

void place(const FramedCurve& fc, double s, const std::vector<Xi>& xi, Placed& out) {
    const Frame f = fc.frame_at(s);
    const double g = fc.gamma(s);
    const double ca = std::cos(f.alpha), sa = std::sin(f.alpha);
    out.x.resize(xi.size());
    out.sh.resize(xi.size());
    for (std::size_t k = 0; k < xi.size(); ++k) {
        out.x[k] = f.point - xi[k].r * (xi[k].c * f.m1 + xi[k].s * f.m2);
        const double h = 1.0 + xi[k].r * g * (xi[k].c * ca + xi[k].s * sa);
        out.sh[k] = std::sqrt(std::max(h, 0.0));
    }
}

// H(k, l) = int_{u > 0} dsigma du [h^{1/2} h'^{1/2} k(x_k(s), x_l(s')) - k(x0_k(s), x0_l(s'))],
// s = sigma + u/2, s' = sigma - u/2. The full s,s' integral is H + H^T.
struct HalfResult {
    Eigen::MatrixXd H;     // signed integral
    Eigen::MatrixXd Habs;  // integral of |bent| + |straight|, for the rounding estimate
    double u_first = 0.0;
    long nodes = 0;
};

HalfResult half_matrix(const FramedCurve& fc, const std::vector<Xi>& xi, FKernel ker, const Window& w, int level) {
    const std::size_t n = xi.size();
    const Rule1D ur = composite_gauss(u_breaks(w, level), w.order);
    Eigen::MatrixXd rho2(n, n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            const double du = xi[k].r * xi[k].c - xi[l].r * xi[l].c, dv = xi[k].r * xi[k].s - xi[l].r * xi[l].s;
            rho2(k, l) = du * du + dv * dv;
        }
    const std::size_t nu = ur.x.size();
    constexpr std::size_t kBlock = 8;
    const std::size_t nblocks = (nu + kBlock - 1) / kBlock;
    std::vector<Eigen::MatrixXd> part(nblocks), part_abs(nblocks);
    std::vector<long> count(nblocks, 0);
    parallel_for(0, nblocks, [&](std::size_t b) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n), acc_abs = Eigen::MatrixXd::Zero(n, n);
        Eigen::MatrixXd straight(n, n), local(n, n), local_abs(n, n);
        Placed p1, p2;
        for (std::size_t j = b * kBlock; j < std::min(nu, (b + 1) * kBlock); ++j) {
            const double u = ur.x[j];
            const Rule1D sr = sigma_rule(w, u, level);
            if (sr.x.empty()) continue;
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t l = 0; l < n; ++l)
                    straight(k, l) = kernel_value(ker, w.kappa, std::sqrt(u * u + rho2(k, l)));
            local.setZero();
            local_abs.setZero();
            for (std::size_t i = 0; i < sr.x.size(); ++i) {
                place(fc, sr.x[i] + 0.5 * u, xi, p1);
                place(fc, sr.x[i] - 0.5 * u, xi, p2);
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t l = 0; l < n; ++l) {
                        const double d = (p1.x[k] - p2.x[l]).norm();
                        if (!(d > 0.0)) throw GeometryError("tube points coincide; the tube self-intersects");
                        const double bent = p1.sh[k] * p2.sh[l] * kernel_value(ker, w.kappa, d);
                        local(k, l) += sr.w[i] * (bent - straight(k, l));
                        local_abs(k, l) += sr.w[i] * (std::abs(bent) + std::abs(straight(k, l)));
                    }
            }
            acc += ur.w[j] * local;
            acc_abs += ur.w[j] * local_abs;
            count[b] += static_cast<long>(sr.x.size());
        }
        part[b] = std::move(acc);
        part_abs[b] = std::move(acc_abs);
    });
    HalfResult out;
    out.H = Eigen::MatrixXd::Zero(n, n);
    out.Habs = Eigen::MatrixXd::Zero(n, n);
    out.u_first = ur.x.empty() ? 0.0 : ur.x.front();
    for (std::size_t b = 0; b < nblocks; ++b) {
        out.H += part[b];
        out.Habs += part_abs[b];
        out.nodes += count[b];
    }
    return out;
}

// Kernel values near the diagonal are differences of O(1/u) terms whose arguments carry absolute
// position errors of a few ulp of the curve extent; this bounds the resulting rounding error.
double rounding_bound(const HalfResult& hr, const Eigen::VectorXd& cabs, double extent) {
    const double eps = std::numeric_limits<double>::epsilon();
    return 2.0 * cabs.dot(hr.Habs * cabs) * 16 * eps * (1.0 + extent / std::max(hr.u_first, 1e-300));
}

double support_of(const FramedCurve& fc, const CriterionConfig& cfg) {
    const double s0 = fc.spec().effective_support(cfg.support_eps);
    if (!std::isfinite(s0))
        throw AssumptionError("curvature does not decay; the curve is not asymptotically straight");
    return s0;
}

PolarRuleOptions rule_at(const PolarRuleOptions& base, int level) {
    PolarRuleOptions o = base;
    o.order = base.order + 2 * level;
    int nt = base.n_theta;
    for (int i = 0; i < level; ++i) nt = 2 * ((3 * nt / 2 + 1) / 2);
    o.n_theta = nt;
    return o;
}

// min |Gamma(s) - Gamma(s')| / |s - s'| over sampled pairs at least U apart, and the limit
// for pairs running out along the two straight legs.
double chord_ratio_beyond(const FramedCurve& fc, double U) {
    const auto& fr = fc.frames();
    const auto& s = fc.grid();
    const std::size_t n = fr.size();
    const std::size_t stride = std::max<std::size_t>(1, n / 1500);
    double c = 1.0;
    for (std::size_t i = 0; i < n; i += stride)
        for (std::size_t j = i + stride; j < n; j += stride) {
            const double d = s[j] - s[i];
            if (d < U) continue;
            c = std::min(c, (fr[j].point - fr[i].point).norm() / d);
        }
    const double dot = fr.front().t.dot(fr.back().t);
    c = std::min(c, std::sqrt(std::max(0.0, 0.5 * (1.0 + dot))));
    return c;
}

}  // namespace

double difference_kernel(const FramedCurve& fc, const ProfilePotential& V, const TransverseGroundState& gs,
                         double kappa, const TubeCoord& p, const TubeCoord& q) {
    if (!(kappa > 0.0)) throw DomainError("difference_kernel: kappa must be positive");
    const auto point = [&](const TubeCoord& c, double& sh) {
        const Frame f = fc.frame_at(c.s);
        sh = std::sqrt(std::max(0.0, 1.0 + c.r * fc.gamma(c.s) * std::cos(c.theta - f.alpha)));
        return tube_point_from_frame(f, c.r, c.theta);
    };
    double sp, sq;
    const Vec3 xp = point(p, sp), xq = point(q, sq);
    const double d = (xp - xq).norm();
    const double du = p.r * std::cos(p.theta) - q.r * std::cos(q.theta);
    const double dv = p.r * std::sin(p.theta) - q.r * std::sin(q.theta);
    const double d0 = std::sqrt((p.s - q.s) * (p.s - q.s) + du * du + dv * dv);
    if (!(d > 0.0) || !(d0 > 0.0)) throw DomainError("difference_kernel: coincident points");
    const auto weight = [&](const TubeCoord& c) {
        return gs.phi0_at(c.r * std::cos(c.theta), c.r * std::sin(c.theta)) * V(c.r, c.theta);
    };
    return weight(p) * (sp * sq * kernel_value(FKernel::Green, kappa, d) - kernel_value(FKernel::Green, kappa, d0)) *
           weight(q);
}

namespace {

struct TailInputs {
    double s0, a, kappa, gmax, abs_mass;
};

// Bound on the part of the s,s' integral outside [-S, S]^2. Nonzero integrand needs one point in
// |s| <= s0; there |x - x'| >= c u - 2a, both kernels are below G(c u - 2a), and the sigma-extent
// at fixed u is at most 2 s0 + u.
double tail_bound(const FramedCurve& fc, const TailInputs& t, double S, double& chord) {
    const double U = S - t.s0;
    chord = chord_ratio_beyond(fc, U);
    if (chord * U <= 2 * t.a) return std::numeric_limits<double>::infinity();
    const double B = (2 * t.s0 + U) / (chord * U - 2 * t.a);
    return t.abs_mass * t.abs_mass * (1 + t.a * t.gmax) * B * std::exp(2 * t.kappa * t.a - t.kappa * chord * U) /
           (2 * kPi * t.kappa * chord);
}

struct LevelValue {
    double value, rounding, abs_mass;
    long nodes;
};

LevelValue criterion_level(const FramedCurve& fc, const ProfilePotential& V, const TransverseGroundState& gs,
                           const CriterionConfig& cfg, const Window& w, int lev) {
    const PolarRule rule = make_polar_rule(V, rule_at(cfg.rule, lev));
    const std::vector<Xi> xi = make_xi(rule.r, rule.theta);
    Eigen::VectorXd c(static_cast<Eigen::Index>(xi.size()));
    for (std::size_t k = 0; k < xi.size(); ++k)
        c[static_cast<Eigen::Index>(k)] = rule.w[k] * gs.phi0_at(rule.u[k], rule.v[k]) * V(rule.r[k], rule.theta[k]);
    const HalfResult hr = half_matrix(fc, xi, FKernel::Green, w, lev);
    const Eigen::VectorXd cabs = c.cwiseAbs();
    return {2.0 * c.dot(hr.H * c), rounding_bound(hr, cabs, w.S), cabs.sum(), hr.nodes};
}

}  // namespace

CriterionResult evaluate_criterion(const FramedCurve& fc_in, const ProfilePotential& V, const TransverseGroundState& gs,
                                   const CriterionConfig& cfg) {
    if (!(gs.kappa0 > 0.0)) throw InputError("criterion: ground state has no binding");
    if (cfg.levels < 2) throw ConfigError("criterion.levels must be at least 2");
    if (!(cfg.panel_length > 0.0) || cfg.order < 2) throw ConfigError("criterion: invalid quadrature parameters");
    const double kappa = gs.kappa0;
    const double a = V.support_radius();
    CriterionResult res;
    res.config = cfg;
    res.kappa0 = kappa;
    res.s0 = support_of(fc_in, cfg);
    const bool auto_S = !(cfg.S > 0.0);
    res.S = auto_S ? res.s0 + 12.0 / kappa : cfg.S;
    if (!(res.S > res.s0)) throw ConfigError("criterion.S must exceed the curvature support");
    const double S_cap = auto_S ? res.s0 + cfg.max_decay_lengths / kappa : res.S;
    res.delta = cfg.delta > 0.0 ? cfg.delta : std::min(a, 1.0 / kappa) / 8;
    const auto fc = covering_frames(fc_in, S_cap);

    const AssumptionReport rep = validate_assumptions(*fc, fc->spec(), a);
    if (!rep.all_ok()) throw AssumptionError("tube assumptions violated: " + rep.summary());
    const bool straight = fc->is_straight();

    Window w{res.S, res.s0, cfg.panel_length, res.delta, kappa, cfg.order};
    LevelValue first = criterion_level(*fc, V, gs, cfg, w, 0);
    TailInputs ti{res.s0, a, kappa, 0.0, first.abs_mass};
    for (double s : fc->grid()) ti.gmax = std::max(ti.gmax, std::abs(fc->gamma(s)));

    // A window that leaves the tail bound comparable to a positive value is widened.
    if (auto_S && !straight && first.value > 0.0) {
        double chord = 1.0;
        double S = res.S;
        while (tail_bound(*fc, ti, S, chord) > cfg.tail_fraction * first.value && S < S_cap)
            S = std::min(S_cap, res.s0 + 1.25 * (S - res.s0));
        if (S != res.S) {
            res.S = S;
            w.S = S;
            first = criterion_level(*fc, V, gs, cfg, w, 0);
        }
    }
    std::vector<LevelValue> lv{first};
    for (int lev = 1; lev < cfg.levels; ++lev) lv.push_back(criterion_level(*fc, V, gs, cfg, w, lev));
    for (const auto& l : lv) {
        res.level_values.push_back(l.value);
        res.level_nodes.push_back(l.nodes);
    }
    res.value = lv.back().value;
    res.quadrature_error = std::abs(lv.back().value - lv[lv.size() - 2].value) + lv.back().rounding;
    ti.abs_mass = lv.back().abs_mass;
    if (straight) {
        res.truncation_bound = 0.0;  // the integrand vanishes identically
    } else {
        res.truncation_bound = tail_bound(*fc, ti, res.S, res.chord_ratio);
    }
    res.verdict = res.value - res.quadrature_error - res.truncation_bound > 0.0 ? Verdict::BoundStateGuaranteed
                                                                               : Verdict::Inconclusive;
    return res;
}

double inner_F(const FramedCurve& fc_in, double kappa0, double r, double theta, double r2, double theta2, double S,
               FKernel kernel, const CriterionConfig& cfg) {
    if (!(kappa0 > 0.0) || !(S > 0.0)) throw DomainError("inner_F: need kappa0 > 0 and S > 0");
    if (r < 0.0 || r2 < 0.0) throw DomainError("inner_F: radii must be non-negative");
    const double s0 = std::min(support_of(fc_in, cfg), S);
    const auto fc = covering_frames(fc_in, S);
    const double scale = std::max({r, r2, 1e-3});
    const double delta = cfg.delta > 0.0 ? cfg.delta : std::min(scale, 1.0 / kappa0) / 8;
    const Window w{S, s0, cfg.panel_length, delta, kappa0, cfg.order};
    const std::vector<Xi> xi = make_xi({r, r2}, {theta, theta2});
    const HalfResult hr = half_matrix(*fc, xi, kernel, w, std::max(0, cfg.levels - 1));
    const double F = hr.H(0, 1) + hr.H(1, 0);
    return kernel == FKernel::Green ? 2 * kPi * F : F;
}

double onaxis_F(const FramedCurve& fc, double kappa0, double S, const CriterionConfig& cfg) {
    return inner_F(fc, kappa0, 0.0, 0.0, 0.0, 0.0, S, FKernel::Macdonald, cfg);
}

std::string criterion_csv(const CriterionResult& res) {
    std::string out = "value,quadrature_error,truncation_bound,verdict,kappa0,S,s0\n";
    out += csv::num(res.value) + "," + csv::num(res.quadrature_error) + "," + csv::num(res.truncation_bound) + "," +
           to_string(res.verdict) + "," + csv::num(res.kappa0) + "," + csv::num(res.S) + "," + csv::num(res.s0) + "\n";
    const auto& c = res.config;
    out += "# delta=" + csv::num(res.delta) + "\n# panel_length=" + csv::num(c.panel_length) +
           "\n# order=" + std::to_string(c.order) + "\n# levels=" + std::to_string(c.levels) +
           "\n# rule_order=" + std::to_string(c.rule.order) + "\n# rule_n_theta=" + std::to_string(c.rule.n_theta) +
           "\n# chord_ratio=" + csv::num(res.chord_ratio) + "\n";
    for (std::size_t i = 0; i < res.level_values.size(); ++i)
        out += "# level" + std::to_string(i) + "=" + csv::num(res.level_values[i]) + " nodes=" +
               std::to_string(res.level_nodes[i]) + "\n";
    return out;
}

}  // namespace softguide
