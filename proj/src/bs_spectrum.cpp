#include "softguide/bs_spectrum.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "softguide/csv.hpp"
#include "softguide/eigs.hpp"
#include "softguide/errors.hpp"
#include "softguide/parallel.hpp"
#include "softguide/specfun.hpp"

namespace softguide {

using specfun::kPi;

namespace {

constexpr double kCutoff = 40.0;  // kernel blocks with kappa * distance beyond this are dropped

double green(double kappa, double d) { return std::exp(-kappa * d) / (4 * kPi * d); }

double gamma_max(const FramedCurve& fc) {
    double g = 0.0;
    for (double s : fc.grid()) g = std::max(g, std::abs(fc.gamma(s)));
    return g;
}

}  // namespace

BSOperator::BSOperator(const FramedCurve& fc, const ProfilePotential& V, double kappa0, double S,
                       const BSQuadConfig& cfg)
    : V_(V), cfg_(cfg), kappa0_(kappa0), S_(S), a_(V.support_radius()), m_(cfg.modes) {
    if (!(kappa0 > 0.0)) throw InputError("BS operator: kappa0 must be positive");
    if (!(cfg.ds > 0.0) || !(S > cfg.ds)) throw ConfigError("BS operator: need 0 < ds < S");
    if (m_ < 1) throw ConfigError("BS operator: need at least one transverse mode");
    const int J = static_cast<int>(std::ceil(S / cfg.ds - 1e-9));
    S_ = J * cfg.ds;
    fc_ = covering_frames(fc, S_);
    for (int j = -J; j <= J; ++j) s_.push_back(j * cfg.ds);

    rules_[0] = make_polar_rule(V, cfg.near_rule);
    rules_[1] = make_polar_rule(V, cfg.mid_rule);
    rules_[2] = make_polar_rule(V, cfg.far_rule);
    if (static_cast<std::size_t>(m_) > rules_[0].size()) throw ConfigError("BS operator: more modes than nodes");

    // Top fiber modes at kappa0; chi = y / sqrt(w) is orthonormal in L2(M).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fiber_matrix(V, rules_[0], kappa0));
    const Eigen::Index n0 = static_cast<Eigen::Index>(rules_[0].size());
    chi_[0].resize(n0, m_);
    for (int a = 0; a < m_; ++a) {
        Eigen::VectorXd y = es.eigenvectors().col(n0 - 1 - a);
        if (y.sum() < 0) y = -y;
        for (Eigen::Index k = 0; k < n0; ++k) chi_[0](k, a) = y[k] / std::sqrt(rules_[0].w[static_cast<std::size_t>(k)]);
    }
    chi_[1] = rules_[0].interpolation_to(rules_[1]) * chi_[0];
    chi_[2] = rules_[0].interpolation_to(rules_[2]) * chi_[0];

    slices_.resize(s_.size());
    parallel_for(0, s_.size(), [&](std::size_t i) {
        slices_[i] = make_slice(fc_->frame_at(s_[i]), fc_->gamma(s_[i]), s_[i]);
    });
}

BSOperator::Slice BSOperator::make_slice(const Frame& f, double gamma, double /*s*/) const {
    Slice sl;
    sl.centre = f.point;
    const double ca = std::cos(f.alpha), sa = std::sin(f.alpha);
    for (int t = 0; t < 3; ++t) {
        const PolarRule& R = rules_[t];
        const Eigen::Index n = static_cast<Eigen::Index>(R.size());
        sl.x[t].resize(R.size());
        sl.P[t].resize(n, m_);
        if (t == 0) sl.kink = Eigen::MatrixXd::Zero(m_, m_);
        for (Eigen::Index k = 0; k < n; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            const double c = std::cos(R.theta[kk]), sn = std::sin(R.theta[kk]);
            sl.x[t][kk] = f.point - R.r[kk] * (c * f.m1 + sn * f.m2);
            const double h = 1.0 + R.r[kk] * gamma * (c * ca + sn * sa);
            const double v = V_(R.r[kk], R.theta[kk]);
            const double sw = std::sqrt(std::max(0.0, h * v));
            sl.P[t].row(k) = R.w[kk] * sw * chi_[t].row(k);
            if (t == 0) {
                // Trapezoid correction for the |s - s'| kink of the slice-integrated kernel.
                const double c2 = -cfg_.ds * cfg_.ds / 12.0 * R.w[kk] * h * h * v;
                sl.kink += c2 * chi_[t].row(k).transpose() * chi_[t].row(k);
            }
        }
    }
    return sl;
}

BSOperator::Slice BSOperator::straight_slice(double s) const {
    Frame f;
    f.point = Vec3(s, 0.0, 0.0);
    return make_slice(f, 0.0, s);
}

int BSOperator::tier(double sep) const {
    if (sep <= cfg_.near_radius * a_ + 1e-12) return 0;
    if (sep <= cfg_.mid_radius * a_ + 1e-12) return 1;
    return 2;
}

Eigen::VectorXd BSOperator::self_integrals(double kappa) const {
    for (const auto& [k, v] : self_cache_)
        if (k == kappa) return v;
    const PolarRule& R = rules_[0];
    Eigen::VectorXd S(static_cast<Eigen::Index>(R.size()));
    const auto prim = [kappa](double P) { return -std::expm1(-kappa * P) / (4 * kPi * kappa); };
    for (std::size_t k = 0; k < R.size(); ++k)
        S[static_cast<Eigen::Index>(k)] = disc_ray_integral(R.u[k], R.v[k], R.radius(), prim);
    if (self_cache_.size() > 8) self_cache_.clear();
    self_cache_.emplace_back(kappa, S);
    return S;
}

Eigen::MatrixXd BSOperator::block(const Slice& p, const Slice& q, double sep, double kappa, bool same) const {
    const int t = same ? 0 : tier(sep);
    const std::size_t n = p.x[t].size();
    Eigen::MatrixXd G(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            if (same && k == l) continue;
            G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = green(kappa, (p.x[t][k] - q.x[t][l]).norm());
        }
    if (same) {
        // Log-free singular subtraction: the exact disc integral of G minus the rule's off-diagonal sum.
        const Eigen::VectorXd S = self_integrals(kappa);
        const PolarRule& R = rules_[0];
        for (std::size_t k = 0; k < n; ++k) {
            double off = 0.0;
            for (std::size_t l = 0; l < n; ++l)
                if (l != k) off += R.w[l] * G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
            G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = (S[static_cast<Eigen::Index>(k)] - off) / R.w[k];
        }
    }
    return p.P[t].transpose() * G * q.P[t];
}

BSMatrix BSOperator::assemble(double kappa) const {
    if (!(kappa > 0.0)) throw DomainError("assemble: kappa must be positive");
    self_integrals(kappa);  // fill the cache before the parallel loop
    const std::size_t ns = s_.size();
    BSMatrix M;
    M.kappa = kappa;
    M.s = s_;
    M.modes = m_;
    M.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns * m_), static_cast<Eigen::Index>(ns * m_));
    const double ds = cfg_.ds;
    parallel_for(0, ns, [&](std::size_t i) {
        const Eigen::Index bi = static_cast<Eigen::Index>(i * m_);
        M.A.block(bi, bi, m_, m_) = ds * block(slices_[i], slices_[i], 0.0, kappa, true) + slices_[i].kink;
        for (std::size_t j = i + 1; j < ns; ++j) {
            const double sep = s_[j] - s_[i];
            if (kappa * ((slices_[i].centre - slices_[j].centre).norm() - 2 * a_) > kCutoff) continue;
            const Eigen::Index bj = static_cast<Eigen::Index>(j * m_);
            const Eigen::MatrixXd B = ds * block(slices_[i], slices_[j], sep, kappa, false);
            M.A.block(bi, bj, m_, m_) = B;
            M.A.block(bj, bi, m_, m_) = B.transpose();
        }
    });
    return M;
}

double BSOperator::symbol_top(double kappa) const {
    const Slice s0 = straight_slice(0.0);
    Eigen::MatrixXd T = cfg_.ds * block(s0, s0, 0.0, kappa, true) + s0.kink;
    for (int k = 1;; ++k) {
        const double sep = k * cfg_.ds;
        if (kappa * (sep - 2 * a_) > kCutoff) break;
        const Eigen::MatrixXd B = cfg_.ds * block(s0, straight_slice(sep), sep, kappa, false);
        T += B + B.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double BSOperator::discrete_kappa0() const {
    const auto f = [this](double k) { return std::log(symbol_top(k)); };
    double lo = 0.9 * kappa0_, hi = 1.1 * kappa0_;
    for (int i = 0; i < 40 && f(lo) < 0.0; ++i) lo *= 0.8;
    for (int i = 0; i < 40 && f(hi) > 0.0; ++i) hi *= 1.25;
    boost::uintmax_t it = 100;
    const auto r = boost::math::tools::toms748_solve(
        f, lo, hi, [](double x, double y) { return std::abs(x - y) < 1e-13 * std::abs(x); }, it);
    return 0.5 * (r.first + r.second);
}

double BSOperator::potential_field(const Eigen::VectorXd& coef, double kappa, const Vec3& x) const {
    CompensatedSum acc;
    for (std::size_t i = 0; i < s_.size(); ++i) {
        const Slice& sl = slices_[i];
        const double dc = (x - sl.centre).norm();
        if (kappa * (dc - a_) > kCutoff) continue;
        const int t = dc <= (cfg_.near_radius + 1) * a_ ? 0 : (dc <= (cfg_.mid_radius + 1) * a_ ? 1 : 2);
        const Eigen::VectorXd c = coef.segment(static_cast<Eigen::Index>(i * m_), m_);
        const Eigen::VectorXd q = sl.P[t] * c;
        double s = 0.0;
        for (std::size_t k = 0; k < sl.x[t].size(); ++k) {
            const double d = std::max((x - sl.x[t][k]).norm(), 1e-12);
            s += q[static_cast<Eigen::Index>(k)] * green(kappa, d);
        }
        acc.add(cfg_.ds * s);
    }
    return acc.value();
}

bool BSOperator::near_node(const Vec3& x) const {
    const PolarRule& R = rules_[0];
    double spacing = cfg_.ds;
    for (std::size_t k = 0; k + 1 < R.size(); ++k)
        spacing = std::min(spacing, std::hypot(R.u[k] - R.u[k + 1], R.v[k] - R.v[k + 1]));
    for (const Slice& sl : slices_) {
        if ((x - sl.centre).norm() > a_ + spacing) continue;
        for (const Vec3& p : sl.x[0])
            if ((x - p).norm() < 0.1 * spacing) return true;
    }
    return false;
}

double top_eigenvalue(const BSMatrix& m) {
    const Eigen::Index n = m.A.rows();
    if (n == 0) return 0.0;
    if (n <= 400) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.A, Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    }
    const EigResult r = lanczos_top([&m](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = m.A * x; }, n, 1,
                                    1e-10, 400);
    return r.values[0];
}

namespace {

EigResult top_pair(const BSMatrix& m) {
    return lanczos_top([&m](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = m.A * x; }, m.A.rows(), 1,
                       1e-10, 400);
}

}  // namespace

std::optional<BindingResult> solve_binding(const FramedCurve& fc, const ProfilePotential& V,
                                           const TransverseGroundState& gs, double kappa_max, const BSQuadConfig& cfg) {
    const double k0 = gs.kappa0;
    if (!(k0 > 0.0)) throw InputError("solve_binding: ground state has no binding");
    if (!(kappa_max > k0)) throw DomainError("solve_binding: kappa_max must exceed kappa0");
    const double a = V.support_radius();
    const double gmax = gamma_max(fc);
    double s_eff = 0.0;
    if (gmax > 0.0) {
        s_eff = fc.spec().effective_support(1e-4 * gmax);
        if (!std::isfinite(s_eff)) throw AssumptionError("curvature does not decay; the curve is not asymptotically straight");
    }
    const bool auto_S = !(cfg.S > 0.0);
    double S = auto_S ? s_eff + std::max(10 * a, 6.0 / k0) : cfg.S;

    BindingResult res;
    res.kappa0 = k0;
    double lo_hint = 0.0;
    for (int round = 0;; ++round) {
        auto op = std::make_shared<const BSOperator>(fc, V, k0, S, cfg);
        const double k0d = op->discrete_kappa0();
        auto mu = [&](double k) {
            const double m = top_eigenvalue(op->assemble(k));
            res.trace.emplace_back(k, m);
            return m;
        };
        double lo = std::max(k0d * (1 + cfg.probe), lo_hint);
        if (round == 0 && !(mu(lo) > 1.0)) return std::nullopt;
        double hi = kappa_max;
        if (mu(hi) > 1.0) throw ConvergenceError("solve_binding: mu_max(kappa_max) > 1; raise kappa_max");
        const double tol = cfg.kappa_tol * k0;
        while (hi - lo > tol) {
            const double mid = 0.5 * (lo + hi);
            (mu(mid) > 1.0 ? lo : hi) = mid;
        }
        const double kr = 0.5 * (lo + hi);
        res.kappa_raw = kr;
        res.kappa0_discrete = k0d;
        res.binding = kr * kr - k0d * k0d;
        res.S = op->S();
        res.op = op;
        const double decay = std::sqrt(std::max(res.binding, 0.0));
        if (!auto_S || decay * (op->S() - s_eff) >= cfg.decay_lengths || round >= 3) break;
        S = s_eff + 1.2 * cfg.decay_lengths / decay;
        lo_hint = kr;
    }
    res.kappa_star = std::sqrt(k0 * k0 + res.binding);
    res.energy = -res.kappa_star * res.kappa_star;
    const EigResult ep = top_pair(res.op->assemble(res.kappa_raw));
    res.coefficients = ep.vectors.col(0);
    double dominant = 0.0;
    for (Eigen::Index i = 0; i < res.coefficients.size(); i += res.op->modes()) dominant += res.coefficients[i];
    if (dominant < 0) res.coefficients = -res.coefficients;
    return res;
}

SampledFunction reconstruct_eigenfunction(const BindingResult& res, const std::vector<Vec3>& points) {
    if (!res.op) throw InputError("reconstruct_eigenfunction: result carries no operator");
    SampledFunction out;
    out.points = points;
    out.values.resize(points.size());
    std::vector<char> warn(points.size(), 0);
    parallel_for(0, points.size(), [&](std::size_t i) {
        out.values[i] = res.op->potential_field(res.coefficients, res.kappa_raw, points[i]);
        warn[i] = res.op->near_node(points[i]) ? 1 : 0;
    });
    out.accuracy_warning.assign(warn.begin(), warn.end());
    CompensatedSum n2, sum;
    for (double v : out.values) {
        n2.add(v * v);
        sum.add(v);
    }
    const double norm = std::sqrt(n2.value());
    if (norm > 0.0) {
        const double sc = (sum.value() < 0 ? -1.0 : 1.0) / norm;
        for (double& v : out.values) v *= sc;
    }
    return out;
}

std::string binding_trace_csv(const BindingResult& res) {
    std::string out = "# kappa_star=" + csv::num(res.kappa_star) + "\n# energy=" + csv::num(res.energy) +
                      "\n# binding=" + csv::num(res.binding) + "\n# kappa_raw=" + csv::num(res.kappa_raw) +
                      "\n# kappa0=" + csv::num(res.kappa0) + "\n# kappa0_discrete=" + csv::num(res.kappa0_discrete) +
                      "\n# S=" + csv::num(res.S) + "\n";
    out += csv::header({"kappa", "mu_max"});
    for (const auto& [k, m] : res.trace) out += csv::row({k, m});
    return out;
}

std::string eigenfunction_csv(const SampledFunction& f) {
    std::string out = csv::header({"x", "y", "z", "phi", "warning"});
    for (std::size_t i = 0; i < f.points.size(); ++i)
        out += csv::row({f.points[i].x(), f.points[i].y(), f.points[i].z(), f.values[i], f.accuracy_warning[i] ? 1.0 : 0.0});
    return out;
}

}  // namespace softguide
