#include "softguide/transverse.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "softguide/csv.hpp"
#include "softguide/direct3d.hpp"
#include "softguide/eigs.hpp"
#include "softguide/errors.hpp"
#include "softguide/parallel.hpp"
#include "softguide/specfun.hpp"

namespace softguide {

using specfun::kPi;

// ---------------------------------------------------------------- profile

ProfilePotential ProfilePotential::flat_disc(double depth, double radius) {
    ProfilePotential p;
    p.kind_ = Kind::FlatBottom;
    p.region_ = Region::Disc;
    p.depth_ = depth;
    p.p1_ = radius;
    p.finalize();
    return p;
}

ProfilePotential ProfilePotential::flat_annulus(double depth, double r_in, double r_out) {
    if (!(r_in >= 0.0) || !(r_out > r_in)) throw InputError("annulus needs 0 <= r_in < r_out");
    ProfilePotential p;
    p.kind_ = Kind::FlatBottom;
    p.region_ = Region::Annulus;
    p.depth_ = depth;
    p.p1_ = r_in;
    p.p2_ = r_out;
    p.finalize();
    return p;
}

ProfilePotential ProfilePotential::flat_ellipse(double depth, double ax, double ay) {
    ProfilePotential p;
    p.kind_ = Kind::FlatBottom;
    p.region_ = Region::Ellipse;
    p.depth_ = depth;
    p.p1_ = ax;
    p.p2_ = ay;
    p.finalize();
    return p;
}

ProfilePotential ProfilePotential::radial(std::vector<double> r, std::vector<double> v) {
    if (r.size() < 2 || r.size() != v.size()) throw InputError("radial profile needs matching tables of length >= 2");
    for (std::size_t i = 0; i + 1 < r.size(); ++i)
        if (!(r[i + 1] > r[i])) throw InputError("radial profile radii must increase");
    if (r.front() < 0.0) throw InputError("radial profile radii must be non-negative");
    ProfilePotential p;
    p.kind_ = Kind::Radial;
    p.rt_ = std::move(r);
    p.vt_ = std::move(v);
    p.finalize();
    return p;
}

ProfilePotential ProfilePotential::gridded(std::vector<double> r, std::vector<double> theta, Eigen::MatrixXd values) {
    if (r.size() < 2 || theta.size() < 2 || values.rows() != static_cast<Eigen::Index>(r.size()) ||
        values.cols() != static_cast<Eigen::Index>(theta.size()))
        throw InputError("gridded profile: table shape mismatch");
    for (std::size_t i = 0; i + 1 < r.size(); ++i)
        if (!(r[i + 1] > r[i])) throw InputError("gridded profile radii must increase");
    for (std::size_t i = 0; i + 1 < theta.size(); ++i)
        if (!(theta[i + 1] > theta[i])) throw InputError("gridded profile angles must increase");
    if (theta.front() < 0.0 || theta.back() >= 2 * kPi) throw InputError("gridded profile angles must lie in [0, 2pi)");
    ProfilePotential p;
    p.kind_ = Kind::Gridded;
    p.rt_ = std::move(r);
    p.tht_ = std::move(theta);
    p.grid_ = std::move(values);
    p.finalize();
    return p;
}

void ProfilePotential::finalize() {
    switch (kind_) {
        case Kind::FlatBottom:
            if (!(depth_ > 0.0) || !std::isfinite(depth_)) throw InputError("flat-bottom depth must be positive");
            if (region_ == Region::Disc) {
                if (!(p1_ > 0.0)) throw InputError("disc radius must be positive");
                a_ = p1_;
            } else if (region_ == Region::Annulus) {
                a_ = p2_;
            } else {
                if (!(p1_ > 0.0) || !(p2_ > 0.0)) throw InputError("ellipse semi-axes must be positive");
                a_ = std::max(p1_, p2_);
            }
            sup_ = depth_;
            break;
        case Kind::Radial:
            a_ = rt_.back();
            sup_ = 0.0;
            for (double v : vt_) {
                if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("profile values must be finite and >= 0");
                sup_ = std::max(sup_, v);
            }
            break;
        case Kind::Gridded:
            a_ = rt_.back();
            if (!(grid_.minCoeff() >= 0.0) || !grid_.allFinite()) throw InputError("profile values must be finite and >= 0");
            sup_ = grid_.maxCoeff();
            break;
    }
    if (!(sup_ > 0.0)) throw InputError("profile potential vanishes identically");
}

double ProfilePotential::operator()(double r, double theta) const {
    switch (kind_) {
        case Kind::FlatBottom:
            if (region_ == Region::Disc) return r < p1_ ? depth_ : 0.0;
            if (region_ == Region::Annulus) return (r > p1_ && r < p2_) ? depth_ : 0.0;
            {
                const double u = r * std::cos(theta) / p1_, v = r * std::sin(theta) / p2_;
                return u * u + v * v < 1.0 ? depth_ : 0.0;
            }
        case Kind::Radial: {
            if (r >= rt_.back()) return 0.0;
            if (r <= rt_.front()) return vt_.front();
            const auto it = std::upper_bound(rt_.begin(), rt_.end(), r);
            const std::size_t j = static_cast<std::size_t>(it - rt_.begin());
            const double t = (r - rt_[j - 1]) / (rt_[j] - rt_[j - 1]);
            return (1 - t) * vt_[j - 1] + t * vt_[j];
        }
        case Kind::Gridded: {
            if (r >= rt_.back()) return 0.0;
            double th = std::fmod(theta, 2 * kPi);
            if (th < 0) th += 2 * kPi;
            std::size_t i0 = 0;
            double tr = 0.0;
            if (r > rt_.front()) {
                const auto it = std::upper_bound(rt_.begin(), rt_.end(), r);
                i0 = static_cast<std::size_t>(it - rt_.begin()) - 1;
                tr = (r - rt_[i0]) / (rt_[i0 + 1] - rt_[i0]);
            }
            const std::size_t i1 = std::min(i0 + 1, rt_.size() - 1);
            const std::size_t nt = tht_.size();
            std::size_t j0, j1;
            double tt;
            if (th < tht_.front() || th >= tht_.back()) {
                j0 = nt - 1;
                j1 = 0;
                const double span = tht_.front() + 2 * kPi - tht_.back();
                double d = th - tht_.back();
                if (d < 0) d += 2 * kPi;
                tt = d / span;
            } else {
                const auto it = std::upper_bound(tht_.begin(), tht_.end(), th);
                j1 = static_cast<std::size_t>(it - tht_.begin());
                j0 = j1 - 1;
                tt = (th - tht_[j0]) / (tht_[j1] - tht_[j0]);
            }
            const double a0 = (1 - tt) * grid_(i0, j0) + tt * grid_(i0, j1);
            const double a1 = (1 - tt) * grid_(i1, j0) + tt * grid_(i1, j1);
            return (1 - tr) * a0 + tr * a1;
        }
    }
    return 0.0;
}

double ProfilePotential::at_xy(double u, double v) const { return (*this)(std::hypot(u, v), std::atan2(v, u)); }

bool ProfilePotential::is_radial() const {
    return kind_ == Kind::Radial || (kind_ == Kind::FlatBottom && region_ != Region::Ellipse);
}

std::vector<double> ProfilePotential::radial_breaks() const {
    std::vector<double> b{0.0};
    if (kind_ == Kind::FlatBottom) {
        if (region_ == Region::Annulus && p1_ > 0.0) b.push_back(p1_);
        if (region_ == Region::Ellipse && p1_ != p2_) b.push_back(std::min(p1_, p2_));
    } else if (rt_.front() > 0.0) {
        b.push_back(rt_.front());
    }
    b.push_back(a_);
    return b;
}

ProfilePotential ProfilePotential::scaled(double c) const {
    if (!(c > 0.0)) throw InputError("profile scale factor must be positive");
    ProfilePotential p = *this;
    p.depth_ *= c;
    for (double& v : p.vt_) v *= c;
    p.grid_ *= c;
    p.finalize();
    return p;
}

std::string ProfilePotential::describe() const {
    std::ostringstream o;
    if (kind_ == Kind::FlatBottom) {
        if (region_ == Region::Disc) o << "flat disc depth " << depth_ << " radius " << p1_;
        else if (region_ == Region::Annulus) o << "flat annulus depth " << depth_ << " radii " << p1_ << ".." << p2_;
        else o << "flat ellipse depth " << depth_ << " axes " << p1_ << "," << p2_;
    } else if (kind_ == Kind::Radial) {
        o << "radial table, " << rt_.size() << " rows, a = " << a_;
    } else {
        o << "gridded table " << rt_.size() << "x" << tht_.size() << ", a = " << a_;
    }
    return o.str();
}

// ---------------------------------------------------------------- polar rule

PolarRule make_polar_rule(const std::vector<double>& breaks, const PolarRuleOptions& opt) {
    if (breaks.size() < 2 || opt.order < 1 || opt.n_theta < 2 || opt.n_theta % 2 != 0 || !(opt.max_panel > 0.0))
        throw InputError("invalid polar rule options (n_theta must be even)");
    PolarRule rule;
    rule.breaks = breaks;
    rule.order = opt.order;
    rule.n_theta = opt.n_theta;
    const double R = breaks.back();
    rule.panels.push_back(breaks.front());
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double len = breaks[k + 1] - breaks[k];
        const int np = std::max(1, static_cast<int>(std::ceil(len / (opt.max_panel * R) - 1e-9)));
        for (int j = 1; j <= np; ++j) rule.panels.push_back(breaks[k] + len * j / np);
    }
    rule.radial = composite_gauss(rule.panels, opt.order);
    const double dth = 2 * kPi / opt.n_theta;
    for (std::size_t i = 0; i < rule.radial.x.size(); ++i) {
        for (int j = 0; j < opt.n_theta; ++j) {
            const double r = rule.radial.x[i], th = (j + 0.5) * dth;
            rule.r.push_back(r);
            rule.theta.push_back(th);
            rule.u.push_back(r * std::cos(th));
            rule.v.push_back(r * std::sin(th));
            rule.w.push_back(rule.radial.w[i] * r * dth);
        }
    }
    return rule;
}

PolarRule make_polar_rule(const ProfilePotential& V, const PolarRuleOptions& opt) {
    return make_polar_rule(V.radial_breaks(), opt);
}

Eigen::MatrixXd PolarRule::interpolation_to(const PolarRule& target) const {
    const std::size_t nr = radial.x.size();
    const std::size_t npanel = panels.size() - 1;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(target.size()), static_cast<Eigen::Index>(size()));
    for (std::size_t t = 0; t < target.size(); ++t) {
        const double rt = std::clamp(target.r[t], panels.front(), panels.back());
        std::size_t p = static_cast<std::size_t>(std::upper_bound(panels.begin(), panels.end(), rt) - panels.begin());
        p = std::clamp<std::size_t>(p, 1, npanel) - 1;
        const std::size_t i0 = p * static_cast<std::size_t>(order);
        std::vector<double> lr(static_cast<std::size_t>(order), 1.0);
        for (int a = 0; a < order; ++a)
            for (int b = 0; b < order; ++b)
                if (a != b) lr[a] *= (rt - radial.x[i0 + b]) / (radial.x[i0 + a] - radial.x[i0 + b]);
        std::vector<double> lt(static_cast<std::size_t>(n_theta));
        for (int j = 0; j < n_theta; ++j) {
            const double x = target.theta[t] - (j + 0.5) * 2 * kPi / n_theta;
            const double s2 = std::sin(0.5 * x);
            lt[j] = std::abs(s2) < 1e-14 ? 1.0 : std::sin(0.5 * n_theta * x) * std::cos(0.5 * x) / (n_theta * s2);
        }
        for (int a = 0; a < order; ++a)
            for (int j = 0; j < n_theta; ++j)
                P(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>((i0 + a) * n_theta + j)) = lr[a] * lt[j];
    }
    (void)nr;
    return P;
}

double disc_ray_integral(double pu, double pv, double R, const std::function<double(double)>& prim) {
    const double p2 = pu * pu + pv * pv;
    const double dist = R - std::sqrt(p2);
    if (!(dist > 0.0)) throw DomainError("disc_ray_integral: point outside the disc");
    int n = static_cast<int>(std::ceil(24.0 * R / dist));
    n = std::clamp(n, 64, 16384);
    n += n % 2;
    const double phi0 = std::atan2(pv, pu);
    const double c = p2 - R * R;
    CompensatedSum sum;
    for (int j = 0; j < n; ++j) {
        const double phi = phi0 + 2 * kPi * j / n;
        const double b = pu * std::cos(phi) + pv * std::sin(phi);
        const double rho = -b + std::sqrt(b * b - c);
        sum.add(prim(rho));
    }
    return sum.value() * 2 * kPi / n;
}

// ---------------------------------------------------------------- fiber operator

Eigen::MatrixXd fiber_matrix(const ProfilePotential& V, const PolarRule& rule, double q) {
    if (!(q > 0.0)) throw DomainError("fiber kernel needs kappa > 0");
    const Eigen::Index n = static_cast<Eigen::Index>(rule.size());
    Eigen::VectorXd sv(n), sw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sv[i] = std::sqrt(V(rule.r[i], rule.theta[i]));
        sw[i] = std::sqrt(rule.w[i]);
    }
    const double R = rule.radius();
    Eigen::MatrixXd M(n, n);
    const double c = 1.0 / (2 * kPi);
    parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t ii) {
        const Eigen::Index i = static_cast<Eigen::Index>(ii);
        CompensatedSum off;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = std::hypot(rule.u[i] - rule.u[j], rule.v[i] - rule.v[j]);
            const double k = c * specfun::macdonald_k0(q * d);
            M(i, j) = sv[i] * sv[j] * sw[i] * sw[j] * k;
            if (sv[i] != 0.0) off.add(rule.w[j] * k);
        }
        double diag = 0.0;
        if (sv[i] != 0.0) {
            const double self = c * disc_ray_integral(rule.u[i], rule.v[i], R, [q](double rho) {
                                    return specfun::one_minus_x_k1(q * rho) / (q * q);
                                });
            diag = sv[i] * sv[i] * (self - off.value());
        }
        M(i, i) = diag;
    });
    return M;
}

namespace {

double top_of(const Eigen::MatrixXd& M) {
    if (M.rows() <= 400) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
        return es.eigenvalues()[M.rows() - 1];
    }
    return lanczos_top([&M](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = M * x; }, M.rows(), 1, 1e-12)
        .values[0];
}

PolarRuleOptions refined(const PolarRuleOptions& o) {
    PolarRuleOptions r = o;
    r.max_panel = 0.5 * o.max_panel;
    r.n_theta = 2 * o.n_theta;
    return r;
}

}  // namespace

double fiber_top_eigenvalue(const ProfilePotential& V, double kappa, double p, const FiberOptions& opt) {
    if (!(kappa > 0.0)) throw DomainError("fiber_top_eigenvalue: kappa must be positive");
    const double q = std::sqrt(kappa * kappa + p * p);
    const double mu = top_of(fiber_matrix(V, make_polar_rule(V, opt.rule), q));
    if (opt.check_refinement) {
        const double mu2 = top_of(fiber_matrix(V, make_polar_rule(V, refined(opt.rule)), q));
        if (std::abs(mu2 - mu) > opt.refine_tol * std::max(1.0, std::abs(mu)))
            throw ConvergenceError("fiber quadrature not converged: refinement changes mu_max by " +
                                   std::to_string(std::abs(mu2 - mu)));
    }
    return mu;
}

double fiber_kappa0(const ProfilePotential& V, const PolarRule& rule) {
    // log mu_max is smooth and decreasing in log kappa; bracket then solve with TOMS 748.
    auto f = [&](double lk) { return std::log(top_of(fiber_matrix(V, rule, std::exp(lk)))); };
    double hi = std::log(std::sqrt(V.sup_norm()));
    double fhi = f(hi);
    while (fhi > 0.0) {
        hi += 1.0;
        fhi = f(hi);
    }
    double lo = hi - 1.0;
    double flo = f(lo);
    while (flo < 0.0) {
        hi = lo;
        fhi = flo;
        lo -= 2.0;
        if (lo < -690.0) throw ConvergenceError("fiber route: no transverse binding found");
        flo = f(lo);
    }
    std::uintmax_t iters = 100;
    auto tol = [](double a, double b) { return std::abs(a - b) < 1e-13; };
    const auto br = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    return std::exp(0.5 * (br.first + br.second));
}

Eigen::VectorXd ground_state_on_rule(const ProfilePotential& V, const PolarRule& rule, double kappa0) {
    const Eigen::MatrixXd M = fiber_matrix(V, rule, kappa0);
    const Eigen::Index n = M.rows();
    Eigen::VectorXd y;
    if (n <= 400) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        y = es.eigenvectors().col(n - 1);
    } else {
        y = lanczos_top([&M](const Eigen::VectorXd& x, Eigen::VectorXd& o) { o.noalias() = M * x; }, n, 1, 1e-12)
                .vectors.col(0);
    }
    // f = V phi0 = V^{1/2} g; ||phi0||^2 = <f, (-Delta + kappa^2)^{-2} f>, kernel r K1(kappa r) / (4 pi kappa).
    Eigen::VectorXd f(n), sv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sv[i] = std::sqrt(V(rule.r[i], rule.theta[i]));
        f[i] = sv[i] * y[i] / std::sqrt(rule.w[i]);
    }
    const double k = kappa0;
    std::vector<double> rows(static_cast<std::size_t>(n));
    parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t ii) {
        const Eigen::Index i = static_cast<Eigen::Index>(ii);
        if (f[i] == 0.0) {
            rows[ii] = 0.0;
            return;
        }
        CompensatedSum s;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (f[j] == 0.0) continue;
            const double d = std::hypot(rule.u[i] - rule.u[j], rule.v[i] - rule.v[j]);
            const double ker = d > 0.0 ? d * specfun::macdonald_k1(k * d) / (4 * kPi * k) : 1.0 / (4 * kPi * k * k);
            s.add(rule.w[j] * f[j] * ker);
        }
        rows[ii] = rule.w[ii] * f[i] * s.value();
    });
    CompensatedSum norm2;
    for (double r : rows) norm2.add(r);
    double scale = 1.0 / std::sqrt(norm2.value());
    if (f.sum() < 0) scale = -scale;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (sv[i] > 0.0) phi[i] = scale * f[i] / (sv[i] * sv[i]);
    return phi;
}

// ---------------------------------------------------------------- finite differences

FdSolve fd_ground_state(const ProfilePotential& V, double L, double h, double shift_x, double shift_y, int subsamples,
                        bool want_vector, int k) {
    const int n = static_cast<int>(std::lround(2 * L / h)) - 1;
    if (n < 3) throw InputError("finite-difference grid too coarse");
    const long N = static_cast<long>(n) * n;
    const double a = V.support_radius();
    const int q = std::max(1, subsamples);
    std::vector<double> pot(static_cast<std::size_t>(N), 0.0);
    // A flat-bottom profile is constant on cells that no jump radius passes through.
    const bool flat = V.kind() == ProfilePotential::Kind::FlatBottom;
    const std::vector<double> breaks = V.radial_breaks();
    const auto crosses_jump = [&](double x, double y) {
        const double dx = std::max(0.0, std::abs(x) - 0.5 * h), dy = std::max(0.0, std::abs(y) - 0.5 * h);
        const double rmin = std::hypot(dx, dy), rmax = std::hypot(std::abs(x) + 0.5 * h, std::abs(y) + 0.5 * h);
        for (std::size_t b = 1; b < breaks.size(); ++b)
            if (rmin <= breaks[b] && breaks[b] <= rmax) return true;
        // An ellipse boundary runs through the whole band between its semi-axes.
        return V.region() == ProfilePotential::Region::Ellipse && rmax >= breaks[1] && rmin <= breaks.back();
    };
    for (int i = 0; i < n; ++i) {
        const double x = -L + (i + 1 + shift_x) * h;
        if (std::abs(x) > a + h) continue;
        for (int j = 0; j < n; ++j) {
            const double y = -L + (j + 1 + shift_y) * h;
            if (std::abs(y) > a + h || std::hypot(x, y) > a + 0.75 * h) continue;
            if (flat && !crosses_jump(x, y)) {
                pot[static_cast<std::size_t>(i) * n + j] = V.at_xy(x, y);
                continue;
            }
            double acc = 0.0;
            for (int bi = 0; bi < q; ++bi)
                for (int bj = 0; bj < q; ++bj)
                    acc += V.at_xy(x + ((bi + 0.5) / q - 0.5) * h, y + ((bj + 0.5) / q - 0.5) * h);
            pot[static_cast<std::size_t>(i) * n + j] = acc / (q * q);
        }
    }
    // One layer of the cell-centred 3-D operator with a very tall cell: its z part is the constant
    // 4 / dz^2, removed afterwards. The Dirichlet faces sit half a cell beyond the outer nodes.
    SampledPotential3D grid;
    grid.h = h;
    grid.nx = grid.ny = n;
    grid.nz = 1;
    const double dz = 1e4;
    grid.zf = {-0.5 * dz, 0.5 * dz};
    grid.box.lo = Vec3(-L + (0.5 + shift_x) * h, -L + (0.5 + shift_y) * h, -0.5 * dz);
    grid.box.hi = grid.box.lo + Vec3(n * h, n * h, dz);
    grid.values = std::move(pot);
    EigenSolveOptions eo;
    eo.tol = 1e-8;
    eo.max_iter = 3000;
    eo.shift = std::max(0.05, 0.5 * V.sup_norm());
    const DirectEigen de = lowest_eigenvalues(grid, k, eo);
    const double zshift = 4.0 / (dz * dz);
    FdSolve out;
    out.n = n;
    out.e1 = de.values[0] - zshift;
    out.e2 = k > 1 ? de.values[1] - zshift : std::numeric_limits<double>::quiet_NaN();
    if (want_vector) {
        out.phi = de.vectors[0];
        if (out.phi.sum() < 0) out.phi = -out.phi;
        out.phi /= out.phi.norm() * h;
    }
    return out;
}

namespace {

double keys_weight(double t) {
    t = std::abs(t);
    if (t < 1) return (1.5 * t - 2.5) * t * t + 1;
    if (t < 2) return ((-0.5 * t + 2.5) * t - 4) * t + 2;
    return 0.0;
}

}  // namespace

double TransverseGroundState::phi0_at(double x, double y) const {
    if (n == 0) throw InputError("ground state has no grid");
    const double gx = (x + L) / h - 1.0, gy = (y + L) / h - 1.0;
    const int ix = static_cast<int>(std::floor(gx)), iy = static_cast<int>(std::floor(gy));
    double s = 0.0;
    for (int a = ix - 1; a <= ix + 2; ++a) {
        if (a < 0 || a >= n) continue;  // Dirichlet: zero outside
        const double wa = keys_weight(gx - a);
        for (int b = iy - 1; b <= iy + 2; ++b) {
            if (b < 0 || b >= n) continue;
            s += wa * keys_weight(gy - b) * phi0(a, b);
        }
    }
    return s;
}

TransverseGroundState solve_ground_state(const ProfilePotential& V, const GroundStateOptions& opt) {
    if (!(opt.tol > 0.0)) throw InputError("transverse tolerance must be positive");
    TransverseGroundState gs;
    gs.V = V;
    const PolarRule frule = make_polar_rule(V, opt.fiber_rule);
    gs.fiber_kappa0 = fiber_kappa0(V, frule);
    const double a = V.support_radius();
    const double kf = gs.fiber_kappa0;
    auto note = [&](const std::string& s) { gs.log.push_back(s); };

    bool use_fd = opt.route != "fiber";
    double L = opt.L > 0.0 ? opt.L : a + 7.0 / kf;
    const double h0 = std::min(a / opt.cells_per_radius, 0.25 / std::sqrt(V.sup_norm()));
    const long budget = opt.route == "fd" ? 4 * opt.max_unknowns : opt.max_unknowns;
    // Whole cells only, so every box and level sees the profile at the same alignment.
    L = std::ceil(L / h0 - 1e-9) * h0;
    auto unknowns = [](double Lx, double hx) {
        const double m = 2 * Lx / hx;
        return m * m;
    };
    if (use_fd && unknowns(L, h0 / 2) > static_cast<double>(budget)) {
        note("fd route infeasible (box " + std::to_string(L) + " needs " +
             std::to_string(static_cast<long>(unknowns(L, h0 / 2))) + " unknowns at the second level)");
        if (opt.route == "fd") throw ConvergenceError("finite-difference grid exceeds the unknown budget");
        use_fd = false;
    }

    if (use_fd) {
        // Box growth at the coarsest spacing.
        for (int grow = 0;; ++grow) {
            const double ea = fd_ground_state(V, L, h0, 0, 0, opt.subsamples, false).e1;
            const double Lb = L + std::ceil(0.5 * L / h0) * h0;
            const double eb = fd_ground_state(V, Lb, h0, 0, 0, opt.subsamples, false).e1;
            if (std::abs(ea - eb) < 0.25 * opt.tol) break;
            L = Lb;
            if (grow >= 4 || unknowns(L, h0 / 2) > static_cast<double>(budget)) {
                note("box growth did not settle");
                break;
            }
        }
        const int M = std::max(1, opt.offsets);
        std::vector<double> E, Rich;
        double h = h0;
        double err = std::numeric_limits<double>::infinity();
        for (int lev = 0; lev < opt.max_levels; ++lev, h *= 0.5) {
            if (unknowns(L, h) > static_cast<double>(budget)) break;
            CompensatedSum acc;
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j)
                    acc.add(fd_ground_state(V, L, h, (i + 0.5) / M, (j + 0.5) / M, opt.subsamples, false).e1);
            E.push_back(acc.value() / (M * M));
            std::ostringstream o;
            o.precision(12);
            o << "level " << lev << " h=" << h << " mean eps=" << E.back();
            if (lev >= 1) {
                Rich.push_back((4 * E[lev] - E[lev - 1]) / 3);
                err = lev >= 2 ? std::abs(Rich[lev - 1] - Rich[lev - 2]) : std::abs(E[lev] - E[lev - 1]) / 3;
                o << " richardson=" << Rich.back() << " delta=" << err;
            }
            note(o.str());
            gs.h = h;
            if (lev >= 1 && err < opt.tol) break;
        }
        if (Rich.empty()) {
            note("fd route could not complete two levels");
            use_fd = false;
        } else if (err >= opt.tol && opt.route == "auto") {
            note("fd tolerance not met; falling back to the fiber route");
            use_fd = false;
        } else if (!(Rich.back() < 0.0)) {
            if (opt.route == "fd") throw ConvergenceError("no binding detected by the finite-difference solver");
            note("fd found no negative eigenvalue; falling back to the fiber route");
            use_fd = false;
        } else {
            gs.route = "fd";
            gs.eps0 = Rich.back();
            gs.kappa0 = std::sqrt(-gs.eps0);
            gs.error_estimate = err;
            const FdSolve fin = fd_ground_state(V, L, gs.h, 0, 0, opt.subsamples, true, 2);
            gs.L = L;
            gs.n = fin.n;
            gs.gap = fin.e2 - fin.e1;
            gs.phi0 = Eigen::Map<const Eigen::MatrixXd>(fin.phi.data(), fin.n, fin.n).transpose();
        }
    }

    if (!use_fd) {
        gs.route = "fiber";
        gs.kappa0 = kf;
        gs.eps0 = -kf * kf;
        const PolarRule fine = make_polar_rule(V, refined(opt.fiber_rule));
        gs.error_estimate = std::abs(fiber_kappa0(V, fine) - kf) * 2 * kf;
        gs.gap = std::numeric_limits<double>::quiet_NaN();
        // Grid export by the integral representation phi0 = (1/2pi) int K0(kappa0 |x - x'|) V phi0.
        const Eigen::VectorXd phi = ground_state_on_rule(V, frule, kf);
        gs.L = a + std::min(7.0 / kf, 20.0 * a);
        gs.n = 121;
        gs.h = 2 * gs.L / (gs.n + 1);
        gs.phi0.resize(gs.n, gs.n);
        parallel_for(0, static_cast<std::size_t>(gs.n), [&](std::size_t ii) {
            const int i = static_cast<int>(ii);
            const double x = -gs.L + (i + 1) * gs.h;
            for (int j = 0; j < gs.n; ++j) {
                const double y = -gs.L + (j + 1) * gs.h;
                CompensatedSum s;
                for (std::size_t k = 0; k < frule.size(); ++k) {
                    if (phi[static_cast<Eigen::Index>(k)] == 0.0) continue;
                    const double d = std::max(std::hypot(x - frule.u[k], y - frule.v[k]), 1e-12);
                    s.add(frule.w[k] * V(frule.r[k], frule.theta[k]) * phi[static_cast<Eigen::Index>(k)] *
                          specfun::macdonald_k0(kf * d));
                }
                gs.phi0(i, j) = s.value() / (2 * kPi);
            }
        });
        gs.phi0 /= gs.phi0.norm() * gs.h;
    }
    std::ostringstream o;
    o.precision(12);
    o << "route " << gs.route << ": eps0=" << gs.eps0 << " (fiber cross-check " << gs.fiber_eps0() << ")";
    note(o.str());
    if (!(gs.eps0 < 0.0) || !(gs.eps0 > -V.sup_norm()))
        throw ConvergenceError("ground-state energy outside (-|V|, 0); discretisation trouble");
    return gs;
}

double g0_consistency(const TransverseGroundState& gs, double kappa, const PolarRuleOptions& ro) {
    const double k = kappa > 0.0 ? kappa : gs.kappa0;
    const PolarRule rule = make_polar_rule(gs.V, ro);
    const Eigen::Index n = static_cast<Eigen::Index>(rule.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        y[i] = std::sqrt(rule.w[i] * gs.V(rule.r[i], rule.theta[i])) * gs.phi0_at(rule.u[i], rule.v[i]);
    const Eigen::MatrixXd M = fiber_matrix(gs.V, rule, k);
    return (M * y - y).norm() / y.norm();
}

std::string ground_state_csv(const TransverseGroundState& gs) {
    std::string out = "# L=" + csv::num(gs.L) + "\n# n=" + std::to_string(gs.n) + "\n# eps0=" + csv::num(gs.eps0) +
                      "\n# kappa0=" + csv::num(gs.kappa0) + "\n# route=" + gs.route + "\n";
    out += csv::header({"x", "y", "phi0"});
    for (int i = 0; i < gs.n; ++i)
        for (int j = 0; j < gs.n; ++j)
            out += csv::row({-gs.L + (i + 1) * gs.h, -gs.L + (j + 1) * gs.h, gs.phi0(i, j)});
    return out;
}

TransverseGroundState load_ground_state_csv(const std::string& path, const ProfilePotential& V) {
    const csv::Table t = csv::read_file(path);
    std::map<std::string, std::string> meta;
    for (const auto& c : t.comments) {
        const auto eq = c.find('=');
        if (eq == std::string::npos) continue;
        std::string key = c.substr(0, eq);
        key.erase(0, key.find_first_not_of(' '));
        meta[key] = c.substr(eq + 1);
    }
    for (const char* key : {"L", "n", "eps0"})
        if (!meta.count(key)) throw InputError(path + ": missing header entry " + key);
    TransverseGroundState gs;
    gs.V = V;
    gs.L = std::stod(meta["L"]);
    gs.n = std::stoi(meta["n"]);
    gs.eps0 = std::stod(meta["eps0"]);
    if (!(gs.eps0 < 0.0)) throw InputError(path + ": eps0 must be negative");
    gs.kappa0 = std::sqrt(-gs.eps0);
    gs.route = meta.count("route") ? meta["route"] : "file";
    gs.h = 2 * gs.L / (gs.n + 1);
    if (t.rows.size() != static_cast<std::size_t>(gs.n) * gs.n || t.columns.size() != 3)
        throw InputError(path + ": grid size does not match header");
    gs.phi0.resize(gs.n, gs.n);
    for (int i = 0; i < gs.n; ++i)
        for (int j = 0; j < gs.n; ++j) gs.phi0(i, j) = t.rows[static_cast<std::size_t>(i) * gs.n + j][2];
    gs.fiber_kappa0 = gs.kappa0;
    gs.gap = std::numeric_limits<double>::quiet_NaN();
    return gs;
}

}  // namespace softguide
