#include "softguide/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "softguide/csv.hpp"
#include "softguide/errors.hpp"

namespace softguide {

namespace {

double central_d1(const ScalarFn& f, double s, double h) {
    return (f(s - 2 * h) - 8 * f(s - h) + 8 * f(s + h) - f(s + 2 * h)) / (12 * h);
}

double central_d2(const ScalarFn& f, double s, double h) {
    return (-f(s - 2 * h) + 16 * f(s - h) - 30 * f(s) + 16 * f(s + h) - f(s + 2 * h)) / (12 * h * h);
}

ScalarFn zero_fn() {
    return [](double) { return 0.0; };
}

struct State {
    Vec3 g, t, m1, m2;
    double alpha;
};

State rhs(const CurveSpec& spec, double s, const State& y) {
    const double k = spec.gamma(s);
    const double c = std::cos(y.alpha), sn = std::sin(y.alpha);
    State d;
    d.g = y.t;
    d.t = k * (c * y.m1 + sn * y.m2);
    d.m1 = -k * c * y.t;
    d.m2 = -k * sn * y.t;
    d.alpha = spec.tau(s);
    return d;
}

State axpy(const State& y, double h, const State& d) {
    return {y.g + h * d.g, y.t + h * d.t, y.m1 + h * d.m1, y.m2 + h * d.m2, y.alpha + h * d.alpha};
}

// One classical RK4 step. With `inner` set, the end stages sample gamma and tau just inside
// the step, so a jump at either end is seen from the correct side.
State rk4_step(const CurveSpec& spec, double s, const State& y, double h, bool inner = false) {
    const double e = inner ? 1e-12 * h : 0.0;
    const State k1 = rhs(spec, s + e, y);
    const State k2 = rhs(spec, s + 0.5 * h, axpy(y, 0.5 * h, k1));
    const State k3 = rhs(spec, s + 0.5 * h, axpy(y, 0.5 * h, k2));
    const State k4 = rhs(spec, s + h - e, axpy(y, h, k3));
    State out = y;
    out.g += h / 6 * (k1.g + 2 * k2.g + 2 * k3.g + k4.g);
    out.t += h / 6 * (k1.t + 2 * k2.t + 2 * k3.t + k4.t);
    out.m1 += h / 6 * (k1.m1 + 2 * k2.m1 + 2 * k3.m1 + k4.m1);
    out.m2 += h / 6 * (k1.m2 + 2 * k2.m2 + 2 * k3.m2 + k4.m2);
    out.alpha += h / 6 * (k1.alpha + 2 * k2.alpha + 2 * k3.alpha + k4.alpha);
    return out;
}

// RK4 from s to s + h, split at the breakpoints of the spec that fall strictly inside.
State advance(const CurveSpec& spec, double s, const State& y, double h) {
    if (spec.breaks.empty()) return rk4_step(spec, s, y, h);
    const double lo = std::min(s, s + h), hi = std::max(s, s + h);
    std::vector<double> cuts;
    for (double b : spec.breaks)
        if (b > lo && b < hi) cuts.push_back(b);
    if (h < 0) std::reverse(cuts.begin(), cuts.end());
    else std::sort(cuts.begin(), cuts.end());
    cuts.push_back(s + h);
    State out = y;
    double at = s;
    for (double c : cuts) {
        out = rk4_step(spec, at, out, c - at, true);
        at = c;
    }
    return out;
}

double orthonormality_defect(const State& y) {
    Eigen::Matrix3d F;
    F.row(0) = y.t;
    F.row(1) = y.m1;
    F.row(2) = y.m2;
    return (F * F.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

void gram_schmidt(State& y) {
    y.t.normalize();
    y.m1 -= y.m1.dot(y.t) * y.t;
    y.m1.normalize();
    y.m2 -= y.m2.dot(y.t) * y.t;
    y.m2 -= y.m2.dot(y.m1) * y.m1;
    y.m2.normalize();
}

State to_state(const Frame& f) { return {f.point, f.t, f.m1, f.m2, f.alpha}; }
Frame to_frame(const State& y) { return {y.g, y.t, y.m1, y.m2, y.alpha}; }

}  // namespace

void CurveSpec::validate() const {
    if (!gamma || !tau) throw InputError("curve spec '" + kind + "' lacks gamma or tau");
    if (support_radius && !(*support_radius >= 0.0)) throw InputError("support radius must be non-negative");
    if (!(fd_step > 0.0)) throw InputError("fd_step must be positive");
}

double CurveSpec::gamma_dot(double s) const { return gamma_d ? gamma_d(s) : central_d1(gamma, s, fd_step); }
double CurveSpec::gamma_ddot(double s) const { return gamma_dd ? gamma_dd(s) : central_d2(gamma, s, fd_step); }
double CurveSpec::tau_dot(double s) const { return tau_d ? tau_d(s) : central_d1(tau, s, fd_step); }

double CurveSpec::effective_support(double eps) const {
    if (support_radius) return *support_radius;
    const double step = 0.05;
    double last_nonzero = 0.0;
    for (double s = 0.0; s < 1e4; s += step) {
        if (std::abs(gamma(s)) > eps || std::abs(gamma(-s)) > eps) last_nonzero = s;
        else if (s > 2 * last_nonzero + 10.0) return last_nonzero + step;
    }
    return std::numeric_limits<double>::infinity();
}

CurveSpec straight_curve() {
    CurveSpec c;
    c.kind = "straight";
    c.gamma = c.tau = c.gamma_d = c.gamma_dd = c.tau_d = zero_fn();
    c.support_radius = 0.0;
    return c;
}

CurveSpec bump_bend(double height, double width) {
    if (!(height >= 0.0) || !(width > 0.0)) throw InputError("bump_bend: need height >= 0 and width > 0");
    CurveSpec c;
    c.kind = "bump_bend";
    const double w2 = width * width;
    c.gamma = [=](double s) { return height * std::exp(-0.5 * s * s / w2); };
    c.gamma_d = [=](double s) { return -height * s / w2 * std::exp(-0.5 * s * s / w2); };
    c.gamma_dd = [=](double s) { return height * (s * s / w2 - 1.0) / w2 * std::exp(-0.5 * s * s / w2); };
    c.tau = c.tau_d = zero_fn();
    return c;
}

CurveSpec circle_arc(double radius, double angle) {
    if (!(radius > 0.0) || !(angle >= 0.0)) throw InputError("circle_arc: need R > 0 and angle >= 0");
    CurveSpec c;
    c.kind = "circle_arc";
    const double half = 0.5 * radius * angle;
    c.gamma = [=](double s) { return std::abs(s) <= half ? 1.0 / radius : 0.0; };
    c.tau = zero_fn();
    c.tau_d = zero_fn();
    c.support_radius = half;
    c.breaks = {-half, half};
    c.smoothness = Smoothness::C2;
    return c;
}

CurveSpec helix(double gamma, double tau, std::optional<double> length) {
    if (!(gamma >= 0.0)) throw InputError("helix: gamma must be non-negative");
    CurveSpec c;
    c.kind = "helix";
    if (length) {
        const double half = 0.5 * *length;
        c.gamma = [=](double s) { return std::abs(s) <= half ? gamma : 0.0; };
        c.tau = [=](double s) { return std::abs(s) <= half ? tau : 0.0; };
        c.support_radius = half;
        c.breaks = {-half, half};
        c.smoothness = Smoothness::C2;
    } else {
        c.gamma = [=](double) { return gamma; };
        c.tau = [=](double) { return tau; };
        c.gamma_d = c.gamma_dd = c.tau_d = zero_fn();
    }
    return c;
}

CurveSpec tabulated_curve(std::vector<double> s, std::vector<double> gamma, std::vector<double> tau) {
    if (s.size() < 2 || gamma.size() != s.size() || tau.size() != s.size())
        throw InputError("tabulated curve: need at least two rows of (s, gamma, tau)");
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
        if (!(s[i + 1] > s[i])) throw InputError("tabulated curve: s must be strictly increasing");
    for (std::size_t i = 0; i < s.size(); ++i)
        if (!std::isfinite(gamma[i]) || !std::isfinite(tau[i]) || gamma[i] < 0.0)
            throw InputError("tabulated curve: gamma must be finite and non-negative, tau finite");
    auto interp = [s](std::vector<double> v) {
        return [s, v](double x) {
            if (x <= s.front() || x >= s.back()) return 0.0;
            const auto it = std::upper_bound(s.begin(), s.end(), x);
            const std::size_t j = static_cast<std::size_t>(it - s.begin());
            const double u = (x - s[j - 1]) / (s[j] - s[j - 1]);
            return (1 - u) * v[j - 1] + u * v[j];
        };
    };
    CurveSpec c;
    c.kind = "tabulated";
    c.gamma = interp(gamma);
    c.tau = interp(tau);
    c.support_radius = std::max(std::abs(s.front()), std::abs(s.back()));
    c.breaks = s;
    c.smoothness = Smoothness::C2;
    return c;
}

CurveSpec load_tabulated_curve(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    auto col = [&](const std::string& name) {
        const auto it = std::find(t.columns.begin(), t.columns.end(), name);
        if (it == t.columns.end()) throw InputError("tabulated curve " + path + " lacks column " + name);
        return static_cast<std::size_t>(it - t.columns.begin());
    };
    const std::size_t cs = col("s"), cg = col("gamma"), ct = col("tau");
    std::vector<double> s, g, tau;
    for (const auto& r : t.rows) {
        s.push_back(r[cs]);
        g.push_back(r[cg]);
        tau.push_back(r[ct]);
    }
    return tabulated_curve(std::move(s), std::move(g), std::move(tau));
}

FramedCurve::FramedCurve(std::shared_ptr<const CurveSpec> spec, std::vector<double> s, std::vector<Frame> frames,
                         double drift)
    : spec_(std::move(spec)), s_(std::move(s)), frames_(std::move(frames)), drift_(drift) {
    if (s_.size() < 2 || s_.size() != frames_.size()) throw InputError("FramedCurve: need at least two samples");
    ds_ = (s_.back() - s_.front()) / static_cast<double>(s_.size() - 1);
}

Frame FramedCurve::frame_at(double s) const {
    const double tol = 1e-9 * std::max(1.0, ds_);
    if (s < s_.front() - tol || s > s_.back() + tol) {
        std::ostringstream msg;
        msg << "s = " << s << " outside framed range [" << s_.front() << ", " << s_.back() << "]";
        throw DomainError(msg.str());
    }
    const double u = (s - s_.front()) / ds_;
    const std::size_t i = std::min(static_cast<std::size_t>(std::max(0.0, std::round(u))), s_.size() - 1);
    const double h = s - s_[i];
    if (h == 0.0) return frames_[i];
    State y = advance(*spec_, s_[i], to_state(frames_[i]), h);
    gram_schmidt(y);
    return to_frame(y);
}

FramedCurve FramedCurve::transformed(const Eigen::Matrix3d& R, const Vec3& b) const {
    std::vector<Frame> f = frames_;
    for (auto& fr : f) {
        fr.point = R * fr.point + b;
        fr.t = R * fr.t;
        fr.m1 = R * fr.m1;
        fr.m2 = R * fr.m2;
    }
    return FramedCurve(spec_, s_, std::move(f), drift_);
}

FramedCurve FramedCurve::gauge_shifted(double dalpha) const {
    std::vector<Frame> f = frames_;
    const double c = std::cos(dalpha), sn = std::sin(dalpha);
    for (auto& fr : f) {
        const Vec3 m1 = c * fr.m1 - sn * fr.m2;
        const Vec3 m2 = sn * fr.m1 + c * fr.m2;
        fr.m1 = m1;
        fr.m2 = m2;
        fr.alpha += dalpha;
    }
    return FramedCurve(spec_, s_, std::move(f), drift_);
}

bool FramedCurve::is_straight() const {
    for (double s : s_)
        if (spec_->gamma(s) != 0.0) return false;
    return true;
}

FramedCurve build_frames(const CurveSpec& spec, double s_min, double s_max, double ds) {
    spec.validate();
    if (!(ds > 0.0)) throw InputError("build_frames: step must be positive");
    if (!(s_max > s_min)) throw InputError("build_frames: empty range");
    const std::size_t n = static_cast<std::size_t>(std::ceil((s_max - s_min) / ds - 1e-9)) + 1;
    const double h = (s_max - s_min) / static_cast<double>(n - 1);
    auto shared = std::make_shared<const CurveSpec>(spec);

    std::vector<double> s(n);
    std::vector<Frame> frames(n);
    State y{Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ(), 0.0};
    s[0] = s_min;
    frames[0] = to_frame(y);
    double drift = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double s0 = s_min + h * static_cast<double>(i - 1);
        for (double probe : {s0, s0 + 0.5 * h, s0 + h}) {
            if (!std::isfinite(spec.gamma(probe)) || !std::isfinite(spec.tau(probe)))
                throw InputError("non-finite curvature or torsion at s = " + std::to_string(probe));
        }
        y = advance(spec, s0, y, h);
        const double defect = orthonormality_defect(y);
        drift = std::max(drift, defect);
        if (defect > 1e-8)
            throw ConvergenceError("frame orthonormality drift " + std::to_string(defect) + " at s = " +
                                   std::to_string(s0 + h) + "; reduce the step");
        gram_schmidt(y);
        s[i] = s_min + h * static_cast<double>(i);
        frames[i] = to_frame(y);
    }
    return FramedCurve(shared, std::move(s), std::move(frames), drift);
}

std::shared_ptr<const FramedCurve> covering_frames(const FramedCurve& fc, double S) {
    if (fc.s_min() <= -S && fc.s_max() >= S) return std::make_shared<const FramedCurve>(fc);
    const double step = std::min(fc.step(), 0.05);
    return std::make_shared<const FramedCurve>(build_frames(fc.spec(), -S - step, S + step, step));
}

Vec3 tube_point_from_frame(const Frame& f, double r, double theta) {
    return f.point - r * (std::cos(theta) * f.m1 + std::sin(theta) * f.m2);
}

TubePoint tube_point(const FramedCurve& fc, double s, double r, double theta) {
    if (!(r >= 0.0)) throw DomainError("tube_point: r must be non-negative");
    return {s, r, theta, tube_point_from_frame(fc.frame_at(s), r, theta)};
}

double jacobian_h(const FramedCurve& fc, double s, double r, double theta) {
    const Frame f = fc.frame_at(s);
    return 1.0 + r * fc.gamma(s) * std::cos(theta - f.alpha);
}

double effective_potential(const FramedCurve& fc, const CurveSpec& spec, double s, double r, double theta) {
    if (spec.smoothness != Smoothness::C4)
        throw CapabilityError("effective potential needs a C4 curve spec; '" + spec.kind + "' is C2");
    const double alpha = fc.frame_at(s).alpha;
    const double g = spec.gamma(s), gd = spec.gamma_dot(s), gdd = spec.gamma_ddot(s);
    const double t = spec.tau(s), td = spec.tau_dot(s);
    const double c = std::cos(theta - alpha), sn = std::sin(theta - alpha);
    const double h = 1.0 + r * g * c;
    const double hs = r * g * t * sn + r * gd * c;
    const double hss = r * (gdd - g * t * t) * c + r * (2 * gd * t + g * td) * sn;
    return -g * g / (4 * h * h) + hss / (2 * h * h * h) - 1.25 * hs * hs / (h * h * h * h);
}

std::string AssumptionReport::summary() const {
    std::ostringstream o;
    o << "a*sup(gamma) = " << local_injectivity << (local_ok ? " (ok)" : " (FAIL: must be < 1)") << "; ";
    o << "min self-distance beyond |s-s'| > " << self_distance_gap << " = " << min_self_distance
      << (self_distance_ok ? " (ok)" : " (FAIL: below 2a)") << "; ";
    o << "chord growth " << (chord_growth_ok ? "ok" : "FAIL (bounded chords, U-shape)");
    return o.str();
}

AssumptionReport validate_assumptions(const FramedCurve& fc, const CurveSpec& spec, double a) {
    AssumptionReport rep;
    rep.a = a;
    const auto& s = fc.grid();
    const auto& fr = fc.frames();
    double gmax = 0.0;
    for (double x : s) gmax = std::max(gmax, spec.gamma(x));
    if (spec.support_radius) {
        const double s0 = *spec.support_radius;
        for (int k = 0; k <= 400; ++k) gmax = std::max(gmax, spec.gamma(-s0 + 2 * s0 * k / 400.0));
    }
    rep.local_injectivity = a * gmax;
    rep.local_ok = rep.local_injectivity < 1.0;

    // Pairs further apart in s than half a turn at the tightest bend (and than 4a).
    const double gap = std::max(4.0 * a, gmax > 0.0 ? 3.14159265358979 / gmax : 0.0);
    rep.self_distance_gap = gap;
    const std::size_t stride = std::max<std::size_t>(1, s.size() / 1500);
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.size(); i += stride)
        for (std::size_t j = i + stride; j < s.size(); j += stride)
            if (s[j] - s[i] > gap) dmin = std::min(dmin, (fr[i].point - fr[j].point).norm());
    rep.min_self_distance = dmin;
    rep.self_distance_ok = !(dmin < 2.0 * a);

    const double length = fc.s_max() - fc.s_min();
    for (double d = std::max(fc.step(), length / 64.0); d <= length * (1 + 1e-12); d *= 2.0) {
        const std::size_t k = static_cast<std::size_t>(std::round(d / fc.step()));
        if (k == 0 || k >= s.size()) break;
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + k < s.size(); i += stride) m = std::min(m, (fr[i + k].point - fr[i].point).norm());
        rep.chord_separations.push_back(static_cast<double>(k) * fc.step());
        rep.chord_min.push_back(m);
    }
    // Assumption (c): the shortest chord at a given separation must keep growing.
    const std::size_t nc = rep.chord_min.size();
    if (nc >= 3) rep.chord_growth_ok = rep.chord_min[nc - 1] > 1.5 * rep.chord_min[nc - 2];
    return rep;
}

std::string frames_csv(const FramedCurve& fc) {
    std::string out = csv::header({"s", "Gx", "Gy", "Gz", "tx", "ty", "tz", "m1x", "m1y", "m1z", "m2x", "m2y", "m2z",
                                   "alpha"});
    for (std::size_t i = 0; i < fc.size(); ++i) {
        const Frame& f = fc.frames()[i];
        out += csv::row({fc.grid()[i], f.point.x(), f.point.y(), f.point.z(), f.t.x(), f.t.y(), f.t.z(), f.m1.x(),
                         f.m1.y(), f.m1.z(), f.m2.x(), f.m2.y(), f.m2.z(), f.alpha});
    }
    return out;
}

}  // namespace softguide
