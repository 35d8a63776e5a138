#include "softguide/direct3d.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <chrono>
#include <cmath>
#include <fftw3.h>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "softguide/csv.hpp"
#include "softguide/eigs.hpp"
#include "softguide/errors.hpp"
#include "softguide/parallel.hpp"
#include "softguide/specfun.hpp"

namespace softguide {

using specfun::kPi;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> uniform_faces(double lo, double hi, double h) {
    const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / h - 1e-9)));
    std::vector<double> f(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) f[static_cast<std::size_t>(k)] = lo + k * h;
    return f;
}

std::vector<double> z_faces(const Box3& box, const GridOptions& g, double a) {
    if (!g.graded_z) return uniform_faces(g.mirror_z ? 0.0 : box.lo.z(), box.hi.z(), g.h);
    const double band = g.z_fine > 0.0 ? g.z_fine : a + 2.0 * g.h;
    const double top = g.mirror_z ? box.hi.z() : std::max(-box.lo.z(), box.hi.z());
    std::vector<double> pos{0.0};
    double f = 0.0, dz = g.h;
    while (f < band - 1e-12 && f < top - 1e-12) pos.push_back(f += g.h);
    const std::size_t nb = pos.size();
    while (f < top - 1e-12) {
        dz = std::min(dz * g.z_growth, g.z_max_ratio * g.h);
        pos.push_back(f += dz);
    }
    if (pos.size() > nb + 1) {
        // Shrink the graded cells so the last face lands on the box.
        const double f0 = pos[nb - 1], c = (top - f0) / (pos.back() - f0);
        for (std::size_t k = nb; k < pos.size(); ++k) pos[k] = f0 + c * (pos[k] - f0);
    }
    if (g.mirror_z) return pos;
    std::vector<double> all;
    for (auto it = pos.rbegin(); it != pos.rend(); ++it) all.push_back(-*it);
    all.insert(all.end(), pos.begin() + 1, pos.end());
    return all;
}

void check_grid_options(const GridOptions& g) {
    if (!(g.h > 0.0)) throw ConfigError("grid: spacing h must be positive");
    if (g.subsamples < 0) throw ConfigError("grid: subsamples must be non-negative");
    if (g.graded_z && (!(g.z_growth >= 1.0) || !(g.z_max_ratio >= 1.0)))
        throw ConfigError("grid: z grading needs growth >= 1 and max ratio >= 1");
}

// Radii where V may jump; a cell whose centre is closer than its half diagonal to one of them
// is averaged over sub-cells. Non-radial profiles jump anywhere between the inner break and a.
struct JumpSet {
    std::vector<double> radii;
    double band_lo = std::numeric_limits<double>::infinity();
    double a = 0.0;

    explicit JumpSet(const ProfilePotential& V) : a(V.support_radius()) {
        for (double b : V.radial_breaks())
            if (b > 0.0) radii.push_back(b);
        if (!V.is_radial() && !radii.empty()) band_lo = radii.front();
    }
    bool near(double r, double d) const {
        if (r >= band_lo - d && r <= a + d) return true;
        for (double b : radii)
            if (std::abs(r - b) <= d) return true;
        return false;
    }
};

double profile_value(const ProfilePotential& V, double r, double theta) {
    return r <= V.support_radius() ? V(r, theta) : 0.0;
}

// Fraction of the unit cube where sum a_i u_i < alpha, for a_i >= 0.
double cube_fraction(Vec3 a, double alpha) {
    const double floor = 1e-6 * std::max(a.sum(), 1e-300);
    for (int i = 0; i < 3; ++i) a[i] = std::max(a[i], floor);
    if (alpha <= 0.0) return 0.0;
    if (alpha >= a.sum()) return 1.0;
    const auto c3 = [](double x) { return x > 0.0 ? x * x * x : 0.0; };
    const double v = c3(alpha) - c3(alpha - a[0]) - c3(alpha - a[1]) - c3(alpha - a[2]) + c3(alpha - a[0] - a[1]) +
                     c3(alpha - a[0] - a[2]) + c3(alpha - a[1] - a[2]) - c3(alpha - a.sum());
    return std::clamp(v / (6.0 * a[0] * a[1] * a[2]), 0.0, 1.0);
}

struct LocalCoord {
    double r, theta;
    Vec3 grad;  // unit gradient of r
};

// Cell average of V over q^3 sub-cells; `coord` maps a point to LocalCoord. A sub-cell crossed by
// a jump radius b is split by the tangent plane of r = b, with the exact volume fraction on each side.
template <class Coord>
double cell_average(const ProfilePotential& V, const JumpSet& jumps, const Vec3& lo, const Vec3& ext, int q,
                    const Coord& coord) {
    const Vec3 e = ext / q;
    const double half_diag = 0.5 * e.norm();
    CompensatedSum sum;
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
            for (int k = 0; k < q; ++k) {
                const Vec3 x = lo + Vec3((i + 0.5) * e.x(), (j + 0.5) * e.y(), (k + 0.5) * e.z());
                const LocalCoord c = coord(x);
                double b = -1.0;
                for (double rb : jumps.radii)
                    if (std::abs(c.r - rb) <= half_diag && (b < 0.0 || std::abs(c.r - rb) < std::abs(c.r - b))) b = rb;
                if (b < 0.0 || !V.is_radial()) {
                    sum.add(profile_value(V, c.r, c.theta));
                    continue;
                }
                // Inside (r < b) where (r - b) + grad . (y - x) < 0.
                const Vec3 m = c.grad.cwiseProduct(e);
                const double f = cube_fraction(m.cwiseAbs(), 0.5 * m.cwiseAbs().sum() - (c.r - b));
                const double vin = profile_value(V, std::min(c.r, b * (1.0 - 1e-12)), c.theta);
                const double vout = profile_value(V, std::max(c.r, b * (1.0 + 1e-12)), c.theta);
                sum.add(f * vin + (1.0 - f) * vout);
            }
    return sum.value() / (q * q * q);
}

}  // namespace

SampledPotential3D empty_grid(const Box3& box, const GridOptions& g, double a) {
    check_grid_options(g);
    SampledPotential3D p;
    p.h = g.h;
    p.mirror_x = g.mirror_x;
    p.mirror_z = g.mirror_z;
    p.box = box;
    if (g.mirror_x) p.box.lo.x() = 0.0;
    if (g.mirror_z) p.box.lo.z() = 0.0;
    for (int d = 0; d < 3; ++d)
        if (!(p.box.hi[d] > p.box.lo[d])) throw InputError("grid: box must have positive extent in every direction");
    p.nx = static_cast<int>(std::ceil((p.box.hi.x() - p.box.lo.x()) / g.h - 1e-9));
    p.ny = static_cast<int>(std::ceil((p.box.hi.y() - p.box.lo.y()) / g.h - 1e-9));
    p.box.hi.x() = p.box.lo.x() + p.nx * g.h;
    p.box.hi.y() = p.box.lo.y() + p.ny * g.h;
    p.zf = z_faces(p.box, g, a);
    p.nz = static_cast<int>(p.zf.size()) - 1;
    p.box.lo.z() = p.zf.front();
    p.box.hi.z() = p.zf.back();
    if (p.nx < 2 || p.ny < 2 || p.nz < 2) throw InputError("grid: box must span at least two cells per axis");
    p.values.assign(static_cast<std::size_t>(p.nx) * static_cast<std::size_t>(p.ny) * static_cast<std::size_t>(p.nz), 0.0);
    return p;
}

// ---------------------------------------------------------------------------------------------
// Nearest-point inversion

TubeLocator::TubeLocator(const FramedCurve& fc, double reach, double sample_step)
    : fc_(fc), reach_(reach), ds_(sample_step > 0.0 ? sample_step : std::min(fc.step(), 0.5 * reach)) {
    if (!(reach > 0.0)) throw InputError("tube locator: reach must be positive");
    const int n = std::max(1, static_cast<int>(std::ceil((fc.s_max() - fc.s_min()) / ds_ - 1e-9)));
    ds_ = (fc.s_max() - fc.s_min()) / n;
    cell_ = reach;
    s_.resize(static_cast<std::size_t>(n) + 1);
    p_.resize(s_.size());
    for (int i = 0; i <= n; ++i) {
        s_[static_cast<std::size_t>(i)] = i == n ? fc.s_max() : fc.s_min() + i * ds_;
        p_[static_cast<std::size_t>(i)] = fc.frame_at(s_[static_cast<std::size_t>(i)]).point;
    }
    hash_.reserve(p_.size());
    for (std::size_t i = 0; i < p_.size(); ++i) hash_.emplace_back(key(p_[i]), static_cast<int>(i));
    std::sort(hash_.begin(), hash_.end());
}

long long TubeLocator::key(const Vec3& x) const {
    constexpr long long off = 1 << 20;
    const auto c = [&](double v) { return static_cast<long long>(std::floor(v / cell_)) + off; };
    return (c(x.x()) << 42) | (c(x.y()) << 21) | c(x.z());
}

TubeCoord TubeLocator::refine(const Vec3& x, double s_guess, double bracket) const {
    const double lo = std::max(fc_.s_min(), s_guess - bracket), hi = std::min(fc_.s_max(), s_guess + bracket);
    const auto f = [&](double s) { return (x - fc_.frame_at(s).point).squaredNorm(); };
    const auto m = boost::math::tools::brent_find_minima(f, lo, hi, std::numeric_limits<double>::digits / 2);
    const Frame fr = fc_.frame_at(m.first);
    const Vec3 d = x - fr.point;
    const double u = -d.dot(fr.m1), v = -d.dot(fr.m2);
    return {m.first, std::hypot(u, v), std::atan2(v, u)};
}

TubeCoord TubeLocator::locate(const Vec3& x) const {
    std::vector<int> hits;
    const Vec3 c = x / cell_;
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b)
            for (int e = -1; e <= 1; ++e) {
                const long long k = key(cell_ * (c.array().floor().matrix() + Vec3(a + 0.5, b + 0.5, e + 0.5)));
                auto it = std::lower_bound(hash_.begin(), hash_.end(), std::make_pair(k, -1));
                for (; it != hash_.end() && it->first == k; ++it)
                    if ((p_[static_cast<std::size_t>(it->second)] - x).norm() <= reach_) hits.push_back(it->second);
            }
    if (hits.empty()) return {0.0, std::numeric_limits<double>::infinity(), 0.0};
    std::sort(hits.begin(), hits.end());
    if (hits.back() - hits.front() + 1 != static_cast<int>(hits.size())) {
        std::ostringstream msg;
        msg << "ambiguous nearest point at (" << x.x() << ", " << x.y() << ", " << x.z() << "): arcs near s = "
            << s_[static_cast<std::size_t>(hits.front())] << " and s = " << s_[static_cast<std::size_t>(hits.back())]
            << " both lie within " << reach_;
        throw GeometryError(msg.str());
    }
    int best = hits.front();
    for (int i : hits)
        if ((p_[static_cast<std::size_t>(i)] - x).squaredNorm() < (p_[static_cast<std::size_t>(best)] - x).squaredNorm())
            best = i;
    return refine(x, s_[static_cast<std::size_t>(best)], 1.5 * ds_);
}

SampledPotential3D sample_potential(const FramedCurve& fc, const ProfilePotential& V, const Box3& box,
                                    const GridOptions& g) {
    const double a = V.support_radius();
    SampledPotential3D p = empty_grid(box, g, a);
    double dz_max = 0.0;
    for (int k = 0; k < p.nz; ++k) dz_max = std::max(dz_max, p.dz(k));
    const double diag = 0.5 * std::sqrt(2.0 * g.h * g.h + dz_max * dz_max);
    TubeLocator loc(fc, a + diag, 0.5 * g.h);

    // Candidate nodes: cubes around the curve samples.
    std::vector<char> flag(p.size(), 0);
    const double reach = loc.reach();
    for (const Vec3& c : loc.sample_points()) {
        const auto range = [&](double lo, double hi, double x0, double step, int n) {
            int i0 = static_cast<int>(std::floor((lo - x0) / step - 0.5));
            int i1 = static_cast<int>(std::ceil((hi - x0) / step - 0.5));
            return std::make_pair(std::max(0, i0), std::min(n - 1, i1));
        };
        const auto [i0, i1] = range(c.x() - reach, c.x() + reach, p.box.lo.x(), g.h, p.nx);
        const auto [j0, j1] = range(c.y() - reach, c.y() + reach, p.box.lo.y(), g.h, p.ny);
        if (i0 > i1 || j0 > j1) continue;
        const int k0 = std::max(0, static_cast<int>(std::upper_bound(p.zf.begin(), p.zf.end(), c.z() - reach) - p.zf.begin()) - 1);
        const int k1 = std::min(p.nz - 1, static_cast<int>(std::upper_bound(p.zf.begin(), p.zf.end(), c.z() + reach) - p.zf.begin()) - 1);
        for (int i = i0; i <= i1; ++i)
            for (int j = j0; j <= j1; ++j)
                for (int k = k0; k <= k1; ++k) flag[p.index(i, j, k)] = 1;
    }
    std::vector<std::size_t> nodes;
    for (std::size_t n = 0; n < flag.size(); ++n)
        if (flag[n]) nodes.push_back(n);
    flag.clear();
    flag.shrink_to_fit();

    const JumpSet jumps(V);
    std::vector<char> averaged(nodes.size(), 0);
    parallel_for(0, nodes.size(), [&](std::size_t t) {
        const std::size_t n = nodes[t];
        const int k = static_cast<int>(n % static_cast<std::size_t>(p.nz));
        const std::size_t ij = n / static_cast<std::size_t>(p.nz);
        const int j = static_cast<int>(ij % static_cast<std::size_t>(p.ny));
        const int i = static_cast<int>(ij / static_cast<std::size_t>(p.ny));
        const Vec3 x(p.x(i), p.y(j), p.z(k));
        const TubeCoord tc = loc.locate(x);
        if (!std::isfinite(tc.r)) return;
        const double d = 0.5 * std::sqrt(2.0 * g.h * g.h + p.dz(k) * p.dz(k));
        if (g.subsamples > 0 && jumps.near(tc.r, d)) {
            const Vec3 lo(x.x() - 0.5 * g.h, x.y() - 0.5 * g.h, p.zf[static_cast<std::size_t>(k)]);
            const Vec3 ext(g.h, g.h, p.dz(k));
            p.values[n] = cell_average(V, jumps, lo, ext, g.subsamples, [&](const Vec3& y) {
                const TubeCoord c = loc.refine(y, tc.s, 2.0 * d + loc.sample_step());
                const Frame f = fc.frame_at(c.s);
                return LocalCoord{c.r, c.theta, -(f.m1 * std::cos(c.theta) + f.m2 * std::sin(c.theta))};
            });
            averaged[t] = 1;
        } else {
            p.values[n] = profile_value(V, tc.r, tc.theta);
        }
    });
    for (std::size_t t = 0; t < nodes.size(); ++t) {
        if (p.values[nodes[t]] != 0.0) ++p.tube_nodes;
        p.averaged_nodes += averaged[t];
    }
    return p;
}

// ---------------------------------------------------------------------------------------------
// Operator, preconditioner and block eigensolver

namespace {

// A = -Lap_h - Vtilde in the symmetric variables w = sqrt(dz) u.
class GridOperator {
public:
    explicit GridOperator(const SampledPotential3D& p) : p_(p), nx_(p.nx), ny_(p.ny), nz_(p.nz) {
        ih2_ = 1.0 / (p.h * p.h);
        zdiag_.assign(static_cast<std::size_t>(nz_), 0.0);
        zoff_.assign(static_cast<std::size_t>(nz_), 0.0);  // coupling of k and k + 1
        for (int k = 0; k < nz_; ++k) {
            const double dk = p.dz(k);
            const double c_lo = k == 0 ? (p.mirror_z ? 0.0 : 2.0 / dk) : 1.0 / (p.z(k) - p.z(k - 1));
            const double c_hi = k == nz_ - 1 ? 2.0 / dk : 1.0 / (p.z(k + 1) - p.z(k));
            zdiag_[static_cast<std::size_t>(k)] = (c_lo + c_hi) / dk;
            if (k < nz_ - 1) zoff_[static_cast<std::size_t>(k)] = -c_hi / std::sqrt(dk * p.dz(k + 1));
        }
    }

    std::size_t size() const { return p_.size(); }

    void apply(const double* w, double* out) const {
        const std::size_t nz = static_cast<std::size_t>(nz_), ny = static_cast<std::size_t>(ny_);
        parallel_for(0, static_cast<std::size_t>(nx_), [&](std::size_t i) {
            const double cx = (i == 0 && p_.mirror_x) ? 1.0 : (i == 0 || i + 1 == static_cast<std::size_t>(nx_) ? 3.0 : 2.0);
            for (std::size_t j = 0; j < ny; ++j) {
                const double cy = (j == 0 || j + 1 == ny) ? 3.0 : 2.0;
                const std::size_t base = (i * ny + j) * nz;
                for (std::size_t k = 0; k < nz; ++k) {
                    const std::size_t n = base + k;
                    double v = ((cx + cy) * ih2_ + zdiag_[k] - p_.values[n]) * w[n];
                    if (i > 0) v -= ih2_ * w[n - ny * nz];
                    if (i + 1 < static_cast<std::size_t>(nx_)) v -= ih2_ * w[n + ny * nz];
                    if (j > 0) v -= ih2_ * w[n - nz];
                    if (j + 1 < ny) v -= ih2_ * w[n + nz];
                    if (k > 0) v += zoff_[k - 1] * w[n - 1];
                    if (k + 1 < nz) v += zoff_[k] * w[n + 1];
                    out[n] = v;
                }
            }
        });
    }

    const std::vector<double>& zdiag() const { return zdiag_; }
    const std::vector<double>& zoff() const { return zoff_; }
    const SampledPotential3D& grid() const { return p_; }

private:
    const SampledPotential3D& p_;
    int nx_, ny_, nz_;
    double ih2_;
    std::vector<double> zdiag_, zoff_;
};

// (-Lap_h + sigma)^{-1}: sine/cosine transforms in x and y, tridiagonal solves in z.
class PoissonPreconditioner {
public:
    PoissonPreconditioner(const GridOperator& A, double sigma) : A_(A), sigma_(sigma) {
        const SampledPotential3D& p = A.grid();
        nx_ = p.nx;
        ny_ = p.ny;
        nz_ = p.nz;
        buf_ = fftw_alloc_real(p.size());
        if (!buf_) throw std::bad_alloc();
        int n[2] = {nx_, ny_};
        const fftw_r2r_kind kx = p.mirror_x ? FFTW_REDFT11 : FFTW_RODFT10;
        const fftw_r2r_kind kxi = p.mirror_x ? FFTW_REDFT11 : FFTW_RODFT01;
        fftw_r2r_kind fwd[2] = {kx, FFTW_RODFT10}, inv[2] = {kxi, FFTW_RODFT01};
        fwd_ = fftw_plan_many_r2r(2, n, nz_, buf_, nullptr, nz_, 1, buf_, nullptr, nz_, 1, fwd, FFTW_ESTIMATE);
        inv_ = fftw_plan_many_r2r(2, n, nz_, buf_, nullptr, nz_, 1, buf_, nullptr, nz_, 1, inv, FFTW_ESTIMATE);
        if (!fwd_ || !inv_) throw ConvergenceError("could not plan the transforms of the preconditioner");
        const double ih2 = 1.0 / (p.h * p.h);
        lx_.resize(static_cast<std::size_t>(nx_));
        ly_.resize(static_cast<std::size_t>(ny_));
        for (int k = 0; k < nx_; ++k)
            lx_[static_cast<std::size_t>(k)] = (2.0 - 2.0 * std::cos(kPi * (k + (p.mirror_x ? 0.5 : 1.0)) / nx_)) * ih2;
        for (int k = 0; k < ny_; ++k) ly_[static_cast<std::size_t>(k)] = (2.0 - 2.0 * std::cos(kPi * (k + 1.0) / ny_)) * ih2;
        scale_ = 1.0 / (4.0 * nx_ * ny_);
    }
    ~PoissonPreconditioner() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(buf_);
    }
    PoissonPreconditioner(const PoissonPreconditioner&) = delete;
    PoissonPreconditioner& operator=(const PoissonPreconditioner&) = delete;

    void apply(const double* in, double* out) {
        const std::size_t N = A_.size(), nz = static_cast<std::size_t>(nz_);
        std::copy(in, in + N, buf_);
        fftw_execute(fwd_);
        const auto& d = A_.zdiag();
        const auto& e = A_.zoff();
        parallel_for(0, static_cast<std::size_t>(nx_), [&](std::size_t i) {
            std::vector<double> c(nz);
            for (std::size_t j = 0; j < static_cast<std::size_t>(ny_); ++j) {
                const double mu = lx_[i] + ly_[j] + sigma_;
                double* y = buf_ + (i * static_cast<std::size_t>(ny_) + j) * nz;
                // Thomas algorithm on the symmetric tridiagonal (zdiag + mu, zoff).
                double b = d[0] + mu;
                c[0] = e[0] / b;
                y[0] = y[0] * scale_ / b;
                for (std::size_t k = 1; k < nz; ++k) {
                    b = d[k] + mu - e[k - 1] * c[k - 1];
                    if (k + 1 < nz) c[k] = e[k] / b;
                    y[k] = (y[k] * scale_ - e[k - 1] * y[k - 1]) / b;
                }
                for (std::size_t k = nz - 1; k-- > 0;) y[k] -= c[k] * y[k + 1];
            }
        });
        fftw_execute(inv_);
        std::copy(buf_, buf_ + N, out);
    }

private:
    const GridOperator& A_;
    double sigma_;
    int nx_, ny_, nz_;
    double* buf_ = nullptr;
    fftw_plan fwd_ = nullptr, inv_ = nullptr;
    std::vector<double> lx_, ly_;
    double scale_;
};

// Orthonormal basis of the column span; directions with relative weight below 1e-12 are dropped.
Mat orthonormalize(const Mat& W) {
    Mat Q = W;
    for (int pass = 0; pass < 2 && Q.cols() > 0; ++pass) {
        Mat G = Q.transpose() * Q;
        G = 0.5 * (G + G.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(G);
        const double top = es.eigenvalues().maxCoeff();
        std::vector<Eigen::Index> keep;
        for (Eigen::Index c = 0; c < G.cols(); ++c)
            if (es.eigenvalues()[c] > 1e-12 * top && es.eigenvalues()[c] > 0.0) keep.push_back(c);
        Mat T(G.cols(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c)
            T.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) / std::sqrt(es.eigenvalues()[keep[c]]);
        Q = Q * T;
    }
    return Q;
}

}  // namespace

DirectEigen lowest_eigenvalues(const SampledPotential3D& p, int count, const EigenSolveOptions& opt) {
    if (count < 1) throw InputError("lowest_eigenvalues: count must be positive");
    const GridOperator A(p);
    const Eigen::Index N = static_cast<Eigen::Index>(A.size());
    const int m = count + std::max(0, opt.extra);
    if (m > N) throw InputError("lowest_eigenvalues: more eigenvalues requested than grid nodes");
    double vmax = 0.0;
    for (double v : p.values) vmax = std::max(vmax, v);
    const double sigma = opt.shift > 0.0 ? opt.shift : std::max(0.05, 0.1 * vmax);
    PoissonPreconditioner T(A, sigma);

    const auto applyA = [&](const Mat& X) {
        Mat Y(X.rows(), X.cols());
        for (Eigen::Index c = 0; c < X.cols(); ++c) A.apply(X.col(c).data(), Y.col(c).data());
        return Y;
    };
    const auto applyT = [&](const Mat& X) {
        Mat Y(X.rows(), X.cols());
        for (Eigen::Index c = 0; c < X.cols(); ++c) T.apply(X.col(c).data(), Y.col(c).data());
        return Y;
    };

    // Start: the smoothed potential, which resembles the ground state, plus fixed-seed noise.
    Mat X(N, m);
    std::mt19937_64 gen(20240607);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    Vec v0 = Eigen::Map<const Vec>(p.values.data(), N);
    if (v0.norm() == 0.0) v0.setOnes();
    Mat V0 = v0;
    X.col(0) = applyT(V0).col(0);
    for (int c = 1; c < m; ++c)
        for (Eigen::Index n = 0; n < N; ++n) X(n, c) = ud(gen);
    X = orthonormalize(X);
    if (X.cols() < m) throw ConvergenceError("lowest_eigenvalues: degenerate start block");
    Mat AX = applyA(X);
    {
        Mat H = X.transpose() * AX;
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
        X = X * es.eigenvectors();
        AX = AX * es.eigenvectors();
    }
    Vec lam = (X.transpose() * AX).diagonal();
    Mat P(N, 0), AP(N, 0);

    DirectEigen out;
    for (int it = 1; it <= opt.max_iter; ++it) {
        Mat R = AX - X * lam.asDiagonal();
        Vec res = R.colwise().norm();
        out.iterations = it;
        if (res.head(count).maxCoeff() <= opt.tol) {
            for (int c = 0; c < count; ++c) {
                out.values.push_back(lam[c]);
                out.vectors.emplace_back(X.col(c));
                out.residuals.push_back(res[c]);
            }
            return out;
        }
        Mat W = applyT(R);
        for (int pass = 0; pass < 2; ++pass) {
            W -= X * (X.transpose() * W);
            if (P.cols() > 0) W -= P * (P.transpose() * W);
        }
        W = orthonormalize(W);
        Mat AW = applyA(W);

        const Eigen::Index nb = X.cols() + P.cols() + W.cols();
        Mat S(N, nb), AS(N, nb);
        S << X, P, W;
        AS << AX, AP, AW;
        Mat H = S.transpose() * AS;
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
        const Mat C = es.eigenvectors().leftCols(m);
        lam = es.eigenvalues().head(m);

        // New search directions: the part of the update outside the old X block, made
        // orthogonal to the new X inside the (orthonormal) coefficient space.
        Mat Cp = C;
        Cp.topRows(X.cols()).setZero();
        Cp -= C * (C.transpose() * Cp);
        Cp = orthonormalize(Cp);

        X = S * C;
        AX = AS * C;
        P = S * Cp;
        AP = AS * Cp;

        if (it % 25 == 0) {
            // Restore orthonormality lost to rounding and refresh A X.
            X = orthonormalize(X);
            if (X.cols() < m) throw ConvergenceError("lowest_eigenvalues: block lost rank");
            AX = applyA(X);
            Mat Hx = X.transpose() * AX;
            Eigen::SelfAdjointEigenSolver<Mat> ex(0.5 * (Hx + Hx.transpose()));
            X = X * ex.eigenvectors();
            AX = AX * ex.eigenvectors();
            lam = ex.eigenvalues();
            P.resize(N, 0);
            AP.resize(N, 0);
        }
    }
    std::ostringstream msg;
    msg << "lowest_eigenvalues: residual tolerance " << opt.tol << " not reached in " << opt.max_iter << " iterations";
    throw ConvergenceError(msg.str());
}

// ---------------------------------------------------------------------------------------------
// Straight reference on the same lattice

namespace {

struct LatticeDirection {
    int p = 1, q = 0;
    double error = 0.0;
};

LatticeDirection lattice_direction(double angle) {
    LatticeDirection best{1, 0, std::numeric_limits<double>::infinity()};
    const auto angdiff = [](double a, double b) {
        double d = std::fmod(a - b, kPi);
        if (d < 0) d += kPi;
        return std::min(d, kPi - d);  // lines, not rays
    };
    for (int norm2 = 1; norm2 <= 65; ++norm2)
        for (int p = -8; p <= 8; ++p)
            for (int q = -8; q <= 8; ++q) {
                if (p * p + q * q != norm2 || std::gcd(p, q) != 1) continue;
                const double e = angdiff(std::atan2(q, p), angle);
                if (e < best.error - 1e-12) best = {p, q, e};
            }
    // Prefer the shortest vector within 0.3 degrees of the best attainable direction.
    for (int norm2 = 1; norm2 <= 65; ++norm2)
        for (int p = -8; p <= 8; ++p)
            for (int q = -8; q <= 8; ++q) {
                if (p * p + q * q != norm2 || std::gcd(p, q) != 1) continue;
                const double e = angdiff(std::atan2(q, p), angle);
                if (e <= std::max(best.error, 0.3 * kPi / 180.0)) return {p, q, e};
            }
    return best;
}

// Solution (i1, j1) of -q i1 + p j1 = 1.
std::pair<int, int> unit_class(int p, int q) {
    for (int i = -64; i <= 64; ++i)
        for (int j = -64; j <= 64; ++j)
            if (-q * i + p * j == 1) return {i, j};
    throw InputError("straight reference: lattice direction is not primitive");
}

}  // namespace

StraightReference straight_reference(const ProfilePotential& V, const Frame& leg, const SampledPotential3D& grid,
                                     double half_width, int offsets, int subsamples) {
    if (std::abs(leg.t.z()) > 1e-9) throw CapabilityError("straight reference: the leg must be parallel to the xy plane");
    if (offsets < 1 || subsamples < 0) throw ConfigError("straight reference: offsets and subsamples must be positive");
    const double h = grid.h;
    const LatticeDirection dir = lattice_direction(std::atan2(leg.t.y(), leg.t.x()));
    const int p = dir.p, q = dir.q;
    const double len = std::hypot(p, q);
    const double delta = h / len;
    const Vec3 d(p / len, q / len, 0.0), nrm(-q / len, p / len, 0.0);
    // Leg frame turned about z onto the lattice direction.
    const double turn = std::atan2(d.y(), d.x()) - std::atan2(leg.t.y(), leg.t.x());
    const Eigen::Matrix3d Rz = Eigen::AngleAxisd(turn, Vec3::UnitZ()).toRotationMatrix();
    const Vec3 m1 = Rz * leg.m1, m2 = Rz * leg.m2;
    const auto [i1, j1] = unit_class(p, q);

    const int J = static_cast<int>(std::ceil(half_width / delta));
    const int nc = 2 * J + 1, nz = grid.nz;
    const Eigen::Index n = static_cast<Eigen::Index>(nc) * nz;
    const JumpSet jumps(V);
    const double ih2 = 1.0 / (h * h);
    const GridOperator zop(grid);  // reuses the z stencil
    double vmax = V.sup_norm();

    std::vector<double> thresholds(static_cast<std::size_t>(offsets));
    for (int o = 0; o < offsets; ++o) {
        const double eta0 = (o + 0.5) / offsets * delta;
        std::vector<double> vals(static_cast<std::size_t>(n), 0.0);
        parallel_for(0, static_cast<std::size_t>(nc), [&](std::size_t ci) {
            const int c = static_cast<int>(ci) - J;
            const Vec3 X(c * i1 * h, c * j1 * h, 0.0);
            const auto coord = [&](const Vec3& y) {
                Vec3 rho = y - eta0 * nrm;
                rho -= rho.dot(d) * d;
                const double u = -rho.dot(m1), v = -rho.dot(m2), r = std::hypot(u, v);
                return LocalCoord{r, std::atan2(v, u), r > 0.0 ? Vec3(rho / r) : Vec3(m1)};
            };
            for (int k = 0; k < nz; ++k) {
                const Vec3 x(X.x(), X.y(), grid.z(k));
                const LocalCoord lc = coord(x);
                const double r = lc.r, th = lc.theta;
                const double dd = 0.5 * std::sqrt(2.0 * h * h + grid.dz(k) * grid.dz(k));
                double v;
                if (r > V.support_radius() + dd) v = 0.0;
                else if (subsamples > 0 && jumps.near(r, dd))
                    v = cell_average(V, jumps, Vec3(x.x() - 0.5 * h, x.y() - 0.5 * h, grid.zf[static_cast<std::size_t>(k)]),
                                     Vec3(h, h, grid.dz(k)), subsamples, coord);
                else v = profile_value(V, r, th);
                vals[ci * static_cast<std::size_t>(nz) + static_cast<std::size_t>(k)] = v;
            }
        });

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(n) * 7);
        const int shifts[4] = {q, -q, p, -p};
        for (int ci = 0; ci < nc; ++ci)
            for (int k = 0; k < nz; ++k) {
                const Eigen::Index row = static_cast<Eigen::Index>(ci) * nz + k;
                double diag = zop.zdiag()[static_cast<std::size_t>(k)] - vals[static_cast<std::size_t>(row)] + vmax + 1.0;
                for (int s : shifts) {
                    if (s == 0) continue;
                    diag += ih2;
                    const int cj = ci + s;
                    if (cj >= 0 && cj < nc) trip.emplace_back(row, static_cast<Eigen::Index>(cj) * nz + k, -ih2);
                }
                trip.emplace_back(row, row, diag);
                if (k + 1 < nz) {
                    trip.emplace_back(row, row + 1, zop.zoff()[static_cast<std::size_t>(k)]);
                    trip.emplace_back(row + 1, row, zop.zoff()[static_cast<std::size_t>(k)]);
                }
            }
        Eigen::SparseMatrix<double> M(n, n);
        M.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
        if (ldlt.info() != Eigen::Success) throw ConvergenceError("straight reference: factorisation failed");
        const EigResult er = lanczos_top([&](const Vec& x, Vec& y) { y = ldlt.solve(x); }, n, 1, 1e-12, 500);
        thresholds[static_cast<std::size_t>(o)] = 1.0 / er.values[0] - (vmax + 1.0);
    }
    StraightReference ref;
    ref.p = p;
    ref.q = q;
    ref.angle_error = dir.error;
    ref.threshold = std::accumulate(thresholds.begin(), thresholds.end(), 0.0) / offsets;
    ref.spread = *std::max_element(thresholds.begin(), thresholds.end()) -
                 *std::min_element(thresholds.begin(), thresholds.end());
    return ref;
}

// ---------------------------------------------------------------------------------------------
// Pipelines

namespace {

struct Scene {
    std::shared_ptr<const FramedCurve> curve;  // Gamma(0) = 0 with the identity frame at s = 0
    double s_eff = 0.0, s_leg = 0.0;
    Box3 box;
    bool planar = false, mirror_x = false, mirror_z = false;
    std::vector<Frame> legs;
};

bool theta_even(const ProfilePotential& V) {
    if (V.is_radial()) return true;
    const double a = V.support_radius();
    for (int i = 1; i <= 20; ++i)
        for (int j = 1; j < 36; ++j) {
            const double r = a * i / 20.5, th = 2 * kPi * j / 36;
            if (std::abs(V(r, th) - V(r, -th)) > 1e-12 * (1.0 + V.sup_norm())) return false;
        }
    return true;
}

Scene make_scene(const FramedCurve& fc, double a, double leg_length, double margin, bool symmetry,
                 const ProfilePotential& V) {
    if (!(leg_length > 0.0) || !(margin > 0.0)) throw ConfigError("direct3d: leg length and margin must be positive");
    Scene sc;
    double gmax = 0.0;
    for (double s : fc.grid()) gmax = std::max(gmax, std::abs(fc.gamma(s)));
    sc.s_eff = gmax > 0.0 ? fc.spec().effective_support(1e-6 * gmax) : 0.0;
    if (!std::isfinite(sc.s_eff))
        throw DomainError("direct3d: the curve must be straight outside a bounded region");
    sc.s_leg = sc.s_eff + leg_length;
    const double S_cov = sc.s_leg + 2.0 * (margin + a) + 2.0;
    auto cov = covering_frames(fc, S_cov);
    const Frame f0 = cov->frame_at(0.0);
    Eigen::Matrix3d R;
    R.row(0) = f0.t.transpose();
    R.row(1) = f0.m1.transpose();
    R.row(2) = f0.m2.transpose();
    sc.curve = std::make_shared<const FramedCurve>(cov->transformed(R, -R * f0.point));
    const FramedCurve& c = *sc.curve;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    double zdev = 0.0, mirror_dev = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double s = c.grid()[i];
        const Frame& f = c.frames()[i];
        zdev = std::max({zdev, std::abs(f.point.z()), std::abs(f.t.z()), std::abs(f.m1.z()), 1.0 - std::abs(f.m2.z())});
        if (std::abs(s) <= sc.s_leg) {
            lo = lo.cwiseMin(f.point);
            hi = hi.cwiseMax(f.point);
            const Frame g = c.frame_at(-s);
            const Eigen::Vector3d flip(-1.0, 1.0, 1.0);
            mirror_dev = std::max({mirror_dev, (g.point - flip.cwiseProduct(f.point)).norm(),
                                   (g.m1 - flip.cwiseProduct(f.m1)).norm(), (g.m2 - flip.cwiseProduct(f.m2)).norm()});
        }
    }
    sc.box.lo = lo - Vec3::Constant(margin + a);
    sc.box.hi = hi + Vec3::Constant(margin + a);
    sc.planar = zdev < 1e-9;
    sc.mirror_x = symmetry && mirror_dev < 1e-9;
    sc.mirror_z = symmetry && sc.planar && theta_even(V);
    const double s_ref = sc.s_eff + 0.5 * leg_length;
    sc.legs.push_back(c.frame_at(s_ref));
    if (!sc.mirror_x) sc.legs.push_back(c.frame_at(-s_ref));
    return sc;
}

GridOptions scene_grid(const Scene& sc, GridOptions g) {
    g.mirror_x = sc.mirror_x;
    g.mirror_z = sc.mirror_z;
    g.graded_z = g.graded_z && sc.planar;
    return g;
}

double reference_threshold(const ProfilePotential& V, const Scene& sc, const SampledPotential3D& grid, double half_width,
                           int offsets, int subsamples, double* spread) {
    double best = std::numeric_limits<double>::infinity(), sp = 0.0;
    for (const Frame& leg : sc.legs) {
        const StraightReference r = straight_reference(V, leg, grid, half_width, offsets, subsamples);
        if (r.threshold < best) {
            best = r.threshold;
            sp = r.spread;
        }
    }
    if (spread) *spread = sp;
    return best;
}

}  // namespace

DirectResult direct_binding(const FramedCurve& fc, const ProfilePotential& V, const TransverseGroundState& gs,
                            const DirectOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const double a = V.support_radius();
    const double margin = opt.margin > 0.0 ? opt.margin : 4.0 / gs.kappa0;
    GridOptions g = opt.grid;
    g.graded_z = true;
    const Scene sc = make_scene(fc, a, opt.leg_length, margin, opt.symmetry, V);
    g = scene_grid(sc, g);

    DirectResult res;
    res.eps0 = gs.eps0;
    res.mirror_x = g.mirror_x;
    res.mirror_z = g.mirror_z;
    const auto solve = [&](double h, double* binding) {
        GridOptions gh = g;
        gh.h = h;
        const SampledPotential3D grid = sample_potential(*sc.curve, V, sc.box, gh);
        std::ostringstream l;
        l << "h=" << h << " grid " << grid.nx << "x" << grid.ny << "x" << grid.nz << " tube nodes " << grid.tube_nodes
          << " averaged " << grid.averaged_nodes;
        res.log.push_back(l.str());
        const DirectEigen eig = lowest_eigenvalues(grid, opt.count, opt.solver);
        double spread = 0.0;
        const double ref = reference_threshold(V, sc, grid, margin + a, opt.offsets, gh.subsamples, &spread);
        *binding = ref - eig.values[0];
        std::ostringstream m;
        m << "h=" << h << " E1=" << csv::num(eig.values[0]) << " reference=" << csv::num(ref)
          << " iterations=" << eig.iterations << " t=" << seconds_since(t0);
        res.log.push_back(m.str());
        return std::make_tuple(grid.box, grid.nx, grid.ny, grid.nz, eig, ref, spread);
    };

    double binding = 0.0;
    auto [box, nx, ny, nz, eig, ref, spread] = solve(g.h, &binding);
    res.box = box;
    res.nx = nx;
    res.ny = ny;
    res.nz = nz;
    res.h = g.h;
    res.energies = eig.values;
    res.iterations = eig.iterations;
    res.reference = ref;
    res.reference_spread = spread;
    res.binding = binding;
    res.energy_shifted = gs.eps0 - binding;
    if (opt.coarse_factor > 1.0) {
        double cb = 0.0;
        solve(g.h * opt.coarse_factor, &cb);
        res.coarse_binding = cb;
        res.refinement_delta = std::abs(binding - cb);
        const double r2 = opt.coarse_factor * opt.coarse_factor;
        res.extrapolated_binding = binding + (binding - cb) / (r2 - 1.0);
    }
    res.seconds = seconds_since(t0);
    return res;
}

std::string direct_csv(const DirectResult& r) {
    std::ostringstream o;
    o << "# h=" << csv::num(r.h) << " grid=" << r.nx << "x" << r.ny << "x" << r.nz << " mirror_x=" << r.mirror_x
      << " mirror_z=" << r.mirror_z << "\n";
    o << "# box_lo=" << csv::num(r.box.lo.x()) << "," << csv::num(r.box.lo.y()) << "," << csv::num(r.box.lo.z())
      << " box_hi=" << csv::num(r.box.hi.x()) << "," << csv::num(r.box.hi.y()) << "," << csv::num(r.box.hi.z()) << "\n";
    o << "# coarse_binding=" << csv::num(r.coarse_binding) << " extrapolated_binding=" << csv::num(r.extrapolated_binding)
      << "\n";
    o << csv::header({"index", "energy", "reference", "binding", "energy_shifted", "refinement_delta"});
    for (std::size_t i = 0; i < r.energies.size(); ++i) {
        const double b = r.reference - r.energies[i];
        o << csv::row({static_cast<double>(i), r.energies[i], r.reference, b, r.eps0 - b,
                       i == 0 ? r.refinement_delta : std::nan("")});
    }
    return o.str();
}

std::vector<HardwallRow> hardwall_trend(const FramedCurve& fc, const ProfilePotential& region,
                                        const std::vector<double>& eps_list, const HardwallOptions& opt) {
    if (eps_list.empty()) throw InputError("hardwall_trend: empty eps list");
    for (std::size_t i = 0; i < eps_list.size(); ++i)
        if (!(eps_list[i] > 0.0) || (i > 0 && !(eps_list[i] > eps_list[i - 1])))
            throw InputError("hardwall_trend: eps list must be positive and increasing");
    const double a = region.support_radius();
    GridOptions g = opt.grid;
    g.graded_z = true;
    const Scene sc = make_scene(fc, a, opt.leg_length, opt.margin, true, region);
    g = scene_grid(sc, g);
    const SampledPotential3D base = sample_potential(*sc.curve, region, sc.box, g);

    std::vector<HardwallRow> rows;
    for (double eps : eps_list) {
        SampledPotential3D p = base;
        for (double& v : p.values) v *= eps;
        const DirectEigen eig = lowest_eigenvalues(p, 1, opt.solver);
        const ProfilePotential Ve = region.scaled(eps);
        const double ref = reference_threshold(Ve, sc, p, opt.margin + a, opt.offsets, g.subsamples, nullptr);
        rows.push_back({eps, eig.values[0] + eps, ref + eps, ref - eig.values[0]});
    }
    return rows;
}

std::string hardwall_csv(const std::vector<HardwallRow>& rows) {
    std::string out = csv::header({"eps", "lambda1", "threshold", "gap"});
    for (const auto& r : rows) out += csv::row({r.eps, r.lambda1, r.threshold, r.gap});
    return out;
}

}  // namespace softguide
