#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace softguide {

using Vec3 = Eigen::Vector3d;
using ScalarFn = std::function<double(double)>;

enum class Smoothness { C2, C4 };

// Curvature and torsion profiles of an arc-length parametrised curve.
// gamma >= 0; the bending direction is carried by the rotation angle alpha.
// Sign changes of a planar curvature are encoded as jumps of pi in alpha, which
// callers realise with a torsion delta; the bundled factories never need that.
struct CurveSpec {
    std::string kind = "custom";
    ScalarFn gamma;
    ScalarFn tau;
    ScalarFn gamma_d;   // optional analytic derivatives; empty means finite differences
    ScalarFn gamma_dd;
    ScalarFn tau_d;
    std::optional<double> support_radius;  // s0, or empty for a decaying profile
    std::vector<double> breaks;            // s where gamma or tau jump or kink; frame steps stop there
    Smoothness smoothness = Smoothness::C4;
    double fd_step = 1e-3;                 // step of the finite-difference fallback

    void validate() const;
    bool analytic_derivatives() const { return gamma_d && gamma_dd && tau_d; }
    double gamma_dot(double s) const;
    double gamma_ddot(double s) const;
    double tau_dot(double s) const;
    // Length beyond which the curve is straight to working precision.
    double effective_support(double eps = 1e-14) const;
};

CurveSpec straight_curve();
// Gaussian curvature bump height * exp(-s^2 / (2 width^2)), planar.
CurveSpec bump_bend(double height, double width);
// Circular arc of radius R turning by `angle`, centred at s = 0, straight elsewhere.
CurveSpec circle_arc(double radius, double angle);
// Constant curvature and torsion; finite length gives a helical segment centred at s = 0.
CurveSpec helix(double gamma, double tau, std::optional<double> length = std::nullopt);
// Piecewise-linear interpolation of tabulated (s, gamma, tau); zero outside the table.
CurveSpec tabulated_curve(std::vector<double> s, std::vector<double> gamma, std::vector<double> tau);
CurveSpec load_tabulated_curve(const std::string& path);

struct Frame {
    Vec3 point = Vec3::Zero();
    Vec3 t = Vec3::UnitX();
    Vec3 m1 = Vec3::UnitY();
    Vec3 m2 = Vec3::UnitZ();
    double alpha = 0.0;
};

struct TubePoint {
    double s, r, theta;
    Vec3 x;
};

class FramedCurve {
public:
    FramedCurve(std::shared_ptr<const CurveSpec> spec, std::vector<double> s, std::vector<Frame> frames,
                double drift = 0.0);

    const CurveSpec& spec() const { return *spec_; }
    std::shared_ptr<const CurveSpec> spec_ptr() const { return spec_; }
    const std::vector<double>& grid() const { return s_; }
    const std::vector<Frame>& frames() const { return frames_; }
    double s_min() const { return s_.front(); }
    double s_max() const { return s_.back(); }
    double step() const { return ds_; }
    std::size_t size() const { return s_.size(); }
    // Largest deviation from orthonormality of a single integration step, before re-orthonormalisation.
    double orthonormality_drift() const { return drift_; }

    // Frame at an arbitrary s, by one fourth-order step from the nearest sample.
    Frame frame_at(double s) const;
    double gamma(double s) const { return spec_->gamma(s); }

    // Image under x -> R x + b; R orthogonal (reflections allowed).
    FramedCurve transformed(const Eigen::Matrix3d& R, const Vec3& b) const;
    // Same curve with alpha shifted by a constant and the transverse frame rotated to match.
    FramedCurve gauge_shifted(double dalpha) const;

    bool is_straight() const;

private:
    std::shared_ptr<const CurveSpec> spec_;
    std::vector<double> s_;
    std::vector<Frame> frames_;
    double ds_;
    double drift_;
};

// Integrates the rotated (Bishop-type) frame ODE from Gamma(s_min) = 0, t = e1, m1 = e2, m2 = e3.
FramedCurve build_frames(const CurveSpec& spec, double s_min, double s_max, double ds);

// The given frames when they cover [-S, S], otherwise frames rebuilt from the spec over that window
// (a rigid motion of the original; every consumer is invariant under it).
std::shared_ptr<const FramedCurve> covering_frames(const FramedCurve& fc, double S);

// x = Gamma(s) - r (m1 cos theta + m2 sin theta).
TubePoint tube_point(const FramedCurve& fc, double s, double r, double theta);
Vec3 tube_point_from_frame(const Frame& f, double r, double theta);

// h = 1 + r gamma cos(theta - alpha).
double jacobian_h(const FramedCurve& fc, double s, double r, double theta);

double effective_potential(const FramedCurve& fc, const CurveSpec& spec, double s, double r, double theta);

struct AssumptionReport {
    double a = 0.0;
    double local_injectivity = 0.0;  // a * sup gamma
    bool local_ok = true;
    double self_distance_gap = 0.0;  // pairs must be at least this far apart in s
    double min_self_distance = 0.0;  // over pairs beyond the gap
    bool self_distance_ok = true;
    std::vector<double> chord_separations;
    std::vector<double> chord_min;   // min over s of |Gamma(s + d) - Gamma(s)|
    bool chord_growth_ok = true;

    bool all_ok() const { return local_ok && self_distance_ok && chord_growth_ok; }
    std::string summary() const;
};

AssumptionReport validate_assumptions(const FramedCurve& fc, const CurveSpec& spec, double a);

// CSV with columns s, Gx, Gy, Gz, tx, ty, tz, m1x, m1y, m1z, m2x, m2y, m2z, alpha.
std::string frames_csv(const FramedCurve& fc);

}  // namespace softguide
