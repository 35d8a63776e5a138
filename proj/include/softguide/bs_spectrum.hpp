#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "softguide/geometry.hpp"
#include "softguide/transverse.hpp"

namespace softguide {

// Discretisation of the straightened Birman-Schwinger operator
//   W^{1/2}(s, xi) G_kappa(x(s, xi), x(s', xi')) W^{1/2}(s', xi'),  W = h V,
// on [-S, S] x M: trapezoid nodes in s, and in the cross-section a Galerkin basis of the top
// fiber modes at kappa0. Cross-section integrals use three rules by slice separation.
struct BSQuadConfig {
    double ds = 0.1;
    double S = 0.0;              // 0 chooses the window from the binding decay length
    int modes = 3;
    PolarRuleOptions near_rule{4, 0.5, 16};
    PolarRuleOptions mid_rule{3, 1.0, 8};
    PolarRuleOptions far_rule{2, 1.0, 4};
    double near_radius = 2.0;    // |s - s'| <= near_radius * a uses the near rule
    double mid_radius = 10.0;    // then the mid rule up to mid_radius * a, beyond it the far rule
    double decay_lengths = 4.0;  // required k (S - s_eff), k = sqrt(kappa*^2 - kappa0^2)
    double probe = 1e-4;         // existence probe at kappa0 (1 + probe)
    double kappa_tol = 1e-6;     // bisection tolerance relative to kappa0
};

struct BSMatrix {
    double kappa = 0.0;
    std::vector<double> s;       // slice positions
    int modes = 0;               // unknown (i, a) sits at index i * modes + a
    Eigen::MatrixXd A;           // symmetric
};

class BSOperator {
public:
    BSOperator(const FramedCurve& fc, const ProfilePotential& V, double kappa0, double S, const BSQuadConfig& cfg);

    BSMatrix assemble(double kappa) const;
    // Top eigenvalue of the straight-tube symbol at longitudinal momentum 0 (same quadrature);
    // equals 1 at the discrete threshold.
    double symbol_top(double kappa) const;
    double discrete_kappa0() const;

    double S() const { return S_; }
    double ds() const { return cfg_.ds; }
    int modes() const { return m_; }
    const std::vector<double>& slices() const { return s_; }
    const FramedCurve& curve() const { return *fc_; }
    const ProfilePotential& potential() const { return V_; }

    // Sum over slices and modes of coef(i, a) * int G_kappa(x, x(s_i, xi)) W^{1/2} chi_a dxi.
    double potential_field(const Eigen::VectorXd& coef, double kappa, const Vec3& x) const;
    // Whether x lies in the tube closer than a tenth of the node spacing to a quadrature node.
    bool near_node(const Vec3& x) const;

    struct Slice {
        std::vector<Vec3> x[3];        // node positions per rule (near, mid, far)
        Eigen::MatrixXd P[3];          // n_rule x modes: w * W^{1/2} * chi
        Eigen::MatrixXd kink;          // modes x modes
        Vec3 centre;
    };

private:
    std::shared_ptr<const FramedCurve> fc_;
    ProfilePotential V_;
    BSQuadConfig cfg_;
    double kappa0_, S_, a_;
    int m_;
    std::vector<double> s_;
    PolarRule rules_[3];
    Eigen::MatrixXd chi_[3];           // chi_a at each rule's nodes
    std::vector<Slice> slices_;
    Slice straight_slice(double s) const;
    Slice make_slice(const Frame& f, double gamma, double s) const;
    int tier(double sep) const;
    Eigen::MatrixXd block(const Slice& p, const Slice& q, double sep, double kappa, bool same) const;
    Eigen::VectorXd self_integrals(double kappa) const;
    mutable std::vector<std::pair<double, Eigen::VectorXd>> self_cache_;
};

double top_eigenvalue(const BSMatrix& m);

struct BindingResult {
    double kappa_star = 0.0;          // sqrt(kappa0^2 + binding)
    double energy = 0.0;              // -kappa_star^2
    double binding = 0.0;             // kappa_raw^2 - kappa0_discrete^2
    double kappa_raw = 0.0;           // root of mu_max = 1 for the discrete operator
    double kappa0 = 0.0;
    double kappa0_discrete = 0.0;     // threshold of the same discretisation
    double S = 0.0;
    std::vector<std::pair<double, double>> trace;  // (kappa, mu_max)
    Eigen::VectorXd coefficients;     // BS eigenvector at kappa_raw
    std::shared_ptr<const BSOperator> op;
};

// None when mu_max(kappa0+) <= 1. Throws ConvergenceError if mu_max(kappa_max) > 1.
std::optional<BindingResult> solve_binding(const FramedCurve& fc, const ProfilePotential& V,
                                           const TransverseGroundState& gs, double kappa_max,
                                           const BSQuadConfig& cfg = {});

struct SampledFunction {
    std::vector<Vec3> points;
    std::vector<double> values;       // unit l2 norm over the points, positive-dominant sign
    std::vector<bool> accuracy_warning;
};

SampledFunction reconstruct_eigenfunction(const BindingResult& res, const std::vector<Vec3>& points);

std::string binding_trace_csv(const BindingResult& res);
std::string eigenfunction_csv(const SampledFunction& f);

}  // namespace softguide
