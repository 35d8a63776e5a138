#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "softguide/quadrature.hpp"

namespace softguide {

// Transverse profile V >= 0 supported in a disc of radius a.
// Polar angle theta is measured in the (m1, m2) plane: (u, v) = (r cos theta, r sin theta).
class ProfilePotential {
public:
    enum class Kind { FlatBottom, Radial, Gridded };
    enum class Region { Disc, Annulus, Ellipse };

    // depth * indicator of a disc of the given radius.
    static ProfilePotential flat_disc(double depth, double radius);
    // depth * indicator of r_in < r < r_out.
    static ProfilePotential flat_annulus(double depth, double r_in, double r_out);
    // depth * indicator of u^2/ax^2 + v^2/ay^2 < 1.
    static ProfilePotential flat_ellipse(double depth, double ax, double ay);
    // Piecewise-linear V(r) through the table, zero beyond the last radius.
    static ProfilePotential radial(std::vector<double> r, std::vector<double> v);
    // Bilinear V(r, theta) on a tensor table; theta is periodic, table covers [0, 2 pi).
    static ProfilePotential gridded(std::vector<double> r, std::vector<double> theta, Eigen::MatrixXd values);

    Kind kind() const { return kind_; }
    Region region() const { return region_; }
    double operator()(double r, double theta) const;
    double at_xy(double u, double v) const;
    double support_radius() const { return a_; }
    double sup_norm() const { return sup_; }
    bool is_radial() const;
    // Radii where V may jump or kink; quadrature panels are aligned with them.
    std::vector<double> radial_breaks() const;
    // Same profile with V multiplied by c.
    ProfilePotential scaled(double c) const;
    std::string describe() const;

private:
    Kind kind_ = Kind::FlatBottom;
    Region region_ = Region::Disc;
    double depth_ = 0.0;
    double p1_ = 0.0, p2_ = 0.0;  // region parameters
    std::vector<double> rt_, vt_, tht_;
    Eigen::MatrixXd grid_;
    double a_ = 0.0, sup_ = 0.0;

    void finalize();
};

// Tensor rule on a disc of radius R: composite Gauss-Legendre in r (panels aligned to
// the profile's breaks) times the uniform midpoint rule in theta. Weights include r.
struct PolarRule {
    std::vector<double> breaks;      // radii the panels are aligned with
    std::vector<double> panels;      // all panel edges
    int order = 0;
    int n_theta = 0;
    std::vector<double> r, theta, u, v, w;  // node index = ir * n_theta + it
    Rule1D radial;

    std::size_t size() const { return w.size(); }
    double radius() const { return breaks.back(); }
    // Matrix mapping node values of this rule to values at the target rule's nodes
    // (panelwise Lagrange in r, trigonometric in theta).
    Eigen::MatrixXd interpolation_to(const PolarRule& target) const;
};

struct PolarRuleOptions {
    int order = 8;             // Gauss points per radial panel
    double max_panel = 0.25;   // largest panel length as a fraction of the radius
    int n_theta = 32;          // must be even
};

PolarRule make_polar_rule(const std::vector<double>& breaks, const PolarRuleOptions& opt);
PolarRule make_polar_rule(const ProfilePotential& V, const PolarRuleOptions& opt = {});

// Integral over the disc |x| < R of a kernel depending on the distance to the interior point p,
// written in polar coordinates centred at p: the phi-integral over [0, 2 pi) of prim(rho(phi)),
// where rho(phi) is the distance to the boundary and prim(P) = int_0^P f(rho) rho d rho.
double disc_ray_integral(double pu, double pv, double R, const std::function<double(double)>& prim);

// Symmetrised Nystrom matrix of the fiber kernel (1/2pi) V^{1/2} K0(q |x - x'|) V^{1/2}.
// The log singularity is removed by subtracting the exact disc integral on the diagonal.
Eigen::MatrixXd fiber_matrix(const ProfilePotential& V, const PolarRule& rule, double q);

struct FiberOptions {
    PolarRuleOptions rule;
    double refine_tol = 1e-6;  // Cauchy difference between the rule and its refinement
    bool check_refinement = false;
};

// Largest eigenvalue mu_max(kappa, p) of the fiber operator.
double fiber_top_eigenvalue(const ProfilePotential& V, double kappa, double p, const FiberOptions& opt = {});

// kappa with mu_max(kappa, 0) = 1 (the transverse binding from the fiber route).
double fiber_kappa0(const ProfilePotential& V, const PolarRule& rule);

struct TransverseGroundState {
    double eps0 = 0.0;
    double kappa0 = 0.0;
    std::string route;               // "fd" or "fiber"
    double error_estimate = 0.0;     // Richardson / Cauchy delta
    double gap = 0.0;                // second minus first eigenvalue (fd route), NaN otherwise
    double fiber_kappa0 = 0.0;       // independent value from the fiber operator
    double fiber_eps0() const { return -fiber_kappa0 * fiber_kappa0; }
    // phi0 on the grid x_i = -L + (i + 1) h, i < n, unit discrete L2 norm, positive.
    double L = 0.0;
    int n = 0;
    double h = 0.0;
    Eigen::MatrixXd phi0;  // phi0(i, j) at (x_i, y_j)
    ProfilePotential V;
    std::vector<std::string> log;

    double phi0_at(double x, double y) const;  // bicubic convolution interpolation
};

struct GroundStateOptions {
    double tol = 1e-4;
    std::string route = "auto";     // auto | fd | fiber
    int cells_per_radius = 12;      // coarsest FD level
    int max_levels = 4;
    int offsets = 3;                // grid translations per axis averaged at every level
    int subsamples = 32;            // per axis, for cell averages of V
    long max_unknowns = 250000;
    double L = 0.0;                 // initial half box; 0 chooses from the decay length
    PolarRuleOptions fiber_rule;
};

TransverseGroundState solve_ground_state(const ProfilePotential& V, const GroundStateOptions& opt = {});

// Ground state of h_V on a given uniform box grid with V averaged over sub-cells;
// returns the two lowest eigenvalues and the ground-state vector.
struct FdSolve {
    double e1 = 0.0, e2 = 0.0;
    Eigen::VectorXd phi;
    int n = 0;
};
FdSolve fd_ground_state(const ProfilePotential& V, double L, double h, double shift_x, double shift_y,
                        int subsamples, bool want_vector, int k = 1);

// phi0 values (unit L2 norm in the plane, positive) at the nodes of a polar rule, obtained from
// the top eigenvector of the fiber operator at kappa0. Entries where V = 0 are zero.
Eigen::VectorXd ground_state_on_rule(const ProfilePotential& V, const PolarRule& rule, double kappa0);

// || R^{kappa}(0) g0 - g0 || / || g0 || with g0 = V^{1/2} phi0 taken from the FD grid.
double g0_consistency(const TransverseGroundState& gs, double kappa = 0.0, const PolarRuleOptions& ro = {});

std::string ground_state_csv(const TransverseGroundState& gs);
TransverseGroundState load_ground_state_csv(const std::string& path, const ProfilePotential& V);

}  // namespace softguide
