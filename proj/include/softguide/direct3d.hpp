#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "softguide/criterion.hpp"
#include "softguide/geometry.hpp"
#include "softguide/transverse.hpp"

namespace softguide {

struct Box3 {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
};

// Cell-centred grid: spacing h in x and y; in z either uniform or graded away from z = 0.
// A mirror flag turns the face x = 0 (or z = 0) into a symmetry plane with a Neumann condition
// and restricts the box to the positive side. All other faces are Dirichlet.
struct GridOptions {
    double h = 0.1;
    bool graded_z = false;
    double z_fine = 0.0;       // half-thickness of the uniform band around z = 0; 0 means a + 2h
    double z_growth = 1.15;    // cell growth factor outside the band
    double z_max_ratio = 4.0;  // largest z cell as a multiple of h
    int subsamples = 4;        // per axis, for cells cut by a jump of V; 0 samples the centre only
    bool mirror_x = false;
    bool mirror_z = false;
};

struct SampledPotential3D {
    Box3 box;
    double h = 0.0;
    int nx = 0, ny = 0, nz = 0;
    bool mirror_x = false, mirror_z = false;
    std::vector<double> zf;      // nz + 1 z faces
    std::vector<double> values;  // Vtilde at node (i, j, k), stored at (i * ny + j) * nz + k
    long tube_nodes = 0;         // nodes with nonzero Vtilde
    long averaged_nodes = 0;     // nodes whose value is a sub-cell average

    std::size_t size() const { return values.size(); }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(nz) + static_cast<std::size_t>(k);
    }
    double x(int i) const { return box.lo.x() + (i + 0.5) * h; }
    double y(int j) const { return box.lo.y() + (j + 0.5) * h; }
    double z(int k) const { return 0.5 * (zf[k] + zf[k + 1]); }
    double dz(int k) const { return zf[k + 1] - zf[k]; }
};

// Grid with Vtilde = 0. The box is enlarged to whole cells; mirrored axes start at 0.
SampledPotential3D empty_grid(const Box3& box, const GridOptions& g, double a = 0.0);

// Nearest-point inversion x -> (s, r, theta) against a framed curve, using curve samples
// in a spatial hash and a bracketed minimisation of |x - Gamma(s)|.
class TubeLocator {
public:
    TubeLocator(const FramedCurve& fc, double reach, double sample_step = 0.0);

    // Nearest point among curve parameters within `reach` of x, or r = inf when there is none.
    // Throws GeometryError when the samples within reach belong to two separate arcs.
    TubeCoord locate(const Vec3& x) const;
    // Local refinement from a starting parameter, without the ambiguity check.
    TubeCoord refine(const Vec3& x, double s_guess, double bracket) const;

    const FramedCurve& curve() const { return fc_; }
    double reach() const { return reach_; }
    double sample_step() const { return ds_; }
    const std::vector<double>& samples() const { return s_; }
    const std::vector<Vec3>& sample_points() const { return p_; }

private:
    const FramedCurve& fc_;
    double reach_, ds_;
    std::vector<double> s_;
    std::vector<Vec3> p_;
    double cell_;
    std::vector<std::pair<long long, int>> hash_;  // sorted (cell key, sample index)
    long long key(const Vec3& x) const;
};

// Vtilde on the grid: V(r, theta) at nodes within a of the curve, 0 elsewhere.
// The frames must cover the part of the curve inside the box.
SampledPotential3D sample_potential(const FramedCurve& fc, const ProfilePotential& V, const Box3& box,
                                    const GridOptions& g);

struct EigenSolveOptions {
    double tol = 1e-6;     // residual norm for unit eigenvectors
    int max_iter = 1000;
    int extra = 1;         // block size is count + extra
    double shift = 0.0;    // preconditioner (-Lap + shift)^{-1}; 0 picks max(|min|, 0.05) of the diagonal estimate
};

struct DirectEigen {
    std::vector<double> values;
    std::vector<Eigen::VectorXd> vectors;  // unit l2 in sqrt(volume)-weighted variables
    std::vector<double> residuals;
    int iterations = 0;
};

// Lowest eigenvalues of the 7-point Laplacian minus Vtilde by preconditioned block iteration
// (LOBPCG with a fast Poisson-type solver as preconditioner).
DirectEigen lowest_eigenvalues(const SampledPotential3D& p, int count, const EigenSolveOptions& opt = {});

// Threshold of the infinite straight tube along `leg` on the same lattice: the tube direction is
// rounded to a lattice vector (p, q) and the Bloch-periodic problem reduces to two dimensions.
// The result is averaged over `offsets` positions of the line relative to the lattice.
struct StraightReference {
    double threshold = 0.0;
    double spread = 0.0;   // max - min over the offsets
    int p = 1, q = 0;      // lattice direction
    double angle_error = 0.0;
};

StraightReference straight_reference(const ProfilePotential& V, const Frame& leg, const SampledPotential3D& grid,
                                     double half_width, int offsets = 4, int subsamples = 4);

struct DirectOptions {
    GridOptions grid{0.075};
    double leg_length = 18.0;     // straight length kept beyond the curvature support, per leg
    double margin = 0.0;          // transverse distance from the tube to the box; 0 means 4 / kappa0
    double coarse_factor = 4.0 / 3.0;  // second solve at h * coarse_factor for the refinement delta; <= 1 skips it
    int count = 2;
    int offsets = 4;
    bool symmetry = true;         // use mirror planes when the scene has them
    EigenSolveOptions solver;
};

struct DirectResult {
    std::vector<double> energies;
    double reference = 0.0;       // straight threshold on the same lattice
    double reference_spread = 0.0;
    double binding = 0.0;         // reference - energies[0]
    double energy_shifted = 0.0;  // eps0 - binding: direct estimate of E on the continuum scale
    double coarse_binding = 0.0;
    double refinement_delta = 0.0;
    double extrapolated_binding = 0.0;  // h^2 Richardson estimate from the two grids
    double eps0 = 0.0;
    double h = 0.0;
    Box3 box;
    int nx = 0, ny = 0, nz = 0;
    bool mirror_x = false, mirror_z = false;
    int iterations = 0;
    double seconds = 0.0;
    std::vector<std::string> log;
};

DirectResult direct_binding(const FramedCurve& fc, const ProfilePotential& V, const TransverseGroundState& gs,
                            const DirectOptions& opt = {});

std::string direct_csv(const DirectResult& r);

struct HardwallOptions {
    GridOptions grid{0.1};
    double leg_length = 12.0;
    double margin = 2.5;
    int offsets = 2;
    EigenSolveOptions solver;
};

struct HardwallRow {
    double eps = 0.0;
    double lambda1 = 0.0;     // lowest eigenvalue of H + eps
    double threshold = 0.0;   // straight threshold + eps on the same lattice
    double gap = 0.0;         // threshold - lambda1
};

// eps chi_M for increasing eps on one fixed grid; `region` is the profile at depth 1.
std::vector<HardwallRow> hardwall_trend(const FramedCurve& fc, const ProfilePotential& region,
                                        const std::vector<double>& eps_list, const HardwallOptions& opt = {});

std::string hardwall_csv(const std::vector<HardwallRow>& rows);

}  // namespace softguide
