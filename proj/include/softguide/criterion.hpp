#pragma once

#include <string>
#include <vector>

#include "softguide/geometry.hpp"
#include "softguide/transverse.hpp"

namespace softguide {

struct TubeCoord {
    double s = 0.0, r = 0.0, theta = 0.0;
};

enum class Verdict { BoundStateGuaranteed, Inconclusive };
std::string to_string(Verdict v);

// Kernel used by the s,s'-integrated factor F.
//   Green:     2 pi times the integral of h^{1/2} h'^{1/2} G(x, x') - G(x0, x0'), so that the criterion
//              equals (1/2 pi) * int phi0 V F V phi0 exactly.
//   Macdonald: the same with G replaced by K0(kappa |.|); its value at the axis is onaxis_F.
enum class FKernel { Green, Macdonald };

struct CriterionConfig {
    double S = 0.0;               // half-length of the s window; 0 means s0 + 12 / kappa0, widened while
                                  // the tail bound exceeds tail_fraction * value
    double tail_fraction = 0.05;
    double max_decay_lengths = 60.0;  // widening stops at s0 + max_decay_lengths / kappa0
    double support_eps = 1e-13;   // curvature level treated as straight when s0 is not given
    double panel_length = 1.0;    // Gauss panel length in s (and in s - s' beyond the graded zone)
    int order = 8;                // Gauss points per panel
    double delta = 0.0;           // first graded panel in s - s'; 0 means min(a, 1/kappa0) / 8
    int levels = 2;               // refinement levels; the last two give the error estimate
    PolarRuleOptions rule{4, 1.0, 8};  // transverse rule at level 0, refined per level
};

struct CriterionResult {
    double value = 0.0;
    double quadrature_error = 0.0;
    double truncation_bound = 0.0;
    Verdict verdict = Verdict::Inconclusive;
    double kappa0 = 0.0;
    double S = 0.0;
    double s0 = 0.0;
    double delta = 0.0;
    double chord_ratio = 1.0;     // lower bound of |Gamma(s) - Gamma(s')| / |s - s'| used for the tail
    std::vector<double> level_values;
    std::vector<long> level_nodes;
    CriterionConfig config;
};

// phi0 V [h^{1/2} G(x, x') h'^{1/2} - G(x0, x0')] V' phi0' at a pair of tube points.
double difference_kernel(const FramedCurve& fc, const ProfilePotential& V, const TransverseGroundState& gs,
                         double kappa, const TubeCoord& p, const TubeCoord& q);

CriterionResult evaluate_criterion(const FramedCurve& fc, const ProfilePotential& V, const TransverseGroundState& gs,
                                   const CriterionConfig& cfg = {});

// int int [K0(kappa0 |Gamma(s) - Gamma(s')|) - K0(kappa0 |s - s'|)] ds ds' over [-S, S]^2.
double onaxis_F(const FramedCurve& fc, double kappa0, double S, const CriterionConfig& cfg = {});

double inner_F(const FramedCurve& fc, double kappa0, double r, double theta, double r2, double theta2, double S,
               FKernel kernel = FKernel::Green, const CriterionConfig& cfg = {});

// Single-row CSV with the result followed by the resolved configuration as comments.
std::string criterion_csv(const CriterionResult& res);

}  // namespace softguide
