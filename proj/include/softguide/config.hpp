#pragma once

#include <json.hpp>
#include <string>

#include "softguide/bs_spectrum.hpp"
#include "softguide/criterion.hpp"
#include "softguide/direct3d.hpp"
#include "softguide/geometry.hpp"
#include "softguide/transverse.hpp"

namespace softguide {

using Json = nlohmann::ordered_json;

struct CurveConfig {
    std::string kind = "bump_bend";  // straight | bump_bend | circle_arc | helix | tabulated
    double height = 0.5, width = 2.0;             // bump_bend
    double radius = 2.0, angle = 1.0;             // circle_arc
    double gamma = 0.2, tau = 0.1, length = 0.0;  // helix; length 0 means unbounded
    std::string path;                             // tabulated
    double s_min = 0.0, s_max = 0.0;              // framed range; equal values choose it from the support
    double step = 0.02;
};

struct PotentialConfig {
    std::string kind = "flat_disc";  // flat_disc | flat_annulus | flat_ellipse | radial
    double depth = 10.0, radius = 0.3;
    double r_in = 0.0, r_out = 0.0;
    double ax = 0.0, ay = 0.0;
    std::vector<double> r, v;
};

struct HardwallConfig {
    std::vector<double> eps{5.0, 15.0, 50.0};
    HardwallOptions options;
};

struct RunConfig {
    CurveConfig curve;
    PotentialConfig potential;
    GroundStateOptions transverse;
    CriterionConfig criterion;
    BSQuadConfig binding;
    double kappa_max = 0.0;          // 0 means sqrt(sup V)
    std::string direct_mode = "binding";  // binding | hardwall
    DirectOptions direct;
    HardwallConfig hardwall;
    std::string out_dir = "out";
    unsigned long long seed = 12345;
    int roundtrip_samples = 100;

    Json resolved;  // every field with its effective value
};

// Strict parse: unknown keys, wrong types and out-of-range values raise ConfigError naming the field path.
RunConfig parse_config(const Json& j);
RunConfig load_config(const std::string& path);

// Sets a numeric field given by a dotted path (e.g. "curve.bump_bend.height") and re-parses.
RunConfig with_parameter(const RunConfig& cfg, const std::string& path, double value);

CurveSpec make_curve(const CurveConfig& c);
ProfilePotential make_potential(const PotentialConfig& p);
FramedCurve make_frames(const CurveConfig& c, const CurveSpec& spec);

}  // namespace softguide
