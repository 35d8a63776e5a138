#include <doctest.h>

#include <string>

#include "softguide/config.hpp"
#include "softguide/errors.hpp"

using namespace softguide;

namespace {

std::string config_error(const Json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("defaults resolve to a complete echo") {
    const RunConfig c = parse_config(Json::object());
    CHECK(c.curve.kind == "bump_bend");
    CHECK(c.resolved["curve"]["bump_bend"]["height"] == 0.5);
    CHECK(c.resolved["potential"]["flat_disc"]["depth"] == 10.0);
    CHECK(c.resolved.contains("transverse"));
    CHECK(c.resolved.contains("criterion"));
    CHECK(c.resolved["output"]["dir"] == "out");
    // The echo parses back to the same configuration.
    CHECK(parse_config(c.resolved).resolved == c.resolved);
}

TEST_CASE("errors name the field path") {
    CHECK(config_error({{"curve", {{"bump_bend", {{"width", -1.0}}}}}}).find("curve.bump_bend.width") !=
          std::string::npos);
    CHECK(config_error({{"curve", {{"kind", "spiral"}}}}).find("curve.kind") != std::string::npos);
    CHECK(config_error({{"potential", {{"flat_disc", {{"depth", "deep"}}}}}}).find("potential.flat_disc.depth") !=
          std::string::npos);
    CHECK(config_error({{"criterion", {{"colour", 1}}}}).find("criterion.colour: unknown field") != std::string::npos);
    CHECK(config_error({{"seed", -3}}).find("seed") != std::string::npos);
}

TEST_CASE("exit codes by error class") {
    CHECK(ConfigError("x").exit_code() == 2);
    CHECK(AssumptionError("x").exit_code() == 3);
}

TEST_CASE("with_parameter sets a dotted numeric path") {
    const RunConfig c = parse_config(Json::object());
    const RunConfig d = with_parameter(c, "curve.bump_bend.height", 0.8);
    CHECK(d.curve.height == 0.8);
    CHECK(d.resolved["curve"]["bump_bend"]["height"] == 0.8);
    CHECK_THROWS_AS(with_parameter(c, "curve.circle_arc.R", 1.0), ConfigError);
    CHECK_THROWS_AS(with_parameter(c, "curve.kind", 1.0), ConfigError);
}

TEST_CASE("factories follow the configuration") {
    Json j = {{"curve", {{"kind", "circle_arc"}, {"circle_arc", {{"R", 3.0}, {"angle", 0.5}}}}},
              {"potential", {{"kind", "flat_annulus"}, {"flat_annulus", {{"depth", 4.0}, {"r_in", 0.1}, {"r_out", 0.4}}}}}};
    const RunConfig c = parse_config(j);
    const CurveSpec spec = make_curve(c.curve);
    CHECK(spec.gamma(0.0) == doctest::Approx(1.0 / 3.0));
    CHECK(spec.gamma(1.0) == 0.0);
    const ProfilePotential V = make_potential(c.potential);
    CHECK(V.support_radius() == 0.4);
    CHECK(V(0.2, 0.0) == 4.0);
}
