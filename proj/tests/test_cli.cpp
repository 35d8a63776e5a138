#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "softguide/cli.hpp"
#include "softguide/csv.hpp"
#include "softguide/errors.hpp"

using namespace softguide;
namespace fs = std::filesystem;

namespace {

RunConfig straight_config(const fs::path& dir) {
    Json j = {{"curve", {{"kind", "straight"}, {"s_range", {-3.0, 3.0}}}},
              {"potential", {{"kind", "flat_disc"}, {"flat_disc", {{"depth", 10.0}, {"radius", 1.0}}}}},
              {"frames", {{"roundtrip_samples", 20}}},
              {"output", {{"dir", dir.string()}}}};
    return parse_config(j);
}

}  // namespace

TEST_CASE("frames command writes frames, config echo and round trips") {
    const fs::path dir = fs::temp_directory_path() / "softguide_test_cli";
    fs::remove_all(dir);
    std::ostringstream out, log;
    RunContext ctx{out, log, false};
    run_command("frames", straight_config(dir), SweepSpec{}, ctx);
    CHECK(fs::exists(dir / "frames.csv"));
    CHECK(fs::exists(dir / "frames.config.json"));
    const auto rt = csv::read_file((dir / "roundtrip.csv").string());
    CHECK(rt.rows.size() == 20);
    CHECK(out.str().find("roundtrip: 20 points") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("unknown command is a configuration error") {
    std::ostringstream out, log;
    RunContext ctx{out, log, false};
    const fs::path dir = fs::temp_directory_path() / "softguide_test_cli2";
    CHECK_THROWS_AS(run_command("draw", straight_config(dir), SweepSpec{}, ctx), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("sweep header") {
    CHECK(sweep_header("curve.bump_bend.height") ==
          "curve.bump_bend.height,criterion_value,quadrature_error,truncation_bound,verdict,kappa0,kappa_star,energy,"
          "binding\n");
}
