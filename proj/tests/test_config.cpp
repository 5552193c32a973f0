#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "capnmpc/config.hpp"
#include "capnmpc/experiment.hpp"

using namespace capnmpc;

namespace {

const std::string kConfigDir = CAPNMPC_CONFIG_DIR;

}  // namespace

TEST_CASE("the shipped default config is the benchmark setting", "[config]") {
    const RunConfig cfg = parse_config(kConfigDir + "/default.json");
    CHECK(cfg == RunConfig{});
    CHECK(cfg.algorithm == "capnmpc");
    CHECK(cfg.particles == 100);
    CHECK(cfg.horizon == 4);
    CHECK(cfg.barrier.alpha == 5.0);
    CHECK(cfg.barrier.beta == 3.0);
    CHECK(cfg.accel_min == -3.0);
    CHECK(cfg.accel_max == 3.0);
    CHECK(cfg.steer_max_deg == 35.0);
    CHECK(cfg.steer_max_rad() == Catch::Approx(0.6108652381980153).margin(1e-15));
    CHECK(cfg.bicycle.dt == 0.1);
    CHECK((cfg.q_eta.array() == 0.01).all());
}

TEST_CASE("weight and covariance forms are mutually exclusive", "[config]") {
    const std::string text = R"({
        "weights": {"q": [100.0, 100.0], "r": [1.25, 2.5]},
        "covariances": {"q_wbar": [0,0,0,0,0.8,0.4], "q_v": [0.01,0.01,0,0]}
    })";
    CHECK_THROWS_MATCHES(parse_config_text(text), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("mutually exclusive")));
}

TEST_CASE("config error classes are distinct", "[config]") {
    SECTION("missing file") {
        CHECK_THROWS_AS(parse_config("/nonexistent/nowhere.json"), ConfigIoError);
    }
    SECTION("empty file is a parse error, not a validation error") {
        try {
            parse_config_text("");
            FAIL("expected a parse error");
        } catch (const ConfigParseError&) {
            SUCCEED();
        } catch (const ConfigError&) {
            FAIL("validation error raised instead of parse error");
        }
    }
    SECTION("malformed text") {
        CHECK_THROWS_AS(parse_config_text("{ not json"), ConfigParseError);
    }
    SECTION("valid text with bad values is a validation error") {
        try {
            parse_config_text(R"({"particles": 0})");
            FAIL("expected a validation error");
        } catch (const ConfigParseError&) {
            FAIL("parse error raised instead of validation error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("particles") != std::string::npos);
        }
    }
}

TEST_CASE("unknown keys are rejected by name", "[config]") {
    CHECK_THROWS_MATCHES(parse_config_text(R"({"particle_count": 10})"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("particle_count")));
    CHECK_THROWS_MATCHES(parse_config_text(R"({"barrier": {"gamma": 1.0}})"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("gamma")));
}

TEST_CASE("validation names the offending key", "[config]") {
    CHECK_THROWS_MATCHES(parse_config_text(R"({"horizon": -1})"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("horizon")));
    CHECK_THROWS_MATCHES(parse_config_text(R"({"algorithm": "mppi"})"), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("algorithm")));
    CHECK_THROWS_MATCHES(
        parse_config_text(R"({"covariances": {"q_wbar": [0,0,0,0,0.8,0.4], "q_v": [0.01,0.01,0.5,0]}})"),
        ConfigError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("q_v")));
    CHECK_THROWS_MATCHES(parse_config_text(R"({"input_bounds": {"accel": [3.0, -3.0]}})"),
                         ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("accel")));
}

TEST_CASE("q_eta accepts a scalar and expands it", "[config]") {
    const RunConfig cfg = parse_config_text(R"({"q_eta": 0.02})");
    REQUIRE(cfg.q_eta.size() == 5);
    CHECK((cfg.q_eta.array() == 0.02).all());
}

TEST_CASE("config echo round-trips exactly", "[config][property]") {
    SECTION("defaults") {
        const RunConfig cfg;
        CHECK(parse_config_text(echo_config(cfg).dump()) == cfg);
    }
    SECTION("covariance form with overrides") {
        RunConfig cfg = parse_config_text(R"({
            "algorithm": "pnmpc",
            "particles": 321,
            "horizon": 7,
            "seed": 12345,
            "covariances": {"q_wbar": [0.0, 0.0, 0.0, 0.0, 0.7, 0.3], "q_v": [0.02, 0.05, 0.0, 0.0]},
            "bicycle": {"dt": 0.05},
            "input_bounds": {"steer_deg": [-30.0, 30.0]}
        })");
        CHECK_FALSE(cfg.use_weight_form);
        CHECK(parse_config_text(echo_config(cfg).dump()) == cfg);
        CHECK(config_digest(cfg) == config_digest(parse_config_text(echo_config(cfg).dump())));
    }
}

TEST_CASE("weight form derives the benchmark covariances", "[config]") {
    const RunConfig cfg;  // Q = diag(100, 100), R = diag(1.25, 2.5)
    const ExperimentSetup setup = build_experiment(cfg);
    const NoiseSpec& n = setup.problem.sys.noise;
    CHECK(n.q_wbar[0] == 0.0);
    CHECK(n.q_wbar[1] == 0.0);
    CHECK(n.q_wbar[2] == 0.0);
    CHECK(n.q_wbar[3] == 0.0);
    CHECK(n.q_wbar[4] == 0.8);
    CHECK(n.q_wbar[5] == 0.4);
    CHECK(n.q_v[0] == 0.01);
    CHECK(n.q_v[1] == 0.01);
    CHECK(n.q_v[2] == 0.0);
    CHECK(n.q_v[3] == 0.0);
    CHECK(setup.problem.sys.selector_dims == std::vector<int>{0, 1});
    CHECK(setup.problem.constraints.has_value());

    // the explicit covariance form runs bit-identically
    RunConfig cov = parse_config_text(R"({
        "covariances": {"q_wbar": [0.0, 0.0, 0.0, 0.0, 0.8, 0.4], "q_v": [0.01, 0.01, 0.0, 0.0]},
        "particles": 50,
        "step_cap": 15,
        "seed": 9
    })");
    RunConfig wgt = parse_config_text(R"({
        "weights": {"q": [100.0, 100.0], "r": [1.25, 2.5]},
        "particles": 50,
        "step_cap": 15,
        "seed": 9
    })");
    const RunResult a = run_experiment(cov);
    const RunResult b = run_experiment(wgt);
    REQUIRE(a.record.steps.size() == b.record.steps.size());
    for (std::size_t k = 0; k < a.record.steps.size(); ++k) {
        REQUIRE((a.record.steps[k].state.array() == b.record.steps[k].state.array()).all());
        REQUIRE((a.record.steps[k].control.array() == b.record.steps[k].control.array()).all());
    }
}

TEST_CASE("pnmpc configs build without a constraint model", "[config]") {
    const RunConfig cfg = parse_config_text(R"({"algorithm": "pnmpc"})");
    const ExperimentSetup setup = build_experiment(cfg);
    CHECK_FALSE(setup.problem.constraints.has_value());
    CHECK(setup.margins.count == 5);  // margins are still recorded
}
