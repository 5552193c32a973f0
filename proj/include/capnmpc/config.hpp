#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "filter.hpp"
#include "numeric.hpp"
#include "vehicle.hpp"

namespace capnmpc {

/// Config file could not be read at all.
class ConfigIoError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Config file is not well-formed structured text.
class ConfigParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

inline constexpr int kSchemaVersion = 1;

/// A fully validated run description. The shipped defaults reproduce the
/// benchmark setting; steering bounds are stored in degrees as configured
/// and converted where radians are needed.
struct RunConfig {
    int schema_version = kSchemaVersion;
    std::string algorithm = "capnmpc";  // "pnmpc" or "capnmpc"
    int particles = 100;
    int horizon = 4;
    std::uint64_t seed = 0;
    int step_cap = 150;
    double epsilon = 1e-6;
    BarrierConfig barrier{5.0, 3.0};

    // exactly one of the two noise parameterizations is active
    bool use_weight_form = true;
    Eigen::VectorXd q_weight = (Eigen::VectorXd(2) << 100.0, 100.0).finished();
    Eigen::VectorXd r_weight = (Eigen::VectorXd(2) << 1.25, 2.5).finished();
    Eigen::VectorXd q_wbar;  // covariance form, length 6
    Eigen::VectorXd q_v;     // covariance form, length 4

    Eigen::VectorXd q_eta = Eigen::VectorXd::Constant(5, 0.01);

    BicycleParams bicycle;
    double track_x_start = 0.0;
    double track_x_end = 33.0;
    double track_step = 0.6;
    double track_amplitude = 2.0;
    double track_frequency = 0.2;
    double track_halfwidth = 0.3;

    Eigen::Vector4d initial_state{-0.5, -0.5, 3.0, kPi / 4.0};
    double accel_min = -3.0;
    double accel_max = 3.0;
    double steer_min_deg = -35.0;
    double steer_max_deg = 35.0;

    double steer_min_rad() const { return steer_min_deg * kPi / 180.0; }
    double steer_max_rad() const { return steer_max_deg * kPi / 180.0; }
};

inline bool operator==(const RunConfig& a, const RunConfig& b) {
    auto veq = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
        return u.size() == v.size() && (u.array() == v.array()).all();
    };
    return a.schema_version == b.schema_version && a.algorithm == b.algorithm &&
           a.particles == b.particles && a.horizon == b.horizon && a.seed == b.seed &&
           a.step_cap == b.step_cap && a.epsilon == b.epsilon &&
           a.barrier.alpha == b.barrier.alpha && a.barrier.beta == b.barrier.beta &&
           a.use_weight_form == b.use_weight_form && veq(a.q_weight, b.q_weight) &&
           veq(a.r_weight, b.r_weight) && veq(a.q_wbar, b.q_wbar) && veq(a.q_v, b.q_v) &&
           veq(a.q_eta, b.q_eta) && a.bicycle.l_r == b.bicycle.l_r &&
           a.bicycle.l_f == b.bicycle.l_f && a.bicycle.dt == b.bicycle.dt &&
           a.track_x_start == b.track_x_start && a.track_x_end == b.track_x_end &&
           a.track_step == b.track_step && a.track_amplitude == b.track_amplitude &&
           a.track_frequency == b.track_frequency && a.track_halfwidth == b.track_halfwidth &&
           (a.initial_state.array() == b.initial_state.array()).all() &&
           a.accel_min == b.accel_min && a.accel_max == b.accel_max &&
           a.steer_min_deg == b.steer_min_deg && a.steer_max_deg == b.steer_max_deg;
}

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + context);
}

inline double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("key '" + key + "' must be a number");
    return v.get<double>();
}

inline int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("key '" + key + "' must be an integer");
    return v.get<int>();
}

inline Eigen::VectorXd as_vector(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError("key '" + key + "' must be an array of numbers");
    Eigen::VectorXd out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = as_number(v[i], key);
    return out;
}

inline Eigen::VectorXd as_vector_of(const json& v, const std::string& key, Eigen::Index len) {
    Eigen::VectorXd out = as_vector(v, key);
    if (out.size() != len)
        throw ConfigError("key '" + key + "' must hold " + std::to_string(len) +
                          " numbers, got " + std::to_string(out.size()));
    return out;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

}  // namespace detail

/// Validates the cross-field rules that individual key checks cannot see.
inline void validate_config(const RunConfig& cfg) {
    if (cfg.schema_version != kSchemaVersion)
        throw ConfigError("unsupported schema_version " + std::to_string(cfg.schema_version));
    if (cfg.algorithm != "pnmpc" && cfg.algorithm != "capnmpc")
        throw ConfigError("key 'algorithm' must be 'pnmpc' or 'capnmpc'");
    if (cfg.particles < 1) throw ConfigError("key 'particles' must be at least 1");
    if (cfg.horizon < 0) throw ConfigError("key 'horizon' must be nonnegative");
    if (cfg.step_cap < 1) throw ConfigError("key 'step_cap' must be at least 1");
    if (!(cfg.epsilon > 0.0)) throw ConfigError("key 'epsilon' must be positive");
    if (!(cfg.barrier.alpha > 0.0)) throw ConfigError("key 'barrier.alpha' must be positive");
    if (!(cfg.barrier.beta > 0.0)) throw ConfigError("key 'barrier.beta' must be positive");
    if (!(cfg.bicycle.l_r > 0.0)) throw ConfigError("key 'bicycle.l_r' must be positive");
    if (!(cfg.bicycle.l_f > 0.0)) throw ConfigError("key 'bicycle.l_f' must be positive");
    if (!(cfg.bicycle.dt > 0.0)) throw ConfigError("key 'bicycle.dt' must be positive");
    if (!(cfg.track_step > 0.0)) throw ConfigError("key 'track.step' must be positive");
    if (!(cfg.track_x_end > cfg.track_x_start))
        throw ConfigError("key 'track.x_end' must exceed 'track.x_start'");
    if (!(cfg.track_halfwidth > 0.0)) throw ConfigError("key 'track.halfwidth' must be positive");
    if (!(cfg.accel_min < cfg.accel_max))
        throw ConfigError("key 'input_bounds.accel' must satisfy lo < hi");
    if (!(cfg.steer_min_deg < cfg.steer_max_deg))
        throw ConfigError("key 'input_bounds.steer_deg' must satisfy lo < hi");
    if (!cfg.initial_state.allFinite()) throw ConfigError("key 'initial_state' must be finite");

    if (cfg.use_weight_form) {
        if (cfg.q_weight.size() != 2 || !(cfg.q_weight.array() > 0.0).all())
            throw ConfigError("key 'weights.q' must hold 2 positive numbers");
        if (cfg.r_weight.size() != 2 || !(cfg.r_weight.array() > 0.0).all())
            throw ConfigError("key 'weights.r' must hold 2 positive numbers");
    } else {
        if (cfg.q_wbar.size() != 6 || (cfg.q_wbar.array() < 0.0).any())
            throw ConfigError("key 'covariances.q_wbar' must hold 6 nonnegative numbers");
        if (cfg.q_v.size() != 4 || (cfg.q_v.array() < 0.0).any())
            throw ConfigError("key 'covariances.q_v' must hold 4 nonnegative numbers");
        if (!(cfg.q_v[0] > 0.0) || !(cfg.q_v[1] > 0.0))
            throw ConfigError("key 'covariances.q_v' position entries must be positive"
                              " (the reference carries positions)");
        if (cfg.q_v[2] != 0.0 || cfg.q_v[3] != 0.0)
            throw ConfigError("key 'covariances.q_v' speed and heading entries must be 0"
                              " (the reference carries positions only)");
    }
    if (cfg.q_eta.size() != 5 || !(cfg.q_eta.array() >= 0.0).all())
        throw ConfigError("key 'q_eta' must hold 5 nonnegative numbers");
}

/// Parses an in-memory config document, applying defaults for omitted keys
/// and rejecting unknown ones.
inline RunConfig parse_config_text(const std::string& text) {
    detail::json j;
    try {
        j = detail::json::parse(text);
    } catch (const detail::json::parse_error& e) {
        throw ConfigParseError(std::string("config parse failure: ") + e.what());
    }
    if (!j.is_object()) throw ConfigParseError("config root must be an object");

    detail::reject_unknown_keys(
        j,
        {"schema_version", "algorithm", "particles", "horizon", "seed", "step_cap", "epsilon",
         "barrier", "weights", "covariances", "q_eta", "bicycle", "track", "initial_state",
         "input_bounds"},
        "config root");

    RunConfig cfg;
    if (j.contains("schema_version")) cfg.schema_version = detail::as_int(j["schema_version"], "schema_version");
    if (j.contains("algorithm")) {
        if (!j["algorithm"].is_string()) throw ConfigError("key 'algorithm' must be a string");
        cfg.algorithm = j["algorithm"].get<std::string>();
    }
    if (j.contains("particles")) cfg.particles = detail::as_int(j["particles"], "particles");
    if (j.contains("horizon")) cfg.horizon = detail::as_int(j["horizon"], "horizon");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer()) throw ConfigError("key 'seed' must be an integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("step_cap")) cfg.step_cap = detail::as_int(j["step_cap"], "step_cap");
    if (j.contains("epsilon")) cfg.epsilon = detail::as_number(j["epsilon"], "epsilon");

    if (j.contains("barrier")) {
        const auto& b = j["barrier"];
        detail::reject_unknown_keys(b, {"alpha", "beta"}, "barrier");
        if (b.contains("alpha")) cfg.barrier.alpha = detail::as_number(b["alpha"], "barrier.alpha");
        if (b.contains("beta")) cfg.barrier.beta = detail::as_number(b["beta"], "barrier.beta");
    }

    const bool has_weights = j.contains("weights");
    const bool has_covariances = j.contains("covariances");
    if (has_weights && has_covariances)
        throw ConfigError("keys 'weights' and 'covariances' are mutually exclusive;"
                          " supply exactly one");
    if (has_weights) {
        const auto& w = j["weights"];
        detail::reject_unknown_keys(w, {"q", "r"}, "weights");
        cfg.use_weight_form = true;
        if (w.contains("q")) cfg.q_weight = detail::as_vector_of(w["q"], "weights.q", 2);
        if (w.contains("r")) cfg.r_weight = detail::as_vector_of(w["r"], "weights.r", 2);
    }
    if (has_covariances) {
        const auto& c = j["covariances"];
        detail::reject_unknown_keys(c, {"q_wbar", "q_v"}, "covariances");
        cfg.use_weight_form = false;
        if (!c.contains("q_wbar") || !c.contains("q_v"))
            throw ConfigError("key 'covariances' requires both 'q_wbar' and 'q_v'");
        cfg.q_wbar = detail::as_vector_of(c["q_wbar"], "covariances.q_wbar", 6);
        cfg.q_v = detail::as_vector_of(c["q_v"], "covariances.q_v", 4);
    }

    if (j.contains("q_eta")) {
        if (j["q_eta"].is_number())
            cfg.q_eta = Eigen::VectorXd::Constant(5, detail::as_number(j["q_eta"], "q_eta"));
        else
            cfg.q_eta = detail::as_vector_of(j["q_eta"], "q_eta", 5);
    }

    if (j.contains("bicycle")) {
        const auto& b = j["bicycle"];
        detail::reject_unknown_keys(b, {"l_r", "l_f", "dt"}, "bicycle");
        if (b.contains("l_r")) cfg.bicycle.l_r = detail::as_number(b["l_r"], "bicycle.l_r");
        if (b.contains("l_f")) cfg.bicycle.l_f = detail::as_number(b["l_f"], "bicycle.l_f");
        if (b.contains("dt")) cfg.bicycle.dt = detail::as_number(b["dt"], "bicycle.dt");
    }

    if (j.contains("track")) {
        const auto& t = j["track"];
        detail::reject_unknown_keys(
            t, {"x_start", "x_end", "step", "amplitude", "frequency", "halfwidth"}, "track");
        if (t.contains("x_start")) cfg.track_x_start = detail::as_number(t["x_start"], "track.x_start");
        if (t.contains("x_end")) cfg.track_x_end = detail::as_number(t["x_end"], "track.x_end");
        if (t.contains("step")) cfg.track_step = detail::as_number(t["step"], "track.step");
        if (t.contains("amplitude")) cfg.track_amplitude = detail::as_number(t["amplitude"], "track.amplitude");
        if (t.contains("frequency")) cfg.track_frequency = detail::as_number(t["frequency"], "track.frequency");
        if (t.contains("halfwidth")) cfg.track_halfwidth = detail::as_number(t["halfwidth"], "track.halfwidth");
    }

    if (j.contains("initial_state"))
        cfg.initial_state = detail::as_vector_of(j["initial_state"], "initial_state", 4);

    if (j.contains("input_bounds")) {
        const auto& b = j["input_bounds"];
        detail::reject_unknown_keys(b, {"accel", "steer_deg"}, "input_bounds");
        if (b.contains("accel")) {
            const Eigen::VectorXd a = detail::as_vector_of(b["accel"], "input_bounds.accel", 2);
            cfg.accel_min = a[0];
            cfg.accel_max = a[1];
        }
        if (b.contains("steer_deg")) {
            const Eigen::VectorXd s = detail::as_vector_of(b["steer_deg"], "input_bounds.steer_deg", 2);
            cfg.steer_min_deg = s[0];
            cfg.steer_max_deg = s[1];
        }
    }

    validate_config(cfg);
    return cfg;
}

/// Reads and parses a config file. Missing file, malformed text, and invalid
/// content raise distinct error types.
inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigIoError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

/// Canonical echo of a config with every field explicit; parsing the echo
/// reproduces the same RunConfig.
inline nlohmann::json echo_config(const RunConfig& cfg) {
    using detail::vector_to_json;
    nlohmann::json j;
    j["schema_version"] = cfg.schema_version;
    j["algorithm"] = cfg.algorithm;
    j["particles"] = cfg.particles;
    j["horizon"] = cfg.horizon;
    j["seed"] = cfg.seed;
    j["step_cap"] = cfg.step_cap;
    j["epsilon"] = cfg.epsilon;
    j["barrier"] = {{"alpha", cfg.barrier.alpha}, {"beta", cfg.barrier.beta}};
    if (cfg.use_weight_form)
        j["weights"] = {{"q", vector_to_json(cfg.q_weight)}, {"r", vector_to_json(cfg.r_weight)}};
    else
        j["covariances"] = {{"q_wbar", vector_to_json(cfg.q_wbar)}, {"q_v", vector_to_json(cfg.q_v)}};
    j["q_eta"] = vector_to_json(cfg.q_eta);
    j["bicycle"] = {{"l_r", cfg.bicycle.l_r}, {"l_f", cfg.bicycle.l_f}, {"dt", cfg.bicycle.dt}};
    j["track"] = {{"x_start", cfg.track_x_start}, {"x_end", cfg.track_x_end},
                  {"step", cfg.track_step},       {"amplitude", cfg.track_amplitude},
                  {"frequency", cfg.track_frequency}, {"halfwidth", cfg.track_halfwidth}};
    j["initial_state"] = vector_to_json(cfg.initial_state);
    j["input_bounds"] = {{"accel", vector_to_json((Eigen::VectorXd(2) << cfg.accel_min, cfg.accel_max).finished())},
                         {"steer_deg", vector_to_json((Eigen::VectorXd(2) << cfg.steer_min_deg, cfg.steer_max_deg).finished())}};
    return j;
}

inline std::string config_digest(const RunConfig& cfg) {
    return fnv1a_hex(echo_config(cfg).dump());
}

}  // namespace capnmpc
