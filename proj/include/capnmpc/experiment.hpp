#pragma once

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "controller.hpp"
#include "errors.hpp"
#include "vehicle.hpp"

namespace capnmpc {

/// Everything needed to run one closed-loop experiment from a RunConfig.
/// `margins` is evaluated for the record regardless of the algorithm so
/// that constraint satisfaction can be compared across algorithms.
struct ExperimentSetup {
    NMPCProblem problem;
    PlantModel truth;
    ConstraintSet margins;
    Eigen::VectorXd x0;
    int step_cap = 150;
    Eigen::VectorXd q_metric;
    Eigen::VectorXd r_metric;
};

inline ExperimentSetup build_experiment(const RunConfig& cfg) {
    validate_config(cfg);

    ReferenceTrajectory track =
        sinusoidal_track(cfg.track_x_start, cfg.track_x_end, cfg.track_step, cfg.track_amplitude,
                         cfg.track_frequency, cfg.track_halfwidth);

    NoiseSpec noise;
    noise.epsilon = cfg.epsilon;
    noise.q_eta = cfg.q_eta;
    if (cfg.use_weight_form) {
        // tracking weight Q and control weight R map to measurement and
        // disturbance covariances Q^-1 and R^-1
        noise.q_v = (Eigen::VectorXd(4) << 1.0 / cfg.q_weight[0], 1.0 / cfg.q_weight[1], 0.0, 0.0)
                        .finished();
        noise.q_wbar = (Eigen::VectorXd(6) << 0.0, 0.0, 0.0, 0.0, 1.0 / cfg.r_weight[0],
                        1.0 / cfg.r_weight[1])
                           .finished();
    } else {
        noise.q_v = cfg.q_v;
        noise.q_wbar = cfg.q_wbar;
    }

    ExperimentSetup setup;
    setup.problem.sys = augment(bicycle_plant_saturated(cfg.bicycle), noise);
    setup.problem.horizon = cfg.horizon;
    setup.problem.particles = cfg.particles;
    setup.problem.reference = track.as_reference_sequence();

    const Eigen::Vector2d u_lo(cfg.accel_min, cfg.steer_min_rad());
    const Eigen::Vector2d u_hi(cfg.accel_max, cfg.steer_max_rad());
    setup.margins = vehicle_constraints(track, u_lo, u_hi);
    if (cfg.algorithm == "capnmpc")
        setup.problem.constraints = ConstraintModel{vehicle_constraints(track, u_lo, u_hi), cfg.barrier};

    setup.truth = bicycle_plant(cfg.bicycle);
    setup.x0 = cfg.initial_state;
    setup.step_cap = cfg.step_cap;
    if (cfg.use_weight_form) {
        setup.q_metric = cfg.q_weight;
        setup.r_metric = cfg.r_weight;
    } else {
        setup.q_metric = (Eigen::VectorXd(2) << 1.0 / cfg.q_v[0], 1.0 / cfg.q_v[1]).finished();
        setup.r_metric = (Eigen::VectorXd(2) << 1.0 / cfg.q_wbar[4], 1.0 / cfg.q_wbar[5]).finished();
    }
    return setup;
}

struct RunResult {
    SimulationRecord record;
    TrackingMetrics tracking;
    int degeneracy_count = 0;
    double wall_seconds = 0.0;
};

/// Fraction of recorded steps with any constraint margin above zero.
inline double violation_rate(const SimulationRecord& record) {
    if (record.steps.empty()) return 0.0;
    int violated = 0;
    for (const StepRecord& s : record.steps)
        if (s.margins.size() > 0 && (s.margins.array() > 0.0).any()) ++violated;
    return static_cast<double>(violated) / static_cast<double>(record.steps.size());
}

inline RunResult run_experiment(const RunConfig& cfg) {
    const ExperimentSetup setup = build_experiment(cfg);
    RunResult result;
    const auto t0 = std::chrono::steady_clock::now();
    result.record = run_closed_loop(setup.problem, setup.truth, setup.x0, setup.step_cap,
                                    cfg.seed, &setup.margins);
    const auto t1 = std::chrono::steady_clock::now();
    result.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.record.config_digest = config_digest(cfg);
    if (!result.record.steps.empty())
        result.tracking = metrics(result.record, setup.q_metric, setup.r_metric);
    for (const StepRecord& s : result.record.steps)
        if (s.degenerate) ++result.degeneracy_count;
    return result;
}

namespace detail {

inline std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigIoError("cannot write '" + tmp.string() + "'");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Per-step table, comma separated, floats at 9 significant digits.
inline void write_step_table(const std::filesystem::path& path, const SimulationRecord& record) {
    std::string out =
        "k,x_p,y_p,nu,psi,a_applied,delta_f_applied,ref_x,ref_y,g1,g2,g3,g4,g5,degenerate_flag\n";
    for (const StepRecord& s : record.steps) {
        out += std::to_string(s.k);
        out += ',' + detail::fmt9(s.state[0]) + ',' + detail::fmt9(s.state[1]);
        out += ',' + detail::fmt9(s.state[2]) + ',' + detail::fmt9(wrap_angle(s.state[3]));
        out += ',' + detail::fmt9(s.control[0]) + ',' + detail::fmt9(s.control[1]);
        out += ',' + detail::fmt9(s.reference[0]) + ',' + detail::fmt9(s.reference[1]);
        for (int g = 0; g < 5; ++g)
            out += ',' + detail::fmt9(s.margins.size() == 5 ? s.margins[g]
                                                            : std::numeric_limits<double>::quiet_NaN());
        out += ',' + std::to_string(s.degenerate ? 1 : 0) + '\n';
    }
    detail::write_atomic(path, out);
}

inline void write_run_metadata(const std::filesystem::path& path, const RunConfig& cfg,
                               const RunResult& result) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["algorithm"] = cfg.algorithm;
    j["seed"] = cfg.seed;
    j["config_digest"] = config_digest(cfg);
    j["config"] = echo_config(cfg);
    j["steps"] = result.record.steps.size();
    j["rmse"] = result.tracking.rmse;
    j["cost"] = result.tracking.cost;
    j["degeneracy_count"] = result.degeneracy_count;
    j["violation_rate"] = violation_rate(result.record);
    j["wall_time_seconds"] = result.wall_seconds;
    j["aborted"] = result.record.aborted;
    if (result.record.aborted) {
        j["failed_step"] = result.record.failed_step;
        j["error"] = result.record.error;
    }
    detail::write_atomic(path, j.dump(2) + "\n");
}

/// Aggregates of one algorithm over a seed batch.
struct AlgorithmSummary {
    std::string algorithm;
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    double cost_mean = 0.0;
    double cost_std = 0.0;
    double violation_rate_mean = 0.0;
};

struct CompareSummary {
    std::vector<AlgorithmSummary> rows;
    std::vector<std::uint64_t> seeds;
    std::vector<std::uint64_t> failed_seeds;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace detail

/// Runs both algorithms on every seed with the identical seed value, so the
/// particle draws of the two runs coincide until the first weight-dependent
/// resampling diverges. Failed seeds are excluded from the aggregates.
inline CompareSummary compare_runs(RunConfig cfg, const std::vector<std::uint64_t>& seeds,
                                   std::vector<std::pair<RunConfig, RunResult>>* runs = nullptr) {
    if (seeds.empty()) throw ConfigError("compare requires at least one seed");
    CompareSummary summary;
    summary.seeds = seeds;
    for (const std::string& algorithm : {std::string("pnmpc"), std::string("capnmpc")}) {
        std::vector<double> rmse, cost, viol;
        for (std::uint64_t seed : seeds) {
            cfg.algorithm = algorithm;
            cfg.seed = seed;
            RunResult r = run_experiment(cfg);
            const bool failed = r.record.aborted || r.record.steps.empty();
            if (runs) runs->emplace_back(cfg, r);
            if (failed) {
                summary.failed_seeds.push_back(seed);
                continue;
            }
            rmse.push_back(r.tracking.rmse);
            cost.push_back(r.tracking.cost);
            viol.push_back(violation_rate(r.record));
        }
        AlgorithmSummary row;
        row.algorithm = algorithm;
        std::tie(row.rmse_mean, row.rmse_std) = detail::mean_std(rmse);
        std::tie(row.cost_mean, row.cost_std) = detail::mean_std(cost);
        row.violation_rate_mean = detail::mean_std(viol).first;
        summary.rows.push_back(row);
    }
    return summary;
}

inline std::string summary_csv(const CompareSummary& summary) {
    std::string out = "algorithm,rmse_mean,rmse_std,cost_mean,cost_std,violation_rate_mean\n";
    for (const AlgorithmSummary& r : summary.rows) {
        out += r.algorithm;
        out += ',' + detail::fmt9(r.rmse_mean) + ',' + detail::fmt9(r.rmse_std);
        out += ',' + detail::fmt9(r.cost_mean) + ',' + detail::fmt9(r.cost_std);
        out += ',' + detail::fmt9(r.violation_rate_mean) + '\n';
    }
    return out;
}

inline void write_summary(const std::filesystem::path& dir, const RunConfig& cfg,
                          const CompareSummary& summary) {
    detail::write_atomic(dir / "summary.csv", summary_csv(summary));

    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["seeds"] = summary.seeds;
    j["failed_seeds"] = summary.failed_seeds;
    j["config_digest"] = config_digest(cfg);
    j["particle_sharing"] =
        "both algorithms use the same seed, so their particle draws coincide until the first"
        " weight-dependent resampling choice differs; after that the streams diverge";
    j["rows"] = nlohmann::json::array();
    for (const AlgorithmSummary& r : summary.rows)
        j["rows"].push_back({{"algorithm", r.algorithm},
                             {"rmse_mean", r.rmse_mean},
                             {"rmse_std", r.rmse_std},
                             {"cost_mean", r.cost_mean},
                             {"cost_std", r.cost_std},
                             {"violation_rate_mean", r.violation_rate_mean}});
    detail::write_atomic(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace capnmpc
