#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "filter.hpp"
#include "numeric.hpp"
#include "smoother.hpp"
#include "virtual_system.hpp"

namespace capnmpc {

/// A complete receding-horizon estimation problem. Constraints absent
/// selects plain particle weighting, present selects constraint-aware
/// weighting; everything else is shared.
struct NMPCProblem {
    VirtualSystem sys;
    std::optional<ConstraintModel> constraints;
    int horizon = 4;
    int particles = 100;
    std::vector<Eigen::VectorXd> reference;  // full sequence, observed components only
};

struct StepDiagnostics {
    bool degenerate = false;
    double smoothed_entropy = 0.0;  // entropy of the smoothed weights at the applied step
};

/// One control cycle: forward filtering over the window, backward
/// reweighting, estimate extraction. Returns the input part of the estimate.
inline std::pair<Eigen::VectorXd, StepDiagnostics> nmpc_step(
    const NMPCProblem& problem, const Eigen::Ref<const Eigen::VectorXd>& x_k,
    const std::vector<Eigen::VectorXd>& ref_window, std::mt19937_64& rng) {
    if (problem.horizon < 0) throw ConfigError("horizon must be nonnegative");
    if (static_cast<int>(ref_window.size()) != problem.horizon + 1)
        throw ConfigError("reference window holds " + std::to_string(ref_window.size()) +
                          " entries, expected H + 1 = " + std::to_string(problem.horizon + 1));

    const ConstraintModel* cm = problem.constraints ? &*problem.constraints : nullptr;
    const FilterHistory hist =
        forward_pass(problem.sys, x_k, ref_window, cm, problem.particles, rng);
    const SmoothedWeights sw = backward_reweight(hist, problem.sys);
    const VirtualState est = extract_estimate(hist.ensembles.front(), sw.weights.front());

    StepDiagnostics diag;
    diag.degenerate = hist.any_degenerate();
    diag.smoothed_entropy = weight_entropy(sw.weights.front());
    return {est.u, diag};
}

/// Everything recorded about one closed-loop step. `margins` holds the
/// constraint values at the applied estimate and may be empty when no
/// constraint set was supplied for recording.
struct StepRecord {
    int k = 0;
    Eigen::VectorXd state;
    Eigen::VectorXd control;
    Eigen::VectorXd reference;
    Eigen::VectorXd margins;
    bool degenerate = false;
    double smoothed_entropy = 0.0;
};

struct SimulationRecord {
    std::vector<StepRecord> steps;
    std::uint64_t seed = 0;
    std::string config_digest;
    bool aborted = false;
    int failed_step = -1;
    std::string error;
};

/// Index of the reference point closest to the observed components of x.
inline int nearest_reference_index(const NMPCProblem& problem,
                                   const Eigen::Ref<const Eigen::VectorXd>& x) {
    const auto& sel = problem.sys.selector_dims;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < problem.reference.size(); ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < sel.size(); ++j) {
            const double e = problem.reference[i][static_cast<Eigen::Index>(j)] - x[sel[j]];
            d += e * e;
        }
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

/// Runs the receding-horizon loop: per step the window holds H+1 consecutive
/// reference points starting at the vehicle's nearest one (clamped at the end
/// of the sequence), only the first estimated input is applied, and the true
/// plant evolves without process noise. Stops at max_steps or once the
/// closest reference point is the final one. A step failure leaves a partial
/// record with the failing index instead of throwing.
inline SimulationRecord run_closed_loop(const NMPCProblem& problem, const PlantModel& plant_truth,
                                        Eigen::VectorXd x0, int max_steps, std::uint64_t seed,
                                        const ConstraintSet* record_margins = nullptr) {
    if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
    if (problem.reference.empty()) throw ConfigError("reference sequence is empty");

    const ConstraintSet* margins = record_margins;
    if (!margins && problem.constraints) margins = &problem.constraints->set;

    SimulationRecord rec;
    rec.seed = seed;
    std::mt19937_64 rng(seed);
    Eigen::VectorXd x = std::move(x0);
    const int last = static_cast<int>(problem.reference.size()) - 1;

    for (int k = 0; k < max_steps; ++k) {
        const int progress = nearest_reference_index(problem, x);
        std::vector<Eigen::VectorXd> window(problem.horizon + 1);
        for (int i = 0; i <= problem.horizon; ++i)
            window[i] = problem.reference[std::min(progress + i, last)];

        StepRecord sr;
        sr.k = k;
        sr.state = x;
        sr.reference = window.front();
        try {
            auto [u, diag] = nmpc_step(problem, x, window, rng);
            sr.control = std::move(u);
            sr.degenerate = diag.degenerate;
            sr.smoothed_entropy = diag.smoothed_entropy;
            if (margins) sr.margins = margins->eval(VirtualState{x, sr.control});
            x = plant_truth.step(x, sr.control);
            if (!x.allFinite()) throw NumericError("plant state became non-finite");
        } catch (const std::exception& e) {
            rec.aborted = true;
            rec.failed_step = k;
            rec.error = "step " + std::to_string(k) + ": " + e.what();
            break;
        }
        rec.steps.push_back(std::move(sr));
        if (nearest_reference_index(problem, x) == last) break;
    }
    return rec;
}

}  // namespace capnmpc
