#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"
#include "virtual_system.hpp"

namespace capnmpc {

/// Softplus barrier parameters: alpha divides the output, beta scales the
/// argument.
struct BarrierConfig {
    double alpha = 5.0;
    double beta = 3.0;
};

/// Stacked inequality constraints g(xbar) <= 0.
struct ConstraintSet {
    int count = 0;
    std::function<Eigen::VectorXd(const VirtualState&)> eval;
};

struct ConstraintModel {
    ConstraintSet set;
    BarrierConfig barrier;
};

/// phi(s) = ln(1 + exp(beta s)) / alpha, evaluated without overflow.
/// Strictly positive and strictly increasing.
inline double softplus_barrier(double s, const BarrierConfig& cfg) {
    const double bs = cfg.beta * s;
    if (bs > 0.0) return (bs + std::log1p(std::exp(-bs))) / cfg.alpha;
    return std::log1p(std::exp(bs)) / cfg.alpha;
}

/// log p(z = 0 | xbar) for the constraint measurement: a diagonal Gaussian
/// around the elementwise barrier values. Larger violations mean smaller
/// density.
inline double log_density_constraints(const VirtualState& xbar, const ConstraintSet& cs,
                                      const BarrierConfig& cfg,
                                      const Eigen::Ref<const Eigen::VectorXd>& q_eta) {
    if (cfg.alpha <= 0.0 || cfg.beta <= 0.0)
        throw ConfigError("barrier parameters must be positive");
    if (q_eta.size() != cs.count)
        throw ConfigError("q_eta has length " + std::to_string(q_eta.size()) +
                          ", expected m = " + std::to_string(cs.count));
    const Eigen::VectorXd g = cs.eval(xbar);
    if (g.size() != cs.count)
        throw ConfigError("constraint eval returned length " + std::to_string(g.size()) +
                          ", expected m = " + std::to_string(cs.count));
    double lp = 0.0;
    for (int j = 0; j < cs.count; ++j) {
        const double m = softplus_barrier(g[j], cfg);
        lp -= 0.5 * (m * m / q_eta[j] + std::log(2.0 * kPi * q_eta[j]));
    }
    return lp;
}

/// A weighted particle set at one horizon step. log_weights holds the log
/// of the normalized weights.
struct ParticleEnsemble {
    std::vector<VirtualState> particles;
    Eigen::VectorXd log_weights;
    Eigen::VectorXd normalized_weights;
    bool degenerate = false;

    int size() const { return static_cast<int>(particles.size()); }
};

/// Reweights an ensemble against the reference (and, when given, the
/// constraint measurement). Works in the log domain with per-factor
/// max-shifting; if every likelihood underflows to zero the weights fall
/// back to uniform and the ensemble is flagged degenerate.
inline ParticleEnsemble weigh(ParticleEnsemble ensemble,
                              const Eigen::Ref<const Eigen::VectorXd>& r,
                              const VirtualSystem& sys,
                              const ConstraintModel* constraints = nullptr) {
    const int n = ensemble.size();
    if (n == 0) throw ConfigError("cannot weigh an empty ensemble");

    Eigen::VectorXd ll_ref(n);
    for (int i = 0; i < n; ++i) {
        const double v = log_density_reference(sys, r, ensemble.particles[i]);
        if (std::isnan(v)) throw NumericError("NaN reference likelihood for particle " + std::to_string(i));
        ll_ref[i] = v;
    }
    // Shift each likelihood factor by its own maximum: a constraint factor
    // that is constant across particles then cancels exactly.
    Eigen::VectorXd ll = ll_ref.array() - ll_ref.maxCoeff();
    if (constraints) {
        Eigen::VectorXd ll_con(n);
        for (int i = 0; i < n; ++i) {
            const double v = log_density_constraints(ensemble.particles[i], constraints->set,
                                                     constraints->barrier, sys.q_eta_reg);
            if (std::isnan(v)) throw NumericError("NaN constraint likelihood for particle " + std::to_string(i));
            ll_con[i] = v;
        }
        ll += (ll_con.array() - ll_con.maxCoeff()).matrix();
    }

    if (!std::isfinite(ll.maxCoeff())) {
        // every particle carries zero likelihood
        ensemble.normalized_weights = Eigen::VectorXd::Constant(n, 1.0 / n);
        ensemble.log_weights = Eigen::VectorXd::Constant(n, -std::log(static_cast<double>(n)));
        ensemble.degenerate = true;
        return ensemble;
    }

    const Eigen::VectorXd w = ll.array().exp();
    ensemble.normalized_weights = w / w.sum();
    ensemble.log_weights = ll.array() - log_sum_exp(ll);
    ensemble.degenerate = false;
    return ensemble;
}

/// Systematic resampling: one uniform offset u0 in [0, 1/N) and strata
/// u0 + j/N. Expected replication count of index i is N * w_i.
inline std::vector<int> systematic_resample(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                            std::mt19937_64& rng) {
    const int n = static_cast<int>(weights.size());
    if (n == 0) throw ConfigError("cannot resample an empty weight vector");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u0 = unif(rng) / n;

    std::vector<int> indices(n);
    double cum = weights[0];
    int i = 0;
    for (int j = 0; j < n; ++j) {
        const double uj = u0 + static_cast<double>(j) / n;
        while (cum < uj && i + 1 < n) {
            ++i;
            cum += weights[i];
        }
        indices[j] = i;
    }
    return indices;
}

/// Weighted ensembles over one horizon pass. `ensembles` holds the
/// pre-resampling weights the smoother consumes; `resampled` holds the
/// ancestor sets each propagation started from.
struct FilterHistory {
    std::vector<ParticleEnsemble> ensembles;
    std::vector<std::vector<VirtualState>> resampled;

    int steps() const { return static_cast<int>(ensembles.size()); }

    bool any_degenerate() const {
        for (const auto& e : ensembles)
            if (e.degenerate) return true;
        return false;
    }
};

/// Bootstrap filtering over the horizon window. At the first step the state
/// part of every particle is the known current state and only the input part
/// is sampled; that ensemble is weighted against the current reference like
/// every later one. Resampling runs after each weighting.
inline FilterHistory forward_pass(const VirtualSystem& sys,
                                  const Eigen::Ref<const Eigen::VectorXd>& x_k,
                                  const std::vector<Eigen::VectorXd>& refs,
                                  const ConstraintModel* constraints, int n_particles,
                                  std::mt19937_64& rng) {
    if (refs.empty()) throw ConfigError("reference window must contain at least one entry");
    if (n_particles < 1) throw ConfigError("particle count must be at least 1");
    if (x_k.size() != sys.state_dim())
        throw ConfigError("current state has length " + std::to_string(x_k.size()) +
                          ", expected " + std::to_string(sys.state_dim()));
    if (!x_k.allFinite()) throw NumericError("current state is not finite");

    FilterHistory hist;
    hist.ensembles.reserve(refs.size());
    hist.resampled.reserve(refs.size());

    for (std::size_t t = 0; t < refs.size(); ++t) {
        ParticleEnsemble ens;
        ens.particles.reserve(n_particles);
        if (t == 0) {
            std::normal_distribution<double> gauss;
            for (int i = 0; i < n_particles; ++i) {
                VirtualState p;
                p.x = x_k;
                p.u.resize(sys.input_dim());
                for (int d = 0; d < sys.input_dim(); ++d)
                    p.u[d] = sys.input_noise_std[d] * gauss(rng);
                ens.particles.push_back(std::move(p));
            }
        } else {
            const auto& parents = hist.resampled.back();
            for (int i = 0; i < n_particles; ++i) {
                try {
                    ens.particles.push_back(propagate(sys, parents[i], rng));
                } catch (const NumericError& e) {
                    throw NumericError("horizon step " + std::to_string(t) + ": " + e.what());
                }
            }
        }

        ens = weigh(std::move(ens), refs[t], sys, constraints);
        const std::vector<int> idx = systematic_resample(ens.normalized_weights, rng);
        std::vector<VirtualState> resampled;
        resampled.reserve(n_particles);
        for (int j : idx) resampled.push_back(ens.particles[j]);
        hist.ensembles.push_back(std::move(ens));
        hist.resampled.push_back(std::move(resampled));
    }
    return hist;
}

}  // namespace capnmpc
