#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "filter.hpp"
#include "virtual_system.hpp"

namespace capnmpc {

/// Marginal smoothing weights, one normalized vector per horizon step.
struct SmoothedWeights {
    std::vector<Eigen::VectorXd> weights;
};

/// Backward reweighting of a filter history:
///
///   W_{t|K}^i = sum_j W_{t+1|K}^j * W_t^i p(xbar_{t+1}^j | xbar_t^i)
///                              / sum_l W_t^l p(xbar_{t+1}^j | xbar_t^l)
///
/// with the terminal weights equal to the filtering weights. Transition
/// densities use the regularized covariance. The pairwise density table is
/// evaluated once per step, in tiles, and every exponent is max-shifted so
/// the inner ratios never divide by zero.
inline SmoothedWeights backward_reweight(const FilterHistory& history, const VirtualSystem& sys) {
    const int steps = history.steps();
    if (steps == 0) throw ConfigError("cannot smooth an empty filter history");

    SmoothedWeights sw;
    sw.weights.resize(steps);
    sw.weights[steps - 1] = history.ensembles[steps - 1].normalized_weights;
    if (steps == 1) return sw;

    const int d = sys.augmented_dim();
    const Eigen::ArrayXd inv_sd = sys.q_wbar_reg.array().sqrt().inverse();

    for (int t = steps - 2; t >= 0; --t) {
        const ParticleEnsemble& cur = history.ensembles[t];
        const ParticleEnsemble& nxt = history.ensembles[t + 1];
        const int n = cur.size();
        if (nxt.size() != n) throw ConfigError("particle count changed across the horizon");

        // Scaled next-step particles and scaled transition means; with both
        // divided by the noise stddev the squared Mahalanobis distance is a
        // plain squared Euclidean distance, so the whole table reduces to a
        // matrix product.
        Eigen::MatrixXd scaled_next(d, n);
        Eigen::MatrixXd scaled_mean(d, n);
        for (int j = 0; j < n; ++j)
            scaled_next.col(j) = nxt.particles[j].stacked().array() * inv_sd;
        for (int l = 0; l < n; ++l)
            scaled_mean.col(l) = transition_mean(sys, cur.particles[l]).array() * inv_sd;
        const Eigen::VectorXd next_sq = scaled_next.colwise().squaredNorm().transpose();
        const Eigen::VectorXd mean_sq = scaled_mean.colwise().squaredNorm().transpose();

        // terms that depend on l only: log W_t^l - |mu_l|^2 / 2 + normalizer
        const Eigen::VectorXd l_const =
            cur.log_weights - 0.5 * mean_sq + Eigen::VectorXd::Constant(n, sys.trans_log_norm);
        const Eigen::VectorXd& w_next = sw.weights[t + 1];
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);

        // tiles are laid out with l down the columns so every reduction runs
        // over contiguous memory
        const int block = std::min(n, 512);
        for (int j0 = 0; j0 < n; j0 += block) {
            const int nb = std::min(block, n - j0);
            // lp(l, j) = log W_t^l + log p(xbar_{t+1}^{j0+j} | xbar_t^l)
            Eigen::MatrixXd lp = scaled_mean.transpose() * scaled_next.middleCols(j0, nb);
            lp.rowwise() -= 0.5 * next_sq.segment(j0, nb).transpose();
            lp.colwise() += l_const;

            // shift each column by its maximum before exponentiating; the
            // column sums are then at least one, so the ratios never divide
            // by zero
            const Eigen::RowVectorXd col_max = lp.colwise().maxCoeff();
            lp.rowwise() -= col_max;
            lp = lp.array().exp();
            const Eigen::RowVectorXd denom = lp.colwise().sum();
            acc.noalias() +=
                lp * (w_next.segment(j0, nb).array() / denom.transpose().array()).matrix();
        }
        sw.weights[t] = std::move(acc);
    }
    return sw;
}

/// Weighted mean of the first-step particles; the input part is the control
/// estimate the controller applies.
inline VirtualState extract_estimate(const ParticleEnsemble& ensemble_k,
                                     const Eigen::Ref<const Eigen::VectorXd>& smoothed_k) {
    const int n = ensemble_k.size();
    if (n == 0) throw ConfigError("cannot extract an estimate from an empty ensemble");
    if (smoothed_k.size() != n)
        throw ConfigError("smoothed weights have length " + std::to_string(smoothed_k.size()) +
                          ", expected " + std::to_string(n));

    VirtualState est;
    est.x = Eigen::VectorXd::Zero(ensemble_k.particles[0].x.size());
    est.u = Eigen::VectorXd::Zero(ensemble_k.particles[0].u.size());
    for (int i = 0; i < n; ++i) {
        est.x += smoothed_k[i] * ensemble_k.particles[i].x;
        est.u += smoothed_k[i] * ensemble_k.particles[i].u;
    }
    return est;
}

}  // namespace capnmpc
