#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"

namespace capnmpc {

/// Deterministic discrete-time plant x_{k+1} = f(x_k, u_k).
struct PlantModel {
    int state_dim = 0;
    int input_dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> step;
};

/// Augmented estimation state: plant state stacked with the candidate control.
struct VirtualState {
    Eigen::VectorXd x;
    Eigen::VectorXd u;

    Eigen::Index dim() const { return x.size() + u.size(); }

    Eigen::VectorXd stacked() const {
        Eigen::VectorXd s(dim());
        s << x, u;
        return s;
    }
};

/// Diagonal noise description of the estimation problem.
///
/// q_wbar covers the augmented transition disturbance (state block first,
/// then input block), q_v the reference measurement (one entry per plant
/// state; a zero entry marks the component as unobserved), q_eta the
/// constraint measurement. epsilon regularizes any diagonal that a density
/// evaluation needs strictly positive.
struct NoiseSpec {
    Eigen::VectorXd q_wbar;
    Eigen::VectorXd q_v;
    Eigen::VectorXd q_eta;
    double epsilon = 1e-6;
};

/// The augmented system the estimator runs on: plant dynamics on the state
/// block, a fresh zero-mean control draw on the input block, and a reference
/// measurement of the observed state components.
struct VirtualSystem {
    PlantModel plant;
    NoiseSpec noise;
    std::vector<int> selector_dims;  // observed state components (q_v entry > 0)

    // quantities derived once in augment()
    Eigen::VectorXd q_wbar_reg;      // transition covariance used by density evaluations
    Eigen::VectorXd state_noise_std; // raw state-block stddev used when sampling
    Eigen::VectorXd input_noise_std; // regularized input-block stddev used when sampling
    Eigen::VectorXd obs_var;         // q_v restricted to selector_dims
    Eigen::VectorXd q_eta_reg;
    double trans_log_norm = 0.0;
    double ref_log_norm = 0.0;

    int state_dim() const { return plant.state_dim; }
    int input_dim() const { return plant.input_dim; }
    int augmented_dim() const { return plant.state_dim + plant.input_dim; }
    int observed_dim() const { return static_cast<int>(selector_dims.size()); }
};

namespace detail {

inline Eigen::VectorXd regularize_diag(const Eigen::VectorXd& v, double epsilon) {
    Eigen::VectorXd r = v;
    for (Eigen::Index i = 0; i < r.size(); ++i)
        if (r[i] < epsilon) r[i] += epsilon;
    return r;
}

inline std::string format_vector(const Eigen::VectorXd& v) {
    std::ostringstream os;
    os << "[" << v.transpose() << "]";
    return os.str();
}

}  // namespace detail

/// Builds the virtual system, validating every noise block against the plant
/// dimensions.
inline VirtualSystem augment(PlantModel plant, NoiseSpec noise) {
    if (plant.state_dim <= 0 || plant.input_dim <= 0)
        throw ConfigError("plant dimensions must be positive (state_dim=" +
                          std::to_string(plant.state_dim) + ", input_dim=" +
                          std::to_string(plant.input_dim) + ")");
    if (!plant.step) throw ConfigError("plant step function is not set");

    const int nx = plant.state_dim;
    const int nu = plant.input_dim;
    if (noise.q_wbar.size() != nx + nu)
        throw ConfigError("q_wbar has length " + std::to_string(noise.q_wbar.size()) +
                          ", expected n_x + n_u = " + std::to_string(nx + nu));
    if (noise.q_v.size() != nx)
        throw ConfigError("q_v has length " + std::to_string(noise.q_v.size()) +
                          ", expected n_x = " + std::to_string(nx));
    if (noise.epsilon <= 0.0) throw ConfigError("epsilon must be positive");
    if ((noise.q_wbar.array() < 0.0).any()) throw ConfigError("q_wbar entries must be nonnegative");
    if ((noise.q_v.array() < 0.0).any()) throw ConfigError("q_v entries must be nonnegative");
    if (noise.q_eta.size() > 0 && (noise.q_eta.array() < 0.0).any())
        throw ConfigError("q_eta entries must be nonnegative");

    VirtualSystem sys;
    sys.plant = std::move(plant);
    sys.noise = std::move(noise);

    const NoiseSpec& ns = sys.noise;
    sys.q_wbar_reg = detail::regularize_diag(ns.q_wbar, ns.epsilon);
    sys.state_noise_std = ns.q_wbar.head(nx).cwiseSqrt();
    sys.input_noise_std = detail::regularize_diag(ns.q_wbar.tail(nu), ns.epsilon).cwiseSqrt();
    sys.q_eta_reg = detail::regularize_diag(ns.q_eta, ns.epsilon);

    for (int i = 0; i < nx; ++i)
        if (ns.q_v[i] > 0.0) sys.selector_dims.push_back(i);
    sys.obs_var.resize(sys.observed_dim());
    for (int i = 0; i < sys.observed_dim(); ++i) sys.obs_var[i] = ns.q_v[sys.selector_dims[i]];

    sys.trans_log_norm = -0.5 * (2.0 * kPi * sys.q_wbar_reg.array()).log().sum();
    sys.ref_log_norm = -0.5 * (2.0 * kPi * sys.obs_var.array()).log().sum();
    return sys;
}

/// Mean of the augmented transition from prev: plant step on the state
/// block, zero on the input block (the control is redrawn each step).
inline Eigen::VectorXd transition_mean(const VirtualSystem& sys, const VirtualState& prev) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(sys.augmented_dim());
    m.head(sys.state_dim()) = sys.plant.step(prev.x, prev.u);
    return m;
}

/// Samples the augmented transition. The state block is perturbed with the
/// raw q_wbar state noise (exact propagation when that block is zero); the
/// input block is a fresh draw from the regularized input noise.
inline VirtualState propagate(const VirtualSystem& sys, const VirtualState& xbar,
                              std::mt19937_64& rng) {
    const int nx = sys.state_dim();
    const int nu = sys.input_dim();
    if (xbar.x.size() != nx || xbar.u.size() != nu)
        throw ConfigError("virtual state has dimensions (" + std::to_string(xbar.x.size()) +
                          ", " + std::to_string(xbar.u.size()) + "), expected (" +
                          std::to_string(nx) + ", " + std::to_string(nu) + ")");

    Eigen::VectorXd next_x = sys.plant.step(xbar.x, xbar.u);
    if (next_x.size() != nx)
        throw ConfigError("plant step returned length " + std::to_string(next_x.size()) +
                          ", expected " + std::to_string(nx));
    if (!next_x.allFinite())
        throw NumericError("plant step produced a non-finite state from x=" +
                           detail::format_vector(xbar.x) + ", u=" + detail::format_vector(xbar.u));

    std::normal_distribution<double> gauss;
    for (int i = 0; i < nx; ++i) next_x[i] += sys.state_noise_std[i] * gauss(rng);
    Eigen::VectorXd next_u(nu);
    for (int i = 0; i < nu; ++i) next_u[i] = sys.input_noise_std[i] * gauss(rng);
    return VirtualState{std::move(next_x), std::move(next_u)};
}

/// log p(next | prev) under the epsilon-regularized transition covariance;
/// finite for all finite arguments.
inline double log_density_transition(const VirtualSystem& sys, const VirtualState& next,
                                     const VirtualState& prev) {
    const Eigen::VectorXd mean = transition_mean(sys, prev);
    const Eigen::VectorXd dev = next.stacked() - mean;
    return sys.trans_log_norm - 0.5 * (dev.array().square() / sys.q_wbar_reg.array()).sum();
}

/// log p(r | xbar): diagonal Gaussian over the observed state components.
inline double log_density_reference(const VirtualSystem& sys,
                                    const Eigen::Ref<const Eigen::VectorXd>& r,
                                    const VirtualState& xbar) {
    if (r.size() != sys.observed_dim())
        throw ConfigError("reference has length " + std::to_string(r.size()) +
                          ", expected " + std::to_string(sys.observed_dim()) +
                          " observed components");
    double quad = 0.0;
    for (int i = 0; i < sys.observed_dim(); ++i) {
        const double d = r[i] - xbar.x[sys.selector_dims[i]];
        quad += d * d / sys.obs_var[i];
    }
    return sys.ref_log_norm - 0.5 * quad;
}

}  // namespace capnmpc
