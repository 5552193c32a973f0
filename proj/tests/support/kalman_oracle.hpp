#pragma once

// Closed-form Kalman filter / Rauch-Tung-Striebel smoother for the augmented
// two-dimensional linear system
//
//   [x; u]' = [[a, b], [0, 0]] [x; u] + w,   w ~ N(0, diag(q_x, q_u))
//   r       = x + v,                         v ~ N(0, q_v)
//
// starting from x known exactly and u ~ N(0, q_u). This is test-only oracle
// code, independent of the particle implementation it checks.

#include <Eigen/Dense>

#include <vector>

#include "capnmpc/virtual_system.hpp"

namespace oracle {

struct Moments {
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
};

struct KalmanOracle {
    double a = 0.7;
    double b = 0.5;
    double q_x = 0.05;
    double q_u = 0.5;
    double q_v = 0.1;

    Eigen::Matrix2d F() const {
        Eigen::Matrix2d f;
        f << a, b, 0.0, 0.0;
        return f;
    }

    // Filtered moments per step; also exposes the one-step-ahead predictions
    // the smoother needs.
    void filter(double x0, const std::vector<double>& refs, std::vector<Moments>& filtered,
                std::vector<Moments>& predicted) const {
        const Eigen::Matrix2d f = F();
        const Eigen::Matrix2d q = Eigen::Vector2d(q_x, q_u).asDiagonal();
        const Eigen::RowVector2d h(1.0, 0.0);

        Eigen::Vector2d m(x0, 0.0);
        Eigen::Matrix2d p = Eigen::Vector2d(0.0, q_u).asDiagonal();
        filtered.clear();
        predicted.clear();
        for (std::size_t t = 0; t < refs.size(); ++t) {
            if (t > 0) {
                m = f * m;
                p = f * p * f.transpose() + q;
            }
            predicted.push_back({m, p});
            const double s = (h * p * h.transpose())(0, 0) + q_v;
            const Eigen::Vector2d k = p * h.transpose() / s;
            m += k * (refs[t] - m[0]);
            p = (Eigen::Matrix2d::Identity() - k * h) * p;
            filtered.push_back({m, p});
        }
    }

    std::vector<Moments> filter(double x0, const std::vector<double>& refs) const {
        std::vector<Moments> filtered, predicted;
        filter(x0, refs, filtered, predicted);
        return filtered;
    }

    std::vector<Moments> smooth(double x0, const std::vector<double>& refs) const {
        std::vector<Moments> filtered, predicted;
        filter(x0, refs, filtered, predicted);
        const Eigen::Matrix2d f = F();

        std::vector<Moments> smoothed(filtered.size());
        smoothed.back() = filtered.back();
        for (int t = static_cast<int>(filtered.size()) - 2; t >= 0; --t) {
            const Eigen::Matrix2d g =
                filtered[t].cov * f.transpose() * predicted[t + 1].cov.inverse();
            smoothed[t].mean =
                filtered[t].mean + g * (smoothed[t + 1].mean - predicted[t + 1].mean);
            smoothed[t].cov =
                filtered[t].cov +
                g * (smoothed[t + 1].cov - predicted[t + 1].cov) * g.transpose();
        }
        return smoothed;
    }
};

// The matching virtual system for the particle implementation.
inline capnmpc::VirtualSystem make_linear_system(const KalmanOracle& o) {
    capnmpc::PlantModel plant;
    plant.state_dim = 1;
    plant.input_dim = 1;
    plant.step = [a = o.a, b = o.b](const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, a * x[0] + b * u[0]);
    };
    capnmpc::NoiseSpec noise;
    noise.q_wbar = (Eigen::VectorXd(2) << o.q_x, o.q_u).finished();
    noise.q_v = Eigen::VectorXd::Constant(1, o.q_v);
    return capnmpc::augment(std::move(plant), std::move(noise));
}

inline std::vector<Eigen::VectorXd> to_reference_vectors(const std::vector<double>& refs) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(refs.size());
    for (double r : refs) out.push_back(Eigen::VectorXd::Constant(1, r));
    return out;
}

}  // namespace oracle
