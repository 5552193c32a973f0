#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "controller.hpp"
#include "errors.hpp"
#include "filter.hpp"
#include "numeric.hpp"
#include "virtual_system.hpp"

namespace capnmpc {

/// Kinematic bicycle geometry and integration step size.
struct BicycleParams {
    double l_r = 0.5;  // rear axle to centre of mass [m]
    double l_f = 0.5;  // front axle to centre of mass [m]
    double dt = 0.1;   // integration step [s]
};

struct BicycleState {
    double x_p = 0.0;  // position x [m]
    double y_p = 0.0;  // position y [m]
    double nu = 0.0;   // speed [m/s]
    double psi = 0.0;  // heading [rad]

    Eigen::Vector4d to_vector() const { return Eigen::Vector4d(x_p, y_p, nu, psi); }

    static BicycleState from_vector(const Eigen::Ref<const Eigen::Vector4d>& v) {
        return BicycleState{v[0], v[1], v[2], v[3]};
    }
};

/// Side-slip angle beta = atan(l_r / (l_r + l_f) * tan(delta_f)).
inline double side_slip(double delta_f, const BicycleParams& p) {
    return std::atan(p.l_r / (p.l_r + p.l_f) * std::tan(delta_f));
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

/// One Euler step of the kinematic bicycle model. Every rate is evaluated
/// at the pre-step state. Steering at or beyond +-pi/2 is rejected: tan is
/// singular there and the angle has no kinematic meaning.
inline BicycleState bicycle_step(const BicycleState& s, double accel, double delta_f,
                                 const BicycleParams& p) {
    if (!(std::abs(delta_f) < kPi / 2.0))
        throw std::domain_error("steering angle must lie strictly inside (-pi/2, pi/2), got " +
                                std::to_string(delta_f));
    const double beta = side_slip(delta_f, p);
    BicycleState n;
    n.x_p = s.x_p + p.dt * s.nu * std::cos(s.psi + beta);
    n.y_p = s.y_p + p.dt * s.nu * std::sin(s.psi + beta);
    n.nu = s.nu + p.dt * accel;
    n.psi = s.psi + p.dt * (s.nu / p.l_r) * std::sin(beta);
    return n;
}

/// Plant model for the true vehicle. Rejects steering past the singularity.
inline PlantModel bicycle_plant(const BicycleParams& p) {
    PlantModel m;
    m.state_dim = 4;
    m.input_dim = 2;
    m.step = [p](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd {
        const BicycleState s = BicycleState::from_vector(x.head<4>());
        return bicycle_step(s, u[0], u[1], p).to_vector();
    };
    return m;
}

/// Plant model for particle propagation. Sampled steering angles can land
/// past +-pi/2, where tan flips sign; the angle is saturated just inside the
/// singularity so stray particles stay finite and their weights remove them.
inline PlantModel bicycle_plant_saturated(const BicycleParams& p) {
    PlantModel m;
    m.state_dim = 4;
    m.input_dim = 2;
    m.step = [p, limit = kPi / 2.0 - 1e-6](const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& u) -> Eigen::VectorXd {
        const BicycleState s = BicycleState::from_vector(x.head<4>());
        const double delta = std::clamp(u[1], -limit, limit);
        return bicycle_step(s, u[0], delta, p).to_vector();
    };
    return m;
}

/// Reference centerline as an ordered polyline plus the corridor halfwidth.
struct ReferenceTrajectory {
    std::vector<Eigen::Vector2d> points;
    double corridor_halfwidth = 0.3;

    /// Distance from p to the polyline, using projection onto each segment.
    double distance_to_centerline(const Eigen::Vector2d& p) const {
        if (points.empty()) throw ConfigError("reference trajectory has no points");
        if (points.size() == 1) return (p - points[0]).norm();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < points.size(); ++i) {
            const Eigen::Vector2d a = points[i];
            const Eigen::Vector2d ab = points[i + 1] - a;
            const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            best = std::min(best, (p - (a + t * ab)).norm());
        }
        return best;
    }

    int nearest_index(const Eigen::Vector2d& p) const {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d = (p - points[i]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    }

    /// Points converted to generic reference vectors for the controller.
    std::vector<Eigen::VectorXd> as_reference_sequence() const {
        std::vector<Eigen::VectorXd> refs;
        refs.reserve(points.size());
        for (const auto& p : points) refs.push_back(Eigen::Vector2d(p));
        return refs;
    }
};

/// Sampled sinusoid y = amplitude * sin(frequency * x) on [x_start, x_end].
inline ReferenceTrajectory sinusoidal_track(double x_start = 0.0, double x_end = 33.0,
                                            double step = 0.6, double amplitude = 2.0,
                                            double frequency = 0.2, double halfwidth = 0.3) {
    if (step <= 0.0) throw ConfigError("track step must be positive");
    if (x_end <= x_start) throw ConfigError("track x_end must exceed x_start");
    if (halfwidth <= 0.0) throw ConfigError("corridor halfwidth must be positive");

    ReferenceTrajectory track;
    track.corridor_halfwidth = halfwidth;
    const int count = static_cast<int>(std::floor((x_end - x_start) / step + 1e-9)) + 1;
    track.points.reserve(count);
    for (int i = 0; i < count; ++i) {
        const double x = x_start + i * step;
        track.points.emplace_back(x, amplitude * std::sin(frequency * x));
    }
    return track;
}

/// The benchmark constraint set, all in g <= 0 form: four input bounds and
/// one corridor constraint on the normal distance to the centerline.
inline ConstraintSet vehicle_constraints(ReferenceTrajectory track, const Eigen::Vector2d& u_lo,
                                         const Eigen::Vector2d& u_hi) {
    if (!(u_lo[0] < u_hi[0]) || !(u_lo[1] < u_hi[1]))
        throw ConfigError("input bounds must satisfy lo < hi componentwise");

    ConstraintSet cs;
    cs.count = 5;
    cs.eval = [track = std::move(track), u_lo, u_hi](const VirtualState& s) -> Eigen::VectorXd {
        Eigen::VectorXd g(5);
        g[0] = s.u[0] - u_hi[0];
        g[1] = u_lo[0] - s.u[0];
        g[2] = s.u[1] - u_hi[1];
        g[3] = u_lo[1] - s.u[1];
        g[4] = track.distance_to_centerline(s.x.head<2>()) - track.corridor_halfwidth;
        return g;
    };
    return cs;
}

struct TrackingMetrics {
    double rmse = 0.0;
    double cost = 0.0;
};

/// RMSE of the positional tracking error and the realized quadratic cost
/// sum (r - p)' Q (r - p) + u' R u over the recorded steps.
inline TrackingMetrics metrics(const SimulationRecord& record,
                               const Eigen::Ref<const Eigen::VectorXd>& q_diag,
                               const Eigen::Ref<const Eigen::VectorXd>& r_diag) {
    if (record.steps.empty()) throw ConfigError("cannot compute metrics of an empty record");
    double sq_err = 0.0;
    double cost = 0.0;
    for (const StepRecord& s : record.steps) {
        for (Eigen::Index i = 0; i < q_diag.size(); ++i) {
            const double e = s.reference[i] - s.state[i];
            sq_err += e * e;
            cost += q_diag[i] * e * e;
        }
        for (Eigen::Index j = 0; j < r_diag.size(); ++j)
            cost += r_diag[j] * s.control[j] * s.control[j];
    }
    TrackingMetrics out;
    out.rmse = std::sqrt(sq_err / static_cast<double>(record.steps.size()));
    out.cost = cost;
    return out;
}

inline TrackingMetrics metrics(const SimulationRecord& record) {
    return metrics(record, Eigen::Vector2d(100.0, 100.0), Eigen::Vector2d(1.25, 2.5));
}

}  // namespace capnmpc
