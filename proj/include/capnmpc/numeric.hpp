#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <string_view>

namespace capnmpc {

inline constexpr double kPi = 3.14159265358979323846;

/// log(sum(exp(v))) with max-shifting; -inf for an empty or all-(-inf) input.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
    if (v.size() == 0) return -std::numeric_limits<double>::infinity();
    const double m = v.derived().maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.derived().array() - m).exp().sum());
}

/// Shannon entropy (nats) of a normalized weight vector.
inline double weight_entropy(const Eigen::Ref<const Eigen::VectorXd>& w) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) h -= w[i] * std::log(w[i]);
    return h;
}

/// FNV-1a 64-bit hash as a fixed-width hex string; used for config digests.
inline std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace capnmpc
