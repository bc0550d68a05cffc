#pragma once

#include "lgdist/nn/tensor.hpp"
#include "lgdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace lgdist::testing {

struct GradCheckResult {
    double relative_error = 0.0;
    std::size_t checked = 0;
};

/// Central finite differences of a scalar function of `inputs`, compared to
/// the reverse-mode gradient. At most `max_entries` entries per input are
/// probed (chosen with a fixed stream). Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|) measured on the vector
/// of probed entries.
inline GradCheckResult grad_check(const std::function<nn::Var()>& f, std::vector<nn::Var> inputs, double h = 1e-5,
                                  std::size_t max_entries = 64) {
    for (auto& v : inputs) {
        v.zero_grad();
    }
    nn::Var out = f();
    nn::backward(out);
    std::vector<double> analytic;
    std::vector<double> numeric;
    CounterRng pick(0x5eed);
    for (auto& v : inputs) {
        const Matrix g = v.grad();
        const auto n = static_cast<std::size_t>(v.value().size());
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = i;
        }
        if (n > max_entries) {
            for (std::size_t i = 0; i < max_entries; ++i) {
                std::swap(idx[i], idx[i + pick.below(n - i)]);
            }
            idx.resize(max_entries);
        }
        for (const auto k : idx) {
            double& x = v.mutable_value().data()[k];
            const double saved = x;
            double fp;
            double fm;
            {
                nn::NoGradGuard guard;
                x = saved + h;
                fp = f().scalar();
                x = saved - h;
                fm = f().scalar();
            }
            x = saved;
            analytic.push_back(g.data()[k]);
            numeric.push_back((fp - fm) / (2.0 * h));
        }
    }
    double diff = 0.0;
    double na = 0.0;
    double nn_ = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn_ += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
    return {std::sqrt(diff) / denom, analytic.size()};
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    CounterRng rng(seed);
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        m.data()[k] = scale * rng.normal();
    }
    return m;
}

} // namespace lgdist::testing
