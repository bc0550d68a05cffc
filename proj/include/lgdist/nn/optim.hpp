#pragma once

#include "lgdist/nn/layers.hpp"

#include <cstdint>
#include <vector>

namespace lgdist::nn {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias-corrected moments. Parameters
/// and moments are rounded to 32-bit after each step so a saved checkpoint
/// resumes bit-exactly.
class AdamW {
public:
    AdamW(ParameterSet& params, AdamWConfig config);

    /// Applies one update from the gradients currently stored on the
    /// parameters. Throws NonFinite if any gradient is not finite.
    void step();
    void set_lr(double lr) { config_.lr = lr; }

    const AdamWConfig& config() const { return config_; }
    std::uint64_t steps() const { return step_; }
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    const std::vector<Matrix>& first_moments() const { return m_; }
    const std::vector<Matrix>& second_moments() const { return v_; }
    void set_steps(std::uint64_t s) { step_ = s; }

private:
    ParameterSet& params_;
    AdamWConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

} // namespace lgdist::nn
