#include "lgdist/nn/optim.hpp"

#include "lgdist/error.hpp"

#include <cmath>

namespace lgdist::nn {

namespace {

void round_to_float(Matrix& m) { m = m.cast<float>().cast<double>(); }

} // namespace

AdamW::AdamW(ParameterSet& params, AdamWConfig config) : params_(params), config_(config) {
    require(config_.lr >= 0.0 && config_.eps > 0.0 && config_.weight_decay >= 0.0, ErrorKind::InvalidArgument,
            "invalid AdamW hyperparameters");
    for (const auto& p : params_.items()) {
        m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
        v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    }
}

void AdamW::step() {
    auto& items = params_.items();
    require(items.size() == m_.size(), ErrorKind::InvalidArgument, "parameter set changed after optimizer creation");
    for (const auto& p : items) {
        const Matrix& g = p.var.node()->grad;
        if (g.size() != 0 && !g.allFinite()) {
            fail(ErrorKind::NonFinite, "non-finite gradient in parameter '" + p.name + "' at optimizer step " +
                                           std::to_string(step_ + 1));
        }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& p = items[i];
        Matrix& value = p.var.mutable_value();
        const Matrix g = p.var.grad();
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
        round_to_float(m_[i]);
        round_to_float(v_[i]);
        const double decay = p.decay ? config_.weight_decay : 0.0;
        value *= 1.0 - config_.lr * decay;
        value.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
        round_to_float(value);
    }
}

} // namespace lgdist::nn
