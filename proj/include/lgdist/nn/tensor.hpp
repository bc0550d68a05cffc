#pragma once

#include "lgdist/matrix.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace lgdist::nn {

/// One value in the reverse-mode graph. Leaves hold parameters or inputs;
/// interior nodes keep their parents alive and know how to push their
/// gradient back to them.
struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
    template <typename Expr>
    void accumulate_expr(const Expr& g) {
        if (grad.size() == 0) {
            grad = g;
        } else {
            grad += g;
        }
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    /// Gradient after `backward`; zeros if nothing flowed here.
    Matrix grad() const;
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() { node_->grad.resize(0, 0); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const { return node_->value(0, 0); }

    const std::shared_ptr<Node>& node() const { return node_; }
    bool defined() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

/// Runs reverse accumulation from a 1 x 1 root.
void backward(const Var& root);

/// While alive, new ops record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
/// x * W + b with W stored in x out and b as a 1 x out row.
Var linear(const Var& x, const Var& W, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a + row broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a .* row broadcast over rows.
Var mul_row(const Var& a, const Var& row);

// Elementwise activations.
Var tanh(const Var& a);
Var gelu(const Var& a);
Var silu(const Var& a);

/// Row-wise normalization without affine parameters.
Var layer_norm(const Var& x, double eps = 1e-5);
/// Row-wise normalization followed by gain and bias rows.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Token-group ops. Rows are grouped as consecutive blocks of `tokens` rows,
// one block per sample; per-sample vectors have one row per block.
Var repeat_rows(const Var& per_sample, Eigen::Index tokens);
/// x .* (1 + scale) + shift with per-sample shift/scale.
Var modulate(const Var& x, const Var& shift, const Var& scale, Eigen::Index tokens);
/// x + gate .* h with a per-sample gate.
Var gate_residual(const Var& x, const Var& gate, const Var& h, Eigen::Index tokens);

/// Multi-head scaled dot-product attention over a fused N x 3w projection
/// [Q | K | V]. `key_valid` (length N, optional) excludes keys from every
/// softmax; each block must keep at least one valid key.
Var attention(const Var& qkv, int heads, Eigen::Index tokens, std::span<const std::uint8_t> key_valid = {});

Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var select_rows(const Var& a, std::span<const Eigen::Index> rows);
/// Every `stride`-th row starting at `offset`.
Var strided_rows(const Var& a, Eigen::Index stride, Eigen::Index offset = 0);

/// Inverted dropout with a counter-based mask keyed by `key`.
Var dropout(const Var& a, double p, std::uint64_t key);

/// sum_ij r_i c_j a_ij^2 / sum_ij r_i c_j. Empty weights mean all ones.
Var weighted_mean_square(const Var& a, std::span<const double> row_weights, std::span<const double> col_weights);
Var sum(const Var& a);

} // namespace lgdist::nn
