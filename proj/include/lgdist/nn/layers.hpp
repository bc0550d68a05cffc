#pragma once

#include "lgdist/nn/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lgdist::nn {

struct Parameter {
    std::string name;
    Var var;
    /// Excluded from weight decay when false (currently unused by defaults).
    bool decay = true;
};

/// Ordered, named parameter collection. Order is registration order and is
/// what checkpoints and the optimizer iterate over.
class ParameterSet {
public:
    Var& add(std::string name, Matrix init);
    std::vector<Parameter>& items() { return items_; }
    const std::vector<Parameter>& items() const { return items_; }
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    void zero_grad();
    std::size_t scalar_count() const;

private:
    std::vector<Parameter> items_;
    std::map<std::string, std::size_t> index_;
};

/// Truncated normal (cut at two standard deviations) from a counter stream.
Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double std, std::uint64_t key);

/// Deterministic dropout keys: a training step supplies a base key and every
/// dropout site derives its own stream from it.
struct ForwardContext {
    bool training = false;
    double dropout = 0.0;
    std::uint64_t key = 0;
    std::uint64_t site = 0;

    std::uint64_t next_key();
};

struct Linear {
    Var W;
    Var b;

    Linear() = default;
    /// Truncated-normal weights (std 0.02) unless `zero` is set; zero bias.
    Linear(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out, std::uint64_t key,
           bool zero = false);
    Var operator()(const Var& x) const { return linear(x, W, b); }
};

struct LayerNorm {
    Var gain;
    Var bias;

    LayerNorm() = default;
    LayerNorm(ParameterSet& params, const std::string& name, Eigen::Index width);
    Var operator()(const Var& x) const { return layer_norm(x, gain, bias); }
};

enum class Activation { Tanh, Gelu };

Var activate(const Var& x, Activation act);

/// Self-attention sublayer: fused QKV projection, attention, output projection.
struct SelfAttention {
    Linear qkv;
    Linear proj;
    int heads = 1;

    SelfAttention() = default;
    SelfAttention(ParameterSet& params, const std::string& name, Eigen::Index width, int heads, std::uint64_t key);
    Var operator()(const Var& x, Eigen::Index tokens, std::span<const std::uint8_t> key_valid) const;
};

struct Mlp {
    Linear fc1;
    Linear fc2;
    Activation act = Activation::Tanh;

    Mlp() = default;
    Mlp(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
        Activation act, std::uint64_t key, bool zero_out = false);
    Var operator()(const Var& x) const { return fc2(activate(fc1(x), act)); }
};

/// Pre-norm transformer block: x + attn(LN(x)), then x + mlp(LN(x)).
struct TransformerBlock {
    LayerNorm ln1;
    SelfAttention attn;
    LayerNorm ln2;
    Mlp mlp;

    TransformerBlock() = default;
    TransformerBlock(ParameterSet& params, const std::string& name, Eigen::Index width, int heads, Activation act,
                     std::uint64_t key);
    Var operator()(const Var& x, Eigen::Index tokens, std::span<const std::uint8_t> key_valid, ForwardContext& ctx) const;
};

/// Transformer block whose normalization is modulated by a per-sample
/// condition vector. The modulation projection starts at zero, so a fresh
/// block is the identity map.
struct AdaLNBlock {
    SelfAttention attn;
    Mlp mlp;
    Linear modulation;
    Eigen::Index width = 0;

    AdaLNBlock() = default;
    AdaLNBlock(ParameterSet& params, const std::string& name, Eigen::Index width, int heads, std::uint64_t key);
    Var operator()(const Var& x, const Var& condition, Eigen::Index tokens, std::span<const std::uint8_t> key_valid,
                   ForwardContext& ctx) const;
};

/// 2D sine/cosine encoding: the first half encodes `row`, the second `col`.
/// Each half is [sin(p w_k) ..., cos(p w_k) ...] with w_k = 10000^(-k / (dim/4)).
RowVector sincos_2d_positional_encoding(double row, double col, Eigen::Index dim);

/// Sinusoidal embedding of a diffusion timestep: [cos(t f_k) ..., sin(t f_k) ...].
RowVector timestep_frequency_embedding(double t, Eigen::Index dim);

} // namespace lgdist::nn
