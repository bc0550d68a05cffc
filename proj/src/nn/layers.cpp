#include "lgdist/nn/layers.hpp"

#include "lgdist/error.hpp"
#include "lgdist/rng.hpp"

#include <cmath>

namespace lgdist::nn {

Var& ParameterSet::add(std::string name, Matrix init) {
    require(!index_.count(name), ErrorKind::InvalidArgument, "duplicate parameter name '" + name + "'");
    // Parameters live at 32-bit precision; compute happens in double.
    init = init.cast<float>().cast<double>();
    index_.emplace(name, items_.size());
    items_.push_back({std::move(name), Var(std::move(init), true), true});
    return items_.back().var;
}

Parameter& ParameterSet::at(const std::string& name) {
    const auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
    return items_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
    const auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
    return items_[it->second];
}

void ParameterSet::zero_grad() {
    for (auto& p : items_) {
        p.var.zero_grad();
    }
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) {
        n += static_cast<std::size_t>(p.var.value().size());
    }
    return n;
}

Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, double std, std::uint64_t key) {
    CounterRng rng(key);
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        double z;
        do {
            z = rng.normal();
        } while (std::abs(z) > 2.0);
        m.data()[k] = std * z;
    }
    return m;
}

std::uint64_t ForwardContext::next_key() { return derive_key(key, site++); }

Linear::Linear(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out, std::uint64_t key,
               bool zero)
    : W(params.add(name + ".weight", zero ? Matrix::Zero(in, out) : truncated_normal(in, out, 0.02, key))),
      b(params.add(name + ".bias", Matrix::Zero(1, out))) {}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, Eigen::Index width)
    : gain(params.add(name + ".gain", Matrix::Ones(1, width))), bias(params.add(name + ".bias", Matrix::Zero(1, width))) {}

Var activate(const Var& x, Activation act) {
    switch (act) {
    case Activation::Tanh:
        return tanh(x);
    case Activation::Gelu:
        return gelu(x);
    }
    return x;
}

SelfAttention::SelfAttention(ParameterSet& params, const std::string& name, Eigen::Index width, int heads_,
                             std::uint64_t key)
    : qkv(params, name + ".qkv", width, 3 * width, derive_key(key, 1)),
      proj(params, name + ".proj", width, width, derive_key(key, 2)),
      heads(heads_) {
    require(heads > 0 && width % heads == 0, ErrorKind::InvalidArgument,
            "attention heads (" + std::to_string(heads) + ") must divide width " + std::to_string(width));
}

Var SelfAttention::operator()(const Var& x, Eigen::Index tokens, std::span<const std::uint8_t> key_valid) const {
    return proj(attention(qkv(x), heads, tokens, key_valid));
}

Mlp::Mlp(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
         Activation act_, std::uint64_t key, bool zero_out)
    : fc1(params, name + ".fc1", in, hidden, derive_key(key, 1)),
      fc2(params, name + ".fc2", hidden, out, derive_key(key, 2), zero_out),
      act(act_) {}

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& name, Eigen::Index width, int heads,
                                   Activation act, std::uint64_t key)
    : ln1(params, name + ".ln1", width),
      attn(params, name + ".attn", width, heads, derive_key(key, 1)),
      ln2(params, name + ".ln2", width),
      mlp(params, name + ".mlp", width, 4 * width, width, act, derive_key(key, 2)) {}

Var TransformerBlock::operator()(const Var& x, Eigen::Index tokens, std::span<const std::uint8_t> key_valid,
                                 ForwardContext& ctx) const {
    auto drop = [&](const Var& h) { return ctx.training && ctx.dropout > 0.0 ? dropout(h, ctx.dropout, ctx.next_key()) : h; };
    Var h = add(x, drop(attn(ln1(x), tokens, key_valid)));
    return add(h, drop(mlp(ln2(h))));
}

AdaLNBlock::AdaLNBlock(ParameterSet& params, const std::string& name, Eigen::Index width_, int heads, std::uint64_t key)
    : attn(params, name + ".attn", width_, heads, derive_key(key, 1)),
      mlp(params, name + ".mlp", width_, 4 * width_, width_, Activation::Gelu, derive_key(key, 2)),
      modulation(params, name + ".adaln", width_, 6 * width_, derive_key(key, 3), true),
      width(width_) {}

Var AdaLNBlock::operator()(const Var& x, const Var& condition, Eigen::Index tokens,
                           std::span<const std::uint8_t> key_valid, ForwardContext& ctx) const {
    auto drop = [&](const Var& h) { return ctx.training && ctx.dropout > 0.0 ? dropout(h, ctx.dropout, ctx.next_key()) : h; };
    const Var mod = modulation(silu(condition));
    auto chunk = [&](int i) { return slice_cols(mod, i * width, width); };
    Var h = gate_residual(x, chunk(2), drop(attn(modulate(layer_norm(x, 1e-6), chunk(0), chunk(1), tokens), tokens, key_valid)),
                          tokens);
    return gate_residual(h, chunk(5), drop(mlp(modulate(layer_norm(h, 1e-6), chunk(3), chunk(4), tokens))), tokens);
}

RowVector sincos_2d_positional_encoding(double row, double col, Eigen::Index dim) {
    require(dim > 0 && dim % 4 == 0, ErrorKind::InvalidArgument,
            "positional encoding dimension must be divisible by 4, got " + std::to_string(dim));
    const Eigen::Index quarter = dim / 4;
    RowVector out(dim);
    for (Eigen::Index k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(quarter));
        out(k) = std::sin(row * omega);
        out(quarter + k) = std::cos(row * omega);
        out(2 * quarter + k) = std::sin(col * omega);
        out(3 * quarter + k) = std::cos(col * omega);
    }
    return out;
}

RowVector timestep_frequency_embedding(double t, Eigen::Index dim) {
    require(dim > 0 && dim % 2 == 0, ErrorKind::InvalidArgument, "timestep embedding dimension must be even");
    const Eigen::Index half = dim / 2;
    RowVector out(dim);
    for (Eigen::Index k = 0; k < half; ++k) {
        const double f = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        out(k) = std::cos(t * f);
        out(half + k) = std::sin(t * f);
    }
    return out;
}

} // namespace lgdist::nn
