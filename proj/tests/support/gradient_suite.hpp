#pragma once

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "lgdist/autoencoder.hpp"
#include "lgdist/diffusion/pipeline.hpp"
#include "lgdist/nn/layers.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lgdist::testing {

/// One finite-difference check: a named block or loss and the probe that
/// differentiates it.
struct GradientCase {
    std::string name;
    std::function<GradCheckResult()> run;
};

namespace suite_detail {

using namespace lgdist::nn;

// Projects an op output onto a fixed random direction so every output entry
// contributes to the scalar being differentiated.
inline Var probe(const Var& y, std::uint64_t seed) {
    return sum(mul(y, constant(random_matrix(y.rows(), y.cols(), seed))));
}

inline Var leaf(Eigen::Index r, Eigen::Index c, std::uint64_t seed) { return Var(random_matrix(r, c, seed), true); }

inline void jitter(ParameterSet& params, std::uint64_t seed, double scale) {
    std::uint64_t k = seed;
    for (auto& p : params.items()) {
        p.var.mutable_value() += random_matrix(p.var.rows(), p.var.cols(), ++k, scale);
    }
}

inline std::vector<Var> with_parameters(std::vector<Var> inputs, ParameterSet& params) {
    for (auto& p : params.items()) {
        inputs.push_back(p.var);
    }
    return inputs;
}

inline GenePanel ranked_panel(std::size_t g, std::size_t hsag) {
    std::vector<std::string> names;
    std::vector<double> scores;
    for (std::size_t i = 0; i < g; ++i) {
        names.push_back("g" + std::to_string(100 + i));
        scores.push_back(1.0 - 0.01 * static_cast<double>(i));
    }
    return GenePanel(names, scores, hsag);
}

/// Case on a fresh set of leaves; `f` builds the op from them.
inline GradientCase op_case(std::string name, std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes,
                            std::function<Var(const std::vector<Var>&)> f, std::uint64_t seed) {
    return {std::move(name), [shapes, f, seed] {
                std::vector<Var> in;
                std::uint64_t k = seed;
                for (const auto& [r, c] : shapes) {
                    in.push_back(leaf(r, c, ++k));
                }
                return grad_check([&] { return probe(f(in), seed * 7 + 1); }, in);
            }};
}

} // namespace suite_detail

/// Every differentiable block plus both end-to-end training losses, on tiny
/// shapes in double precision.
inline std::vector<GradientCase> gradient_suite() {
    using namespace suite_detail;
    using S = std::vector<std::pair<Eigen::Index, Eigen::Index>>;
    using V = const std::vector<Var>&;
    std::vector<GradientCase> out;
    const S two{{5, 4}, {5, 4}};
    out.push_back(op_case("matmul", {{5, 4}, {4, 3}}, [](V v) { return matmul(v[0], v[1]); }, 10));
    out.push_back(op_case("linear", {{5, 4}, {4, 3}, {1, 3}}, [](V v) { return linear(v[0], v[1], v[2]); }, 11));
    out.push_back(op_case("add", two, [](V v) { return add(v[0], v[1]); }, 12));
    out.push_back(op_case("sub", two, [](V v) { return sub(v[0], v[1]); }, 13));
    out.push_back(op_case("mul", two, [](V v) { return mul(v[0], v[1]); }, 14));
    out.push_back(op_case("scale", {{5, 4}}, [](V v) { return scale(v[0], -2.5); }, 15));
    out.push_back(op_case("add_row", {{5, 4}, {1, 4}}, [](V v) { return add_row(v[0], v[1]); }, 16));
    out.push_back(op_case("mul_row", {{5, 4}, {1, 4}}, [](V v) { return mul_row(v[0], v[1]); }, 17));
    out.push_back(op_case("tanh", {{5, 4}}, [](V v) { return tanh(v[0]); }, 18));
    out.push_back(op_case("gelu", {{5, 4}}, [](V v) { return gelu(v[0]); }, 19));
    out.push_back(op_case("silu", {{5, 4}}, [](V v) { return silu(v[0]); }, 20));
    out.push_back(op_case("layer_norm", {{5, 4}}, [](V v) { return layer_norm(v[0]); }, 21));
    out.push_back(op_case("layer_norm_affine", {{5, 4}, {1, 4}, {1, 4}},
                          [](V v) { return layer_norm(v[0], v[1], v[2]); }, 22));
    out.push_back(op_case("concat_cols", two, [](V v) { return concat_cols(v[0], v[1]); }, 23));
    out.push_back(op_case("slice_cols", {{5, 4}}, [](V v) { return slice_cols(v[0], 1, 2); }, 24));
    out.push_back(op_case("select_rows", {{5, 4}},
                          [](V v) { return select_rows(v[0], std::vector<Eigen::Index>{4, 0, 0, 2}); }, 25));
    out.push_back(op_case("dropout", {{5, 4}}, [](V v) { return dropout(v[0], 0.3, 77); }, 26));
    out.push_back({"weighted_mean_square", [] {
                       Var a = leaf(5, 4, 27);
                       const std::vector<double> rw{1, 0, 2, 1, 1};
                       const std::vector<double> cw{0.5, 1, 0, 1};
                       return grad_check([&] { return weighted_mean_square(a, rw, cw); }, {a});
                   }});
    out.push_back(op_case("repeat_rows", {{2, 4}}, [](V v) { return repeat_rows(v[0], 3); }, 40));
    out.push_back(op_case("modulate", {{6, 4}, {2, 4}, {2, 4}}, [](V v) { return modulate(v[0], v[1], v[2], 3); }, 41));
    out.push_back(op_case("gate_residual", {{6, 4}, {2, 4}, {6, 4}},
                          [](V v) { return gate_residual(v[0], v[1], v[2], 3); }, 42));
    out.push_back(op_case("strided_rows", {{6, 4}}, [](V v) { return strided_rows(v[0], 3); }, 43));
    out.push_back(op_case("attention_1head", {{8, 12}}, [](V v) { return attention(v[0], 1, 4); }, 51));
    out.push_back(op_case("attention_2head", {{8, 12}}, [](V v) { return attention(v[0], 2, 4); }, 52));
    out.push_back(op_case("attention_masked", {{8, 12}},
                          [](V v) {
                              static const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 0, 0, 1};
                              return attention(v[0], 2, 4, valid);
                          },
                          53));
    out.push_back({"transformer_block", [] {
                       ParameterSet params;
                       TransformerBlock block(params, "blk", 8, 2, Activation::Tanh, 7);
                       Var x = leaf(6, 8, 60);
                       const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1};
                       return grad_check(
                           [&] {
                               ForwardContext ctx{true, 0.1, 99, 0};
                               return probe(block(x, 3, valid, ctx), 61);
                           },
                           with_parameters({x}, params));
                   }});
    out.push_back({"adaln_block", [] {
                       ParameterSet params;
                       AdaLNBlock block(params, "ada", 8, 2, 3);
                       // Move away from the zero-init point so every path carries gradient.
                       jitter(params, 800, 0.1);
                       Var x = leaf(6, 8, 80);
                       Var c = leaf(2, 8, 81);
                       return grad_check(
                           [&] {
                               ForwardContext ctx;
                               return probe(block(x, c, 3, {}, ctx), 82);
                           },
                           with_parameters({x, c}, params));
                   }});
    out.push_back({"autoencoder_reconstruction_loss", [] {
                       AEConfig c;
                       c.g = 8;
                       c.d = 4;
                       c.encoder_layers = 2;
                       c.dropout = 0.0;
                       c.pe_scale = 0.5;
                       Autoencoder model(c, 30);
                       jitter(model.parameters(), 300, 0.3);
                       const GenePanel panel = ranked_panel(8, 3);
                       const Slide s = random_slide("s", 4, 4, 8, 31);
                       std::vector<Neighborhood> items;
                       for (const std::size_t spot : {0, 5, 9}) {
                           items.push_back(build_neighborhood(s, s.expression(), spot, 1));
                       }
                       const auto batch = stack_neighborhoods(items);
                       const std::vector<double> rows(batch.valid.begin(), batch.valid.end());
                       const auto f = [&] {
                           ForwardContext ctx;
                           const Var latent = model.encode_input(constant(model.positional_input(batch)), batch, ctx);
                           return weighted_reconstruction_loss(batch.X, model.decode(latent), panel, 0.7, rows).total;
                       };
                       return grad_check(f, with_parameters({}, model.parameters()), 1e-5, 8);
                   }});
    out.push_back({"diffusion_noise_loss", [] {
                       DiTConfig c;
                       c.d = 8;
                       c.width = 16;
                       c.layers = 2;
                       c.heads = 2;
                       c.time_dim = 8;
                       c.T = 100;
                       c.sampling_steps = 10;
                       DiT model(c, 10);
                       jitter(model.parameters(), 100, 0.3);
                       const auto schedule = c.schedule();
                       LatentTrainingSet data;
                       data.tokens = 7;
                       data.x0 = random_matrix(3, 8, 11);
                       data.condition = random_matrix(21, 8, 12);
                       for (Eigen::Index b = 0; b < 3; ++b) {
                           data.condition.row(b * 7).setZero();
                       }
                       data.valid.assign(21, 1);
                       data.valid[5] = 0;
                       const std::vector<std::size_t> samples = {0, 1, 2};
                       const std::vector<int> t = {3, 50, 99};
                       const Matrix eps = random_matrix(3, 8, 13);
                       return grad_check([&] { return diffusion_loss(model, schedule, data, samples, t, eps); },
                                         with_parameters({}, model.parameters()), 1e-5, 6);
                   }});
    return out;
}

} // namespace lgdist::testing
