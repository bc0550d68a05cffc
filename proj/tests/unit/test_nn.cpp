#include "doctest.h"

#include "fixtures.hpp"
#include "gradient_suite.hpp"
#include "lgdist/error.hpp"
#include "lgdist/dataset.hpp"
#include "lgdist/nn/checkpoint.hpp"
#include "lgdist/nn/layers.hpp"
#include "lgdist/nn/optim.hpp"

#include <cmath>

using namespace lgdist;
using namespace lgdist::nn;
using lgdist::testing::random_matrix;

namespace {

Var leaf(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double s = 1.0) { return Var(random_matrix(r, c, seed, s), true); }

constexpr double kTol = 1e-4;

} // namespace

TEST_CASE("dense identity arithmetic") {
    Var x = constant((Matrix(1, 2) << 1, 2).finished());
    Var W = constant(Matrix::Identity(2, 2));
    Var b = constant(Matrix::Ones(1, 2));
    const Matrix y = linear(x, W, b).value();
    CHECK(y(0, 0) == 2.0);
    CHECK(y(0, 1) == 3.0);
    CHECK_THROWS_AS(linear(x, constant(Matrix::Identity(3, 3)), b), Error);
}

TEST_CASE("layer norm of a constant row is zero") {
    Var x = constant(Matrix::Constant(1, 8, 3.0));
    const Matrix y = layer_norm(x, constant(Matrix::Ones(1, 8)), constant(Matrix::Zero(1, 8))).value();
    CHECK(y.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("gradient suite: blocks and both training losses") {
    for (const auto& c : lgdist::testing::gradient_suite()) {
        INFO(c.name);
        const auto r = c.run();
        CHECK(r.checked > 0);
        CHECK(r.relative_error < kTol);
    }
}

TEST_CASE("attention rejects fully masked groups and bad head counts") {
    const Eigen::Index T = 4;
    Var qkv = leaf(8, 12, 50);
    const std::vector<std::uint8_t> none{0, 0, 0, 0, 1, 1, 1, 1};
    CHECK_THROWS_AS(attention(qkv, 2, T, none), Error);
    CHECK_THROWS_AS(attention(qkv, 3, T), Error);
}

TEST_CASE("single-token attention returns the value projection") {
    Var qkv = constant(random_matrix(1, 9, 3));
    const Matrix y = attention(qkv, 1, 1).value();
    CHECK((y - qkv.value().rightCols(3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention is permutation-equivariant without positions") {
    ParameterSet params;
    SelfAttention attn(params, "a", 8, 1, 9);
    const Matrix x = random_matrix(5, 8, 4);
    const std::vector<Eigen::Index> perm{3, 0, 4, 1, 2};
    Matrix px(5, 8);
    for (Eigen::Index i = 0; i < 5; ++i) {
        px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    }
    NoGradGuard guard;
    const Matrix y = attn(constant(x), 5, {}).value();
    const Matrix py = attn(constant(px), 5, {}).value();
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK((py.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("adaLN-Zero block is the identity at initialization") {
    ParameterSet params;
    AdaLNBlock block(params, "ada", 8, 2, 3);
    const Matrix x = random_matrix(6, 8, 70);
    ForwardContext ctx;
    for (const Matrix& c : {Matrix(Matrix::Zero(2, 8)), random_matrix(2, 8, 71)}) {
        const Matrix y = block(constant(x), constant(c), 3, {}, ctx).value();
        CHECK(y == x);
    }
}

TEST_CASE("sincos positional encoding") {
    const RowVector z = sincos_2d_positional_encoding(0, 0, 16);
    for (Eigen::Index h = 0; h < 2; ++h) {
        for (Eigen::Index k = 0; k < 4; ++k) {
            CHECK(z(h * 8 + k) == 0.0);
            CHECK(z(h * 8 + 4 + k) == 1.0);
        }
    }
    const RowVector a = sincos_2d_positional_encoding(3, 5, 16);
    const RowVector b = sincos_2d_positional_encoding(3, 11, 16);
    CHECK(a.head(8) == b.head(8));
    CHECK(a.tail(8) != b.tail(8));

    // Direct evaluation for dim = 8: frequencies 1 and 10000^(-1/2).
    const RowVector e = sincos_2d_positional_encoding(1, 0, 8);
    const double w1 = 1.0 / std::sqrt(10000.0);
    const double expected[] = {std::sin(1.0), std::sin(w1), std::cos(1.0), std::cos(w1), 0.0, 0.0, 1.0, 1.0};
    for (int k = 0; k < 8; ++k) {
        CHECK(e(k) == doctest::Approx(expected[k]).epsilon(1e-15));
    }
    CHECK_THROWS_AS(sincos_2d_positional_encoding(0, 0, 6), Error);
}

TEST_CASE("AdamW update rules") {
    SUBCASE("zero gradient without decay leaves parameters unchanged") {
        ParameterSet params;
        Var& p = params.add("p", random_matrix(2, 2, 1));
        const Matrix before = p.value();
        p.node()->grad = Matrix::Zero(2, 2);
        AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.0});
        opt.step();
        CHECK(p.value() == before);
    }
    SUBCASE("first step on a scalar") {
        ParameterSet params;
        Var& p = params.add("p", Matrix::Ones(1, 1));
        p.node()->grad = Matrix::Ones(1, 1);
        AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.0});
        opt.step();
        CHECK(p.scalar() == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-7));
    }
    SUBCASE("decoupled decay with zero gradient") {
        ParameterSet params;
        Var& p = params.add("p", Matrix::Constant(1, 1, 2.0));
        p.node()->grad = Matrix::Zero(1, 1);
        AdamW opt(params, {0.1, 0.9, 0.999, 1e-8, 0.1});
        opt.step();
        CHECK(p.scalar() == doctest::Approx(2.0 * (1.0 - 0.01)).epsilon(1e-7));
    }
    SUBCASE("non-finite gradient aborts") {
        ParameterSet params;
        Var& p = params.add("p", Matrix::Ones(1, 1));
        p.node()->grad = Matrix::Constant(1, 1, std::nan(""));
        AdamW opt(params, {});
        try {
            opt.step();
            FAIL("expected non-finite error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NonFinite);
        }
    }
}

TEST_CASE("checkpoint round trip restores training bit-exactly") {
    const auto dir = lgdist::testing::scratch_dir("ckpt");
    auto build = [](ParameterSet& params) { return Linear(params, "lin", 3, 2, 5); };
    auto loss_of = [](const Linear& lin, std::uint64_t step) {
        return weighted_mean_square(sub(lin(constant(random_matrix(4, 3, step))), constant(random_matrix(4, 2, step + 100))), {}, {});
    };
    ParameterSet a;
    Linear la = build(a);
    AdamW oa(a, {1e-2, 0.9, 0.999, 1e-8, 0.01});
    for (std::uint64_t s = 0; s < 3; ++s) {
        a.zero_grad();
        backward(loss_of(la, s));
        oa.step();
    }
    Checkpoint ck;
    ck.kind = "test";
    ck.config = {{"in", 3}};
    export_parameters(a, ck);
    export_optimizer(a, oa, ck);
    save_checkpoint(dir / "x.ckpt", ck);

    ParameterSet b;
    Linear lb = build(b);
    AdamW ob(b, {1e-2, 0.9, 0.999, 1e-8, 0.01});
    const Checkpoint loaded = load_checkpoint(dir / "x.ckpt");
    CHECK(loaded.config == ck.config);
    import_parameters(loaded, b);
    import_optimizer(loaded, b, ob);
    for (std::uint64_t s = 3; s < 6; ++s) {
        a.zero_grad();
        b.zero_grad();
        backward(loss_of(la, s));
        backward(loss_of(lb, s));
        oa.step();
        ob.step();
    }
    CHECK(la.W.value() == lb.W.value());
    CHECK(la.b.value() == lb.b.value());

    lgdist::write_text(dir / "bad.ckpt", "not a checkpoint at all");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
}

TEST_CASE("dropout masks are keyed and deterministic") {
    Var x = constant(Matrix::Ones(10, 10));
    CHECK(dropout(x, 0.5, 1).value() == dropout(x, 0.5, 1).value());
    CHECK(dropout(x, 0.5, 1).value() != dropout(x, 0.5, 2).value());
}
