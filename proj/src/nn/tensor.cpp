#include "lgdist/nn/tensor.hpp"

#include "lgdist/error.hpp"
#include "lgdist/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_set>

namespace lgdist::nn {

namespace {

thread_local bool g_grad_enabled = true;

using Backward = std::function<void(Node&)>;

Var make(Matrix value, std::initializer_list<const Var*> inputs, Backward fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        for (const Var* v : inputs) {
            if (v->requires_grad()) {
                node->requires_grad = true;
            }
        }
        if (node->requires_grad) {
            for (const Var* v : inputs) {
                node->parents.push_back(v->node());
            }
            node->backward = std::move(fn);
        }
    }
    return Var(std::move(node));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeMismatch,
            std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " and " +
                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " differ");
}

void check_groups(const Var& x, const Var& per_sample, Eigen::Index tokens, const char* op) {
    require(tokens > 0 && x.rows() == per_sample.rows() * tokens && x.cols() == per_sample.cols(), ErrorKind::ShapeMismatch,
            std::string(op) + ": per-sample rows do not match token groups");
}

// Per-sample matrix expanded to one row per token.
Matrix repeat(const Matrix& m, Eigen::Index tokens) {
    Matrix out(m.rows() * tokens, m.cols());
    for (Eigen::Index b = 0; b < m.rows(); ++b) {
        out.middleRows(b * tokens, tokens).rowwise() = m.row(b);
    }
    return out;
}

Matrix group_sum(const Matrix& m, Eigen::Index tokens) {
    const Eigen::Index B = m.rows() / tokens;
    Matrix out(B, m.cols());
    for (Eigen::Index b = 0; b < B; ++b) {
        out.row(b) = m.middleRows(b * tokens, tokens).colwise().sum();
    }
    return out;
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)

} // namespace

void Node::accumulate(const Matrix& g) { accumulate_expr(g); }

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
    if (node_->grad.size() == 0) {
        return Matrix::Zero(rows(), cols());
    }
    return node_->grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& root) {
    require(root.rows() == 1 && root.cols() == 1, ErrorKind::ShapeMismatch, "backward expects a scalar root");
    if (!root.requires_grad()) {
        return;
    }
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) {
            n->backward(*n);
        }
    }
    // Interior gradients are no longer needed; leaves keep theirs.
    for (Node* n : order) {
        if (n->backward) {
            n->grad.resize(0, 0);
        }
    }
}

Var constant(Matrix value) { return Var(std::move(value), false); }

Var matmul(const Var& a, const Var& b) {
    require(a.cols() == b.rows(), ErrorKind::ShapeMismatch, "matmul: inner dimensions differ");
    Matrix out = a.value() * b.value();
    return make(std::move(out), {&a, &b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            pa.accumulate_expr(self.grad * pb.value.transpose());
        }
        if (pb.requires_grad) {
            pb.accumulate_expr(pa.value.transpose() * self.grad);
        }
    });
}

Var linear(const Var& x, const Var& W, const Var& b) {
    require(x.cols() == W.rows(), ErrorKind::ShapeMismatch,
            "linear: input width " + std::to_string(x.cols()) + " does not match weight rows " + std::to_string(W.rows()));
    require(b.rows() == 1 && b.cols() == W.cols(), ErrorKind::ShapeMismatch, "linear: bias shape mismatch");
    Matrix out(x.rows(), W.cols());
    out.noalias() = x.value() * W.value();
    out.rowwise() += b.value().row(0);
    return make(std::move(out), {&x, &W, &b}, [](Node& self) {
        Node& px = parent(self, 0);
        Node& pw = parent(self, 1);
        Node& pb = parent(self, 2);
        if (px.requires_grad) {
            px.accumulate_expr(self.grad * pw.value.transpose());
        }
        if (pw.requires_grad) {
            pw.accumulate_expr(px.value.transpose() * self.grad);
        }
        if (pb.requires_grad) {
            pb.accumulate_expr(self.grad.colwise().sum());
        }
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make(a.value() + b.value(), {&a, &b}, [](Node& self) {
        for (std::size_t i = 0; i < 2; ++i) {
            if (parent(self, i).requires_grad) {
                parent(self, i).accumulate(self.grad);
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {&a, &b}, [](Node& self) {
        if (parent(self, 0).requires_grad) {
            parent(self, 0).accumulate(self.grad);
        }
        if (parent(self, 1).requires_grad) {
            parent(self, 1).accumulate_expr(-self.grad);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {&a, &b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            pa.accumulate_expr(self.grad.cwiseProduct(pb.value));
        }
        if (pb.requires_grad) {
            pb.accumulate_expr(self.grad.cwiseProduct(pa.value));
        }
    });
}

Var scale(const Var& a, double s) {
    return make(a.value() * s, {&a}, [s](Node& self) { parent(self, 0).accumulate_expr(self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::ShapeMismatch, "add_row: row width mismatch");
    Matrix out = a.value();
    out.rowwise() += row.value().row(0);
    return make(std::move(out), {&a, &row}, [](Node& self) {
        if (parent(self, 0).requires_grad) {
            parent(self, 0).accumulate(self.grad);
        }
        if (parent(self, 1).requires_grad) {
            parent(self, 1).accumulate_expr(self.grad.colwise().sum());
        }
    });
}

Var mul_row(const Var& a, const Var& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::ShapeMismatch, "mul_row: row width mismatch");
    Matrix out = a.value().array().rowwise() * row.value().row(0).array();
    return make(std::move(out), {&a, &row}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pr = parent(self, 1);
        if (pa.requires_grad) {
            pa.accumulate_expr((self.grad.array().rowwise() * pr.value.row(0).array()).matrix());
        }
        if (pr.requires_grad) {
            pr.accumulate_expr(self.grad.cwiseProduct(pa.value).colwise().sum());
        }
    });
}

Var tanh(const Var& a) {
    Matrix out = a.value().array().tanh().matrix();
    return make(std::move(out), {&a}, [](Node& self) {
        parent(self, 0).accumulate_expr((self.grad.array() * (1.0 - self.value.array().square())).matrix());
    });
}

Var gelu(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double v = x.data()[k];
        out.data()[k] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
    }
    return make(std::move(out), {&a}, [](Node& self) {
        Node& p = parent(self, 0);
        Matrix g(p.value.rows(), p.value.cols());
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            const double v = p.value.data()[k];
            const double u = kGeluC * (v + 0.044715 * v * v * v);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
            g.data()[k] = self.grad.data()[k] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
        }
        p.accumulate(g);
    });
}

Var silu(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double v = x.data()[k];
        out.data()[k] = v / (1.0 + std::exp(-v));
    }
    return make(std::move(out), {&a}, [](Node& self) {
        Node& p = parent(self, 0);
        Matrix g(p.value.rows(), p.value.cols());
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            const double v = p.value.data()[k];
            const double s = 1.0 / (1.0 + std::exp(-v));
            g.data()[k] = self.grad.data()[k] * s * (1.0 + v * (1.0 - s));
        }
        p.accumulate(g);
    });
}

Var layer_norm(const Var& x, double eps) {
    const Matrix& v = x.value();
    const auto w = static_cast<double>(v.cols());
    Matrix out(v.rows(), v.cols());
    Eigen::VectorXd inv_std(v.rows());
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double mean = v.row(i).sum() / w;
        const double var = (v.row(i).array() - mean).square().sum() / w;
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        out.row(i) = (v.row(i).array() - mean) * inv_std(i);
    }
    return make(std::move(out), {&x}, [inv_std, w](Node& self) {
        const Matrix& xhat = self.value;
        const Matrix& g = self.grad;
        Matrix gx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double mg = g.row(i).sum() / w;
            const double mgx = g.row(i).dot(xhat.row(i)) / w;
            gx.row(i) = inv_std(i) * (g.row(i).array() - mg - xhat.row(i).array() * mgx);
        }
        parent(self, 0).accumulate(gx);
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    return add_row(mul_row(layer_norm(x, eps), gain), bias);
}

Var repeat_rows(const Var& per_sample, Eigen::Index tokens) {
    require(tokens > 0, ErrorKind::InvalidArgument, "repeat_rows: tokens must be positive");
    return make(repeat(per_sample.value(), tokens), {&per_sample},
                [tokens](Node& self) { parent(self, 0).accumulate(group_sum(self.grad, tokens)); });
}

Var modulate(const Var& x, const Var& shift, const Var& scale_, Eigen::Index tokens) {
    check_groups(x, shift, tokens, "modulate");
    check_groups(x, scale_, tokens, "modulate");
    const Matrix sc = repeat(scale_.value(), tokens);
    Matrix out = x.value().array() * (1.0 + sc.array()) + repeat(shift.value(), tokens).array();
    return make(std::move(out), {&x, &shift, &scale_}, [tokens](Node& self) {
        Node& px = parent(self, 0);
        Node& ps = parent(self, 1);
        Node& pc = parent(self, 2);
        if (px.requires_grad) {
            px.accumulate_expr((self.grad.array() * (1.0 + repeat(pc.value, tokens).array())).matrix());
        }
        if (ps.requires_grad) {
            ps.accumulate(group_sum(self.grad, tokens));
        }
        if (pc.requires_grad) {
            pc.accumulate(group_sum(self.grad.cwiseProduct(px.value), tokens));
        }
    });
}

Var gate_residual(const Var& x, const Var& gate, const Var& h, Eigen::Index tokens) {
    check_same_shape(x, h, "gate_residual");
    check_groups(x, gate, tokens, "gate_residual");
    Matrix out = x.value() + repeat(gate.value(), tokens).cwiseProduct(h.value());
    return make(std::move(out), {&x, &gate, &h}, [tokens](Node& self) {
        Node& px = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& ph = parent(self, 2);
        if (px.requires_grad) {
            px.accumulate(self.grad);
        }
        if (pg.requires_grad) {
            pg.accumulate(group_sum(self.grad.cwiseProduct(ph.value), tokens));
        }
        if (ph.requires_grad) {
            ph.accumulate_expr(repeat(pg.value, tokens).cwiseProduct(self.grad));
        }
    });
}

Var attention(const Var& qkv, int heads, Eigen::Index tokens, std::span<const std::uint8_t> key_valid) {
    require(qkv.cols() % 3 == 0, ErrorKind::ShapeMismatch, "attention: fused projection width must be 3w");
    const Eigen::Index w = qkv.cols() / 3;
    require(heads > 0 && w % heads == 0, ErrorKind::ShapeMismatch, "attention: heads must divide the width");
    require(tokens > 0 && qkv.rows() % tokens == 0, ErrorKind::ShapeMismatch, "attention: rows must be whole token groups");
    require(key_valid.empty() || key_valid.size() == static_cast<std::size_t>(qkv.rows()), ErrorKind::ShapeMismatch,
            "attention: key mask length mismatch");
    const Eigen::Index B = qkv.rows() / tokens;
    const Eigen::Index dh = w / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    const Matrix& in = qkv.value();

    // Softmax probabilities per (sample, head), stacked as (B * heads * T) x T.
    auto probs = std::make_shared<Matrix>(B * heads * tokens, tokens);
    Matrix out(qkv.rows(), w);
    Matrix scores(tokens, tokens);
    for (Eigen::Index b = 0; b < B; ++b) {
        const Eigen::Index r0 = b * tokens;
        bool any_valid = key_valid.empty();
        for (Eigen::Index t = 0; t < tokens && !any_valid; ++t) {
            any_valid = key_valid[static_cast<std::size_t>(r0 + t)] != 0;
        }
        require(any_valid, ErrorKind::InvalidArgument, "attention: a token group has no valid keys");
        for (int h = 0; h < heads; ++h) {
            const auto Q = in.block(r0, h * dh, tokens, dh);
            const auto K = in.block(r0, w + h * dh, tokens, dh);
            const auto V = in.block(r0, 2 * w + h * dh, tokens, dh);
            scores.noalias() = Q * K.transpose();
            scores *= inv;
            if (!key_valid.empty()) {
                for (Eigen::Index t = 0; t < tokens; ++t) {
                    if (!key_valid[static_cast<std::size_t>(r0 + t)]) {
                        scores.col(t).setConstant(-std::numeric_limits<double>::infinity());
                    }
                }
            }
            auto P = probs->middleRows((b * heads + h) * tokens, tokens);
            for (Eigen::Index i = 0; i < tokens; ++i) {
                const double m = scores.row(i).maxCoeff();
                P.row(i) = (scores.row(i).array() - m).exp();
                P.row(i) /= P.row(i).sum();
            }
            out.block(r0, h * dh, tokens, dh).noalias() = P * V;
        }
    }
    return make(std::move(out), {&qkv}, [probs, heads, tokens, w, dh, inv, B](Node& self) {
        Node& p = parent(self, 0);
        const Matrix& in = p.value;
        Matrix g = Matrix::Zero(in.rows(), in.cols());
        Matrix dP(tokens, tokens);
        Matrix dS(tokens, tokens);
        for (Eigen::Index b = 0; b < B; ++b) {
            const Eigen::Index r0 = b * tokens;
            for (int h = 0; h < heads; ++h) {
                const auto Q = in.block(r0, h * dh, tokens, dh);
                const auto K = in.block(r0, w + h * dh, tokens, dh);
                const auto V = in.block(r0, 2 * w + h * dh, tokens, dh);
                const auto P = probs->middleRows((b * heads + h) * tokens, tokens);
                const auto dO = self.grad.block(r0, h * dh, tokens, dh);
                dP.noalias() = dO * V.transpose();
                g.block(r0, 2 * w + h * dh, tokens, dh).noalias() += P.transpose() * dO;
                for (Eigen::Index i = 0; i < tokens; ++i) {
                    const double s = dP.row(i).dot(P.row(i));
                    dS.row(i) = P.row(i).array() * (dP.row(i).array() - s);
                }
                dS *= inv;
                g.block(r0, h * dh, tokens, dh).noalias() += dS * K;
                g.block(r0, w + h * dh, tokens, dh).noalias() += dS.transpose() * Q;
            }
        }
        p.accumulate(g);
    });
}

Var concat_cols(const Var& a, const Var& b) {
    require(a.rows() == b.rows(), ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Eigen::Index ca = a.cols();
    const Eigen::Index cb = b.cols();
    return make(std::move(out), {&a, &b}, [ca, cb](Node& self) {
        if (parent(self, 0).requires_grad) {
            parent(self, 0).accumulate_expr(self.grad.leftCols(ca));
        }
        if (parent(self, 1).requires_grad) {
            parent(self, 1).accumulate_expr(self.grad.rightCols(cb));
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorKind::OutOfRange, "slice_cols: range out of bounds");
    return make(a.value().middleCols(start, count), {&a}, [start, count](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(start, count) = self.grad;
        p.accumulate(g);
    });
}

Var select_rows(const Var& a, std::span<const Eigen::Index> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < a.rows(), ErrorKind::OutOfRange, "select_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    return make(std::move(out), {&a}, [idx = std::move(idx)](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
        }
        p.accumulate(g);
    });
}

Var strided_rows(const Var& a, Eigen::Index stride, Eigen::Index offset) {
    require(stride > 0 && offset >= 0 && offset < stride, ErrorKind::InvalidArgument, "strided_rows: bad stride/offset");
    std::vector<Eigen::Index> idx;
    for (Eigen::Index r = offset; r < a.rows(); r += stride) {
        idx.push_back(r);
    }
    return select_rows(a, idx);
}

Var dropout(const Var& a, double p, std::uint64_t key) {
    require(p >= 0.0 && p < 1.0, ErrorKind::InvalidArgument, "dropout probability must be in [0, 1)");
    if (p == 0.0) {
        return a;
    }
    CounterRng rng(key);
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix mask(a.rows(), a.cols());
    for (Eigen::Index k = 0; k < mask.size(); ++k) {
        mask.data()[k] = rng.uniform() < p ? 0.0 : keep_scale;
    }
    Matrix out = a.value().cwiseProduct(mask);
    return make(std::move(out), {&a}, [mask = std::move(mask)](Node& self) {
        parent(self, 0).accumulate_expr(self.grad.cwiseProduct(mask));
    });
}

Var weighted_mean_square(const Var& a, std::span<const double> row_weights, std::span<const double> col_weights) {
    Eigen::VectorXd r = row_weights.empty() ? Eigen::VectorXd::Ones(a.rows())
                                            : Eigen::Map<const Eigen::VectorXd>(row_weights.data(), a.rows()).eval();
    Eigen::RowVectorXd c = col_weights.empty() ? Eigen::RowVectorXd::Ones(a.cols())
                                               : Eigen::Map<const Eigen::RowVectorXd>(col_weights.data(), a.cols()).eval();
    require(row_weights.empty() || static_cast<Eigen::Index>(row_weights.size()) == a.rows(), ErrorKind::ShapeMismatch,
            "weighted_mean_square: row weight length mismatch");
    require(col_weights.empty() || static_cast<Eigen::Index>(col_weights.size()) == a.cols(), ErrorKind::ShapeMismatch,
            "weighted_mean_square: column weight length mismatch");
    const double total = r.sum() * c.sum();
    require(total > 0.0, ErrorKind::InvalidArgument, "weighted_mean_square: weights sum to zero");
    Matrix W = r * c / total;
    Matrix out(1, 1);
    out(0, 0) = (a.value().array().square() * W.array()).sum();
    return make(std::move(out), {&a}, [W = std::move(W)](Node& self) {
        Node& p = parent(self, 0);
        p.accumulate_expr((2.0 * self.grad(0, 0)) * p.value.cwiseProduct(W));
    });
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make(std::move(out), {&a}, [](Node& self) {
        Node& p = parent(self, 0);
        p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
    });
}

} // namespace lgdist::nn
