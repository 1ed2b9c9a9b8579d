#include "discover/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "discover/error.hpp"

namespace discover::ag {

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

namespace {

using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

Var make(Matrix value, std::vector<NodePtr> parents, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(fn);
    }
    return Var(std::move(node));
}

Node& parent(Node& self, std::size_t k) { return *self.parents[k]; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InputError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

template <typename F, typename D>
Var unary(const Var& a, F&& f, D&& dfdx) {
    Matrix out = a.value().unaryExpr(f);
    return make(std::move(out), {a.node()}, [dfdx](Node& self) {
        Node& x = parent(self, 0);
        if (!x.requires_grad) return;
        Matrix g = self.grad.array() * dfdx(x.value.array(), self.value.array());
        x.accumulate(g);
    });
}

}  // namespace

Var constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var constant_scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var detach(const Var& v) { return constant(v.value()); }

Parameter::Parameter(std::string name, Matrix init)
    : name_(std::move(name)), node_(std::make_shared<Node>()) {
    node_->value = std::move(init);
    node_->requires_grad = true;
}

Parameter::Parameter(const Parameter& other) : Parameter(other.name_, other.node_ ? other.node_->value : Matrix{}) {}

Parameter& Parameter::operator=(const Parameter& other) {
    if (this != &other) *this = Parameter(other);
    return *this;
}

void Parameter::zero_grad() { node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols()); }

void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) throw InputError("backward: root must be a scalar");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return make(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
        if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
        if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return make(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
        if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
        if (parent(self, 1).requires_grad) parent(self, 1).accumulate(-self.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    return make(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        Node& y = parent(self, 1);
        if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
        if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a, b, "div");
    return make(a.value().cwiseQuotient(b.value()), {a.node(), b.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        Node& y = parent(self, 1);
        if (x.requires_grad) x.accumulate(self.grad.cwiseQuotient(y.value));
        if (y.requires_grad) {
            Matrix g = -(self.grad.array() * self.value.array() / y.value.array());
            y.accumulate(g);
        }
    });
}

Var affine(const Var& a, double scale, double shift) {
    Matrix out = (a.value().array() * scale + shift).matrix();
    return make(std::move(out), {a.node()}, [scale](Node& self) {
        if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad * scale);
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw InputError("matmul: inner dimension mismatch " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    return make(a.value() * b.value(), {a.node(), b.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        Node& y = parent(self, 1);
        if (x.requires_grad) x.accumulate(self.grad * y.value.transpose());
        if (y.requires_grad) y.accumulate(x.value.transpose() * self.grad);
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw InputError("add_row: expected 1 x cols row");
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make(std::move(out), {a.node(), row.node()}, [](Node& self) {
        if (parent(self, 0).requires_grad) parent(self, 0).accumulate(self.grad);
        if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad.colwise().sum());
    });
}

Var mul_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw InputError("mul_row: expected 1 x cols row");
    Matrix out = a.value().array().rowwise() * row.value().row(0).array();
    return make(std::move(out), {a.node(), row.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        Node& r = parent(self, 1);
        if (x.requires_grad) {
            Matrix g = self.grad.array().rowwise() * r.value.row(0).array();
            x.accumulate(g);
        }
        if (r.requires_grad) r.accumulate(self.grad.cwiseProduct(x.value).colwise().sum());
    });
}

Var mul_col(const Var& a, const Var& col) {
    if (col.cols() != 1 || col.rows() != a.rows()) throw InputError("mul_col: expected rows x 1 column");
    Matrix out = a.value().array().colwise() * col.value().col(0).array();
    return make(std::move(out), {a.node(), col.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        Node& c = parent(self, 1);
        if (x.requires_grad) {
            Matrix g = self.grad.array().colwise() * c.value.col(0).array();
            x.accumulate(g);
        }
        if (c.requires_grad) c.accumulate(self.grad.cwiseProduct(x.value).rowwise().sum());
    });
}

Var tanh(const Var& a) {
    return unary(
        a, [](double v) { return std::tanh(v); },
        [](const auto&, const auto& y) { return 1.0 - y.square(); });
}

Var sigmoid(const Var& a) {
    return unary(
        a, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](const auto&, const auto& y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
    return unary(
        a, [](double v) { return std::exp(v); }, [](const auto&, const auto& y) { return y; });
}

Var log(const Var& a) {
    return unary(
        a, [](double v) { return std::log(v); }, [](const auto& x, const auto&) { return x.inverse(); });
}

Var square(const Var& a) {
    return unary(
        a, [](double v) { return v * v; }, [](const auto& x, const auto&) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
    return unary(
        a, [](double v) { return std::sqrt(v); }, [](const auto&, const auto& y) { return 0.5 / y; });
}

Var abs(const Var& a) {
    return unary(
        a, [](double v) { return std::abs(v); }, [](const auto& x, const auto&) { return x.sign(); });
}

Var clip(const Var& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](const auto& x, const auto&) { return ((x >= lo) && (x <= hi)).template cast<double>(); });
}

Var sum(const Var& a) {
    return make(Matrix::Constant(1, 1, a.value().sum()), {a.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        if (x.requires_grad) x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    return make(Matrix::Constant(1, 1, a.value().mean()), {a.node()}, [n](Node& self) {
        Node& x = parent(self, 0);
        if (x.requires_grad) {
            x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0) / n));
        }
    });
}

Var row_sum(const Var& a) {
    return make(a.value().rowwise().sum(), {a.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        if (x.requires_grad) x.accumulate(self.grad.col(0).replicate(1, x.value.cols()));
    });
}

Var diag(const Var& a) {
    if (a.rows() != a.cols()) throw InputError("diag: matrix must be square");
    return make(a.value().diagonal(), {a.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        if (!x.requires_grad) return;
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        g.diagonal() = self.grad.col(0);
        x.accumulate(g);
    });
}

Var row_norm(const Var& a) {
    return make(a.value().rowwise().norm(), {a.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        if (!x.requires_grad) return;
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double n = self.value(i, 0);
            if (n > 0) g.row(i) = x.value.row(i) * (self.grad(i, 0) / n);
        }
        x.accumulate(g);
    });
}

Var concat_cols(const Var& a, const Var& b) {
    if (a.rows() != b.rows()) throw InputError("concat_cols: row count mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Eigen::Index split = a.cols();
    return make(std::move(out), {a.node(), b.node()}, [split](Node& self) {
        Node& x = parent(self, 0);
        Node& y = parent(self, 1);
        if (x.requires_grad) x.accumulate(self.grad.leftCols(split));
        if (y.requires_grad) y.accumulate(self.grad.rightCols(self.grad.cols() - split));
    });
}

Var transpose(const Var& a) {
    return make(a.value().transpose(), {a.node()}, [](Node& self) {
        Node& x = parent(self, 0);
        if (x.requires_grad) x.accumulate(self.grad.transpose());
    });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> rows) {
    std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= a.rows()) throw InputError("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(k)) = a.value().row(idx[k]);
    }
    return make(std::move(out), {a.node()}, [idx = std::move(idx)](Node& self) {
        Node& x = parent(self, 0);
        if (!x.requires_grad) return;
        Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += self.grad.row(static_cast<Eigen::Index>(k));
        x.accumulate(g);
    });
}

Var segment_mean(const Var& a, std::span<const Eigen::Index> offsets) {
    if (offsets.size() < 2) throw InputError("segment_mean: need at least one segment");
    std::vector<Eigen::Index> off(offsets.begin(), offsets.end());
    const auto segments = static_cast<Eigen::Index>(off.size() - 1);
    if (off.front() != 0 || off.back() != a.rows()) throw InputError("segment_mean: offsets must span all rows");
    Matrix out(segments, a.cols());
    for (Eigen::Index s = 0; s < segments; ++s) {
        const Eigen::Index len = off[s + 1] - off[s];
        if (len <= 0) throw InputError("segment_mean: empty segment");
        out.row(s) = a.value().middleRows(off[s], len).colwise().mean();
    }
    return make(std::move(out), {a.node()}, [off = std::move(off)](Node& self) {
        Node& x = parent(self, 0);
        if (!x.requires_grad) return;
        Matrix g(x.value.rows(), x.value.cols());
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
            const Eigen::Index len = off[s + 1] - off[s];
            g.middleRows(off[s], len) =
                (self.grad.row(static_cast<Eigen::Index>(s)) / static_cast<double>(len)).replicate(len, 1);
        }
        x.accumulate(g);
    });
}

Var layer_norm_rows(const Var& a, double eps) {
    const Eigen::Index d = a.cols();
    Vector mu = a.value().rowwise().mean();
    Matrix centered = a.value().colwise() - mu;
    Vector inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps).rsqrt();
    Matrix out = centered.array().colwise() * inv_std.array();
    return make(std::move(out), {a.node()}, [inv_std = std::move(inv_std), d](Node& self) {
        Node& x = parent(self, 0);
        if (!x.requires_grad) return;
        // dx = inv_std * (g - mean(g) - y * mean(g * y))
        const Matrix& y = self.value;
        const Matrix& g = self.grad;
        Vector gm = g.rowwise().mean();
        Vector gym = g.cwiseProduct(y).rowwise().sum() / static_cast<double>(d);
        Matrix dx = (g.colwise() - gm) - (y.array().colwise() * gym.array()).matrix();
        dx = dx.array().colwise() * inv_std.array();
        x.accumulate(dx);
    });
}

Var standardize_cols(const Var& a, double eps) {
    if (a.rows() < 2) throw InputError("standardize_cols: need at least two rows");
    return transpose(layer_norm_rows(transpose(a), eps));
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
    const Eigen::Index n = logits.rows();
    const Eigen::Index k = logits.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n) throw InputError("cross_entropy: label count mismatch");
    std::vector<int> lab(labels.begin(), labels.end());
    Matrix prob(n, k);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lab[i] < 0 || lab[i] >= k) throw InputError("cross_entropy: label out of range");
        const double m = logits.value().row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.value().row(i).array() - m).exp();
        const double z = e.sum();
        prob.row(i) = e / z;
        total += -(logits.value()(i, lab[i]) - m - std::log(z));
    }
    return make(Matrix::Constant(1, 1, total / static_cast<double>(n)), {logits.node()},
                [prob = std::move(prob), lab = std::move(lab)](Node& self) {
                    Node& x = parent(self, 0);
                    if (!x.requires_grad) return;
                    Matrix g = prob;
                    for (std::size_t i = 0; i < lab.size(); ++i) g(static_cast<Eigen::Index>(i), lab[i]) -= 1.0;
                    g *= self.grad(0, 0) / static_cast<double>(lab.size());
                    x.accumulate(g);
                });
}

Var gaussian_loglik_pairwise(const Var& mu, const Var& logvar, const Var& z) {
    require_same_shape(mu, logvar, "gaussian_loglik_pairwise");
    if (z.cols() != mu.cols()) throw InputError("gaussian_loglik_pairwise: knowledge dim mismatch");
    const double d = static_cast<double>(mu.cols());
    const Matrix& M = mu.value();
    const Matrix& Z = z.value();
    Matrix P = (-logvar.value().array()).exp();   // precisions, n x d
    // Explicit loops: identical z rows yield bit-identical columns.
    const Vector base =
        (-0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logvar.value().rowwise().sum().array()).matrix();
    Matrix out(M.rows(), Z.rows());
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < Z.rows(); ++j) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < M.cols(); ++k) {
                const double diff = Z(j, k) - M(i, k);
                s += diff * diff * P(i, k);
            }
            out(i, j) = base(i) - 0.5 * s;
        }
    }
    return make(std::move(out), {mu.node(), logvar.node(), z.node()}, [P = std::move(P)](Node& self) {
        Node& m = parent(self, 0);
        Node& lv = parent(self, 1);
        Node& zz = parent(self, 2);
        const Matrix& G = self.grad;   // n x m
        const Matrix& M = m.value;
        const Matrix& Z = zz.value;
        Vector rs = G.rowwise().sum();
        Matrix GZ = G * Z;   // n x d
        if (m.requires_grad) {
            Matrix g = P.cwiseProduct(GZ - (M.array().colwise() * rs.array()).matrix());
            m.accumulate(g);
        }
        if (lv.requires_grad) {
            // sum_j G_ij (z_j - mu_i)^2 = (G Z^2) - 2 mu (G Z) + mu^2 rs
            Matrix sq = G * Z.cwiseAbs2() - 2.0 * M.cwiseProduct(GZ) +
                        (M.cwiseAbs2().array().colwise() * rs.array()).matrix();
            Matrix g = 0.5 * P.cwiseProduct(sq) - 0.5 * (Matrix::Ones(M.rows(), M.cols()).array().colwise() *
                                                        rs.array()).matrix();
            lv.accumulate(g);
        }
        if (zz.requires_grad) {
            Matrix g = G.transpose() * M.cwiseProduct(P) - Z.cwiseProduct(G.transpose() * P);
            zz.accumulate(g);
        }
    });
}

}  // namespace discover::ag
