#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix; scalars are 1x1. A graph is built eagerly as
// operations are applied and is released once the last Var referencing it goes
// out of scope. Parameters are persistent leaf nodes whose gradients accumulate
// until zero_grad() is called.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace discover::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const { return node_->value(0, 0); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Non-differentiable input.
Var constant(Matrix value);
Var constant_scalar(double value);

/// Same value, cut from the graph.
Var detach(const Var& v);

/// Persistent trainable tensor.
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Matrix init);

    // Copies own an independent value; gradients are not copied.
    Parameter(const Parameter& other);
    Parameter& operator=(const Parameter& other);
    Parameter(Parameter&&) noexcept = default;
    Parameter& operator=(Parameter&&) noexcept = default;

    const std::string& name() const { return name_; }
    Var var() const { return Var(node_); }
    Matrix& value() { return node_->value; }
    const Matrix& value() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    void zero_grad();

private:
    std::string name_;
    std::shared_ptr<Node> node_;
};

using ParameterList = std::vector<Parameter*>;

/// Seeds d(root)/d(root) = 1 and runs the tape in reverse topological order.
/// root must be 1x1.
void backward(const Var& root);

// Arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);   // elementwise
Var div(const Var& a, const Var& b);   // elementwise
Var affine(const Var& a, double scale, double shift);
Var matmul(const Var& a, const Var& b);

// Broadcasting: row vectors (1 x c) over rows, column vectors (r x 1) over columns.
Var add_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);
Var mul_col(const Var& a, const Var& col);

// Elementwise functions.
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);
/// Value clamped to [lo, hi]; gradient passes only where the input is inside.
Var clip(const Var& a, double lo, double hi);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);
Var diag(const Var& a);   // square n x n -> n x 1
/// Euclidean norm of each row (n x 1); the gradient at a zero row is zero.
Var row_norm(const Var& a);

// Structural.
Var concat_cols(const Var& a, const Var& b);
Var transpose(const Var& a);
Var gather_rows(const Var& a, std::span<const Eigen::Index> rows);
/// Rows [offsets[k], offsets[k+1]) are averaged into output row k.
Var segment_mean(const Var& a, std::span<const Eigen::Index> offsets);

/// Standardizes each row to zero mean and unit (biased) variance.
Var layer_norm_rows(const Var& a, double eps);
/// Per-column zero mean, unit variance over the rows (batch statistics).
Var standardize_cols(const Var& a, double eps);

/// Mean multi-class cross-entropy of row-wise logits against integer labels.
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// L(i, j) = log N(z_j ; mu_i, diag(exp(logvar_i))). Shapes: mu, logvar n x d;
/// z m x d; result n x m.
Var gaussian_loglik_pairwise(const Var& mu, const Var& logvar, const Var& z);

}  // namespace discover::ag
