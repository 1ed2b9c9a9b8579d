#include <gtest/gtest.h>

#include <vector>

#include "discover/autograd.hpp"
#include "discover/error.hpp"
#include "discover/optim.hpp"
#include "test_util.hpp"

using namespace discover;
using ag::Matrix;
using ag::Var;
using testutil::max_grad_error;
using testutil::random_matrix;

namespace {

constexpr double kTol = 1e-4;

Matrix positive(Rng& rng, int r, int c) { return random_matrix(rng, r, c).array().abs() + 0.5; }

// Collapses any op output to a scalar with non-uniform weights so that every
// output element contributes a distinct gradient.
Var weighted_sum(const Var& v) {
    Matrix w(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
    return ag::sum(ag::mul(v, ag::constant(w)));
}

}  // namespace

TEST(Autograd, ElementwiseOpsMatchFiniteDifferences) {
    Rng rng(1);
    const Matrix a = random_matrix(rng, 3, 4);
    const Matrix b = random_matrix(rng, 3, 4);
    const Matrix p = positive(rng, 3, 4);
    using F = std::function<Var(const std::vector<Var>&)>;
    const std::vector<std::pair<const char*, std::pair<F, std::vector<Matrix>>>> cases = {
        {"add", {[](auto& v) { return weighted_sum(ag::add(v[0], v[1])); }, {a, b}}},
        {"sub", {[](auto& v) { return weighted_sum(ag::sub(v[0], v[1])); }, {a, b}}},
        {"mul", {[](auto& v) { return weighted_sum(ag::mul(v[0], v[1])); }, {a, b}}},
        {"div", {[](auto& v) { return weighted_sum(ag::div(v[0], v[1])); }, {a, p}}},
        {"affine", {[](auto& v) { return weighted_sum(ag::affine(v[0], -2.5, 0.7)); }, {a}}},
        {"tanh", {[](auto& v) { return weighted_sum(ag::tanh(v[0])); }, {a}}},
        {"sigmoid", {[](auto& v) { return weighted_sum(ag::sigmoid(v[0])); }, {a}}},
        {"exp", {[](auto& v) { return weighted_sum(ag::exp(v[0])); }, {a}}},
        {"log", {[](auto& v) { return weighted_sum(ag::log(v[0])); }, {p}}},
        {"square", {[](auto& v) { return weighted_sum(ag::square(v[0])); }, {a}}},
        {"sqrt", {[](auto& v) { return weighted_sum(ag::sqrt(v[0])); }, {p}}},
        {"abs", {[](auto& v) { return weighted_sum(ag::abs(v[0])); }, {p}}},
        {"clip", {[](auto& v) { return weighted_sum(ag::clip(v[0], -10.0, 10.0)); }, {a}}},
    };
    for (const auto& [name, c] : cases) EXPECT_LT(max_grad_error(c.first, c.second), kTol) << name;
}

TEST(Autograd, LinearAlgebraAndBroadcastOps) {
    Rng rng(2);
    const Matrix a = random_matrix(rng, 4, 3);
    const Matrix b = random_matrix(rng, 3, 5);
    const Matrix row = random_matrix(rng, 1, 3);
    const Matrix col = random_matrix(rng, 4, 1);
    const Matrix sq = random_matrix(rng, 4, 4);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::matmul(v[0], v[1])); }, {a, b}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::add_row(v[0], v[1])); }, {a, row}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::mul_row(v[0], v[1])); }, {a, row}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::mul_col(v[0], v[1])); }, {a, col}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::row_sum(v[0])); }, {a}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return ag::mean(v[0]); }, {a}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::diag(v[0])); }, {sq}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::row_norm(v[0])); }, {a}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::transpose(v[0])); }, {a}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::concat_cols(v[0], v[1])); }, {a, a * 2.0}), kTol);
}

TEST(Autograd, StructuralOps) {
    Rng rng(3);
    const Matrix a = random_matrix(rng, 6, 3);
    const std::vector<Eigen::Index> rows{4, 0, 4, 2};
    const std::vector<Eigen::Index> offsets{0, 2, 3, 6};
    EXPECT_LT(max_grad_error([&](auto& v) { return weighted_sum(ag::gather_rows(v[0], rows)); }, {a}), kTol);
    EXPECT_LT(max_grad_error([&](auto& v) { return weighted_sum(ag::segment_mean(v[0], offsets)); }, {a}), kTol);
}

TEST(Autograd, NormalizationOps) {
    Rng rng(4);
    const Matrix a = random_matrix(rng, 5, 6, 2.0);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::layer_norm_rows(v[0], 1e-5)); }, {a}), kTol);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::standardize_cols(v[0], 1e-5)); }, {a}), kTol);

    const Matrix y = ag::layer_norm_rows(ag::constant(a), 1e-5).value();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
        EXPECT_NEAR(y.row(i).squaredNorm() / static_cast<double>(y.cols()), 1.0, 1e-5);
    }
    const Matrix z = ag::standardize_cols(ag::constant(a), 1e-5).value();
    for (Eigen::Index j = 0; j < z.cols(); ++j) EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-12);
    EXPECT_THROW(ag::standardize_cols(ag::constant(Matrix::Ones(1, 3)), 1e-5), InputError);
}

TEST(Autograd, CrossEntropyAndGaussianLikelihood) {
    Rng rng(5);
    const Matrix logits = random_matrix(rng, 4, 5);
    const std::vector<int> labels{0, 3, 4, 1};
    EXPECT_LT(max_grad_error([&](auto& v) { return ag::cross_entropy(v[0], labels); }, {logits}), kTol);

    const Matrix mu = random_matrix(rng, 3, 2);
    const Matrix lv = random_matrix(rng, 3, 2, 0.5);
    const Matrix z = random_matrix(rng, 4, 2);
    EXPECT_LT(max_grad_error([](auto& v) { return weighted_sum(ag::gaussian_loglik_pairwise(v[0], v[1], v[2])); },
                             {mu, lv, z}),
              kTol);

    // Oracle: closed-form univariate density.
    const Matrix L = ag::gaussian_loglik_pairwise(ag::constant(Matrix::Constant(1, 1, 0.5)),
                                                  ag::constant(Matrix::Constant(1, 1, std::log(4.0))),
                                                  ag::constant(Matrix::Constant(1, 1, 1.5)))
                         .value();
    const double expected = -0.5 * std::log(2 * M_PI * 4.0) - 1.0 / 8.0;
    EXPECT_NEAR(L(0, 0), expected, 1e-12);
}

TEST(Autograd, CrossEntropyRejectsBadLabels) {
    const std::vector<int> labels{2};
    EXPECT_THROW(ag::cross_entropy(ag::constant(Matrix::Zero(1, 2)), labels), InputError);
}

TEST(Autograd, CrossEntropyOfUniformLogitsIsLogK) {
    const std::vector<int> labels{1, 2};
    EXPECT_NEAR(ag::cross_entropy(ag::constant(Matrix::Zero(2, 7)), labels).scalar(), std::log(7.0), 1e-12);
}

TEST(Autograd, BackwardNeedsScalarRoot) {
    ag::Parameter p("p", Matrix::Ones(2, 2));
    EXPECT_THROW(ag::backward(ag::tanh(p.var())), InputError);
}

TEST(Autograd, ReusedNodeAccumulatesGradient) {
    ag::Parameter p("p", Matrix::Constant(1, 1, 3.0));
    Var x = p.var();
    ag::backward(ag::add(ag::mul(x, x), x));   // d/dx (x^2 + x) = 2x + 1
    EXPECT_DOUBLE_EQ(p.grad()(0, 0), 7.0);
}

TEST(Autograd, ParameterCopiesAreIndependent) {
    ag::Parameter a("w", Matrix::Zero(2, 2));
    ag::Parameter b = a;
    b.value()(0, 0) = 5.0;
    EXPECT_DOUBLE_EQ(a.value()(0, 0), 0.0);
    EXPECT_EQ(b.name(), "w");
}

TEST(Optim, AdamFirstStepMovesByLearningRate) {
    ag::Parameter p("p", Matrix::Constant(1, 2, 1.0));
    ag::backward(ag::sum(ag::mul(p.var(), ag::constant((Matrix(1, 2) << 3.0, -0.01).finished()))));
    Adam opt(0.1, 0.0);
    opt.step({&p});
    // Bias-corrected first step: m/sqrt(v) = sign(g).
    EXPECT_NEAR(p.value()(0, 0), 0.9, 1e-6);
    EXPECT_NEAR(p.value()(0, 1), 1.1, 1e-4);
    EXPECT_EQ(opt.steps(), 1);
}

TEST(Optim, AdamMinimisesQuadratic) {
    ag::Parameter p("p", Matrix::Constant(1, 3, 4.0));
    Adam opt(0.05, 0.0);
    for (int k = 0; k < 2000; ++k) {
        zero_grad({&p});
        ag::backward(ag::sum(ag::square(ag::affine(p.var(), 1.0, -1.0))));
        opt.step({&p});
    }
    EXPECT_LT((p.value().array() - 1.0).abs().maxCoeff(), 1e-2);
}
