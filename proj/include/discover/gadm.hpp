#pragma once

// Gradient-based adversarial disentanglement.
//
// For a positive pair (x, x+) the gradient of the transition cost h(x, x+)
// with respect to x marks version-variant elements; a softmax over the
// above-percentile gradient entries becomes an attenuation mask, and the masked
// representation x_hat = m (.) x is the disentangled target a discriminator
// learns to tell apart from x.

#include <Eigen/Dense>

#include "discover/autograd.hpp"
#include "discover/config.hpp"
#include "discover/layers.hpp"
#include "discover/random.hpp"

namespace discover::gadm {

inline constexpr double kProbClip = 1e-7;

/// h(a, b) >= 0: L2 distance, L1 distance, or 1 - cosine similarity.
double transition_cost(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Metric metric);

/// Row-wise differentiable h over paired rows of a and b (result n x 1).
ag::Var transition_cost_rows(const ag::Var& a, const ag::Var& b, Metric metric);

struct VariantGradient {
    Eigen::VectorXd g;
    bool degenerate = false;   // euclidean at x == x+, where h is not differentiable
};

/// dh(x, x+)/dx with x+ held constant, in closed form.
VariantGradient variant_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& x_plus, Metric metric);

struct GradientMask {
    Eigen::VectorXd m;
    double threshold = 0.0;
    double percentile = 100.0;
};

/// threshold = p-th largest percentile of g (the ceil(p/100 * dim)-th largest
/// value). Entries with g >= threshold get 1 - softmax over that set; the
/// rest stay 1.
GradientMask build_mask(const Eigen::VectorXd& g, double percentile);

Eigen::VectorXd decompose(const Eigen::VectorXd& x, const GradientMask& mask);

/// Masks for a pair batch laid out as rows [queries; targets]. Row k and row
/// k + pairs form a pair; each side's mask uses the other side as x+.
Eigen::MatrixXd pair_masks(const Eigen::MatrixXd& x, Metric metric, double percentile);

/// x_hat = masks (.) x; masks enter as constants.
ag::Var decompose(const ag::Var& x, const Eigen::MatrixXd& masks);

/// Two tanh hidden layers and a sigmoid output.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(int dim, int hidden, Rng& rng);

    /// n x 1 scores in (0, 1).
    ag::Var score(const ag::Var& x) const;
    void collect(ag::ParameterList& out);

private:
    Linear l1_;
    Linear l2_;
    Linear head_;
};

struct DiscriminatorLosses {
    ag::Var d1;   // mean[log D(x_hat) + log(1 - D(x))]
    ag::Var d2;   // mean[log(1 - D(x))]
};

/// Scores are clipped to [1e-7, 1 - 1e-7] before the logs.
DiscriminatorLosses discriminator_losses(const ag::Var& x, const ag::Var& x_hat, const Discriminator& disc);

/// mean over pairs of h(x_hat, x_hat+).
ag::Var transition_loss(const ag::Var& x_hat, const ag::Var& x_hat_plus, Metric metric);

}  // namespace discover::gadm
