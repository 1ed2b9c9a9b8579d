#include "discover/gadm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "discover/error.hpp"

namespace discover::gadm {

namespace {

void require_same_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw InputError("transition cost: dimension mismatch");
}

void require_nonzero_rows(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (m.row(i).squaredNorm() == 0.0) throw NumericError("cosine transition cost undefined for a zero vector");
    }
}

}  // namespace

double transition_cost(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Metric metric) {
    require_same_dim(a, b);
    switch (metric) {
        case Metric::euclidean: return (a - b).norm();
        case Metric::manhattan: return (a - b).cwiseAbs().sum();
        case Metric::cosine: {
            const double na = a.norm();
            const double nb = b.norm();
            if (na == 0.0 || nb == 0.0) throw NumericError("cosine transition cost undefined for a zero vector");
            return 1.0 - a.dot(b) / (na * nb);
        }
    }
    return 0.0;
}

ag::Var transition_cost_rows(const ag::Var& a, const ag::Var& b, Metric metric) {
    switch (metric) {
        case Metric::euclidean: return ag::row_norm(ag::sub(a, b));
        case Metric::manhattan: return ag::row_sum(ag::abs(ag::sub(a, b)));
        case Metric::cosine: {
            require_nonzero_rows(a.value());
            require_nonzero_rows(b.value());
            ag::Var cos = ag::div(ag::row_sum(ag::mul(a, b)), ag::mul(ag::row_norm(a), ag::row_norm(b)));
            return ag::affine(cos, -1.0, 1.0);
        }
    }
    throw InputError("unknown metric");
}

VariantGradient variant_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& x_plus, Metric metric) {
    require_same_dim(x, x_plus);
    VariantGradient out;
    switch (metric) {
        case Metric::euclidean: {
            const Eigen::VectorXd diff = x - x_plus;
            const double n = diff.norm();
            if (n == 0.0) {
                out.g = Eigen::VectorXd::Zero(x.size());
                out.degenerate = true;
            } else {
                out.g = diff / n;
            }
            break;
        }
        case Metric::manhattan:
            out.g = (x - x_plus).array().sign().matrix();
            break;
        case Metric::cosine: {
            const double nx = x.norm();
            const double ny = x_plus.norm();
            if (nx == 0.0 || ny == 0.0) throw NumericError("cosine transition cost undefined for a zero vector");
            const double dot = x.dot(x_plus);
            out.g = -(x_plus / (nx * ny) - x * (dot / (nx * nx * nx * ny)));
            break;
        }
    }
    return out;
}

GradientMask build_mask(const Eigen::VectorXd& g, double percentile) {
    if (!(percentile > 0 && percentile <= 100)) throw InputError("build_mask: percentile must lie in (0, 100]");
    if (g.size() == 0) throw InputError("build_mask: empty gradient");
    if (!g.allFinite()) throw NumericError("build_mask: non-finite gradient");

    std::vector<double> sorted(g.data(), g.data() + g.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto n = static_cast<double>(g.size());
    const auto k = std::clamp<long>(static_cast<long>(std::ceil(percentile / 100.0 * n - 1e-9)), 1L,
                                    static_cast<long>(g.size()));
    GradientMask out;
    out.percentile = percentile;
    out.threshold = sorted[static_cast<std::size_t>(k - 1)];

    const auto above = (g.array() >= out.threshold).eval();
    const double peak = sorted.front();
    double z = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (above(i)) z += std::exp(g(i) - peak);
    out.m = Eigen::VectorXd::Ones(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (above(i)) out.m(i) = 1.0 - std::exp(g(i) - peak) / z;
    return out;
}

Eigen::VectorXd decompose(const Eigen::VectorXd& x, const GradientMask& mask) {
    if (x.size() != mask.m.size()) throw InputError("decompose: dimension mismatch");
    return x.cwiseProduct(mask.m);
}

Eigen::MatrixXd pair_masks(const Eigen::MatrixXd& x, Metric metric, double percentile) {
    if (x.rows() % 2 != 0) throw InputError("pair_masks: batch must hold query and target halves");
    const Eigen::Index pairs = x.rows() / 2;
    Eigen::MatrixXd masks(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < pairs; ++k) {
        const Eigen::VectorXd q = x.row(k).transpose();
        const Eigen::VectorXd t = x.row(k + pairs).transpose();
        masks.row(k) = build_mask(variant_gradient(q, t, metric).g, percentile).m.transpose();
        masks.row(k + pairs) = build_mask(variant_gradient(t, q, metric).g, percentile).m.transpose();
    }
    return masks;
}

ag::Var decompose(const ag::Var& x, const Eigen::MatrixXd& masks) {
    if (masks.rows() != x.rows() || masks.cols() != x.cols()) throw InputError("decompose: mask shape mismatch");
    return ag::mul(x, ag::constant(masks));
}

Discriminator::Discriminator(int dim, int hidden, Rng& rng)
    : l1_("gadm.disc.l1", dim, hidden, rng), l2_("gadm.disc.l2", hidden, hidden, rng), head_("gadm.disc.head", hidden, 1, rng) {}

ag::Var Discriminator::score(const ag::Var& x) const {
    return ag::sigmoid(head_(ag::tanh(l2_(ag::tanh(l1_(x))))));
}

void Discriminator::collect(ag::ParameterList& out) {
    l1_.collect(out);
    l2_.collect(out);
    head_.collect(out);
}

DiscriminatorLosses discriminator_losses(const ag::Var& x, const ag::Var& x_hat, const Discriminator& disc) {
    if (x.rows() != x_hat.rows()) throw InputError("discriminator_losses: batches must have equal size");
    ag::Var dx = ag::clip(disc.score(x), kProbClip, 1.0 - kProbClip);
    ag::Var dxh = ag::clip(disc.score(x_hat), kProbClip, 1.0 - kProbClip);
    ag::Var log_fake = ag::log(ag::affine(dx, -1.0, 1.0));
    DiscriminatorLosses out;
    out.d1 = ag::mean(ag::add(ag::log(dxh), log_fake));
    out.d2 = ag::mean(log_fake);
    return out;
}

ag::Var transition_loss(const ag::Var& x_hat, const ag::Var& x_hat_plus, Metric metric) {
    if (x_hat.rows() != x_hat_plus.rows() || x_hat.cols() != x_hat_plus.cols()) {
        throw InputError("transition_loss: pair shape mismatch");
    }
    return ag::mean(transition_cost_rows(x_hat, x_hat_plus, metric));
}

}  // namespace discover::gadm
