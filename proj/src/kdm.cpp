#include "discover/kdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "discover/array_file.hpp"
#include "discover/error.hpp"

namespace discover::kdm {

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& bank, std::span<const int> ids, const char* kind) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), bank.cols());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= bank.rows()) {
            throw BankError(std::string("knowledge bank has no ") + kind + " entry for recording " +
                            std::to_string(ids[k]));
        }
        out.row(static_cast<Eigen::Index>(k)) = bank.row(ids[k]);
    }
    return out;
}

double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite input");
}

}  // namespace

Eigen::MatrixXd KnowledgeBank::rows_o(std::span<const int> ids) const { return gather(o, ids, "F0"); }
Eigen::MatrixXd KnowledgeBank::rows_t(std::span<const int> ids) const { return gather(t, ids, "timbre"); }

Eigen::VectorXd f0_summary(const Eigen::VectorXd& f0, int dim) {
    if (dim < kF0Statistics) throw InputError("f0_summary: dim must be >= 14");
    if (f0.size() == 0) throw InputError("f0_summary: empty contour");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    const double n = static_cast<double>(f0.size());
    const double mean = f0.mean();
    out(0) = mean;
    out(1) = std::sqrt((f0.array() - mean).square().sum() / n);
    std::vector<double> sorted(f0.data(), f0.data() + f0.size());
    std::sort(sorted.begin(), sorted.end());
    for (int q = 1; q <= 9; ++q) out(1 + q) = quantile_sorted(sorted, q / 10.0);
    if (f0.size() > 1) {
        const Eigen::VectorXd delta = f0.tail(f0.size() - 1) - f0.head(f0.size() - 1);
        const double dm = delta.mean();
        out(11) = dm;
        out(12) = std::sqrt((delta.array() - dm).square().sum() / static_cast<double>(delta.size()));
    }
    // Synthetic contours are fully voiced; real extractors report unvoiced frames as non-finite.
    out(13) = static_cast<double>(f0.array().isFinite().count()) / n;
    return out;
}

KnowledgeBank build_knowledge_bank(const synthcover::Corpus& corpus, int f0_dim) {
    KnowledgeBank bank;
    const auto n = static_cast<Eigen::Index>(corpus.recordings.size());
    bank.o.resize(n, f0_dim);
    bank.t.resize(n, corpus.config.timbre_dim);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& r = corpus.recordings[static_cast<std::size_t>(k)];
        bank.o.row(k) = f0_summary(r.f0, f0_dim).transpose();
        bank.t.row(k) = r.timbre.transpose();
    }
    return bank;
}

KnowledgeBank load_knowledge_bank(const std::filesystem::path& o_path, const std::filesystem::path& t_path,
                                  Eigen::Index expected_rows) {
    KnowledgeBank bank{read_array(o_path), read_array(t_path)};
    if (bank.o.rows() != expected_rows || bank.t.rows() != expected_rows) {
        throw BankError("knowledge arrays must have one row per recording (" + std::to_string(expected_rows) + ")");
    }
    if (!bank.o.allFinite() || !bank.t.allFinite()) throw BankError("knowledge arrays contain non-finite values");
    return bank;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) throw InputError("Standardizer: no rows");
    Standardizer s;
    s.mean = rows.colwise().mean();
    s.scale.resize(rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        const double var = (rows.col(c).array() - s.mean(c)).square().mean();
        s.scale(c) = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
    return (rows.rowwise() - mean).array().rowwise() * scale.array();
}

VariationalEstimator::VariationalEstimator(const std::string& name, int x_dim, int z_dim, Rng& rng)
    : trunk_(name + ".trunk", x_dim, x_dim, rng),
      mean_(name + ".mean", x_dim, z_dim, rng),
      logvar_(name + ".logvar", x_dim, z_dim, rng) {
    if (z_dim > x_dim) throw ConfigError("variational estimator: knowledge dim exceeds representation dim");
}

ag::Var VariationalEstimator::hidden(const ag::Var& in) const { return ag::tanh(trunk_(in)); }

std::pair<ag::Var, ag::Var> VariationalEstimator::predict(const ag::Var& x) const {
    if (x.cols() != x_dim()) throw InputError("estimator: representation dim mismatch");
    ag::Var h = hidden(x);
    ag::Var logvar = ag::affine(ag::tanh(ag::affine(logvar_(h), 1.0 / kLogVarBound, 0.0)), kLogVarBound, 0.0);
    return {mean_(h), logvar};
}

ag::Var VariationalEstimator::embed(const ag::Var& z) const {
    if (z.cols() != z_dim()) throw InputError("estimator: knowledge dim mismatch");
    ag::Matrix pad = ag::Matrix::Zero(z_dim(), x_dim());
    pad.leftCols(z_dim()).setIdentity();
    return hidden(ag::matmul(z, ag::constant(std::move(pad))));
}

void VariationalEstimator::collect(ag::ParameterList& out) {
    trunk_.collect(out);
    mean_.collect(out);
    logvar_.collect(out);
}

double estimator_loglik(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& z, const VariationalEstimator& est) {
    require_finite(x, "estimator_loglik");
    require_finite(z, "estimator_loglik");
    return loglik_matrix(ag::constant(x), ag::constant(z), est).scalar();
}

ag::Var loglik_matrix(const ag::Var& x, const ag::Var& z, const VariationalEstimator& est) {
    if (z.cols() != est.z_dim()) throw InputError("loglik: knowledge dim mismatch");
    auto [mu, logvar] = est.predict(x);
    return ag::gaussian_loglik_pairwise(mu, logvar, z);
}

ag::Var vclub_upper(const ag::Var& x, const ag::Var& z, const VariationalEstimator& est) {
    if (x.rows() < 2) throw BatchError("vCLUB needs a batch of at least 2 pairs");
    if (x.rows() != z.rows()) throw BatchError("vCLUB: x and z batches must be paired by index");
    ag::Var L = loglik_matrix(x, z, est);
    const ag::Matrix ones = ag::Matrix::Ones(L.rows(), L.cols());
    // Row i holds log q(z_i|x_i) - log q(z_j|x_i); constant z cancels exactly.
    ag::Var diffs = ag::sub(ag::mul_col(ag::constant(ones), ag::diag(L)), L);
    return ag::mean(diffs);
}

ag::Var mi_loss(const ag::Var& x, const Eigen::MatrixXd& o, const Eigen::MatrixXd& t, const VariationalEstimator& est_o,
                const VariationalEstimator& est_t) {
    if (o.rows() != x.rows() || t.rows() != x.rows()) throw BankError("mi_loss: knowledge rows missing for batch");
    return ag::add(vclub_upper(x, ag::constant(o), est_o), vclub_upper(x, ag::constant(t), est_t));
}

ag::Var estimator_loss(const ag::Var& x, const ag::Var& z, const VariationalEstimator& est) {
    if (x.rows() != z.rows()) throw BatchError("estimator_loss: x and z batches must be paired by index");
    return ag::affine(ag::mean(ag::diag(loglik_matrix(x, z, est))), -1.0, 0.0);
}

double train_estimator_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, VariationalEstimator& est,
                            Adam& opt) {
    ag::ParameterList params;
    est.collect(params);
    zero_grad(params);
    ag::Var loss = estimator_loss(ag::constant(x), ag::constant(z), est);
    if (!std::isfinite(loss.scalar())) {
        throw TrainingError("estimator loss diverged (value " + std::to_string(loss.scalar()) + ")");
    }
    ag::backward(loss);
    opt.step(params);
    return loss.scalar();
}

KnowledgeGate::KnowledgeGate(int dim, Rng& rng) : g_("kdm.gate", 2 * dim, 1, rng) {}

KnowledgeGate::Fused KnowledgeGate::fuse(const ag::Var& e, const ag::Var& qz) const {
    if (e.rows() != qz.rows() || e.cols() != qz.cols() || 2 * e.cols() != g_.in()) {
        throw InputError("tradeoff_fuse: e and q(z) must share the representation shape");
    }
    ag::Var a = ag::sigmoid(g_(ag::concat_cols(e, qz)));
    ag::Var fused = ag::add(ag::mul_col(e, a), ag::mul_col(qz, ag::affine(a, -1.0, 1.0)));
    return {fused, a};
}

int PseudoLabelSet::assign(const Eigen::RowVectorXd& point) const {
    Eigen::Index best = 0;
    (centroids.rowwise() - point).rowwise().squaredNorm().minCoeff(&best);
    return static_cast<int>(best);
}

PseudoLabelSet make_pseudo_labels(const Eigen::MatrixXd& points, int clusters, std::uint64_t seed,
                                  int max_iterations) {
    const Eigen::Index n = points.rows();
    if (clusters < 1) throw ClusteringError("k-means: need at least one cluster");
    if (n < clusters) {
        throw ClusteringError("k-means: " + std::to_string(n) + " points cannot form " + std::to_string(clusters) +
                              " clusters");
    }
    Rng rng(seed);
    PseudoLabelSet out;
    out.clusters = clusters;
    out.centroids.resize(clusters, points.cols());

    // k-means++ seeding.
    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    Eigen::Index pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    for (int c = 0; c < clusters; ++c) {
        out.centroids.row(c) = points.row(pick);
        d2 = d2.cwiseMin((points.rowwise() - points.row(pick)).rowwise().squaredNorm());
        if (c + 1 == clusters) break;
        const double total = d2.sum();
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
            continue;
        }
        double r = rng.uniform() * total;
        pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            r -= d2(i);
            if (r < 0 && d2(i) > 0) {
                pick = i;
                break;
            }
        }
    }

    out.labels.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < std::max(1, max_iterations); ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            inertia += (out.centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (out.labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
                out.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
                changed = true;
            }
        }
        out.inertia_history.push_back(inertia);
        if (!changed) break;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = out.labels[static_cast<std::size_t>(i)];
            sums.row(l) += points.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int c = 0; c < clusters; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) out.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

ag::Var knowledge_cls_loss(const ag::Var& logits, std::span<const int> labels) {
    for (int l : labels) {
        if (l < 0 || l >= logits.cols()) throw InputError("knowledge_cls_loss: label out of range");
    }
    return ag::cross_entropy(logits, labels);
}

}  // namespace discover::kdm
