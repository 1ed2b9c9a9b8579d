#pragma once

// Knowledge-guided disentanglement: vCLUB mutual-information upper bound
// between representations and version-variant knowledge (F0 summary, timbre),
// the variational estimators behind it, gated knowledge fusion and k-means
// pseudo-labels for the timbre classifier.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "discover/autograd.hpp"
#include "discover/layers.hpp"
#include "discover/optim.hpp"
#include "discover/random.hpp"
#include "discover/synthcover.hpp"

namespace discover::kdm {

inline constexpr double kLogVarBound = 8.0;
inline constexpr int kF0Statistics = 14;

/// Rows are indexed by recording id.
struct KnowledgeBank {
    Eigen::MatrixXd o;   // F0 summaries
    Eigen::MatrixXd t;   // timbre

    Eigen::Index size() const { return o.rows(); }
    /// Rows for the given recordings; throws BankError on missing entries.
    Eigen::MatrixXd rows_o(std::span<const int> ids) const;
    Eigen::MatrixXd rows_t(std::span<const int> ids) const;
};

/// mean, std, quantiles 10..90 %, delta mean, delta std, voiced fraction,
/// then zero padding up to dim.
Eigen::VectorXd f0_summary(const Eigen::VectorXd& f0, int dim);

KnowledgeBank build_knowledge_bank(const synthcover::Corpus& corpus, int f0_dim);

/// Precomputed knowledge arrays in the corpus array-file layout
/// (recordings x dim), e.g. from external pitch/timbre extractors.
KnowledgeBank load_knowledge_bank(const std::filesystem::path& o_path, const std::filesystem::path& t_path,
                                  Eigen::Index expected_rows);

/// Per-column z-scoring fitted on a subset; constant columns map to zero.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& rows);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
};

/// Diagonal-Gaussian q(z | x). The shared trunk also embeds knowledge vectors
/// (zero-padded to the representation width) for fusion and classification.
class VariationalEstimator {
public:
    VariationalEstimator() = default;
    VariationalEstimator(const std::string& name, int x_dim, int z_dim, Rng& rng);

    int x_dim() const { return trunk_.in(); }
    int z_dim() const { return mean_.out(); }

    ag::Var hidden(const ag::Var& in) const;
    /// (mean, log-variance); log-variance = 8 tanh(raw / 8), inside (-8, 8).
    std::pair<ag::Var, ag::Var> predict(const ag::Var& x) const;
    /// q(z): trunk applied to z zero-padded to x_dim.
    ag::Var embed(const ag::Var& z) const;

    void collect(ag::ParameterList& out);

private:
    Linear trunk_;
    Linear mean_;
    Linear logvar_;
};

/// log q(z | x) for a single pair.
double estimator_loglik(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& z, const VariationalEstimator& est);

/// L(i, j) = log q(z_j | x_i).
ag::Var loglik_matrix(const ag::Var& x, const ag::Var& z, const VariationalEstimator& est);

/// (1/N) sum_i [log q(z_i|x_i) - (1/N) sum_j log q(z_j|x_i)]; N >= 2.
ag::Var vclub_upper(const ag::Var& x, const ag::Var& z, const VariationalEstimator& est);

/// vclub(x, o) + vclub(x, t).
ag::Var mi_loss(const ag::Var& x, const Eigen::MatrixXd& o, const Eigen::MatrixXd& t, const VariationalEstimator& est_o,
                const VariationalEstimator& est_t);

/// -mean log q(z_i | x_i).
ag::Var estimator_loss(const ag::Var& x, const ag::Var& z, const VariationalEstimator& est);

/// One Adam step on the estimator with x detached; returns the pre-step loss.
double train_estimator_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, VariationalEstimator& est,
                            Adam& opt);

/// a = sigmoid(g([e, q(z)])), e* = a e + (1 - a) q(z), one gate per row.
class KnowledgeGate {
public:
    KnowledgeGate() = default;
    KnowledgeGate(int dim, Rng& rng);

    struct Fused {
        ag::Var value;
        ag::Var gate;
    };
    Fused fuse(const ag::Var& e, const ag::Var& qz) const;

    Linear& linear() { return g_; }
    void collect(ag::ParameterList& out) { g_.collect(out); }

private:
    Linear g_;
};

struct PseudoLabelSet {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    int clusters = 0;
    std::vector<double> inertia_history;   // within-cluster SS after each assignment

    int assign(const Eigen::RowVectorXd& point) const;
};

/// Seeded k-means++ initialization followed by Lloyd iterations.
PseudoLabelSet make_pseudo_labels(const Eigen::MatrixXd& points, int clusters, std::uint64_t seed,
                                  int max_iterations = 50);

/// Multi-class cross-entropy of the knowledge classifier.
ag::Var knowledge_cls_loss(const ag::Var& logits, std::span<const int> labels);

}  // namespace discover::kdm
