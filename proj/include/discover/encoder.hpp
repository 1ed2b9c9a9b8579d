#pragma once

// Feed-forward encoder: per-frame dense layer, mean-over-time pooling, two dense
// layers, an optional per-feature batch standardisation, then row normalization
// (zero mean, unit variance) and a learned elementwise affine. The
// classification head maps representations to song logits.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "discover/autograd.hpp"
#include "discover/config.hpp"
#include "discover/layers.hpp"
#include "discover/random.hpp"

namespace discover {

/// Variable-length sequences stacked row-wise; sequence k occupies rows
/// [offsets[k], offsets[k+1]).
struct FrameBatch {
    Eigen::MatrixXd frames;
    std::vector<Eigen::Index> offsets{0};

    Eigen::Index size() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
    void append(const Eigen::MatrixXd& sequence);
};

/// Source of the per-feature statistics used before row normalization.
enum class NormMode { batch, running };

class Encoder {
public:
    Encoder() = default;
    Encoder(int feature_dim, const EncoderConfig& cfg, int class_count, Rng& rng);

    int feature_dim() const { return frame_.in(); }
    int dim() const { return out_.out(); }
    int class_count() const { return classifier_.out(); }

    /// Differentiable forward pass; one output row per sequence. Batch mode
    /// needs at least two sequences.
    ag::Var encode(const FrameBatch& batch, NormMode mode = NormMode::running) const;
    /// Same, stopping before the learned affine.
    ag::Var encode_normalized(const FrameBatch& batch, NormMode mode = NormMode::running) const;

    /// Folds this batch's feature statistics into the running estimates.
    void update_running_stats(const FrameBatch& batch, double momentum = 0.1);
    bool batch_norm() const { return batch_norm_; }

    /// Tape-free inference, thread-safe.
    Eigen::RowVectorXd infer(const Eigen::MatrixXd& sequence) const;
    Eigen::MatrixXd infer(const FrameBatch& batch) const;

    ag::Var classify(const ag::Var& x) const;
    Eigen::RowVectorXd classify(const Eigen::RowVectorXd& x) const;

    ag::ParameterList parameters();
    Linear& classifier() { return classifier_; }
    ag::Parameter& gamma() { return gamma_; }
    ag::Parameter& beta() { return beta_; }
    /// Non-trainable state (running mean and variance).
    ag::ParameterList buffers();

private:
    void check_input(const FrameBatch& batch) const;
    ag::Var trunk(const FrameBatch& batch, NormMode mode) const;
    Eigen::RowVectorXd features(const Eigen::MatrixXd& sequence) const;

    Linear frame_;
    Linear dense_;
    Linear out_;
    ag::Parameter gamma_;
    ag::Parameter beta_;
    Linear classifier_;
    ag::Parameter running_mean_;
    ag::Parameter running_var_;
    double eps_ = 1e-5;
    bool batch_norm_ = true;
};

/// Softmax of a logit row.
Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);

}  // namespace discover
