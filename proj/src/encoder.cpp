#include "discover/encoder.hpp"

#include <cmath>

#include "discover/error.hpp"

namespace discover {

void FrameBatch::append(const Eigen::MatrixXd& sequence) {
    if (sequence.rows() == 0) throw InputError("FrameBatch: empty sequence");
    if (frames.size() != 0 && sequence.cols() != frames.cols()) throw InputError("FrameBatch: feature dim mismatch");
    const Eigen::Index start = frames.rows();
    frames.conservativeResize(start + sequence.rows(), sequence.cols());
    frames.bottomRows(sequence.rows()) = sequence;
    offsets.push_back(frames.rows());
}

Encoder::Encoder(int feature_dim, const EncoderConfig& cfg, int class_count, Rng& rng)
    : frame_("encoder.frame", feature_dim, cfg.hidden, rng),
      dense_("encoder.dense", cfg.hidden, cfg.hidden, rng),
      out_("encoder.out", cfg.hidden, cfg.dim, rng),
      gamma_("encoder.gamma", ag::Matrix::Ones(1, cfg.dim)),
      beta_("encoder.beta", ag::Matrix::Zero(1, cfg.dim)),
      classifier_("encoder.cls", cfg.dim, class_count, rng),
      running_mean_("encoder.bn.mean", ag::Matrix::Zero(1, cfg.dim)),
      running_var_("encoder.bn.var", ag::Matrix::Ones(1, cfg.dim)),
      eps_(cfg.norm_eps),
      batch_norm_(cfg.batch_norm) {
    if (class_count < 1) throw ConfigError("encoder: class_count must be >= 1");
}

void Encoder::check_input(const FrameBatch& batch) const {
    if (batch.size() < 1 || batch.frames.rows() == 0) throw InputError("encode: empty sequence");
    if (batch.frames.cols() != feature_dim()) {
        throw InputError("encode: feature dim " + std::to_string(batch.frames.cols()) + " != " +
                         std::to_string(feature_dim()));
    }
}

ag::Var Encoder::trunk(const FrameBatch& batch, NormMode mode) const {
    check_input(batch);
    ag::Var h = ag::tanh(frame_(ag::constant(batch.frames)));
    ag::Var pooled = ag::segment_mean(h, batch.offsets);
    ag::Var y = out_(ag::tanh(dense_(pooled)));
    if (batch_norm_) {
        if (mode == NormMode::batch) {
            y = ag::standardize_cols(y, eps_);
        } else {
            const Eigen::RowVectorXd inv = (running_var_.value().array() + eps_).rsqrt();
            y = ag::mul_row(ag::add_row(y, ag::constant(-running_mean_.value())), ag::constant(inv));
        }
    }
    return ag::layer_norm_rows(y, eps_);
}

ag::Var Encoder::encode_normalized(const FrameBatch& batch, NormMode mode) const { return trunk(batch, mode); }

ag::Var Encoder::encode(const FrameBatch& batch, NormMode mode) const {
    return ag::add_row(ag::mul_row(trunk(batch, mode), gamma_.var()), beta_.var());
}

Eigen::RowVectorXd Encoder::features(const Eigen::MatrixXd& sequence) const {
    if (sequence.rows() == 0) throw InputError("encode: empty sequence");
    if (sequence.cols() != feature_dim()) throw InputError("encode: feature dim mismatch");
    const Eigen::RowVectorXd pooled = frame_.apply(sequence).array().tanh().matrix().colwise().mean();
    const Eigen::RowVectorXd d = dense_.apply(pooled).array().tanh();
    return out_.apply(d);
}

void Encoder::update_running_stats(const FrameBatch& batch, double momentum) {
    check_input(batch);
    if (!batch_norm_) return;
    Eigen::MatrixXd y(batch.size(), dim());
    for (Eigen::Index k = 0; k < batch.size(); ++k) {
        const Eigen::Index start = batch.offsets[static_cast<std::size_t>(k)];
        const Eigen::Index len = batch.offsets[static_cast<std::size_t>(k) + 1] - start;
        y.row(k) = features(batch.frames.middleRows(start, len).eval());
    }
    const Eigen::RowVectorXd mean = y.colwise().mean();
    const Eigen::RowVectorXd var = (y.rowwise() - mean).array().square().colwise().mean();
    running_mean_.value() = (1.0 - momentum) * running_mean_.value() + momentum * mean;
    running_var_.value() = (1.0 - momentum) * running_var_.value() + momentum * var;
}

Eigen::RowVectorXd Encoder::infer(const Eigen::MatrixXd& sequence) const {
    Eigen::RowVectorXd y = features(sequence);
    if (batch_norm_) {
        y = ((y - running_mean_.value()).array() * (running_var_.value().array() + eps_).rsqrt()).matrix();
    }
    const double mu = y.mean();
    y.array() -= mu;
    const double inv_std = 1.0 / std::sqrt(y.squaredNorm() / static_cast<double>(y.size()) + eps_);
    y *= inv_std;
    return y.cwiseProduct(gamma_.value().row(0)) + beta_.value().row(0);
}

Eigen::MatrixXd Encoder::infer(const FrameBatch& batch) const {
    check_input(batch);
    Eigen::MatrixXd out(batch.size(), dim());
    for (Eigen::Index k = 0; k < batch.size(); ++k) {
        const Eigen::Index start = batch.offsets[static_cast<std::size_t>(k)];
        const Eigen::Index len = batch.offsets[static_cast<std::size_t>(k) + 1] - start;
        out.row(k) = infer(batch.frames.middleRows(start, len).eval());
    }
    return out;
}

ag::Var Encoder::classify(const ag::Var& x) const {
    if (x.cols() != dim()) throw InputError("classify: representation dim mismatch");
    return classifier_(x);
}

Eigen::RowVectorXd Encoder::classify(const Eigen::RowVectorXd& x) const {
    if (x.size() != dim()) throw InputError("classify: representation dim mismatch");
    return classifier_.apply(x);
}

ag::ParameterList Encoder::parameters() {
    ag::ParameterList out;
    frame_.collect(out);
    dense_.collect(out);
    out_.collect(out);
    out.push_back(&gamma_);
    out.push_back(&beta_);
    classifier_.collect(out);
    return out;
}

ag::ParameterList Encoder::buffers() { return {&running_mean_, &running_var_}; }

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
    Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

}  // namespace discover
