#pragma once

// Alternating optimisation. The main step updates the encoder, its song
// classifier and the knowledge gate on
//     L1 = L_task + L_trans + lambda1 L_MI + L_zcls + L_adv;
// the auxiliary step freezes the encoder and updates the discriminator, the two
// variational estimators and the knowledge classifier on
//     L2 = L_disc + lambda2 L_q + L_zcls.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "discover/autograd.hpp"
#include "discover/config.hpp"
#include "discover/encoder.hpp"
#include "discover/gadm.hpp"
#include "discover/kdm.hpp"
#include "discover/layers.hpp"
#include "discover/optim.hpp"
#include "discover/random.hpp"
#include "discover/synthcover.hpp"

namespace discover::training {

/// Rows [queries; targets]: pairs[k] = (query recording, target recording) of
/// one song, all songs distinct.
struct PairBatch {
    std::vector<std::pair<int, int>> pairs;

    std::size_t size() const { return pairs.size(); }
    std::vector<int> recordings() const;
};

/// Draws positive pairs from train songs that have at least two versions.
class PairSampler {
public:
    PairSampler(const synthcover::Corpus& corpus, std::span<const int> train_ids);

    int eligible_songs() const { return static_cast<int>(versions_.size()); }
    /// batch_size / 2 pairs from distinct songs; throws SamplingError if too
    /// few songs qualify.
    PairBatch sample(int batch_size, Rng& rng) const;
    /// One pass over the shuffled eligible songs, remainder dropped.
    std::vector<PairBatch> epoch(int batch_size, Rng& rng) const;

private:
    std::pair<int, int> draw_pair(std::size_t song_index, Rng& rng) const;

    std::vector<std::vector<int>> versions_;   // per eligible song
};

/// Data-derived tables; a pure function of (config, corpus, split).
struct TrainContext {
    const synthcover::Corpus* corpus = nullptr;
    synthcover::CorpusSplit split;
    kdm::KnowledgeBank bank;           // standardised with train statistics
    std::vector<int> song_class;       // recording id -> class, -1 outside train
    std::vector<int> pseudo_label;     // recording id -> timbre cluster
    int class_count = 0;
    int cluster_count = 0;

    static TrainContext build(const Config& cfg, const synthcover::Corpus& corpus, const synthcover::CorpusSplit& split,
                              std::optional<kdm::KnowledgeBank> knowledge = std::nullopt);
};

struct LossTerms {
    double task = 0, trans = 0, mi = 0, zcls = 0, adv = 0, total = 0;
};

struct AuxTerms {
    double disc = 0, q = 0, zcls = 0, total = 0;
};

struct EpochRecord {
    int epoch = 0;
    LossTerms main;
    AuxTerms aux;
    double valid_map = 0.0;
};

struct TrainState {
    Config config;
    Encoder encoder;
    kdm::KnowledgeGate gate;
    kdm::VariationalEstimator est_o;
    kdm::VariationalEstimator est_t;
    Linear knowledge_classifier;
    gadm::Discriminator disc;
    Adam main_opt;
    Adam aux_opt;
    int epoch = 0;
    long step = 0;
    std::vector<EpochRecord> history;

    TrainState() = default;
    TrainState(const Config& cfg, int feature_dim, int class_count, int cluster_count);

    ag::ParameterList main_parameters();
    ag::ParameterList aux_parameters();
    /// Every parameter, each exactly once.
    ag::ParameterList all_parameters();
    /// Non-trainable state saved alongside the parameters.
    ag::ParameterList buffers();
};

struct MainObjective {
    ag::Var total;
    ag::Var task, trans, mi, zcls, adv;
    Eigen::MatrixXd masks;
    LossTerms values() const;
};

struct AuxObjective {
    ag::Var total;
    ag::Var disc, q, zcls;
    AuxTerms values() const;
};

/// Builds L1 for one batch. Masks are recomputed from the current encoder
/// unless given.
MainObjective main_objective(const PairBatch& batch, TrainState& state, const TrainContext& ctx,
                             const Eigen::MatrixXd* fixed_masks = nullptr);
AuxObjective aux_objective(const PairBatch& batch, TrainState& state, const TrainContext& ctx);

/// One optimizer update each; throws TrainingError naming the first
/// non-finite term before any parameter changes.
LossTerms main_step(const PairBatch& batch, TrainState& state, const TrainContext& ctx);
AuxTerms aux_step(const PairBatch& batch, TrainState& state, const TrainContext& ctx);

struct TrainHooks {
    std::function<void(const TrainState&, const EpochRecord&)> on_epoch;
    /// Receives the state as it was before the failing update.
    std::function<void(const TrainState&, const std::string&)> on_abort;
};

struct TrainResult {
    TrainState final_state;
    TrainState best_state;
    double best_valid_map = 0.0;
};

/// Runs config.train.epochs epochs, keeping the state with the best
/// validation MAP.
TrainResult train(TrainState state, const TrainContext& ctx, const TrainHooks& hooks = {});

/// Convenience: context + fresh state + train.
TrainResult train(const Config& cfg, const synthcover::Corpus& corpus, const synthcover::CorpusSplit& split,
                  const TrainHooks& hooks = {});

}  // namespace discover::training
