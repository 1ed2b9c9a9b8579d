#include "discover/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "discover/error.hpp"
#include "discover/retrieval.hpp"

namespace discover::training {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954;    // "INIT"
constexpr std::uint64_t kEpochStream = 0x45504f43;   // "EPOC"
constexpr std::uint64_t kKmeansStream = 0x4b4d;      // "KM"

bool kdm_on(const Config& c) { return c.kdm.enabled && (c.kdm.use_f0 || c.kdm.use_timbre); }
bool tradeoff_on(const Config& c) { return kdm_on(c) && c.kdm.tradeoff; }
bool zcls_on(const Config& c) { return tradeoff_on(c) && c.kdm.use_timbre; }
bool gadm_on(const Config& c) { return c.gadm.enabled; }
bool adversarial_on(const Config& c) { return c.gadm.enabled && c.gadm.adversarial; }

FrameBatch frames_of(const synthcover::Corpus& corpus, std::span<const int> ids) {
    FrameBatch fb;
    for (int id : ids) fb.append(corpus.recording(id).features);
    return fb;
}

std::vector<int> labels_of(const std::vector<int>& table, std::span<const int> ids, const char* what) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) {
        const int l = table.at(static_cast<std::size_t>(id));
        if (l < 0) throw BatchError(std::string("recording ") + std::to_string(id) + " has no " + what + " label");
        out.push_back(l);
    }
    return out;
}

std::vector<Eigen::Index> iota_ids(Eigen::Index from, Eigen::Index count) {
    std::vector<Eigen::Index> v(static_cast<std::size_t>(count));
    std::iota(v.begin(), v.end(), from);
    return v;
}

ag::Var zero() { return ag::constant_scalar(0.0); }

/// Mean of the enabled knowledge embeddings q(o), q(t).
ag::Var knowledge_embedding(const TrainState& s, const TrainContext& ctx, std::span<const int> ids) {
    const Config& c = s.config;
    std::vector<ag::Var> parts;
    if (c.kdm.use_f0) parts.push_back(s.est_o.embed(ag::constant(ctx.bank.rows_o(ids))));
    if (c.kdm.use_timbre) parts.push_back(s.est_t.embed(ag::constant(ctx.bank.rows_t(ids))));
    ag::Var acc = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) acc = ag::add(acc, parts[k]);
    return parts.size() == 1 ? acc : ag::affine(acc, 1.0 / static_cast<double>(parts.size()), 0.0);
}

ag::Var zcls_loss(const TrainState& s, const TrainContext& ctx, std::span<const int> ids) {
    ag::Var logits = s.knowledge_classifier(s.est_t.embed(ag::constant(ctx.bank.rows_t(ids))));
    return kdm::knowledge_cls_loss(logits, labels_of(ctx.pseudo_label, ids, "pseudo"));
}

void require_finite(const std::vector<std::pair<const char*, double>>& terms, long step) {
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) {
            throw TrainingError("non-finite " + std::string(name) + " (" + std::to_string(v) + ") at step " +
                                std::to_string(step));
        }
    }
}

template <typename T>
void accumulate(T& acc, const T& x);

template <>
void accumulate(LossTerms& a, const LossTerms& x) {
    a.task += x.task, a.trans += x.trans, a.mi += x.mi, a.zcls += x.zcls, a.adv += x.adv, a.total += x.total;
}

template <>
void accumulate(AuxTerms& a, const AuxTerms& x) {
    a.disc += x.disc, a.q += x.q, a.zcls += x.zcls, a.total += x.total;
}

LossTerms scaled(LossTerms t, double k) {
    t.task *= k, t.trans *= k, t.mi *= k, t.zcls *= k, t.adv *= k, t.total *= k;
    return t;
}

AuxTerms scaled(AuxTerms t, double k) {
    t.disc *= k, t.q *= k, t.zcls *= k, t.total *= k;
    return t;
}

}  // namespace

std::vector<int> PairBatch::recordings() const {
    std::vector<int> out(2 * pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        out[k] = pairs[k].first;
        out[k + pairs.size()] = pairs[k].second;
    }
    return out;
}

PairSampler::PairSampler(const synthcover::Corpus& corpus, std::span<const int> train_ids) {
    std::map<int, std::vector<int>> by_song;
    for (int id : train_ids) by_song[corpus.recording(id).song_id].push_back(id);
    for (auto& [song, ids] : by_song)
        if (ids.size() >= 2) versions_.push_back(std::move(ids));
}

std::pair<int, int> PairSampler::draw_pair(std::size_t song_index, Rng& rng) const {
    const auto& v = versions_[song_index];
    const int n = static_cast<int>(v.size());
    const int a = rng.uniform_int(0, n - 1);
    int b = rng.uniform_int(0, n - 2);
    if (b >= a) ++b;
    return {v[static_cast<std::size_t>(a)], v[static_cast<std::size_t>(b)]};
}

PairBatch PairSampler::sample(int batch_size, Rng& rng) const {
    const int p = batch_size / 2;
    if (p < 2) throw SamplingError("batch size must hold at least two pairs");
    if (eligible_songs() < p) {
        throw SamplingError("only " + std::to_string(eligible_songs()) + " train songs have two versions; " +
                            std::to_string(p) + " needed");
    }
    std::vector<std::size_t> idx(versions_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first p entries are a uniform draw.
    for (int k = 0; k < p; ++k) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(k, static_cast<int>(idx.size()) - 1));
        std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
    }
    PairBatch out;
    for (int k = 0; k < p; ++k) out.pairs.push_back(draw_pair(idx[static_cast<std::size_t>(k)], rng));
    return out;
}

std::vector<PairBatch> PairSampler::epoch(int batch_size, Rng& rng) const {
    const int p = batch_size / 2;
    if (p < 2) throw SamplingError("batch size must hold at least two pairs");
    if (eligible_songs() < p) {
        throw SamplingError("only " + std::to_string(eligible_songs()) + " train songs have two versions; " +
                            std::to_string(p) + " needed");
    }
    std::vector<std::size_t> idx(versions_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    std::vector<PairBatch> out;
    for (std::size_t start = 0; start + static_cast<std::size_t>(p) <= idx.size(); start += static_cast<std::size_t>(p)) {
        PairBatch b;
        for (int k = 0; k < p; ++k) b.pairs.push_back(draw_pair(idx[start + static_cast<std::size_t>(k)], rng));
        out.push_back(std::move(b));
    }
    return out;
}

TrainContext TrainContext::build(const Config& cfg, const synthcover::Corpus& corpus,
                                 const synthcover::CorpusSplit& split, std::optional<kdm::KnowledgeBank> knowledge) {
    TrainContext ctx;
    ctx.corpus = &corpus;
    ctx.split = split;
    const auto n = static_cast<Eigen::Index>(corpus.recordings.size());
    if (split.train.empty()) throw SplitError("training split is empty");

    kdm::KnowledgeBank raw = knowledge ? std::move(*knowledge) : kdm::build_knowledge_bank(corpus, cfg.kdm.f0_dim);
    if (raw.o.rows() != n || raw.t.rows() != n) throw BankError("knowledge bank does not cover every recording");
    if (raw.o.cols() != cfg.kdm.f0_dim) throw BankError("F0 knowledge width differs from kdm.f0_dim");
    if (raw.t.cols() != cfg.data.timbre_dim) throw BankError("timbre knowledge width differs from data.timbre_dim");
    const auto so = kdm::Standardizer::fit(raw.rows_o(split.train));
    const auto st = kdm::Standardizer::fit(raw.rows_t(split.train));
    ctx.bank.o = so.apply(raw.o);
    ctx.bank.t = st.apply(raw.t);

    ctx.song_class.assign(static_cast<std::size_t>(n), -1);
    std::map<int, int> class_of_song;
    for (int song : synthcover::song_ids_of(corpus, split.train)) {
        const int c = static_cast<int>(class_of_song.size());
        class_of_song[song] = c;
    }
    for (int id : split.train) ctx.song_class[static_cast<std::size_t>(id)] = class_of_song.at(corpus.recording(id).song_id);
    ctx.class_count = static_cast<int>(class_of_song.size());

    ctx.pseudo_label.assign(static_cast<std::size_t>(n), -1);
    if (zcls_on(cfg)) {
        const auto points = ctx.bank.rows_t(split.train);
        const auto set = kdm::make_pseudo_labels(points, cfg.kdm.clusters, derive_seed(cfg.train.seed, kKmeansStream),
                                                 cfg.kdm.kmeans_iterations);
        for (Eigen::Index i = 0; i < n; ++i) ctx.pseudo_label[static_cast<std::size_t>(i)] = set.assign(ctx.bank.t.row(i));
        ctx.cluster_count = set.clusters;
    }
    return ctx;
}

TrainState::TrainState(const Config& cfg, int feature_dim, int class_count, int cluster_count) : config(cfg) {
    const int dim = cfg.encoder.dim;
    if (cfg.kdm.f0_dim > dim) throw ConfigError("kdm.f0_dim: must not exceed encoder.dim");
    if (cfg.data.timbre_dim > dim) throw ConfigError("data.timbre_dim: must not exceed encoder.dim");
    if (class_count < 1) throw TrainingError("no training classes");
    Rng rng(derive_seed(cfg.train.seed, kInitStream));
    encoder = Encoder(feature_dim, cfg.encoder, class_count, rng);
    gate = kdm::KnowledgeGate(dim, rng);
    est_o = kdm::VariationalEstimator("kdm.est_o", dim, cfg.kdm.f0_dim, rng);
    est_t = kdm::VariationalEstimator("kdm.est_t", dim, cfg.data.timbre_dim, rng);
    knowledge_classifier = Linear("kdm.kcls", dim, std::max(1, cluster_count), rng);
    disc = gadm::Discriminator(dim, cfg.gadm.disc_hidden, rng);
    main_opt = Adam(cfg.train.lr, cfg.train.weight_decay);
    aux_opt = Adam(cfg.train.lr, cfg.train.weight_decay);
}

ag::ParameterList TrainState::main_parameters() {
    ag::ParameterList out = encoder.parameters();
    if (tradeoff_on(config)) gate.collect(out);
    return out;
}

ag::ParameterList TrainState::aux_parameters() {
    ag::ParameterList out;
    if (adversarial_on(config)) disc.collect(out);
    if (kdm_on(config) && config.kdm.use_f0) est_o.collect(out);
    if (kdm_on(config) && config.kdm.use_timbre) est_t.collect(out);
    if (zcls_on(config)) knowledge_classifier.collect(out);
    return out;
}

ag::ParameterList TrainState::buffers() { return encoder.buffers(); }

ag::ParameterList TrainState::all_parameters() {
    ag::ParameterList out = encoder.parameters();
    gate.collect(out);
    est_o.collect(out);
    est_t.collect(out);
    knowledge_classifier.collect(out);
    disc.collect(out);
    return out;
}

LossTerms MainObjective::values() const {
    return {task.scalar(), trans.scalar(), mi.scalar(), zcls.scalar(), adv.scalar(), total.scalar()};
}

AuxTerms AuxObjective::values() const { return {disc.scalar(), q.scalar(), zcls.scalar(), total.scalar()}; }

MainObjective main_objective(const PairBatch& batch, TrainState& state, const TrainContext& ctx,
                             const Eigen::MatrixXd* fixed_masks) {
    const Config& c = state.config;
    const auto ids = batch.recordings();
    const int p = static_cast<int>(batch.size());
    if (p < 1) throw BatchError("empty pair batch");

    MainObjective obj;
    ag::Var x = state.encoder.encode(frames_of(*ctx.corpus, ids), NormMode::batch);

    ag::Var x_hat = x;
    obj.trans = zero();
    if (gadm_on(c)) {
        obj.masks = fixed_masks ? *fixed_masks : gadm::pair_masks(x.value(), c.gadm.metric, c.gadm.percentile);
        x_hat = gadm::decompose(x, obj.masks);
        obj.trans = gadm::transition_loss(ag::gather_rows(x_hat, iota_ids(0, p)), ag::gather_rows(x_hat, iota_ids(p, p)),
                                          c.gadm.metric);
    } else {
        obj.masks = Eigen::MatrixXd::Ones(x.rows(), x.cols());
    }

    ag::Var e = x_hat;
    if (tradeoff_on(c)) e = state.gate.fuse(x_hat, knowledge_embedding(state, ctx, ids)).value;
    obj.task = ag::cross_entropy(state.encoder.classify(e), labels_of(ctx.song_class, ids, "song"));

    obj.mi = zero();
    if (kdm_on(c)) {
        if (c.kdm.use_f0) obj.mi = ag::add(obj.mi, kdm::vclub_upper(x, ag::constant(ctx.bank.rows_o(ids)), state.est_o));
        if (c.kdm.use_timbre) obj.mi = ag::add(obj.mi, kdm::vclub_upper(x, ag::constant(ctx.bank.rows_t(ids)), state.est_t));
    }

    obj.zcls = zcls_on(c) ? zcls_loss(state, ctx, ids) : zero();

    obj.adv = zero();
    if (adversarial_on(c)) {
        ag::Var d = ag::clip(state.disc.score(x), gadm::kProbClip, 1.0 - gadm::kProbClip);
        obj.adv = c.gadm.paper_literal ? ag::affine(ag::mean(ag::log(ag::affine(d, -1.0, 1.0))), -1.0, 0.0)
                                       : ag::affine(ag::mean(ag::log(d)), -1.0, 0.0);
    }

    obj.total = ag::add(ag::add(ag::add(obj.task, ag::affine(obj.trans, c.gadm.trans_weight, 0.0)), ag::affine(obj.mi, c.kdm.lambda1, 0.0)),
                        ag::add(obj.zcls, obj.adv));
    return obj;
}

AuxObjective aux_objective(const PairBatch& batch, TrainState& state, const TrainContext& ctx) {
    const Config& c = state.config;
    const auto ids = batch.recordings();
    if (batch.size() < 1) throw BatchError("empty pair batch");

    AuxObjective obj;
    const Eigen::MatrixXd xv = state.encoder.encode(frames_of(*ctx.corpus, ids), NormMode::batch).value();
    ag::Var x = ag::constant(xv);

    obj.disc = zero();
    if (adversarial_on(c)) {
        ag::Var x_hat = gadm::decompose(x, gadm::pair_masks(xv, c.gadm.metric, c.gadm.percentile));
        auto losses = gadm::discriminator_losses(x, x_hat, state.disc);
        obj.disc = c.gadm.paper_literal ? losses.d1 : ag::affine(losses.d1, -1.0, 0.0);
    }

    obj.q = zero();
    if (kdm_on(c)) {
        if (c.kdm.use_f0) obj.q = ag::add(obj.q, kdm::estimator_loss(x, ag::constant(ctx.bank.rows_o(ids)), state.est_o));
        if (c.kdm.use_timbre) obj.q = ag::add(obj.q, kdm::estimator_loss(x, ag::constant(ctx.bank.rows_t(ids)), state.est_t));
    }

    obj.zcls = zcls_on(c) ? zcls_loss(state, ctx, ids) : zero();
    obj.total = ag::add(ag::add(obj.disc, ag::affine(obj.q, c.kdm.lambda2, 0.0)), obj.zcls);
    return obj;
}

template <typename F>
auto numeric_guard(F&& f, long step) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw TrainingError(std::string("non-finite value at step ") + std::to_string(step) + ": " + e.what());
    }
}

LossTerms main_step(const PairBatch& batch, TrainState& state, const TrainContext& ctx) {
    MainObjective obj = numeric_guard([&] { return main_objective(batch, state, ctx); }, state.step);
    const LossTerms v = obj.values();
    require_finite({{"L_task", v.task}, {"L_trans", v.trans}, {"L_MI", v.mi}, {"L_zcls", v.zcls}, {"L_adv", v.adv},
                    {"L_1", v.total}},
                   state.step);
    const auto params = state.main_parameters();
    zero_grad(params);
    ag::backward(obj.total);
    for (const auto* p : params) {
        if (!p->grad().allFinite()) throw TrainingError("non-finite gradient for " + p->name() + " at step " + std::to_string(state.step));
    }
    state.encoder.update_running_stats(frames_of(*ctx.corpus, batch.recordings()));
    state.main_opt.step(params);
    ++state.step;
    return v;
}

AuxTerms aux_step(const PairBatch& batch, TrainState& state, const TrainContext& ctx) {
    const auto params = state.aux_parameters();
    if (params.empty()) return {};
    AuxObjective obj = numeric_guard([&] { return aux_objective(batch, state, ctx); }, state.step);
    const AuxTerms v = obj.values();
    require_finite({{"L_disc", v.disc}, {"L_q", v.q}, {"L_zcls", v.zcls}, {"L_2", v.total}}, state.step);
    zero_grad(params);
    ag::backward(obj.total);
    for (const auto* p : params) {
        if (!p->grad().allFinite()) throw TrainingError("non-finite gradient for " + p->name() + " at step " + std::to_string(state.step));
    }
    state.aux_opt.step(params);
    return v;
}

namespace {

double validation_map(const TrainState& s, const TrainContext& ctx) {
    if (ctx.split.valid.empty()) return std::numeric_limits<double>::quiet_NaN();
    return retrieval::evaluate(s.encoder, *ctx.corpus, ctx.split.valid).map;
}

}  // namespace

TrainResult train(TrainState state, const TrainContext& ctx, const TrainHooks& hooks) {
    const Config& cfg = state.config;
    const PairSampler sampler(*ctx.corpus, ctx.split.train);
    TrainResult result;
    result.best_valid_map = -std::numeric_limits<double>::infinity();
    if (state.epoch >= cfg.train.epochs) {
        result.best_valid_map = validation_map(state, ctx);
        result.best_state = state;
        result.final_state = std::move(state);
        return result;
    }

    bool have_best = false;
    while (state.epoch < cfg.train.epochs) {
        Rng rng(derive_seed(cfg.train.seed ^ kEpochStream, static_cast<std::uint64_t>(state.epoch)));
        const auto batches = sampler.epoch(cfg.train.batch_size, rng);
        EpochRecord rec;
        rec.epoch = state.epoch + 1;
        try {
            for (const auto& b : batches) {
                for (int a = 0; a < cfg.train.aux_steps; ++a) accumulate(rec.aux, aux_step(b, state, ctx));
                accumulate(rec.main, main_step(b, state, ctx));
            }
        } catch (const TrainingError& e) {
            if (hooks.on_abort) hooks.on_abort(state, e.what());
            throw;
        }
        const double n = static_cast<double>(batches.size());
        rec.main = scaled(rec.main, 1.0 / n);
        rec.aux = scaled(rec.aux, 1.0 / (n * std::max(1, cfg.train.aux_steps)));
        rec.valid_map = validation_map(state, ctx);
        state.epoch = rec.epoch;
        state.history.push_back(rec);
        // NaN validation MAP (no valid split) keeps the latest state.
        if (!have_best || std::isnan(rec.valid_map) || rec.valid_map > result.best_valid_map) {
            result.best_state = state;
            result.best_valid_map = rec.valid_map;
            have_best = true;
        }
        if (hooks.on_epoch) hooks.on_epoch(state, rec);
    }
    result.final_state = std::move(state);
    return result;
}

TrainResult train(const Config& cfg, const synthcover::Corpus& corpus, const synthcover::CorpusSplit& split,
                  const TrainHooks& hooks) {
    const TrainContext ctx = TrainContext::build(cfg, corpus, split);
    TrainState state(cfg, corpus.config.feature_dim, ctx.class_count, ctx.cluster_count);
    return train(std::move(state), ctx, hooks);
}

}  // namespace discover::training
