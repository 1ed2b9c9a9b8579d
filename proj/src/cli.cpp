#include "discover/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "discover/checkpoint.hpp"
#include "discover/config.hpp"
#include "discover/error.hpp"
#include "discover/kdm.hpp"
#include "discover/kernels.hpp"
#include "discover/retrieval.hpp"
#include "discover/synthcover.hpp"
#include "discover/training.hpp"

namespace discover {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os || !(os << text)) throw InputError("cannot write " + path.string());
}

/// Provenance record written next to every command's outputs.
struct RunManifest {
    std::string command;
    std::vector<std::string> args;
    std::string started = utc_now();
    json extra = json::object();

    void write(const fs::path& dir, const Config& cfg) const {
        fs::create_directories(dir);
        json j;
        j["tool"] = "discover";
        j["version"] = kVersion;
        j["command"] = command;
        j["args"] = args;
        j["started"] = started;
        j["finished"] = utc_now();
        j["config_digest"] = hex(cfg.digest());
        j["seed"] = cfg.train.seed;
        j["data_seed"] = cfg.data.seed;
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        write_text(dir / "run.json", j.dump(2) + "\n");
        write_text(dir / "config.snapshot", cfg.to_text());
    }
};

Config load_config(const std::string& path) {
    Config cfg = Config::load(path);
    apply_env_overrides(cfg);
    cfg.validate();
    return cfg;
}

std::optional<kdm::KnowledgeBank> user_knowledge(const fs::path& data, Eigen::Index rows) {
    const auto o = data / "knowledge_o.bin";
    const auto t = data / "knowledge_t.bin";
    const bool ho = fs::exists(o), ht = fs::exists(t);
    if (!ho && !ht) return std::nullopt;
    if (ho != ht) throw BankError("knowledge_o.bin and knowledge_t.bin must be supplied together");
    return kdm::load_knowledge_bank(o, t, rows);
}

const std::vector<int>& split_ids(const synthcover::CorpusSplit& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "valid") return s.valid;
    if (name == "test") return s.test;
    throw ConfigError("split: expected train, valid or test, got '" + name + "'");
}

json terms_json(const training::EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"L_task", r.main.task},
            {"L_trans", r.main.trans},
            {"L_MI", r.main.mi},
            {"L_zcls", r.main.zcls},
            {"L_adv", r.main.adv},
            {"L_1", r.main.total},
            {"L_disc", r.aux.disc},
            {"L_q", r.aux.q},
            {"L_2", r.aux.total},
            {"valid_map", std::isnan(r.valid_map) ? json(nullptr) : json(r.valid_map)}};
}

void apply_ablation(Config& cfg, const std::vector<std::string>& ablate) {
    for (const auto& a : ablate) {
        if (a == "kdm") cfg.kdm.enabled = false;
        else if (a == "gadm") cfg.gadm.enabled = false;
        else throw ConfigError("ablate: expected kdm or gadm, got '" + a + "'");
    }
}

struct TrainedRun {
    training::TrainResult result;
    retrieval::MetricsReport test;
};

TrainedRun train_and_test(const Config& cfg, const synthcover::Corpus& corpus,
                          const std::optional<kdm::KnowledgeBank>& knowledge, const training::TrainHooks& hooks = {}) {
    const auto split = synthcover::split_scenarios(corpus, cfg.split);
    const auto ctx = training::TrainContext::build(cfg, corpus, split, knowledge);
    training::TrainState state(cfg, corpus.config.feature_dim, ctx.class_count, ctx.cluster_count);
    TrainedRun run{training::train(std::move(state), ctx, hooks), {}};
    run.test = retrieval::evaluate(run.result.best_state.encoder, corpus, split.test);
    run.test.scenario = split.scenario;
    run.test.split = "test";
    run.test.split_digest = split.digest();
    return run;
}

Config with_corpus(Config cfg, const synthcover::Corpus& corpus) {
    cfg.data = corpus.config;
    return cfg;
}

// ---- commands -------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, bool force, const RunManifest& base,
                 std::ostream& out) {
    const Config cfg = load_config(config_path);
    const fs::path dir(out_dir);
    if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw InputError("output directory " + dir.string() + " is not empty (use --force)");
    }
    const auto corpus = synthcover::generate_corpus(cfg.data);
    synthcover::save_corpus(corpus, dir);
    RunManifest m = base;
    m.extra["corpus_checksum"] = hex(corpus.checksum());
    m.extra["recordings"] = corpus.recordings.size();
    m.write(dir, cfg);
    out << json{{"songs", corpus.songs.size()}, {"recordings", corpus.recordings.size()},
                {"corpus_checksum", hex(corpus.checksum())}}
               .dump()
        << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              const std::vector<std::string>& ablate, std::optional<int> epochs, const RunManifest& base,
              std::ostream& out, std::ostream& err) {
    Config cfg = load_config(config_path);
    apply_ablation(cfg, ablate);
    if (epochs) cfg.set("train.epochs", std::to_string(*epochs));
    const auto corpus = synthcover::load_corpus(data_dir);
    cfg = with_corpus(cfg, corpus);
    cfg.validate();
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    training::TrainHooks hooks;
    hooks.on_epoch = [&](const training::TrainState& s, const training::EpochRecord& r) {
        err << terms_json(r).dump() << "\n";
        save_checkpoint(dir / "last.ckpt", s);
    };
    hooks.on_abort = [&](const training::TrainState& s, const std::string& why) {
        save_checkpoint(dir / "abort.ckpt", s);
        err << "training aborted: " << why << "\n";
    };
    const auto run = train_and_test(cfg, corpus, user_knowledge(data_dir, static_cast<Eigen::Index>(corpus.recordings.size())), hooks);
    save_checkpoint(dir / "model.ckpt", run.result.best_state);

    json history = json::array();
    for (const auto& r : run.result.final_state.history) history.push_back(terms_json(r));
    write_text(dir / "history.json", history.dump(2) + "\n");
    write_text(dir / "metrics.json", run.test.to_json() + "\n");

    RunManifest m = base;
    m.extra["epochs"] = run.result.final_state.epoch;
    m.extra["best_valid_map"] = std::isfinite(run.result.best_valid_map) ? json(run.result.best_valid_map) : json(nullptr);
    m.extra["test_map"] = run.test.map;
    m.extra["corpus_checksum"] = hex(corpus.checksum());
    m.write(dir, cfg);
    out << run.test.to_json() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split_name,
             std::optional<int> scenario, const std::string& out_dir, bool per_query, const RunManifest& base,
             std::ostream& out) {
    auto state = load_checkpoint(ckpt);
    Config cfg = state.config;
    if (scenario) cfg.set("split.scenario", std::to_string(*scenario));
    cfg.validate();
    const auto corpus = synthcover::load_corpus(data_dir);
    const auto split = synthcover::split_scenarios(corpus, cfg.split);
    auto report = retrieval::evaluate(state.encoder, corpus, split_ids(split, split_name));
    report.scenario = split.scenario;
    report.split = split_name;
    report.split_digest = split.digest();
    const std::string text = report.to_json(per_query);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / "metrics.json", text + "\n");
        RunManifest m = base;
        m.extra["map"] = report.map;
        m.write(out_dir, cfg);
    }
    out << text << "\n";
    return kExitOk;
}

int cmd_embed(const std::string& ckpt, const std::string& data_dir, const std::string& split_name,
              const std::string& out_dir, const RunManifest& base, std::ostream& out) {
    auto state = load_checkpoint(ckpt);
    const auto corpus = synthcover::load_corpus(data_dir);
    const auto split = synthcover::split_scenarios(corpus, state.config.split);
    const auto& ids = split_ids(split, split_name);
    const Eigen::MatrixXd reps = kernels::encode_all(state.encoder, corpus, ids, Execution::parallel);

    fs::create_directories(out_dir);
    const fs::path file = fs::path(out_dir) / "embeddings.csv";
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw InputError("cannot write " + file.string());
    os << "recording_id";
    for (Eigen::Index k = 0; k < reps.cols(); ++k) os << ",e" << k;
    os << "\n" << std::setprecision(17);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        os << ids[r];
        for (Eigen::Index k = 0; k < reps.cols(); ++k) os << "," << reps(static_cast<Eigen::Index>(r), k);
        os << "\n";
    }
    if (!os) throw InputError("failed writing " + file.string());
    RunManifest m = base;
    m.extra["rows"] = ids.size();
    m.write(out_dir, state.config);
    out << file.string() << "\n";
    return kExitOk;
}

struct SweepVariant {
    std::string axis_value;
    Config cfg;
};

std::vector<SweepVariant> sweep_variants(const Config& base, const std::string& axis) {
    std::vector<SweepVariant> out;
    if (axis == "metric") {
        for (Metric m : {Metric::euclidean, Metric::manhattan, Metric::cosine}) {
            Config c = base;
            c.gadm.metric = m;
            out.push_back({std::string(to_string(m)), c});
        }
    } else if (axis == "clusters") {
        for (int k : {100, 1000, 5000, 10000}) {
            Config c = base;
            c.kdm.clusters = k;
            out.push_back({std::to_string(k), c});
        }
    } else if (axis == "knowledge") {
        const std::pair<const char*, std::pair<bool, bool>> kinds[] = {
            {"F0", {true, false}}, {"timbre", {false, true}}, {"both", {true, true}}};
        for (const auto& [name, flags] : kinds) {
            for (bool tradeoff : {false, true}) {
                Config c = base;
                c.kdm.use_f0 = flags.first;
                c.kdm.use_timbre = flags.second;
                c.kdm.tradeoff = tradeoff;
                out.push_back({std::string(name) + (tradeoff ? "+tradeoff" : ""), c});
            }
        }
    } else {
        throw ConfigError("axis: expected metric, clusters or knowledge, got '" + axis + "'");
    }
    return out;
}

int cmd_sweep(const std::string& config_path, const std::string& data_dir, const std::string& axis,
              const std::string& out_dir, int jobs, const RunManifest& base, std::ostream& out) {
    if (jobs < 1) throw ConfigError("jobs: must be >= 1");
    Config cfg = load_config(config_path);
    const auto corpus = synthcover::load_corpus(data_dir);
    cfg = with_corpus(cfg, corpus);
    const auto variants = sweep_variants(cfg, axis);
    const auto knowledge = user_knowledge(data_dir, static_cast<Eigen::Index>(corpus.recordings.size()));

    std::vector<json> rows(variants.size());
    const long n = static_cast<long>(variants.size());
#pragma omp parallel for num_threads(jobs) schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) {
        const auto& v = variants[static_cast<std::size_t>(i)];
        json row{{"axis", axis}, {"value", v.axis_value}};
        try {
            v.cfg.validate();
            const auto run = train_and_test(v.cfg, corpus, knowledge);
            row["status"] = "ok";
            row["map"] = run.test.map;
            row["p10"] = run.test.p10;
            row["mr1"] = run.test.mr1;
        } catch (const std::exception& e) {
            row["status"] = std::string("error: ") + e.what();
            row["map"] = nullptr;
            row["p10"] = nullptr;
            row["mr1"] = nullptr;
        }
        rows[static_cast<std::size_t>(i)] = std::move(row);
    }

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << std::setprecision(17) << "axis,value,status,map,p10,mr1\n";
    for (const auto& r : rows) {
        csv << axis << "," << r["value"].get<std::string>() << "," << (r["status"] == "ok" ? "ok" : "error");
        for (const char* k : {"map", "p10", "mr1"}) {
            csv << ",";
            if (!r[k].is_null()) csv << r[k].get<double>();
        }
        csv << "\n";
    }
    write_text(fs::path(out_dir) / "sweep.csv", csv.str());
    write_text(fs::path(out_dir) / "sweep.json", json(rows).dump(2) + "\n");
    RunManifest m = base;
    m.extra["axis"] = axis;
    m.extra["rows"] = rows.size();
    m.write(out_dir, cfg);
    out << json(rows).dump() << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cover-song representation disentanglement lab", "discover"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config, data, outp, ckpt, split = "test", axis;
    std::vector<std::string> ablate;
    bool force = false, per_query = false;
    std::optional<int> epochs, scenario;
    int jobs = 1;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic cover corpus");
    gen->add_option("--config", config, "Config file")->required();
    gen->add_option("--out", outp, "Output directory")->required();
    gen->add_flag("--force", force, "Overwrite a non-empty output directory");

    auto* tr = app.add_subcommand("train", "Train a model");
    tr->add_option("--config", config, "Config file")->required();
    tr->add_option("--data", data, "Corpus directory")->required();
    tr->add_option("--out", outp, "Run directory")->required();
    tr->add_option("--ablate", ablate, "Disable a module (kdm, gadm); repeatable");
    tr->add_option("--epochs", epochs, "Override train.epochs");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    ev->add_option("--data", data, "Corpus directory")->required();
    ev->add_option("--split", split, "train, valid or test");
    ev->add_option("--scenario", scenario, "Override split.scenario (1 or 2)");
    ev->add_option("--out", outp, "Directory for metrics.json and run.json");
    ev->add_flag("--per-query", per_query, "Include per-query results");

    auto* em = app.add_subcommand("embed", "Export representations as CSV");
    em->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    em->add_option("--data", data, "Corpus directory")->required();
    em->add_option("--split", split, "train, valid or test");
    em->add_option("--out", outp, "Output directory")->required();

    auto* sw = app.add_subcommand("sweep", "Train and test one model per axis value");
    sw->add_option("--config", config, "Config file")->required();
    sw->add_option("--data", data, "Corpus directory")->required();
    sw->add_option("--axis", axis, "metric, clusters or knowledge")->required();
    sw->add_option("--out", outp, "Output directory")->required();
    sw->add_option("--jobs", jobs, "Concurrent runs");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    RunManifest base;
    base.args = args;
    try {
        if (*gen) {
            base.command = "gen-data";
            return cmd_gen_data(config, outp, force, base, out);
        }
        if (*tr) {
            base.command = "train";
            return cmd_train(config, data, outp, ablate, epochs, base, out, err);
        }
        if (*ev) {
            base.command = "eval";
            return cmd_eval(ckpt, data, split, scenario, outp, per_query, base, out);
        }
        if (*em) {
            base.command = "embed";
            return cmd_embed(ckpt, data, split, outp, base, out);
        }
        if (*sw) {
            base.command = "sweep";
            return cmd_sweep(config, data, axis, outp, jobs, base, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace discover
