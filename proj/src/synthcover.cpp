#include "discover/synthcover.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "discover/array_file.hpp"
#include "discover/error.hpp"
#include "discover/random.hpp"

namespace discover::synthcover {

namespace {

constexpr std::uint64_t kMixingStream = 0x4d4958;   // "MIX"
constexpr std::uint64_t kSongStream = 0x534f4e47;   // "SONG"

std::uint64_t hash_matrix(const Eigen::MatrixXd& m, std::uint64_t h) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const auto f = static_cast<float>(m(r, c));
            h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&f), sizeof f), h);
        }
    }
    return h;
}

template <typename T>
std::uint64_t hash_value(const T& v, std::uint64_t h) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
}

void check_dims(const CorpusConfig& cfg) {
    auto require = [](bool ok, const char* key, const char* what) {
        if (!ok) throw ConfigError(std::string("config key '") + key + "': " + what);
    };
    require(cfg.feature_dim > 0, "data.feature_dim", "must be > 0");
    require(cfg.timbre_dim > 0, "data.timbre_dim", "must be > 0");
    require(cfg.melody_length > 0, "data.melody_length", "must be > 0");
    require(cfg.frames_per_note > 0, "data.frames_per_note", "must be > 0");
    require(cfg.bins_per_semitone > 0, "data.bins_per_semitone", "must be > 0");
    require(cfg.n_songs >= 2, "data.n_songs", "must be >= 2");
    require(cfg.versions_min >= 1 && cfg.versions_max <= 20 && cfg.versions_min <= cfg.versions_max,
            "data.versions_min", "versions range must lie within [1, 20]");
    require(cfg.tempo_min >= 0.5 && cfg.tempo_max <= 2.0 && cfg.tempo_min <= cfg.tempo_max, "data.tempo_min",
            "tempo range must lie within [0.5, 2.0]");
    require(cfg.n_performers >= 1, "data.n_performers", "must be >= 1");
}

struct SongDraw {
    SongSpec song;
    std::vector<VersionSpec> versions;
};

SongDraw draw_song(int song_id, const MixingModel& mixing, const CorpusConfig& cfg) {
    Rng rng(derive_seed(cfg.seed ^ kSongStream, static_cast<std::uint64_t>(song_id)));
    SongDraw d;
    d.song.song_id = song_id;
    d.song.melody.resize(static_cast<std::size_t>(cfg.melody_length));
    for (auto& p : d.song.melody) p = rng.uniform_int(0, 11);
    d.song.base_pitch = rng.uniform(cfg.base_pitch_min, cfg.base_pitch_max);

    const int n_versions = rng.uniform_int(cfg.versions_min, cfg.versions_max);
    for (int v = 0; v < n_versions; ++v) {
        VersionSpec ver;
        ver.song_id = song_id;
        ver.transposition = cfg.max_transposition > 0 ? rng.uniform(-cfg.max_transposition, cfg.max_transposition) : 0.0;
        ver.tempo_scale = rng.uniform(cfg.tempo_min, cfg.tempo_max);
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            ver.performer = rng.uniform_int(0, cfg.n_performers - 1);
            ver.timbre = mixing.performers.row(ver.performer).transpose();
            for (Eigen::Index k = 0; k < ver.timbre.size(); ++k) ver.timbre(k) += cfg.timbre_jitter * rng.normal();
            placed = std::all_of(d.versions.begin(), d.versions.end(), [&](const VersionSpec& other) {
                return (other.timbre - ver.timbre).norm() >= cfg.timbre_margin;
            });
        }
        if (!placed) {
            throw ConfigError("config key 'data.timbre_margin': cannot separate versions of song " +
                              std::to_string(song_id) + " with the given performer pool");
        }
        Eigen::MatrixXd t = ver.timbre;
        round_to_float(t);
        ver.timbre = t.col(0);
        ver.noise_seed = rng();
        d.versions.push_back(std::move(ver));
    }
    return d;
}

}  // namespace

std::uint64_t MixingModel::checksum() const {
    return hash_matrix(performers, hash_matrix(timbre, hash_matrix(melody, fnv1a64("mixing"))));
}

std::uint64_t Corpus::checksum() const {
    std::uint64_t h = fnv1a64("corpus");
    h = hash_value(mixing.checksum(), h);
    for (const auto& s : songs) {
        h = hash_value(s.song_id, h);
        h = hash_value(s.base_pitch, h);
        for (int p : s.melody) h = hash_value(p, h);
    }
    for (const auto& v : versions) {
        h = hash_value(v.recording_id, h);
        h = hash_value(v.song_id, h);
        h = hash_value(v.transposition, h);
        h = hash_value(v.tempo_scale, h);
        h = hash_value(v.performer, h);
        h = hash_value(v.noise_seed, h);
    }
    for (const auto& r : recordings) {
        h = hash_matrix(r.features, h);
        h = hash_matrix(r.f0, h);
        h = hash_matrix(r.timbre, h);
    }
    return h;
}

int pitch_bins(const CorpusConfig& cfg) { return 12 * cfg.bins_per_semitone; }

int frame_count(int melody_length, int frames_per_note, double tempo_scale) {
    return std::max(1, static_cast<int>(std::lround(melody_length * frames_per_note / tempo_scale)));
}

int pitch_bin(double f0, const CorpusConfig& cfg) {
    const int n = pitch_bins(cfg);
    const long b = std::lround(f0 * cfg.bins_per_semitone);
    return static_cast<int>(((b % n) + n) % n);
}

MixingModel make_mixing(const CorpusConfig& cfg) {
    check_dims(cfg);
    Rng rng(derive_seed(cfg.seed, kMixingStream));
    MixingModel m;
    m.melody.resize(cfg.feature_dim, pitch_bins(cfg));
    for (Eigen::Index i = 0; i < m.melody.size(); ++i) m.melody.data()[i] = rng.normal();
    m.timbre.resize(cfg.feature_dim, cfg.timbre_dim);
    const double scale = cfg.timbre_gain / std::sqrt(static_cast<double>(cfg.timbre_dim));
    for (Eigen::Index i = 0; i < m.timbre.size(); ++i) m.timbre.data()[i] = scale * rng.normal();
    m.performers.resize(cfg.n_performers, cfg.timbre_dim);
    for (Eigen::Index i = 0; i < m.performers.size(); ++i) m.performers.data()[i] = rng.normal();
    return m;
}

Recording render_features(const SongSpec& song, const VersionSpec& version, const MixingModel& mixing,
                          const CorpusConfig& cfg) {
    if (mixing.melody.rows() != cfg.feature_dim || mixing.melody.cols() != pitch_bins(cfg) ||
        mixing.timbre.cols() != version.timbre.size()) {
        throw InputError("render_features: mixing model does not match corpus dims");
    }
    const int L = static_cast<int>(song.melody.size());
    const int T = frame_count(L, cfg.frames_per_note, version.tempo_scale);
    Rng rng(version.noise_seed);

    Recording r;
    r.recording_id = version.recording_id;
    r.song_id = version.song_id;
    r.timbre = version.timbre;
    r.f0.resize(T);
    r.features.resize(T, cfg.feature_dim);

    const Eigen::VectorXd timbre_part = mixing.timbre * version.timbre;
    for (int t = 0; t < T; ++t) {
        const int note = std::min(L - 1, static_cast<int>(static_cast<long>(t) * L / T));
        double f0 = song.base_pitch + version.transposition + song.melody[static_cast<std::size_t>(note)];
        if (cfg.f0_noise > 0) f0 += cfg.f0_noise * rng.normal();
        r.f0(t) = f0;
        r.features.row(t) = (mixing.melody.col(pitch_bin(f0, cfg)) + timbre_part).transpose();
    }
    if (cfg.noise > 0) {
        const double rms = std::sqrt(r.features.squaredNorm() / static_cast<double>(r.features.size()));
        const double sd = cfg.noise * rms;
        for (Eigen::Index i = 0; i < r.features.size(); ++i) r.features.data()[i] += sd * rng.normal();
    }
    round_to_float(r.features);
    Eigen::MatrixXd f0 = r.f0;
    round_to_float(f0);
    r.f0 = f0.col(0);
    return r;
}

Corpus generate_corpus(const CorpusConfig& cfg, Execution exec) {
    check_dims(cfg);
    Corpus c;
    c.config = cfg;
    c.mixing = make_mixing(cfg);

    std::vector<SongDraw> draws(static_cast<std::size_t>(cfg.n_songs));
    const int n = cfg.n_songs;
    if (exec == Execution::parallel) {
        // Exceptions must not escape an OpenMP region.
        std::vector<std::string> errors(draws.size());
#pragma omp parallel for schedule(static)
        for (int s = 0; s < n; ++s) {
            try {
                draws[static_cast<std::size_t>(s)] = draw_song(s, c.mixing, cfg);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(s)] = e.what();
            }
        }
        for (const auto& e : errors)
            if (!e.empty()) throw ConfigError(e);
    } else {
        for (int s = 0; s < n; ++s) draws[static_cast<std::size_t>(s)] = draw_song(s, c.mixing, cfg);
    }

    int next_id = 0;
    for (auto& d : draws) {
        for (auto& v : d.versions) {
            v.recording_id = next_id++;
            c.versions.push_back(v);
        }
        c.songs.push_back(std::move(d.song));
    }

    c.recordings.resize(c.versions.size());
    const int n_rec = static_cast<int>(c.versions.size());
    auto render = [&](int k) {
        const auto& v = c.versions[static_cast<std::size_t>(k)];
        c.recordings[static_cast<std::size_t>(k)] =
            render_features(c.songs[static_cast<std::size_t>(v.song_id)], v, c.mixing, cfg);
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (int k = 0; k < n_rec; ++k) render(k);
    } else {
        for (int k = 0; k < n_rec; ++k) render(k);
    }
    return c;
}

std::uint64_t CorpusSplit::digest() const {
    std::uint64_t h = fnv1a64("split");
    h = hash_value(scenario, h);
    for (const auto* part : {&train, &valid, &test}) {
        h = hash_value(part->size(), h);
        for (int id : *part) h = hash_value(id, h);
    }
    return h;
}

std::vector<int> song_ids_of(const Corpus& corpus, std::span<const int> recordings) {
    std::set<int> ids;
    for (int r : recordings) ids.insert(corpus.recording(r).song_id);
    return {ids.begin(), ids.end()};
}

CorpusSplit split_scenarios(const Corpus& corpus, const SplitConfig& cfg) {
    const double sum = cfg.train_ratio + cfg.valid_ratio + cfg.test_ratio;
    if (std::abs(sum - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
    if (cfg.scenario != 1 && cfg.scenario != 2) throw SplitError("scenario must be 1 or 2");
    if (cfg.scenario == 2 && !(cfg.seen_fraction > 0 && cfg.seen_fraction <= 1)) {
        throw SplitError("scenario 2 requires seen_fraction in (0, 1]");
    }

    const int n = static_cast<int>(corpus.songs.size());
    const int n_train = static_cast<int>(std::lround(cfg.train_ratio * n));
    const int n_valid = static_cast<int>(std::lround(cfg.valid_ratio * n));
    const int n_test = n - n_train - n_valid;
    if (n_train < 1 || n_test < 1) throw SplitError("corpus too small for the requested ratios");

    std::vector<std::vector<int>> by_song(static_cast<std::size_t>(n));
    for (const auto& v : corpus.versions) by_song[static_cast<std::size_t>(v.song_id)].push_back(v.recording_id);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 0x53504c4954));   // "SPLIT"
    rng.shuffle(std::span<int>(order));

    CorpusSplit split;
    split.scenario = cfg.scenario;
    split.seen_fraction = cfg.scenario == 2 ? cfg.seen_fraction : 0.0;

    std::vector<int> seen;
    std::vector<int> rest;
    if (cfg.scenario == 2) {
        const int want = static_cast<int>(std::lround(cfg.seen_fraction * n_test));
        for (int s : order) {
            if (static_cast<int>(seen.size()) < want && by_song[static_cast<std::size_t>(s)].size() >= 3) {
                seen.push_back(s);
            } else {
                rest.push_back(s);
            }
        }
        if (static_cast<int>(seen.size()) < want) {
            throw SplitError("corpus too small to satisfy seen_fraction: need " + std::to_string(want) +
                             " test songs with >= 3 versions, found " + std::to_string(seen.size()));
        }
    } else {
        rest = order;
    }

    auto take = [&](std::vector<int>& dst, int song) {
        const auto& recs = by_song[static_cast<std::size_t>(song)];
        dst.insert(dst.end(), recs.begin(), recs.end());
    };
    for (int s : seen) {
        Rng pick(derive_seed(cfg.seed, 0x5345454e00ull + static_cast<std::uint64_t>(s)));
        const auto& recs = by_song[static_cast<std::size_t>(s)];
        const auto donated = static_cast<std::size_t>(pick() % recs.size());
        for (std::size_t k = 0; k < recs.size(); ++k) (k == donated ? split.train : split.test).push_back(recs[k]);
    }
    const int pure_test = n_test - static_cast<int>(seen.size());
    std::size_t cursor = 0;
    for (int k = 0; k < pure_test; ++k) take(split.test, rest[cursor++]);
    for (int k = 0; k < n_valid; ++k) take(split.valid, rest[cursor++]);
    while (cursor < rest.size()) take(split.train, rest[cursor++]);

    std::sort(split.train.begin(), split.train.end());
    std::sort(split.valid.begin(), split.valid.end());
    std::sort(split.test.begin(), split.test.end());
    split.seen_songs = static_cast<int>(seen.size());
    return split;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    using nlohmann::json;
    json m;
    m["format"] = "discover-corpus";
    m["version"] = 1;
    Config cfg;
    cfg.data = corpus.config;
    m["config"] = cfg.to_text();
    m["seed"] = corpus.config.seed;
    m["dims"] = {{"feature_dim", corpus.config.feature_dim},
                 {"timbre_dim", corpus.config.timbre_dim},
                 {"pitch_bins", pitch_bins(corpus.config)}};
    m["mixing_checksum"] = corpus.mixing.checksum();
    m["corpus_checksum"] = corpus.checksum();
    json songs = json::array();
    for (const auto& s : corpus.songs) songs.push_back({{"song_id", s.song_id}, {"base_pitch", s.base_pitch}, {"melody", s.melody}});
    m["songs"] = std::move(songs);

    json versions = json::array();
    Eigen::Index total = 0;
    for (const auto& r : corpus.recordings) total += r.frames();
    Eigen::MatrixXd features(total, corpus.config.feature_dim);
    Eigen::MatrixXd f0(total, 1);
    Eigen::MatrixXd timbre(static_cast<Eigen::Index>(corpus.recordings.size()), corpus.config.timbre_dim);
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < corpus.versions.size(); ++k) {
        const auto& v = corpus.versions[k];
        const auto& r = corpus.recordings[k];
        versions.push_back({{"recording_id", v.recording_id},
                            {"song_id", v.song_id},
                            {"transposition", v.transposition},
                            {"tempo_scale", v.tempo_scale},
                            {"performer", v.performer},
                            {"noise_seed", v.noise_seed},
                            {"frame_offset", offset},
                            {"frames", r.frames()}});
        features.middleRows(offset, r.frames()) = r.features;
        f0.middleRows(offset, r.frames()) = r.f0;
        timbre.row(static_cast<Eigen::Index>(k)) = r.timbre.transpose();
        offset += r.frames();
    }
    m["versions"] = std::move(versions);
    m["arrays"] = {{"features", "features.bin"}, {"f0", "f0.bin"}, {"timbre", "timbre.bin"}};

    write_array(dir / "features.bin", features, 2);
    write_array(dir / "f0.bin", f0, 1);
    write_array(dir / "timbre.bin", timbre, 2);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
    using nlohmann::json;
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("no corpus manifest in " + dir.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("corpus manifest: " + std::string(e.what()));
    }
    if (m.value("format", "") != "discover-corpus") throw FormatError("not a discover corpus: " + dir.string());

    Corpus c;
    try {
        c.config = Config::from_text(m.at("config").get<std::string>()).data;
        c.mixing = make_mixing(c.config);
        if (c.mixing.checksum() != m.at("mixing_checksum").get<std::uint64_t>()) {
            throw FormatError("mixing-matrix checksum mismatch in " + dir.string());
        }
        for (const auto& s : m.at("songs")) {
            SongSpec spec;
            spec.song_id = s.at("song_id").get<int>();
            spec.base_pitch = s.at("base_pitch").get<double>();
            spec.melody = s.at("melody").get<std::vector<int>>();
            c.songs.push_back(std::move(spec));
        }
        const Eigen::MatrixXd features = read_array(dir / "features.bin");
        const Eigen::MatrixXd f0 = read_array(dir / "f0.bin");
        const Eigen::MatrixXd timbre = read_array(dir / "timbre.bin");
        if (features.cols() != c.config.feature_dim || timbre.cols() != c.config.timbre_dim ||
            f0.rows() != features.rows()) {
            throw FormatError("corpus arrays do not match manifest dims");
        }
        for (const auto& v : m.at("versions")) {
            VersionSpec spec;
            spec.recording_id = v.at("recording_id").get<int>();
            spec.song_id = v.at("song_id").get<int>();
            spec.transposition = v.at("transposition").get<double>();
            spec.tempo_scale = v.at("tempo_scale").get<double>();
            spec.performer = v.at("performer").get<int>();
            spec.noise_seed = v.at("noise_seed").get<std::uint64_t>();
            const auto offset = v.at("frame_offset").get<Eigen::Index>();
            const auto frames = v.at("frames").get<Eigen::Index>();
            if (spec.recording_id != static_cast<int>(c.versions.size()) || offset + frames > features.rows()) {
                throw FormatError("corpus version table is inconsistent");
            }
            spec.timbre = timbre.row(spec.recording_id).transpose();
            Recording r;
            r.recording_id = spec.recording_id;
            r.song_id = spec.song_id;
            r.features = features.middleRows(offset, frames);
            r.f0 = f0.middleRows(offset, frames).col(0);
            r.timbre = spec.timbre;
            c.versions.push_back(std::move(spec));
            c.recordings.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw FormatError("corpus manifest: " + std::string(e.what()));
    }
    if (c.checksum() != m.at("corpus_checksum").get<std::uint64_t>()) {
        throw FormatError("corpus checksum mismatch in " + dir.string());
    }
    return c;
}

}  // namespace discover::synthcover
