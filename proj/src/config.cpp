#include "discover/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "discover/error.hpp"

namespace discover {

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::euclidean: return "euclidean";
        case Metric::manhattan: return "manhattan";
        case Metric::cosine: return "cosine";
    }
    return "euclidean";
}

Metric parse_metric(std::string_view s) {
    if (s == "euclidean") return Metric::euclidean;
    if (s == "manhattan") return Metric::manhattan;
    if (s == "cosine") return Metric::cosine;
    throw ConfigError("unknown metric '" + std::string(s) + "'");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected boolean, got '" + std::string(v) + "'");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::string key;
    std::function<void(Config&, std::string_view)> set;
    std::function<std::string(const Config&)> get;
};

template <typename T>
Field field(std::string key, T Config::*group, auto member) {
    Field f;
    f.key = key;
    f.set = [key, group, member](Config& c, std::string_view v) {
        auto& slot = (c.*group).*member;
        using V = std::remove_reference_t<decltype(slot)>;
        if constexpr (std::is_same_v<V, bool>) {
            slot = parse_bool(key, v);
        } else if constexpr (std::is_same_v<V, Metric>) {
            try {
                slot = parse_metric(v);
            } catch (const ConfigError&) {
                throw ConfigError("config key '" + key + "': unknown metric '" + std::string(v) + "'");
            }
        } else {
            slot = parse_number<V>(key, v);
        }
    };
    f.get = [group, member](const Config& c) -> std::string {
        const auto& slot = (c.*group).*member;
        using V = std::remove_cvref_t<decltype(slot)>;
        if constexpr (std::is_same_v<V, bool>) {
            return slot ? "true" : "false";
        } else if constexpr (std::is_same_v<V, Metric>) {
            return std::string(to_string(slot));
        } else if constexpr (std::is_floating_point_v<V>) {
            return format_double(slot);
        } else {
            return std::to_string(slot);
        }
    };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        field("data.n_songs", &Config::data, &CorpusConfig::n_songs),
        field("data.versions_min", &Config::data, &CorpusConfig::versions_min),
        field("data.versions_max", &Config::data, &CorpusConfig::versions_max),
        field("data.melody_length", &Config::data, &CorpusConfig::melody_length),
        field("data.frames_per_note", &Config::data, &CorpusConfig::frames_per_note),
        field("data.feature_dim", &Config::data, &CorpusConfig::feature_dim),
        field("data.timbre_dim", &Config::data, &CorpusConfig::timbre_dim),
        field("data.bins_per_semitone", &Config::data, &CorpusConfig::bins_per_semitone),
        field("data.base_pitch_min", &Config::data, &CorpusConfig::base_pitch_min),
        field("data.base_pitch_max", &Config::data, &CorpusConfig::base_pitch_max),
        field("data.max_transposition", &Config::data, &CorpusConfig::max_transposition),
        field("data.tempo_min", &Config::data, &CorpusConfig::tempo_min),
        field("data.tempo_max", &Config::data, &CorpusConfig::tempo_max),
        field("data.n_performers", &Config::data, &CorpusConfig::n_performers),
        field("data.timbre_jitter", &Config::data, &CorpusConfig::timbre_jitter),
        field("data.timbre_gain", &Config::data, &CorpusConfig::timbre_gain),
        field("data.timbre_margin", &Config::data, &CorpusConfig::timbre_margin),
        field("data.noise", &Config::data, &CorpusConfig::noise),
        field("data.f0_noise", &Config::data, &CorpusConfig::f0_noise),
        field("data.seed", &Config::data, &CorpusConfig::seed),
        field("split.scenario", &Config::split, &SplitConfig::scenario),
        field("split.seen_fraction", &Config::split, &SplitConfig::seen_fraction),
        field("split.train_ratio", &Config::split, &SplitConfig::train_ratio),
        field("split.valid_ratio", &Config::split, &SplitConfig::valid_ratio),
        field("split.test_ratio", &Config::split, &SplitConfig::test_ratio),
        field("split.seed", &Config::split, &SplitConfig::seed),
        field("encoder.hidden", &Config::encoder, &EncoderConfig::hidden),
        field("encoder.dim", &Config::encoder, &EncoderConfig::dim),
        field("encoder.norm_eps", &Config::encoder, &EncoderConfig::norm_eps),
        field("encoder.batch_norm", &Config::encoder, &EncoderConfig::batch_norm),
        field("kdm.enabled", &Config::kdm, &KdmConfig::enabled),
        field("kdm.use_f0", &Config::kdm, &KdmConfig::use_f0),
        field("kdm.use_timbre", &Config::kdm, &KdmConfig::use_timbre),
        field("kdm.tradeoff", &Config::kdm, &KdmConfig::tradeoff),
        field("kdm.clusters", &Config::kdm, &KdmConfig::clusters),
        field("kdm.kmeans_iterations", &Config::kdm, &KdmConfig::kmeans_iterations),
        field("kdm.lambda1", &Config::kdm, &KdmConfig::lambda1),
        field("kdm.lambda2", &Config::kdm, &KdmConfig::lambda2),
        field("kdm.f0_dim", &Config::kdm, &KdmConfig::f0_dim),
        field("gadm.enabled", &Config::gadm, &GadmConfig::enabled),
        field("gadm.adversarial", &Config::gadm, &GadmConfig::adversarial),
        field("gadm.metric", &Config::gadm, &GadmConfig::metric),
        field("gadm.percentile", &Config::gadm, &GadmConfig::percentile),
        field("gadm.paper_literal", &Config::gadm, &GadmConfig::paper_literal),
        field("gadm.disc_hidden", &Config::gadm, &GadmConfig::disc_hidden),
        field("gadm.trans_weight", &Config::gadm, &GadmConfig::trans_weight),
        field("train.batch_size", &Config::train, &TrainConfig::batch_size),
        field("train.lr", &Config::train, &TrainConfig::lr),
        field("train.weight_decay", &Config::train, &TrainConfig::weight_decay),
        field("train.epochs", &Config::train, &TrainConfig::epochs),
        field("train.aux_steps", &Config::train, &TrainConfig::aux_steps),
        field("train.seed", &Config::train, &TrainConfig::seed),
    };
    return table;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
}

}  // namespace

void Config::set(std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(*this, trim(value));
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void Config::validate() const {
    if (data.n_songs < 2) bad("data.n_songs", "must be >= 2");
    if (data.versions_min < 1 || data.versions_max > 20 || data.versions_min > data.versions_max) {
        bad("data.versions_min", "versions range must lie within [1, 20]");
    }
    if (data.melody_length <= 0) bad("data.melody_length", "must be > 0");
    if (data.frames_per_note <= 0) bad("data.frames_per_note", "must be > 0");
    if (data.feature_dim <= 0) bad("data.feature_dim", "must be > 0");
    if (data.timbre_dim <= 0) bad("data.timbre_dim", "must be > 0");
    if (data.bins_per_semitone <= 0) bad("data.bins_per_semitone", "must be > 0");
    if (data.tempo_min < 0.5 || data.tempo_max > 2.0 || data.tempo_min > data.tempo_max) {
        bad("data.tempo_min", "tempo range must lie within [0.5, 2.0]");
    }
    if (data.n_performers < 1) bad("data.n_performers", "must be >= 1");
    if (data.noise < 0) bad("data.noise", "must be >= 0");
    if (data.f0_noise < 0) bad("data.f0_noise", "must be >= 0");
    if (data.timbre_margin < 0) bad("data.timbre_margin", "must be >= 0");
    if (split.scenario != 1 && split.scenario != 2) bad("split.scenario", "must be 1 or 2");
    if (split.scenario == 2 && !(split.seen_fraction > 0 && split.seen_fraction <= 1)) {
        bad("split.seen_fraction", "must lie in (0, 1] for scenario 2");
    }
    const double ratio_sum = split.train_ratio + split.valid_ratio + split.test_ratio;
    if (std::abs(ratio_sum - 1.0) > 1e-9 || split.train_ratio <= 0 || split.valid_ratio < 0 || split.test_ratio <= 0) {
        bad("split.train_ratio", "split ratios must be non-negative and sum to 1");
    }
    if (encoder.hidden <= 0) bad("encoder.hidden", "must be > 0");
    if (encoder.dim <= 1) bad("encoder.dim", "must be > 1");
    if (kdm.clusters < 1) bad("kdm.clusters", "must be >= 1");
    if (kdm.lambda1 < 0) bad("kdm.lambda1", "must be >= 0");
    if (kdm.lambda2 < 0) bad("kdm.lambda2", "must be >= 0");
    if (kdm.f0_dim < 14) bad("kdm.f0_dim", "must be >= 14 (number of contour statistics)");
    if (kdm.f0_dim > encoder.dim || data.timbre_dim > encoder.dim) {
        bad("kdm.f0_dim", "knowledge dims must not exceed encoder.dim");
    }
    if (!(gadm.percentile > 0 && gadm.percentile <= 100)) bad("gadm.percentile", "must lie in (0, 100]");
    if (gadm.disc_hidden <= 0) bad("gadm.disc_hidden", "must be > 0");
    if (!(gadm.trans_weight >= 0)) bad("gadm.trans_weight", "must be >= 0");
    if (train.batch_size < 2 || train.batch_size % 2 != 0) bad("train.batch_size", "must be even and >= 2");
    if (train.lr <= 0) bad("train.lr", "must be > 0");
    if (train.weight_decay < 0) bad("train.weight_decay", "must be >= 0");
    if (train.epochs < 0) bad("train.epochs", "must be >= 0");
    if (train.aux_steps < 0) bad("train.aux_steps", "must be >= 0");
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
    return out;
}

std::uint64_t Config::digest() const { return fnv1a64(to_text()); }

std::vector<std::string> Config::keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

Config Config::from_text(std::string_view text) {
    Config cfg;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void apply_env_overrides(Config& cfg) {
    if (const char* s = std::getenv("DISCOVER_SEED"); s != nullptr && *s != '\0') {
        cfg.set("train.seed", s);
    }
}

}  // namespace discover
