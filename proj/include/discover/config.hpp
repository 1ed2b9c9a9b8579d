#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace discover {

enum class Metric { euclidean, manhattan, cosine };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

struct CorpusConfig {
    int n_songs = 300;
    int versions_min = 2;
    int versions_max = 3;
    int melody_length = 16;
    int frames_per_note = 4;
    int feature_dim = 48;
    int timbre_dim = 16;
    int bins_per_semitone = 4;
    double base_pitch_min = 55.0;
    double base_pitch_max = 67.0;
    double max_transposition = 1.0;   // semitones, uniform in [-max, max]
    double tempo_min = 0.8;
    double tempo_max = 1.25;
    int n_performers = 8;
    double timbre_jitter = 0.1;
    double timbre_gain = 1.0;
    double timbre_margin = 0.5;
    double noise = 0.1;                 // fraction of the clean feature RMS
    double f0_noise = 0.05;             // semitones
    std::uint64_t seed = 7;
};

struct SplitConfig {
    int scenario = 1;
    double seen_fraction = 0.25;
    double train_ratio = 0.8;
    double valid_ratio = 0.1;
    double test_ratio = 0.1;
    std::uint64_t seed = 11;
};

struct EncoderConfig {
    int hidden = 64;
    int dim = 64;
    double norm_eps = 1e-5;
    bool batch_norm = true;
};

struct KdmConfig {
    bool enabled = true;
    bool use_f0 = true;
    bool use_timbre = true;
    bool tradeoff = true;
    int clusters = 100;
    int kmeans_iterations = 50;
    double lambda1 = 0.05;
    double lambda2 = 1.0;
    int f0_dim = 16;
};

struct GadmConfig {
    bool enabled = true;
    bool adversarial = true;
    Metric metric = Metric::cosine;
    double percentile = 100.0;
    bool paper_literal = false;
    int disc_hidden = 64;
    double trans_weight = 1.0;
};

struct TrainConfig {
    int batch_size = 32;
    double lr = 4e-4;
    double weight_decay = 1e-5;
    int epochs = 150;
    int aux_steps = 1;   // aux steps per main step
    std::uint64_t seed = 1;
};

struct Config {
    CorpusConfig data;
    SplitConfig split;
    EncoderConfig encoder;
    KdmConfig kdm;
    GadmConfig gadm;
    TrainConfig train;

    /// Applies one `key = value` assignment. Unknown keys and unparsable
    /// values raise ConfigError naming the key.
    void set(std::string_view key, std::string_view value);

    /// Checks cross-field invariants; throws ConfigError naming the key.
    void validate() const;

    /// Canonical `key = value` listing of every key, in a fixed order.
    std::string to_text() const;

    /// FNV-1a 64 of to_text().
    std::uint64_t digest() const;

    static std::vector<std::string> keys();
    static Config from_text(std::string_view text);
    static Config load(const std::filesystem::path& path);
};

/// Overrides train.seed from the DISCOVER_SEED environment variable, if set.
void apply_env_overrides(Config& cfg);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 14695981039346656037ull);

}  // namespace discover
