#pragma once

// Synthetic cover-song corpus with known version-invariant (melody) and
// version-variant (transposition, timbre) factors.
//
// Each frame is a linear mixture
//     feature(t) = W_melody * onehot(pitch_bin(f0(t))) + W_timbre * timbre + noise
// with W drawn once per corpus. Pitch bins are folded into one octave at
// bins_per_semitone resolution.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "discover/config.hpp"
#include "discover/execution.hpp"

namespace discover::synthcover {

struct SongSpec {
    int song_id = 0;
    std::vector<int> melody;   // pitch classes 0..11
    double base_pitch = 0.0;   // semitones
};

struct VersionSpec {
    int recording_id = 0;
    int song_id = 0;
    double transposition = 0.0;
    double tempo_scale = 1.0;
    int performer = 0;
    Eigen::VectorXd timbre;
    std::uint64_t noise_seed = 0;
};

struct Recording {
    int recording_id = 0;
    int song_id = 0;
    Eigen::MatrixXd features;   // frames x feature_dim
    Eigen::VectorXd f0;         // frames
    Eigen::VectorXd timbre;

    Eigen::Index frames() const { return features.rows(); }
};

struct MixingModel {
    Eigen::MatrixXd melody;   // feature_dim x pitch bins
    Eigen::MatrixXd timbre;   // feature_dim x timbre_dim
    Eigen::MatrixXd performers;   // n_performers x timbre_dim

    std::uint64_t checksum() const;
};

struct Corpus {
    CorpusConfig config;
    MixingModel mixing;
    std::vector<SongSpec> songs;
    std::vector<VersionSpec> versions;
    std::vector<Recording> recordings;   // recordings[k].recording_id == k

    /// Byte-level digest of all tables and arrays.
    std::uint64_t checksum() const;
    const Recording& recording(int id) const { return recordings.at(static_cast<std::size_t>(id)); }
};

int pitch_bins(const CorpusConfig& cfg);
int frame_count(int melody_length, int frames_per_note, double tempo_scale);
int pitch_bin(double f0, const CorpusConfig& cfg);

MixingModel make_mixing(const CorpusConfig& cfg);

/// Pure function of its inputs. Features are rounded to float32 precision.
Recording render_features(const SongSpec& song, const VersionSpec& version, const MixingModel& mixing,
                          const CorpusConfig& cfg);

/// Deterministic in (cfg); songs are rendered in parallel from per-song streams.
Corpus generate_corpus(const CorpusConfig& cfg, Execution exec = Execution::parallel);

struct CorpusSplit {
    std::vector<int> train;
    std::vector<int> valid;
    std::vector<int> test;
    int scenario = 1;
    double seen_fraction = 0.0;
    int seen_songs = 0;   // test songs that also appear in train

    std::uint64_t digest() const;
};

/// Song-level split by ratios. Scenario 1 keeps train and test songs disjoint.
/// Scenario 2 moves one version of round(seen_fraction * n_test_songs) test
/// songs (each with >= 3 versions) into train.
CorpusSplit split_scenarios(const Corpus& corpus, const SplitConfig& cfg);

/// Distinct song ids of the given recordings, ascending.
std::vector<int> song_ids_of(const Corpus& corpus, std::span<const int> recordings);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace discover::synthcover
