#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "discover/array_file.hpp"
#include "discover/error.hpp"
#include "discover/synthcover.hpp"
#include "test_util.hpp"

using namespace discover;
using namespace discover::synthcover;

namespace {

CorpusConfig quiet(CorpusConfig c) {
    c.noise = 0.0;
    c.f0_noise = 0.0;
    return c;
}

std::set<int> songs_of(const Corpus& c, const std::vector<int>& ids) {
    const auto v = song_ids_of(c, ids);
    return {v.begin(), v.end()};
}

}  // namespace

TEST(Synthcover, Covers80SizedCorpus) {
    CorpusConfig c;
    c.n_songs = 80;
    c.versions_min = c.versions_max = 2;
    c.seed = 7;
    const auto corpus = generate_corpus(c);
    EXPECT_EQ(corpus.recordings.size(), 160u);
    EXPECT_EQ(corpus.songs.size(), 80u);
}

TEST(Synthcover, MinimumViableCorpus) {
    CorpusConfig c;
    c.n_songs = 2;
    c.versions_min = c.versions_max = 1;
    c.seed = 0;
    const auto corpus = generate_corpus(c);
    ASSERT_EQ(corpus.recordings.size(), 2u);
    EXPECT_NE(corpus.recordings[0].song_id, corpus.recordings[1].song_id);
}

TEST(Synthcover, DeterministicAcrossRunsAndExecutionModes) {
    CorpusConfig c;
    c.n_songs = 100;
    c.seed = 1;
    const auto a = generate_corpus(c, Execution::parallel);
    const auto b = generate_corpus(c, Execution::parallel);
    const auto s = generate_corpus(c, Execution::serial);
    EXPECT_EQ(a.checksum(), b.checksum());
    EXPECT_EQ(a.checksum(), s.checksum());
    c.seed = 2;
    EXPECT_NE(generate_corpus(c).checksum(), a.checksum());
}

TEST(Synthcover, InvalidDimsAreConfigErrors) {
    CorpusConfig c;
    c.feature_dim = 0;
    EXPECT_THROW(generate_corpus(c), ConfigError);
    c = {};
    c.timbre_dim = -1;
    EXPECT_THROW(generate_corpus(c), ConfigError);
}

TEST(Synthcover, RecordingInvariants) {
    const auto corpus = generate_corpus(CorpusConfig{});
    for (const auto& r : corpus.recordings) {
        const auto& v = corpus.versions[static_cast<std::size_t>(r.recording_id)];
        const auto& s = corpus.songs[static_cast<std::size_t>(r.song_id)];
        EXPECT_EQ(r.frames(), frame_count(corpus.config.melody_length, corpus.config.frames_per_note, v.tempo_scale));
        EXPECT_GE(v.tempo_scale, 0.5);
        EXPECT_LE(v.tempo_scale, 2.0);
        EXPECT_EQ(r.f0.size(), r.frames());
        EXPECT_EQ(r.features.cols(), corpus.config.feature_dim);
        EXPECT_EQ(s.melody.size(), static_cast<std::size_t>(corpus.config.melody_length));
    }
}

TEST(Synthcover, F0IsBasePlusTranspositionPlusMelody) {
    auto c = quiet(CorpusConfig{});
    c.n_songs = 4;
    c.versions_min = c.versions_max = 1;
    const auto corpus = generate_corpus(c);
    auto song = corpus.songs[0];
    auto ver = corpus.versions[0];
    ver.transposition = 0.0;
    const auto r0 = render_features(song, ver, corpus.mixing, c);
    const Eigen::Index per_note = r0.frames() / c.melody_length;
    ASSERT_GT(per_note, 0);
    for (Eigen::Index t = 0; t < r0.frames(); ++t) {
        const auto note = static_cast<std::size_t>(std::min<Eigen::Index>(t * c.melody_length / r0.frames(), c.melody_length - 1));
        EXPECT_NEAR(r0.f0(t) - song.base_pitch, song.melody[note], 1e-4);
    }
    ver.transposition = 2.0;
    const auto r2 = render_features(song, ver, corpus.mixing, c);
    ASSERT_EQ(r2.frames(), r0.frames());
    for (Eigen::Index t = 0; t < r0.frames(); ++t) EXPECT_NEAR(r2.f0(t) - r0.f0(t), 2.0, 1e-4);
}

TEST(Synthcover, MelodyCoefficientsAreVersionInvariant) {
    // Least squares of each recording's frames on pitch-bin one-hots gives
    // coefficient rows W_m[:, b] + W_t t; differences between bins cancel the
    // timbre term and must agree across versions.
    auto c = quiet(CorpusConfig{});
    c.n_songs = 3;
    c.versions_min = c.versions_max = 2;
    const auto corpus = generate_corpus(c);
    const auto& song = corpus.songs[0];
    std::vector<Eigen::MatrixXd> coeffs;
    std::vector<int> bins_used;
    for (int v = 0; v < 2; ++v) {
        auto ver = corpus.versions[static_cast<std::size_t>(v)];
        ASSERT_EQ(ver.song_id, song.song_id);
        ver.transposition = 0.0;
        const auto rec = render_features(song, ver, corpus.mixing, c);
        std::map<int, int> column;
        for (Eigen::Index t = 0; t < rec.frames(); ++t) column.emplace(pitch_bin(rec.f0(t), c), 0);
        int k = 0;
        bins_used.clear();
        for (auto& [b, col] : column) {
            col = k++;
            bins_used.push_back(b);
        }
        Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(rec.frames(), k);
        for (Eigen::Index t = 0; t < rec.frames(); ++t) onehot(t, column.at(pitch_bin(rec.f0(t), c))) = 1.0;
        coeffs.push_back(onehot.colPivHouseholderQr().solve(rec.features));
    }
    ASSERT_EQ(coeffs[0].rows(), coeffs[1].rows());
    ASSERT_NE(corpus.versions[0].timbre, corpus.versions[1].timbre);
    for (Eigen::Index b = 1; b < coeffs[0].rows(); ++b) {
        const Eigen::RowVectorXd d0 = coeffs[0].row(b) - coeffs[0].row(0);
        const Eigen::RowVectorXd d1 = coeffs[1].row(b) - coeffs[1].row(0);
        EXPECT_LT((d0 - d1).cwiseAbs().maxCoeff(), 1e-6);
        const Eigen::VectorXd truth = corpus.mixing.melody.col(bins_used[static_cast<std::size_t>(b)]) -
                                      corpus.mixing.melody.col(bins_used[0]);
        EXPECT_LT((d0.transpose() - truth).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Synthcover, TimbreMarginHolds) {
    const auto corpus = generate_corpus(CorpusConfig{});
    std::map<int, std::vector<const VersionSpec*>> by_song;
    for (const auto& v : corpus.versions) by_song[v.song_id].push_back(&v);
    for (const auto& [s, vs] : by_song)
        for (std::size_t a = 0; a < vs.size(); ++a)
            for (std::size_t b = a + 1; b < vs.size(); ++b)
                EXPECT_GE((vs[a]->timbre - vs[b]->timbre).norm(), corpus.config.timbre_margin - 1e-6);
}

TEST(Synthcover, ImpossibleTimbreMarginIsConfigError) {
    CorpusConfig c;
    c.n_performers = 1;
    c.timbre_jitter = 0.0;
    c.versions_min = c.versions_max = 2;
    EXPECT_THROW(generate_corpus(c), ConfigError);
}

TEST(Split, Scenario1IsDisjointForManySeeds) {
    CorpusConfig c;
    c.n_songs = 100;
    const auto corpus = generate_corpus(c);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        SplitConfig s;
        s.seed = seed;
        const auto split = split_scenarios(corpus, s);
        const auto train = songs_of(corpus, split.train);
        for (int song : songs_of(corpus, split.test)) EXPECT_EQ(train.count(song), 0u);
        for (int song : songs_of(corpus, split.valid)) EXPECT_EQ(train.count(song), 0u);
        EXPECT_EQ(split.train.size() + split.valid.size() + split.test.size(), corpus.recordings.size());
    }
}

TEST(Split, RatiosGiveSongCounts) {
    CorpusConfig c;
    c.n_songs = 100;
    const auto corpus = generate_corpus(c);
    const auto split = split_scenarios(corpus, SplitConfig{});
    EXPECT_EQ(songs_of(corpus, split.train).size(), 80u);
    EXPECT_EQ(songs_of(corpus, split.valid).size(), 10u);
    EXPECT_EQ(songs_of(corpus, split.test).size(), 10u);
}

TEST(Split, Scenario2SeesTheConfiguredFractionOfTestSongs) {
    CorpusConfig c;
    c.n_songs = 300;
    c.versions_min = c.versions_max = 3;
    const auto corpus = generate_corpus(c);
    SplitConfig s;
    s.scenario = 2;
    s.seen_fraction = 0.25;
    const auto split = split_scenarios(corpus, s);
    const auto test_songs = songs_of(corpus, split.test);
    const auto train = songs_of(corpus, split.train);
    int seen = 0;
    for (int song : test_songs) seen += train.count(song) ? 1 : 0;
    EXPECT_EQ(seen, static_cast<int>(std::lround(0.25 * static_cast<double>(test_songs.size()))));
    EXPECT_EQ(seen, split.seen_songs);
    // Recordings are never shared between partitions.
    std::set<int> all(split.train.begin(), split.train.end());
    for (int id : split.test) EXPECT_EQ(all.count(id), 0u);
}

TEST(Split, Scenario2WithoutEligibleSongsFails) {
    CorpusConfig c;
    c.n_songs = 50;
    c.versions_min = c.versions_max = 2;
    const auto corpus = generate_corpus(c);
    SplitConfig s;
    s.scenario = 2;
    s.seen_fraction = 0.5;
    EXPECT_THROW(split_scenarios(corpus, s), SplitError);
}

TEST(Split, DigestTracksMembership) {
    const auto corpus = generate_corpus(CorpusConfig{});
    SplitConfig s;
    const auto a = split_scenarios(corpus, s);
    EXPECT_EQ(a.digest(), split_scenarios(corpus, s).digest());
    s.seed = 99;
    EXPECT_NE(a.digest(), split_scenarios(corpus, s).digest());
}

TEST(CorpusIo, SaveLoadRoundTrip) {
    CorpusConfig c;
    c.n_songs = 20;
    const auto corpus = generate_corpus(c);
    const auto dir = testutil::scratch_dir("corpus_io");
    save_corpus(corpus, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "features.bin"));
    EXPECT_TRUE(std::filesystem::exists(dir / "f0.bin"));
    EXPECT_TRUE(std::filesystem::exists(dir / "timbre.bin"));
    const auto back = load_corpus(dir);
    EXPECT_EQ(back.checksum(), corpus.checksum());
}

TEST(CorpusIo, CorruptArrayIsRejected) {
    CorpusConfig c;
    c.n_songs = 10;
    const auto dir = testutil::scratch_dir("corpus_corrupt");
    save_corpus(generate_corpus(c), dir);
    std::filesystem::resize_file(dir / "features.bin", std::filesystem::file_size(dir / "features.bin") - 4);
    EXPECT_THROW(load_corpus(dir), FormatError);
}

TEST(ArrayFile, RoundTripAndHeaderChecks) {
    Rng rng(3);
    Eigen::MatrixXd m = testutil::random_matrix(rng, 5, 3);
    round_to_float(m);
    const auto dir = testutil::scratch_dir("array_file");
    write_array(dir / "a.bin", m, 2);
    EXPECT_EQ(read_array(dir / "a.bin"), m);
    std::ofstream(dir / "bad.bin") << "nope";
    EXPECT_THROW(read_array(dir / "bad.bin"), FormatError);
}
