#include <gtest/gtest.h>

#include <omp.h>

#include <numeric>

#include "discover/encoder.hpp"
#include "discover/kernels.hpp"
#include "discover/retrieval.hpp"
#include "discover/synthcover.hpp"
#include "test_util.hpp"

using namespace discover;

namespace {

class Kernels : public ::testing::Test {
protected:
    // Oversubscribe so the parallel path really splits work even on one core.
    void SetUp() override {
        saved_ = omp_get_max_threads();
        omp_set_num_threads(4);
    }
    void TearDown() override { omp_set_num_threads(saved_); }
    int saved_ = 1;
};

}  // namespace

TEST_F(Kernels, SimilarityIsBitIdenticalAndSymmetric) {
    Rng rng(1);
    const Eigen::MatrixXd norm = retrieval::normalize_rows(testutil::random_matrix(rng, 57, 13));
    const Eigen::MatrixXd s = kernels::serial::similarity_matrix(norm);
    const Eigen::MatrixXd p = kernels::parallel::similarity_matrix(norm);
    EXPECT_EQ(s, p);
    EXPECT_EQ(s, s.transpose());
    for (Eigen::Index i = 0; i < s.rows(); ++i) EXPECT_NEAR(s(i, i), 1.0, 1e-12);
}

TEST_F(Kernels, ScoreQueriesIsBitIdentical) {
    Rng rng(2);
    const int n = 80;
    const Eigen::MatrixXd sim =
        kernels::serial::similarity_matrix(retrieval::normalize_rows(testutil::random_matrix(rng, n, 8)));
    std::vector<int> ids(n), songs(n);
    for (int i = 0; i < n; ++i) {
        ids[static_cast<std::size_t>(i)] = i;
        songs[static_cast<std::size_t>(i)] = i / 3;
    }
    const auto a = kernels::serial::score_queries(sim, ids, songs);
    const auto b = kernels::parallel::score_queries(sim, ids, songs);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].query, b[k].query);
        EXPECT_EQ(a[k].relevant, b[k].relevant);
        EXPECT_EQ(a[k].ap, b[k].ap);
        EXPECT_EQ(a[k].p10, b[k].p10);
        EXPECT_EQ(a[k].first_rank, b[k].first_rank);
    }
}

TEST_F(Kernels, SingleQueryRankAgreesWithAllPairsPath) {
    Rng rng(3);
    const Eigen::MatrixXd raw = testutil::random_matrix(rng, 20, 5);
    const Eigen::MatrixXd sim = kernels::parallel::similarity_matrix(retrieval::normalize_rows(raw));
    std::vector<int> ids(20);
    std::iota(ids.begin(), ids.end(), 0);
    for (int q = 0; q < 20; ++q) {
        const auto direct = retrieval::rank(q, raw.row(q), ids, raw);
        std::vector<double> row(20);
        for (int j = 0; j < 20; ++j) row[static_cast<std::size_t>(j)] = sim(q, j);
        const auto via = retrieval::rank_from_scores(q, ids, row);
        EXPECT_EQ(direct.candidates, via.candidates);
        EXPECT_EQ(direct.scores, via.scores);
    }
}

TEST_F(Kernels, EncodeAllIsBitIdentical) {
    CorpusConfig c;
    c.n_songs = 30;
    const auto corpus = synthcover::generate_corpus(c);
    Rng rng(4);
    EncoderConfig ec;
    ec.hidden = 12;
    ec.dim = 8;
    const Encoder enc(c.feature_dim, ec, 5, rng);
    std::vector<int> ids(corpus.recordings.size());
    std::iota(ids.begin(), ids.end(), 0);
    const Eigen::MatrixXd s = kernels::serial::encode_all(enc, corpus, ids);
    EXPECT_EQ(s, kernels::parallel::encode_all(enc, corpus, ids));
    EXPECT_EQ(s.row(3), enc.infer(corpus.recording(3).features));
}

TEST_F(Kernels, EvaluateIsIdenticalAcrossExecutionModes) {
    Rng rng(5);
    const Eigen::MatrixXd reps = testutil::random_matrix(rng, 40, 6);
    std::vector<int> ids(40), songs(40);
    for (int i = 0; i < 40; ++i) {
        ids[static_cast<std::size_t>(i)] = i;
        songs[static_cast<std::size_t>(i)] = i % 13;
    }
    const auto a = retrieval::evaluate_representations(reps, ids, songs, Execution::serial);
    const auto b = retrieval::evaluate_representations(reps, ids, songs, Execution::parallel);
    EXPECT_EQ(a.to_json(true), b.to_json(true));
}
