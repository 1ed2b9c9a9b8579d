// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <numeric>

#include "discover/encoder.hpp"
#include "discover/kernels.hpp"
#include "discover/retrieval.hpp"
#include "discover/synthcover.hpp"

namespace {

using namespace discover;

Eigen::MatrixXd random_reps(Eigen::Index n, Eigen::Index d) {
    Rng rng(42);
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m;
}

template <Execution E>
void BM_Similarity(benchmark::State& state) {
    const Eigen::MatrixXd norm = retrieval::normalize_rows(random_reps(state.range(0), 64));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::similarity_matrix(norm, E));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <Execution E>
void BM_ScoreQueries(benchmark::State& state) {
    const auto n = state.range(0);
    const Eigen::MatrixXd sim = kernels::similarity_matrix(retrieval::normalize_rows(random_reps(n, 64)), E);
    std::vector<int> ids(static_cast<std::size_t>(n)), songs(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < songs.size(); ++i) songs[i] = static_cast<int>(i / 3);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::score_queries(sim, ids, songs, E));
    state.SetItemsProcessed(state.iterations() * n);
}

template <Execution E>
void BM_EncodeAll(benchmark::State& state) {
    CorpusConfig c;
    c.n_songs = static_cast<int>(state.range(0));
    static const auto corpus = synthcover::generate_corpus(c);
    Rng rng(1);
    const Encoder enc(c.feature_dim, EncoderConfig{}, 10, rng);
    std::vector<int> ids(corpus.recordings.size());
    std::iota(ids.begin(), ids.end(), 0);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::encode_all(enc, corpus, ids, E));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(ids.size()));
}

void BM_GenerateCorpus(benchmark::State& state) {
    CorpusConfig c;
    c.n_songs = static_cast<int>(state.range(0));
    const auto exec = state.range(1) ? Execution::parallel : Execution::serial;
    for (auto _ : state) benchmark::DoNotOptimize(synthcover::generate_corpus(c, exec));
}

}  // namespace

BENCHMARK(BM_Similarity<Execution::serial>)->Arg(256)->Arg(1024);
BENCHMARK(BM_Similarity<Execution::parallel>)->Arg(256)->Arg(1024);
BENCHMARK(BM_ScoreQueries<Execution::serial>)->Arg(256)->Arg(1024);
BENCHMARK(BM_ScoreQueries<Execution::parallel>)->Arg(256)->Arg(1024);
BENCHMARK(BM_EncodeAll<Execution::serial>)->Arg(300);
BENCHMARK(BM_EncodeAll<Execution::parallel>)->Arg(300);
BENCHMARK(BM_GenerateCorpus)->Args({300, 0})->Args({300, 1});

BENCHMARK_MAIN();
