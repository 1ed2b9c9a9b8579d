#include "discover/kernels.hpp"

#include <exception>
#include <map>
#include <set>

#include "discover/error.hpp"

namespace discover::kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void similarity_row(const RowMajor& x, Eigen::Index i, Eigen::MatrixXd& out) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) out(i, j) = retrieval::dot(x.row(i).data(), x.row(j).data(), x.cols());
}

std::map<int, std::set<int>> relevance_by_song(std::span<const int> ids, std::span<const int> songs) {
    if (ids.size() != songs.size()) throw InputError("score_queries: ids and songs differ in length");
    std::map<int, std::set<int>> by_song;
    for (std::size_t k = 0; k < ids.size(); ++k) by_song[songs[k]].insert(ids[k]);
    return by_song;
}

retrieval::QueryOutcome score_one(const Eigen::MatrixXd& sim, std::span<const int> ids, std::span<const int> songs,
                                  const std::map<int, std::set<int>>& by_song, std::size_t i) {
    std::vector<double> scores(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) scores[j] = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::set<int> relevant = by_song.at(songs[i]);
    relevant.erase(ids[i]);
    retrieval::QueryOutcome o;
    o.query = ids[i];
    o.relevant = static_cast<int>(relevant.size());
    if (relevant.empty()) return o;
    const auto ranked = retrieval::rank_from_scores(ids[i], ids, scores);
    o.ap = retrieval::average_precision(ranked, relevant);
    o.p10 = retrieval::precision_at_10(ranked, relevant);
    o.first_rank = retrieval::first_relevant_rank(ranked, relevant).value_or(0);
    return o;
}

void check_square(const Eigen::MatrixXd& sim, std::span<const int> ids) {
    if (sim.rows() != sim.cols() || sim.rows() != static_cast<Eigen::Index>(ids.size())) {
        throw InputError("score_queries: similarity matrix does not match ids");
    }
}

void rethrow_first(std::vector<std::exception_ptr>& errors) {
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

namespace serial {

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& normalized) {
    const RowMajor x = normalized;
    Eigen::MatrixXd out(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) similarity_row(x, i, out);
    return out;
}

std::vector<retrieval::QueryOutcome> score_queries(const Eigen::MatrixXd& similarity, std::span<const int> ids,
                                                   std::span<const int> songs) {
    check_square(similarity, ids);
    const auto by_song = relevance_by_song(ids, songs);
    std::vector<retrieval::QueryOutcome> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = score_one(similarity, ids, songs, by_song, i);
    return out;
}

Eigen::MatrixXd encode_all(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> ids) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), encoder.dim());
    for (std::size_t k = 0; k < ids.size(); ++k)
        out.row(static_cast<Eigen::Index>(k)) = encoder.infer(corpus.recording(ids[k]).features);
    return out;
}

}  // namespace serial

namespace parallel {

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& normalized) {
    const RowMajor x = normalized;
    Eigen::MatrixXd out(x.rows(), x.rows());
    const Eigen::Index n = x.rows();
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index i = 0; i < n; ++i) similarity_row(x, i, out);
    return out;
}

std::vector<retrieval::QueryOutcome> score_queries(const Eigen::MatrixXd& similarity, std::span<const int> ids,
                                                   std::span<const int> songs) {
    check_square(similarity, ids);
    const auto by_song = relevance_by_song(ids, songs);
    std::vector<retrieval::QueryOutcome> out(ids.size());
    std::vector<std::exception_ptr> errors(ids.size());
    const long n = static_cast<long>(ids.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (long i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = score_one(similarity, ids, songs, by_song, static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    rethrow_first(errors);
    return out;
}

Eigen::MatrixXd encode_all(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> ids) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), encoder.dim());
    std::vector<std::exception_ptr> errors(ids.size());
    const long n = static_cast<long>(ids.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (long k = 0; k < n; ++k) {
        try {
            out.row(k) = encoder.infer(corpus.recording(ids[static_cast<std::size_t>(k)]).features);
        } catch (...) {
            errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
    }
    rethrow_first(errors);
    return out;
}

}  // namespace parallel

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& normalized, Execution exec) {
    return exec == Execution::serial ? serial::similarity_matrix(normalized) : parallel::similarity_matrix(normalized);
}

std::vector<retrieval::QueryOutcome> score_queries(const Eigen::MatrixXd& similarity, std::span<const int> ids,
                                                   std::span<const int> songs, Execution exec) {
    return exec == Execution::serial ? serial::score_queries(similarity, ids, songs)
                                     : parallel::score_queries(similarity, ids, songs);
}

Eigen::MatrixXd encode_all(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> ids,
                           Execution exec) {
    return exec == Execution::serial ? serial::encode_all(encoder, corpus, ids)
                                     : parallel::encode_all(encoder, corpus, ids);
}

}  // namespace discover::kernels
