#pragma once

// Cosine-similarity ranking and Mirex-style cover retrieval metrics: MAP,
// precision at 10 and mean rank of the first correctly identified cover.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "discover/execution.hpp"

namespace discover {
class Encoder;
namespace synthcover {
struct Corpus;
}
}  // namespace discover

namespace discover::retrieval {

struct RankedList {
    int query = 0;
    std::vector<int> candidates;   // descending similarity, ties by ascending id
    std::vector<double> scores;
};

/// Dot product accumulated left to right; every similarity in the library goes
/// through here so single-query and all-pairs paths agree bit for bit.
double dot(const double* a, const double* b, Eigen::Index n);

/// Rows scaled to unit norm; throws NumericError on a zero row.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& reps);

/// Ranks every collection entry except `query_id` itself.
RankedList rank(int query_id, const Eigen::RowVectorXd& query, std::span<const int> ids,
                const Eigen::MatrixXd& collection);

/// Ranks from a precomputed similarity row.
RankedList rank_from_scores(int query_id, std::span<const int> ids, std::span<const double> scores);

double average_precision(const RankedList& ranked, const std::set<int>& relevant);
/// Relevant hits in the top 10, over a fixed denominator of 10.
double precision_at_10(const RankedList& ranked, const std::set<int>& relevant);
/// 1-based rank of the first relevant candidate.
std::optional<int> first_relevant_rank(const RankedList& ranked, const std::set<int>& relevant);
/// Mean first-relevant rank over lists whose relevance set is non-empty.
double mean_rank_first(std::span<const RankedList> lists, std::span<const std::set<int>> relevance);

struct QueryOutcome {
    int query = 0;
    int relevant = 0;   // 0 => skipped
    double ap = 0.0;
    double p10 = 0.0;
    int first_rank = 0;
};

struct MetricsReport {
    double map = 0.0;
    double p10 = 0.0;
    double mr1 = 0.0;
    int n_queries = 0;
    int skipped = 0;
    int scenario = 0;
    std::string split;
    std::uint64_t split_digest = 0;
    bool warning = false;   // no query had a relevant item
    std::vector<QueryOutcome> per_query;

    std::string to_json(bool include_per_query = false) const;
    static MetricsReport from_json(const std::string& text);
};

/// Aggregates per-query outcomes in query order.
MetricsReport summarize(std::span<const QueryOutcome> outcomes);

/// All-vs-all evaluation of precomputed representations; `songs` holds the
/// relevance label of each row.
MetricsReport evaluate_representations(const Eigen::MatrixXd& reps, std::span<const int> ids,
                                       std::span<const int> songs, Execution exec = Execution::parallel);

/// Encodes every listed recording once and evaluates all-vs-all.
MetricsReport evaluate(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> recordings,
                       Execution exec = Execution::parallel);

}  // namespace discover::retrieval
