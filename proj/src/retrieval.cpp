#include "discover/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "discover/encoder.hpp"
#include "discover/error.hpp"
#include "discover/kernels.hpp"
#include "discover/synthcover.hpp"

namespace discover::retrieval {

double dot(const double* a, const double* b, Eigen::Index n) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& reps) {
    // Row-major copy so each row is contiguous for dot().
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = reps;
    for (Eigen::Index i = 0; i < rm.rows(); ++i) {
        const double n = std::sqrt(dot(rm.row(i).data(), rm.row(i).data(), rm.cols()));
        if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("cannot normalise a zero or non-finite representation");
        rm.row(i) /= n;
    }
    return rm;
}

RankedList rank_from_scores(int query_id, std::span<const int> ids, std::span<const double> scores) {
    if (ids.size() != scores.size()) throw InputError("rank: ids and scores differ in length");
    std::vector<std::size_t> order;
    order.reserve(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j)
        if (ids[j] != query_id) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    RankedList out;
    out.query = query_id;
    out.candidates.reserve(order.size());
    out.scores.reserve(order.size());
    for (auto j : order) {
        out.candidates.push_back(ids[j]);
        out.scores.push_back(scores[j]);
    }
    return out;
}

RankedList rank(int query_id, const Eigen::RowVectorXd& query, std::span<const int> ids,
                const Eigen::MatrixXd& collection) {
    if (static_cast<Eigen::Index>(ids.size()) != collection.rows()) throw InputError("rank: ids and collection differ");
    if (query.size() != collection.cols()) throw InputError("rank: dimension mismatch");
    const Eigen::MatrixXd q = normalize_rows(query);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = normalize_rows(collection);
    const Eigen::RowVectorXd qr = q.row(0);
    std::vector<double> scores(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j)
        scores[j] = dot(qr.data(), c.row(static_cast<Eigen::Index>(j)).data(), c.cols());
    return rank_from_scores(query_id, ids, scores);
}

double average_precision(const RankedList& ranked, const std::set<int>& relevant) {
    if (relevant.empty()) throw InputError("average_precision: empty relevant set");
    double sum = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < ranked.candidates.size(); ++r) {
        if (relevant.count(ranked.candidates[r])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return sum / static_cast<double>(relevant.size());
}

double precision_at_10(const RankedList& ranked, const std::set<int>& relevant) {
    const std::size_t top = std::min<std::size_t>(10, ranked.candidates.size());
    int hits = 0;
    for (std::size_t r = 0; r < top; ++r) hits += relevant.count(ranked.candidates[r]) ? 1 : 0;
    return hits / 10.0;
}

std::optional<int> first_relevant_rank(const RankedList& ranked, const std::set<int>& relevant) {
    for (std::size_t r = 0; r < ranked.candidates.size(); ++r)
        if (relevant.count(ranked.candidates[r])) return static_cast<int>(r + 1);
    return std::nullopt;
}

double mean_rank_first(std::span<const RankedList> lists, std::span<const std::set<int>> relevance) {
    if (lists.size() != relevance.size()) throw InputError("mean_rank_first: lists and relevance differ");
    double sum = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < lists.size(); ++i) {
        if (relevance[i].empty()) continue;
        if (auto r = first_relevant_rank(lists[i], relevance[i])) {
            sum += *r;
            ++counted;
        }
    }
    return counted ? sum / counted : 0.0;
}

MetricsReport summarize(std::span<const QueryOutcome> outcomes) {
    MetricsReport rep;
    rep.per_query.assign(outcomes.begin(), outcomes.end());
    double ap = 0.0, p10 = 0.0, mr = 0.0;
    for (const auto& o : outcomes) {
        if (o.relevant == 0) {
            ++rep.skipped;
            continue;
        }
        ++rep.n_queries;
        ap += o.ap;
        p10 += o.p10;
        mr += o.first_rank;
    }
    if (rep.n_queries > 0) {
        rep.map = ap / rep.n_queries;
        rep.p10 = p10 / rep.n_queries;
        rep.mr1 = mr / rep.n_queries;
    } else {
        rep.warning = true;
    }
    return rep;
}

std::string MetricsReport::to_json(bool include_per_query) const {
    nlohmann::json j;
    j["map"] = map;
    j["p10"] = p10;
    j["mr1"] = mr1;
    j["n_queries"] = n_queries;
    j["skipped"] = skipped;
    j["scenario"] = scenario;
    j["split"] = split;
    j["split_digest"] = split_digest;
    j["warning"] = warning;
    if (include_per_query) {
        auto arr = nlohmann::json::array();
        for (const auto& q : per_query) {
            arr.push_back({{"query", q.query}, {"relevant", q.relevant}, {"ap", q.ap}, {"p10", q.p10},
                           {"first_rank", q.first_rank}});
        }
        j["per_query"] = std::move(arr);
    }
    return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        MetricsReport r;
        r.map = j.at("map").get<double>();
        r.p10 = j.at("p10").get<double>();
        r.mr1 = j.at("mr1").get<double>();
        r.n_queries = j.at("n_queries").get<int>();
        r.skipped = j.at("skipped").get<int>();
        r.scenario = j.value("scenario", 0);
        r.split = j.value("split", std::string{});
        r.split_digest = j.value("split_digest", std::uint64_t{0});
        r.warning = j.value("warning", false);
        if (j.contains("per_query")) {
            for (const auto& q : j["per_query"]) {
                r.per_query.push_back({q.at("query").get<int>(), q.at("relevant").get<int>(), q.at("ap").get<double>(),
                                       q.at("p10").get<double>(), q.at("first_rank").get<int>()});
            }
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metrics report: ") + e.what());
    }
}

MetricsReport evaluate_representations(const Eigen::MatrixXd& reps, std::span<const int> ids,
                                       std::span<const int> songs, Execution exec) {
    if (static_cast<Eigen::Index>(ids.size()) != reps.rows() || songs.size() != ids.size()) {
        throw InputError("evaluate: ids, songs and representations differ in length");
    }
    if (!reps.allFinite()) throw NumericError("evaluate: non-finite representation");
    const Eigen::MatrixXd sim = kernels::similarity_matrix(normalize_rows(reps), exec);
    const auto outcomes = kernels::score_queries(sim, ids, songs, exec);
    return summarize(outcomes);
}

MetricsReport evaluate(const Encoder& encoder, const synthcover::Corpus& corpus, std::span<const int> recordings,
                       Execution exec) {
    const Eigen::MatrixXd reps = kernels::encode_all(encoder, corpus, recordings, exec);
    std::vector<int> songs;
    songs.reserve(recordings.size());
    for (int id : recordings) songs.push_back(corpus.recording(id).song_id);
    return evaluate_representations(reps, recordings, songs, exec);
}

}  // namespace discover::retrieval
