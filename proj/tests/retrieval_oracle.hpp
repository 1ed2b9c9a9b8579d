#pragma once

// Brute-force reference metrics: ranks are counted pairwise instead of by
// sorting, precision is accumulated per relevant item.

#include <algorithm>
#include <optional>
#include <set>
#include <vector>

namespace oracle {

struct Item {
    int id;
    double score;
};

inline int rank_of(const std::vector<Item>& items, std::size_t j) {
    int r = 1;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (k == j) continue;
        if (items[k].score > items[j].score || (items[k].score == items[j].score && items[k].id < items[j].id)) ++r;
    }
    return r;
}

inline double average_precision(const std::vector<Item>& items, const std::set<int>& relevant) {
    // Precision at each relevant rank, summed in rank order.
    std::vector<int> ranks;
    for (std::size_t j = 0; j < items.size(); ++j)
        if (relevant.count(items[j].id)) ranks.push_back(rank_of(items, j));
    std::sort(ranks.begin(), ranks.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < ranks.size(); ++k) sum += static_cast<double>(k + 1) / ranks[k];
    return sum / static_cast<double>(relevant.size());
}

inline double precision_at_10(const std::vector<Item>& items, const std::set<int>& relevant) {
    int hits = 0;
    for (std::size_t j = 0; j < items.size(); ++j)
        if (relevant.count(items[j].id) && rank_of(items, j) <= 10) ++hits;
    return hits / 10.0;
}

inline std::optional<int> first_rank(const std::vector<Item>& items, const std::set<int>& relevant) {
    std::optional<int> best;
    for (std::size_t j = 0; j < items.size(); ++j) {
        if (!relevant.count(items[j].id)) continue;
        const int r = rank_of(items, j);
        if (!best || r < *best) best = r;
    }
    return best;
}

}  // namespace oracle
