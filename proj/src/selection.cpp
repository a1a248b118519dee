#include "p2pm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace p2pm {

void SelectionConfig::validate() const {
    if (!(benchmark >= -1.0 && benchmark <= 1.0)) throw std::invalid_argument("selection: benchmark must lie in [-1, 1]");
}

std::vector<double> normalize_coefficients(std::span<const double> alphas) {
    if (alphas.empty()) throw std::invalid_argument("normalize: consumer has no neighbours");
    const auto [lo, hi] = std::minmax_element(alphas.begin(), alphas.end());
    std::vector<double> out(alphas.size(), 0.0);
    const double range = *hi - *lo;
    if (range == 0.0) return out;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        // Pin the extremes exactly so benchmark 1 always keeps the argmax.
        if (alphas[k] == *hi)
            out[k] = 1.0;
        else if (alphas[k] == *lo)
            out[k] = -1.0;
        else
            out[k] = 2.0 * (alphas[k] - *lo) / range - 1.0;
    }
    return out;
}

std::vector<std::size_t> select_partners(std::span<const double> normalized, double benchmark) {
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < normalized.size(); ++k)
        if (normalized[k] >= benchmark) keep.push_back(k);
    return keep;
}

TradingGraph restrict_edges(const TradingGraph& graph, std::span<const std::size_t> kept_edges) {
    std::vector<Edge> edges;
    edges.reserve(kept_edges.size());
    for (std::size_t e : kept_edges) edges.push_back(graph.edge(e));
    return TradingGraph(graph.producer_count(), graph.consumer_count(), std::move(edges));
}

SelectionResult apply_selection(const TradingGraph& graph, const SelectionConfig& cfg) {
    cfg.validate();
    std::vector<bool> keep(graph.edge_count(), false);
    std::vector<double> row;
    for (std::size_t j = 0; j < graph.consumer_count(); ++j) {
        const auto idx = graph.consumer_edges(j);
        if (idx.empty()) continue;
        row.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) row[k] = graph.edge(idx[k]).alpha;
        // A constant row carries no preference, so nothing is pruned.
        if (std::all_of(row.begin(), row.end(), [&](double a) { return a == row.front(); })) {
            for (std::size_t e : idx) keep[e] = true;
            continue;
        }
        for (std::size_t pos : select_partners(normalize_coefficients(row), cfg.benchmark)) keep[idx[pos]] = true;
    }

    SelectionResult res;
    for (std::size_t e = 0; e < graph.edge_count(); ++e)
        if (keep[e]) res.kept_edges.push_back(e);
    res.graph = restrict_edges(graph, res.kept_edges);
    res.edges_before = graph.edge_count();
    res.edges_after = res.graph.edge_count();
    for (std::size_t i = 0; i < graph.producer_count(); ++i)
        if (res.graph.producer_edges(i).empty()) res.isolated_producers.push_back(i);
    return res;
}

}  // namespace p2pm
