#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "p2pm/model.hpp"

namespace p2pm {

struct SelectionConfig {
    double benchmark = 0.0;  // normalized threshold in [-1, 1]

    void validate() const;
};

/// Min-max map of one consumer's coefficients onto [-1, 1]; a constant row maps to 0.
std::vector<double> normalize_coefficients(std::span<const double> alphas);

/// Positions whose normalized value is >= benchmark.
std::vector<std::size_t> select_partners(std::span<const double> normalized, double benchmark);

struct SelectionResult {
    TradingGraph graph;
    std::vector<std::size_t> kept_edges;          // original index of every surviving edge, in order
    std::vector<std::size_t> isolated_producers;  // producers left without partners
    std::size_t edges_before = 0;
    std::size_t edges_after = 0;
};

/// Each consumer keeps only the neighbours at or above the benchmark. A consumer whose
/// coefficients are all equal keeps every neighbour. Uses nothing beyond each consumer's
/// own coefficient row.
SelectionResult apply_selection(const TradingGraph& graph, const SelectionConfig& cfg);

/// Restricts a graph to a subset of its edges (kept in the given order).
TradingGraph restrict_edges(const TradingGraph& graph, std::span<const std::size_t> kept_edges);

}  // namespace p2pm
