#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace p2pm {

/// Quadratic generation cost C(x) = (a/2) x^2 + b x + c over a total in [x_min, x_max].
/// A fixed-output producer has x_min == x_max.
struct ProducerParams {
    double a = 1.0;      // $/kWh^2
    double b = 1.0;      // $/kWh
    double c = 0.0;      // $
    double x_min = 0.0;  // kWh
    double x_max = 0.0;  // kWh

    void validate() const;
};

/// Saturating quadratic utility: marginal value omega at zero, falling with slope delta
/// until it reaches zero at the knee omega / delta. Inflexible loads have y_min == y_max.
struct ConsumerParams {
    double omega = 1.0;  // $/kWh
    double delta = 1.0;  // $/kWh^2
    double y_min = 0.0;  // kWh
    double y_max = 0.0;  // kWh

    void validate() const;
    double knee() const { return omega / delta; }
    /// True when the whole demand range lies on the strictly concave branch.
    bool strictly_concave_on_bounds() const { return y_max <= knee(); }
};

/// One preference criterion: consumer weight r times the trade characteristic d.
struct CriterionEntry {
    std::string id;
    double r = 0.0;
    double d = 0.0;
};

struct Edge {
    std::size_t producer = 0;
    std::size_t consumer = 0;
    double alpha = 0.0;  // $/kWh, any finite value (negative values model fees)
};

/// Bipartite producer/consumer trading graph. Edge indices are stable and every
/// per-edge vector in the library (prices, quantities, step sizes) is indexed by them.
/// Neighbour lists are kept in increasing edge-index order.
class TradingGraph {
public:
    TradingGraph() = default;
    TradingGraph(std::size_t producer_count, std::size_t consumer_count, std::vector<Edge> edges);

    /// Complete bipartite graph; edge (i, j) has index i * consumer_count + j.
    static TradingGraph complete(std::size_t producer_count, std::size_t consumer_count,
                                 std::span<const double> alpha_row_major);

    std::size_t producer_count() const { return producer_edges_.size(); }
    std::size_t consumer_count() const { return consumer_edges_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(std::size_t e) const { return edges_.at(e); }
    std::span<const std::size_t> producer_edges(std::size_t i) const { return producer_edges_.at(i); }
    std::span<const std::size_t> consumer_edges(std::size_t j) const { return consumer_edges_.at(j); }

    /// Gathers a per-edge vector onto one agent's neighbour ordering.
    std::vector<double> gather(std::span<const double> per_edge, std::span<const std::size_t> idx) const;

private:
    std::vector<Edge> edges_;
    std::vector<std::vector<std::size_t>> producer_edges_;
    std::vector<std::vector<std::size_t>> consumer_edges_;
};

/// Per-edge sold (x) and purchased (y) energy. x_ij == y_ji only at consensus.
struct Allocation {
    std::vector<double> x;
    std::vector<double> y;

    static Allocation zeros(std::size_t edge_count) {
        return {std::vector<double>(edge_count, 0.0), std::vector<double>(edge_count, 0.0)};
    }
};

struct Market {
    std::vector<ProducerParams> producers;
    std::vector<ConsumerParams> consumers;
    TradingGraph graph;

    void validate() const;
};

double cost(const ProducerParams& p, double x_total);
double marginal_cost(const ProducerParams& p, double x_total);
double utility(const ConsumerParams& c, double y_total);
double marginal_utility(const ConsumerParams& c, double y_total);

double transaction_coefficient(std::span<const CriterionEntry> entries);

double producer_welfare(const ProducerParams& p, std::span<const double> prices, std::span<const double> x);
double consumer_welfare(const ConsumerParams& c, std::span<const double> prices,
                        std::span<const double> alphas, std::span<const double> y);

/// Primal objective: sum U_j(y_j) - sum C_i(x_i) + sum alpha_ji y_ji. Works on any
/// allocation, consensual or not.
double social_welfare(const Market& market, const Allocation& alloc);

/// Totals per producer (from x) and per consumer (from y).
std::vector<double> producer_totals(const TradingGraph& graph, std::span<const double> x);
std::vector<double> consumer_totals(const TradingGraph& graph, std::span<const double> y);

}  // namespace p2pm
