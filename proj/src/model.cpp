#include "p2pm/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace p2pm {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": index set mismatch");
}

}  // namespace

void ProducerParams::validate() const {
    require(std::isfinite(a) && a > 0.0, "producer: a must be > 0");
    require(std::isfinite(b) && b > 0.0, "producer: b must be > 0");
    require(std::isfinite(c) && c >= 0.0, "producer: c must be >= 0");
    require(std::isfinite(x_min) && std::isfinite(x_max) && 0.0 <= x_min && x_min <= x_max,
            "producer: need 0 <= x_min <= x_max");
}

void ConsumerParams::validate() const {
    require(std::isfinite(omega) && omega > 0.0, "consumer: omega must be > 0");
    require(std::isfinite(delta) && delta > 0.0, "consumer: delta must be > 0");
    require(std::isfinite(y_min) && std::isfinite(y_max) && 0.0 <= y_min && y_min <= y_max,
            "consumer: need 0 <= y_min <= y_max");
}

TradingGraph::TradingGraph(std::size_t producer_count, std::size_t consumer_count, std::vector<Edge> edges)
    : edges_(std::move(edges)), producer_edges_(producer_count), consumer_edges_(consumer_count) {
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const auto& ed = edges_[e];
        require(ed.producer < producer_count, "edge " + std::to_string(e) + ": producer out of range");
        require(ed.consumer < consumer_count, "edge " + std::to_string(e) + ": consumer out of range");
        require(std::isfinite(ed.alpha), "edge " + std::to_string(e) + ": alpha must be finite");
        for (std::size_t other : producer_edges_[ed.producer]) {
            require(edges_[other].consumer != ed.consumer,
                    "duplicate edge between producer " + std::to_string(ed.producer) + " and consumer " +
                        std::to_string(ed.consumer));
        }
        producer_edges_[ed.producer].push_back(e);
        consumer_edges_[ed.consumer].push_back(e);
    }
}

TradingGraph TradingGraph::complete(std::size_t producer_count, std::size_t consumer_count,
                                    std::span<const double> alpha_row_major) {
    require(alpha_row_major.size() == producer_count * consumer_count, "complete graph: alpha size mismatch");
    std::vector<Edge> edges;
    edges.reserve(alpha_row_major.size());
    for (std::size_t i = 0; i < producer_count; ++i)
        for (std::size_t j = 0; j < consumer_count; ++j)
            edges.push_back({i, j, alpha_row_major[i * consumer_count + j]});
    return TradingGraph(producer_count, consumer_count, std::move(edges));
}

std::vector<double> TradingGraph::gather(std::span<const double> per_edge, std::span<const std::size_t> idx) const {
    require_same_size(per_edge.size(), edges_.size(), "gather");
    std::vector<double> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = per_edge[idx[k]];
    return out;
}

void Market::validate() const {
    require(producers.size() == graph.producer_count(), "market: producer count differs from graph");
    require(consumers.size() == graph.consumer_count(), "market: consumer count differs from graph");
    for (const auto& p : producers) p.validate();
    for (const auto& c : consumers) c.validate();
}

double cost(const ProducerParams& p, double x_total) {
    if (!std::isfinite(x_total)) throw std::domain_error("cost: non-finite generation");
    return 0.5 * p.a * x_total * x_total + p.b * x_total + p.c;
}

double marginal_cost(const ProducerParams& p, double x_total) { return p.a * x_total + p.b; }

double utility(const ConsumerParams& c, double y_total) {
    if (!(y_total >= 0.0)) throw std::domain_error("utility: negative or NaN consumption");
    if (y_total >= c.knee()) return c.omega * c.omega / (2.0 * c.delta);
    return c.omega * y_total - 0.5 * c.delta * y_total * y_total;
}

double marginal_utility(const ConsumerParams& c, double y_total) {
    return std::max(0.0, c.omega - c.delta * y_total);
}

double transaction_coefficient(std::span<const CriterionEntry> entries) {
    double sum = 0.0;
    for (const auto& s : entries) sum += s.r * s.d;
    return sum;
}

double producer_welfare(const ProducerParams& p, std::span<const double> prices, std::span<const double> x) {
    require_same_size(prices.size(), x.size(), "producer_welfare");
    const double revenue = std::inner_product(prices.begin(), prices.end(), x.begin(), 0.0);
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    return revenue - cost(p, total);
}

double consumer_welfare(const ConsumerParams& c, std::span<const double> prices, std::span<const double> alphas,
                        std::span<const double> y) {
    require_same_size(prices.size(), y.size(), "consumer_welfare");
    require_same_size(alphas.size(), y.size(), "consumer_welfare");
    double surplus = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        surplus += (alphas[k] - prices[k]) * y[k];
        total += y[k];
    }
    return utility(c, total) + surplus;
}

std::vector<double> producer_totals(const TradingGraph& graph, std::span<const double> x) {
    require_same_size(x.size(), graph.edge_count(), "producer_totals");
    std::vector<double> out(graph.producer_count(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t e : graph.producer_edges(i)) out[i] += x[e];
    return out;
}

std::vector<double> consumer_totals(const TradingGraph& graph, std::span<const double> y) {
    require_same_size(y.size(), graph.edge_count(), "consumer_totals");
    std::vector<double> out(graph.consumer_count(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j)
        for (std::size_t e : graph.consumer_edges(j)) out[j] += y[e];
    return out;
}

double social_welfare(const Market& market, const Allocation& alloc) {
    const auto& g = market.graph;
    require_same_size(alloc.x.size(), g.edge_count(), "social_welfare (x)");
    require_same_size(alloc.y.size(), g.edge_count(), "social_welfare (y)");
    const auto xs = producer_totals(g, alloc.x);
    const auto ys = consumer_totals(g, alloc.y);
    double w = 0.0;
    for (std::size_t j = 0; j < ys.size(); ++j) w += utility(market.consumers[j], ys[j]);
    for (std::size_t i = 0; i < xs.size(); ++i) w -= cost(market.producers[i], xs[i]);
    for (std::size_t e = 0; e < g.edge_count(); ++e) w += g.edge(e).alpha * alloc.y[e];
    return w;
}

}  // namespace p2pm
