#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "p2pm/grid.hpp"
#include "p2pm/model.hpp"

namespace p2pm {

struct OracleOptions {
    bool with_network = false;
    double tolerance = 1e-8;       // required KKT residual
    std::size_t max_iter = 200;    // interior-point iterations
};

/// Per-agent additive price adjustments from network multipliers. The effective price
/// an agent at bus b sees on edge e is lambda_e + charge(b).
struct AgentCharges {
    std::vector<double> producer;
    std::vector<double> consumer;
};

/// Centralized welfare maximizer over the consensual variable z_ij = x_ij = y_ji.
struct OracleSolution {
    std::vector<double> trades;  // z per edge
    double welfare = 0.0;
    std::vector<double> prices;  // per edge, an optimal dual point
    std::vector<double> bus_charges;  // per bus, network mode only
    std::optional<AgentCharges> charges;
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
    bool polished = false;

    Allocation allocation() const { return {trades, trades}; }
};

OracleSolution solve_centralized(const Market& market, const GridModel* grid, const OracleOptions& opts = {});

enum class BoundKind { accelerated, plain };

/// Accelerated: sum 2 (lambda0 - lambda*)^2 / (eta k^2). Plain: sum (lambda0 - lambda*)^2 / (2 eta k).
double theoretical_bound(BoundKind kind, std::size_t k, std::span<const double> eta,
                         std::span<const double> lambda0, std::span<const double> lambda_star);

/// Largest optimality violation of (trades, prices) for the welfare program: primal
/// infeasibility, or per edge the sum of the producer's and consumer's stationarity and
/// complementarity gaps (natural-map form).
double kkt_residual(const Market& market, std::span<const double> trades, std::span<const double> prices,
                    const AgentCharges* charges = nullptr);

}  // namespace p2pm
