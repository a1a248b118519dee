#pragma once

#include <optional>
#include <span>
#include <vector>

#include "p2pm/model.hpp"

namespace p2pm {

enum class TieBreak { lowest_index, proportional_to_previous };

/// rho > 0 adds -(rho/2)||v - v_prev||^2 to each agent's objective, which makes the
/// per-edge split unique. rho == 0 is the undamped argmax with deterministic tie-breaking.
struct BestResponseConfig {
    double rho = 1e-3;
    TieBreak tie_break = TieBreak::lowest_index;
};

/// argmax over x >= 0, x_min <= 1'x <= x_max of
///   lambda_hat'x - C(1'x) - (rho/2)||x - x_prev||^2.
/// Edges are in the producer's neighbour order.
std::vector<double> producer_best_response(const ProducerParams& p, std::span<const double> lambda_hat,
                                           std::span<const double> x_prev, const BestResponseConfig& cfg);

/// argmax over y >= 0, y_min <= 1'y <= y_max of
///   U(1'y) + (alpha - lambda_hat)'y - (rho/2)||y - y_prev||^2.
std::vector<double> consumer_best_response(const ConsumerParams& c, std::span<const double> lambda_hat,
                                           std::span<const double> alpha, std::span<const double> y_prev,
                                           const BestResponseConfig& cfg);

/// Optimal values of the undamped subproblems, i.e. the local terms q_i and q_j of the dual function.
double producer_dual_term(const ProducerParams& p, std::span<const double> lambda);
double consumer_dual_term(const ConsumerParams& c, std::span<const double> lambda, std::span<const double> alpha);

/// Objective values used by brute-force checks.
double producer_objective(const ProducerParams& p, std::span<const double> lambda_hat,
                          std::span<const double> x_prev, double rho, std::span<const double> x);
double consumer_objective(const ConsumerParams& c, std::span<const double> lambda_hat,
                          std::span<const double> alpha, std::span<const double> y_prev, double rho,
                          std::span<const double> y);

/// Largest step size with a rate guarantee for the pair: 1 / L with
/// L = (sigma_i + sigma_j) / (sigma_i sigma_j), sigma_i = a, sigma_j = delta.
/// Empty when the consumer's demand range reaches the flat utility branch.
std::optional<double> step_size_bound(const ProducerParams& p, const ConsumerParams& c);

}  // namespace p2pm
