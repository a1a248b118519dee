#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "p2pm/grid.hpp"
#include "p2pm/model.hpp"
#include "p2pm/subproblem.hpp"

namespace p2pm {

enum class NetworkMode { report_only, penalty };

/// How producers open the market. `cost_plus` sets every edge of producer i to b_i + markup.
struct InitialPrices {
    enum class Kind { cost_plus, explicit_values };
    Kind kind = Kind::cost_plus;
    double markup = 1.0;
    std::vector<double> values;  // per edge, used by explicit_values

    std::vector<double> resolve(const Market& market) const;
};

struct ClearingConfig {
    /// Per-edge step sizes. Empty means 1/L_ij where defined, otherwise `fallback_eta`.
    std::vector<double> eta;
    double fallback_eta = 0.1;
    double epsilon = 1e-3;  // kWh, per-edge consensus tolerance
    std::size_t max_iter = 100000;
    bool accelerated = true;
    NetworkMode network_mode = NetworkMode::report_only;
    BestResponseConfig response;
    InitialPrices lambda0;
    /// Penalty mode: subgradient step on the operator's constraint multipliers, and the
    /// largest violation (p.u. for voltage, kW for flow) tolerated at the stop.
    double network_step = 1e-3;
    double network_tolerance = 1e-3;
    /// Worker threads for the best-response phase. Results do not depend on this.
    std::size_t threads = 1;
    /// Evaluate the dual function every iteration (needed for dual_gap).
    bool trace_dual = true;

    void validate(std::size_t edge_count) const;
};

struct IterationRecord {
    std::size_t k = 0;
    double mismatch_inf = 0.0;
    double welfare = 0.0;
    double dual_value = 0.0;
    double dual_gap = 0.0;  // NaN unless q(lambda*) was supplied
    double wall_ms = 0.0;
};

/// Algorithm state after iteration k: lambda = lambda^k, lambda_prev = lambda^{k-1},
/// lambda_hat = lambda_hat^{k+1}, gamma = gamma^{k+1}.
struct MarketState {
    std::size_t k = 0;
    std::vector<double> lambda;
    std::vector<double> lambda_prev;
    std::vector<double> lambda_hat;
    double gamma = 1.0;
    Allocation alloc;
};

struct ClearingResult {
    bool converged = false;
    std::size_t iterations = 0;
    Allocation allocation;
    std::vector<double> prices;
    double welfare = 0.0;
    std::vector<IterationRecord> trace;
    std::optional<ConstraintReport> constraints;
    std::vector<double> eta;      // step sizes actually used
    std::vector<double> lambda0;  // opening prices actually used
    bool step_size_flagged = false;  // some eta exceeds its 1/L bound, or no bound exists
    std::vector<double> bus_charges;  // penalty mode only
};

/// Optional extras for a run.
struct RunOptions {
    std::optional<double> dual_optimum;        // q(lambda*), enables dual_gap
    std::optional<Allocation> initial_allocation;  // x^0, y^0 used by the proximal term
    const GridModel* grid = nullptr;
};

double gamma_next(std::size_t k, double gamma_k);

std::vector<double> momentum_extrapolate(std::size_t k, double gamma_k, double gamma_next,
                                         std::span<const double> lambda_k, std::span<const double> lambda_prev);

std::vector<double> price_update(std::span<const double> lambda_hat, std::span<const double> eta,
                                 std::span<const double> x, std::span<const double> y);

/// Inclusive: every edge must satisfy |x - y| <= epsilon.
bool stopping_check(std::span<const double> x, std::span<const double> y, double epsilon);

double mismatch_inf(std::span<const double> x, std::span<const double> y);

/// q(lambda): sum of the undamped local maximizations.
double dual_value(const Market& market, std::span<const double> lambda);

/// 1/L_ij per edge, falling back to `fallback` where the bound is undefined.
std::vector<double> default_step_sizes(const Market& market, double fallback);

ClearingResult run(const Market& market, const ClearingConfig& cfg, const RunOptions& opts = {});

}  // namespace p2pm
