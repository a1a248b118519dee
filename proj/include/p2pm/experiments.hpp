#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2pm/instance_io.hpp"

namespace p2pm {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

enum class GridTemplate { none, chain, ieee15 };
enum class Topology { complete, matched_pairs };

/// Seeded description of a random market. The consumer's delta is drawn so that the knee
/// omega/delta sits at y_max times a factor from `knee_margin` (>= 1), keeping demand on the
/// strictly concave branch.
struct ScenarioSpec {
    std::size_t producers = 7;
    std::size_t consumers = 7;
    Range a{0.05, 0.2};
    Range b{1.0, 4.0};
    Range c{0.0, 5.0};
    Range x_max{20.0, 60.0};
    Range omega{5.0, 12.0};
    Range y_max{10.0, 60.0};
    Range knee_margin{1.0, 1.5};
    Range alpha{0.0, 1.0};
    GridTemplate grid = GridTemplate::none;
    Topology topology = Topology::complete;
    std::uint64_t seed = 1;
};

/// 7 producers and 7 consumers on the 15-bus feeder.
ScenarioSpec ieee15_scenario(std::uint64_t seed);

nlohmann::json to_json(const ScenarioSpec& spec);

Instance gen_instance(const ScenarioSpec& spec);

/// 15-bus radial feeder: producers at buses 1,3,4,5,9,10,11, consumers at 2,6,7,8,12,13,14,
/// voltage limits [0.9, 1.1] p.u., 60 kW line limits.
GridModel ieee15_grid(double base_kw = 100.0);

/// Chain feeder 0-1-...-n with producers and consumers alternating along it.
GridModel chain_grid(std::size_t producers, std::size_t consumers, double r_pu = 0.01, double f_max_kw = 60.0,
                     double base_kw = 100.0);

/// Copy of `inst` whose graph keeps only `kept_edges`; per-edge settings follow the edges.
Instance restrict_instance(const Instance& inst, std::span<const std::size_t> kept_edges);

struct SelectedRun {
    SelectionResult selection;
    Instance instance;
    ClearingResult result;
};

SelectedRun clear_with_selection(const Instance& inst, const SelectionConfig& cfg, const RunOptions& opts = {});

enum class Method { plain, accelerated, accelerated_selection };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct ComparisonRow {
    Method method = Method::accelerated;
    bool converged = false;
    std::size_t iterations = 0;
    double wall_ms = 0.0;
    double welfare = 0.0;
    std::size_t edges = 0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
};

ComparisonReport run_compare(const Instance& inst, std::span<const Method> methods,
                             const SelectionConfig& selection = {});

struct MonteCarloTrial {
    std::size_t trial = 0;
    std::size_t pairs = 0;
    double welfare = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double wall_ms = 0.0;
};

/// Each trial keeps, per consumer, a uniformly random nonempty subset of its neighbours.
/// Trials are independent; results do not depend on `threads`.
std::vector<MonteCarloTrial> run_montecarlo(const Instance& inst, std::size_t trials, std::uint64_t seed,
                                            std::size_t threads = 1);

struct SweepPoint {
    double benchmark = 0.0;
    double welfare = 0.0;
    std::size_t iterations = 0;
    std::size_t edges = 0;
    bool converged = false;
};

std::vector<SweepPoint> run_benchmark_sweep(const Instance& inst, std::span<const double> benchmarks);

/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace p2pm
