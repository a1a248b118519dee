#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "p2pm/model.hpp"

namespace p2pm {

struct Line {
    std::size_t from_bus = 0;
    std::size_t to_bus = 0;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double f_max_kw = 0.0;
};

struct BusLimits {
    double v_min = 0.9;
    double v_max = 1.1;
};

enum class AgentRole { producer, consumer };

struct BusOccupant {
    AgentRole role = AgentRole::producer;
    std::size_t index = 0;
};

/// Radial feeder. Bus 0 is the slack; every other bus hosts at most one prosumer.
struct GridModel {
    std::size_t bus_count = 1;
    std::vector<Line> lines;
    std::vector<BusLimits> limits;                   // per bus, slack included
    std::vector<std::optional<BusOccupant>> occupant;  // per bus, slack is empty
    double base_kw = 100.0;

    void validate() const;
    /// Bus hosting each producer / consumer. Throws when a prosumer has no bus.
    std::vector<std::size_t> producer_buses(std::size_t producer_count) const;
    std::vector<std::size_t> consumer_buses(std::size_t consumer_count) const;
};

/// LinDistFlow sensitivities. voltage(b, b') is the resistance shared by the root
/// paths of b and b' (row/column 0 is the slack and stays zero). flow(l, b) is 1 when
/// bus b lies in the subtree below line l.
struct SensitivityMatrices {
    Eigen::MatrixXd voltage;
    Eigen::MatrixXd flow;
    std::vector<std::size_t> line_child;  // lower bus of each line
};

SensitivityMatrices build_sensitivities(const GridModel& grid);

/// Injections are per bus in kW (index 0 ignored); producers positive, consumers negative.
std::vector<double> bus_voltages(const SensitivityMatrices& sens, std::span<const double> injections_kw,
                                 double base_kw);
/// Positive flow is net export toward the root.
std::vector<double> line_flows(const SensitivityMatrices& sens, std::span<const double> injections_kw);

/// Net injection per bus implied by an allocation: +x_i at producer buses, -y_j at consumer buses.
std::vector<double> bus_injections(const GridModel& grid, const TradingGraph& graph, const Allocation& alloc);

struct ConstraintReport {
    std::vector<double> voltages;
    std::vector<double> flows;
    double worst_voltage_violation = 0.0;  // p.u. outside [v_min, v_max]
    double worst_flow_violation = 0.0;     // kW above f_max
    bool voltage_ok = true;
    bool flow_ok = true;

    bool ok() const { return voltage_ok && flow_ok; }
};

ConstraintReport check_constraints(const GridModel& grid, const SensitivityMatrices& sens, const TradingGraph& graph,
                                   const Allocation& alloc, double tolerance = 1e-9);

/// Linear constraint rows G p <= h over bus injections (kW), one per voltage/flow limit side.
struct NetworkRows {
    Eigen::MatrixXd coeff;  // rows x bus_count
    Eigen::VectorXd rhs;
};

NetworkRows network_rows(const GridModel& grid, const SensitivityMatrices& sens);

}  // namespace p2pm
