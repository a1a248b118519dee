#include "p2pm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

namespace p2pm {

namespace {

struct Tree {
    std::vector<std::size_t> parent_line;  // per bus; unused for the slack
    std::vector<std::size_t> order;        // BFS order from the slack
    std::vector<std::size_t> line_child;
};

// Orients the lines away from bus 0 and rejects anything that is not a spanning tree.
Tree orient(const GridModel& grid) {
    const std::size_t n = grid.bus_count;
    if (grid.lines.size() + 1 != n) throw std::invalid_argument("grid: line count must equal bus count - 1");
    std::vector<std::vector<std::size_t>> incident(n);
    for (std::size_t l = 0; l < grid.lines.size(); ++l) {
        const auto& ln = grid.lines[l];
        if (ln.from_bus >= n || ln.to_bus >= n || ln.from_bus == ln.to_bus)
            throw std::invalid_argument("grid: line " + std::to_string(l) + " has invalid endpoints");
        incident[ln.from_bus].push_back(l);
        incident[ln.to_bus].push_back(l);
    }
    Tree t;
    t.parent_line.assign(n, 0);
    t.line_child.assign(grid.lines.size(), 0);
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        const std::size_t b = q.front();
        q.pop();
        t.order.push_back(b);
        for (std::size_t l : incident[b]) {
            const auto& ln = grid.lines[l];
            const std::size_t other = ln.from_bus == b ? ln.to_bus : ln.from_bus;
            if (seen[other]) continue;
            seen[other] = true;
            t.parent_line[other] = l;
            t.line_child[l] = other;
            q.push(other);
        }
    }
    if (t.order.size() != n) throw std::invalid_argument("grid: topology is not a connected radial tree");
    return t;
}

}  // namespace

void GridModel::validate() const {
    if (bus_count < 1) throw std::invalid_argument("grid: needs at least the slack bus");
    if (!(base_kw > 0.0)) throw std::invalid_argument("grid: base_kw must be > 0");
    if (limits.size() != bus_count) throw std::invalid_argument("grid: need voltage limits for every bus");
    if (occupant.size() != bus_count) throw std::invalid_argument("grid: need an occupant entry for every bus");
    if (occupant[0]) throw std::invalid_argument("grid: slack bus cannot host a prosumer");
    for (std::size_t b = 0; b < bus_count; ++b) {
        const auto& lim = limits[b];
        if (!(0.0 < lim.v_min && lim.v_min < lim.v_max))
            throw std::invalid_argument("grid: bus " + std::to_string(b) + " needs 0 < v_min < v_max");
    }
    for (std::size_t l = 0; l < lines.size(); ++l)
        if (!(lines[l].f_max_kw > 0.0) || !(lines[l].r_pu >= 0.0))
            throw std::invalid_argument("grid: line " + std::to_string(l) + " needs f_max > 0 and r >= 0");
    orient(*this);
}

std::vector<std::size_t> GridModel::producer_buses(std::size_t producer_count) const {
    std::vector<std::size_t> out(producer_count, 0);
    std::vector<bool> found(producer_count, false);
    for (std::size_t b = 0; b < occupant.size(); ++b) {
        if (!occupant[b] || occupant[b]->role != AgentRole::producer) continue;
        if (occupant[b]->index >= producer_count || found[occupant[b]->index])
            throw std::invalid_argument("grid: invalid producer assignment at bus " + std::to_string(b));
        out[occupant[b]->index] = b;
        found[occupant[b]->index] = true;
    }
    for (std::size_t i = 0; i < producer_count; ++i)
        if (!found[i]) throw std::invalid_argument("grid: producer " + std::to_string(i) + " has no bus");
    return out;
}

std::vector<std::size_t> GridModel::consumer_buses(std::size_t consumer_count) const {
    std::vector<std::size_t> out(consumer_count, 0);
    std::vector<bool> found(consumer_count, false);
    for (std::size_t b = 0; b < occupant.size(); ++b) {
        if (!occupant[b] || occupant[b]->role != AgentRole::consumer) continue;
        if (occupant[b]->index >= consumer_count || found[occupant[b]->index])
            throw std::invalid_argument("grid: invalid consumer assignment at bus " + std::to_string(b));
        out[occupant[b]->index] = b;
        found[occupant[b]->index] = true;
    }
    for (std::size_t j = 0; j < consumer_count; ++j)
        if (!found[j]) throw std::invalid_argument("grid: consumer " + std::to_string(j) + " has no bus");
    return out;
}

SensitivityMatrices build_sensitivities(const GridModel& grid) {
    const Tree t = orient(grid);
    const std::size_t n = grid.bus_count;
    const std::size_t m = grid.lines.size();

    SensitivityMatrices s;
    s.line_child = t.line_child;
    s.flow = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    // Walk buses deepest-first so every subtree is complete before its parent line is filled.
    std::vector<std::size_t> line_of_child(n, m);
    for (std::size_t l = 0; l < m; ++l) line_of_child[t.line_child[l]] = l;
    for (auto it = t.order.rbegin(); it != t.order.rend(); ++it) {
        const std::size_t b = *it;
        if (b == 0) continue;
        const auto l = static_cast<Eigen::Index>(line_of_child[b]);
        s.flow(l, static_cast<Eigen::Index>(b)) = 1.0;
        const auto& ln = grid.lines[line_of_child[b]];
        const std::size_t parent = ln.from_bus == b ? ln.to_bus : ln.from_bus;
        if (parent != 0) {
            const auto pl = static_cast<Eigen::Index>(line_of_child[parent]);
            s.flow.row(pl) += s.flow.row(l);
        }
    }
    // Shared-path resistance: sum over lines of r_l * (subtree indicator outer product).
    Eigen::VectorXd r(static_cast<Eigen::Index>(m));
    for (std::size_t l = 0; l < m; ++l) r(static_cast<Eigen::Index>(l)) = grid.lines[l].r_pu;
    s.voltage = s.flow.transpose() * r.asDiagonal() * s.flow;
    return s;
}

std::vector<double> bus_voltages(const SensitivityMatrices& sens, std::span<const double> injections_kw,
                                 double base_kw) {
    const auto n = sens.voltage.rows();
    if (static_cast<Eigen::Index>(injections_kw.size()) != n)
        throw std::invalid_argument("bus_voltages: injection vector must have one entry per bus");
    Eigen::VectorXd p(n);
    for (Eigen::Index b = 0; b < n; ++b) p(b) = b == 0 ? 0.0 : injections_kw[static_cast<std::size_t>(b)] / base_kw;
    const Eigen::VectorXd dv = sens.voltage * p;
    std::vector<double> v(static_cast<std::size_t>(n));
    for (Eigen::Index b = 0; b < n; ++b) v[static_cast<std::size_t>(b)] = 1.0 + dv(b);
    return v;
}

std::vector<double> line_flows(const SensitivityMatrices& sens, std::span<const double> injections_kw) {
    const auto n = sens.flow.cols();
    if (static_cast<Eigen::Index>(injections_kw.size()) != n)
        throw std::invalid_argument("line_flows: injection vector must have one entry per bus");
    Eigen::VectorXd p(n);
    for (Eigen::Index b = 0; b < n; ++b) p(b) = b == 0 ? 0.0 : injections_kw[static_cast<std::size_t>(b)];
    const Eigen::VectorXd f = sens.flow * p;
    return {f.data(), f.data() + f.size()};
}

std::vector<double> bus_injections(const GridModel& grid, const TradingGraph& graph, const Allocation& alloc) {
    const auto pb = grid.producer_buses(graph.producer_count());
    const auto cb = grid.consumer_buses(graph.consumer_count());
    const auto xs = producer_totals(graph, alloc.x);
    const auto ys = consumer_totals(graph, alloc.y);
    std::vector<double> inj(grid.bus_count, 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) inj[pb[i]] += xs[i];
    for (std::size_t j = 0; j < ys.size(); ++j) inj[cb[j]] -= ys[j];
    return inj;
}

ConstraintReport check_constraints(const GridModel& grid, const SensitivityMatrices& sens, const TradingGraph& graph,
                                   const Allocation& alloc, double tolerance) {
    const auto inj = bus_injections(grid, graph, alloc);
    ConstraintReport rep;
    rep.voltages = bus_voltages(sens, inj, grid.base_kw);
    rep.flows = line_flows(sens, inj);
    for (std::size_t b = 1; b < grid.bus_count; ++b) {
        const double v = rep.voltages[b];
        const double viol = std::max({0.0, grid.limits[b].v_min - v, v - grid.limits[b].v_max});
        rep.worst_voltage_violation = std::max(rep.worst_voltage_violation, viol);
    }
    for (std::size_t l = 0; l < rep.flows.size(); ++l) {
        const double viol = std::max(0.0, std::abs(rep.flows[l]) - grid.lines[l].f_max_kw);
        rep.worst_flow_violation = std::max(rep.worst_flow_violation, viol);
    }
    rep.voltage_ok = rep.worst_voltage_violation <= tolerance;
    rep.flow_ok = rep.worst_flow_violation <= tolerance;
    return rep;
}

NetworkRows network_rows(const GridModel& grid, const SensitivityMatrices& sens) {
    const auto n = static_cast<Eigen::Index>(grid.bus_count);
    const auto m = static_cast<Eigen::Index>(grid.lines.size());
    const Eigen::Index voltage_rows = 2 * (n - 1);
    NetworkRows rows;
    rows.coeff = Eigen::MatrixXd::Zero(voltage_rows + 2 * m, n);
    rows.rhs = Eigen::VectorXd::Zero(voltage_rows + 2 * m);
    Eigen::Index r = 0;
    for (Eigen::Index b = 1; b < n; ++b) {
        const auto& lim = grid.limits[static_cast<std::size_t>(b)];
        rows.coeff.row(r) = sens.voltage.row(b) / grid.base_kw;
        rows.rhs(r++) = lim.v_max - 1.0;
        rows.coeff.row(r) = -sens.voltage.row(b) / grid.base_kw;
        rows.rhs(r++) = 1.0 - lim.v_min;
    }
    for (Eigen::Index l = 0; l < m; ++l) {
        const double fmax = grid.lines[static_cast<std::size_t>(l)].f_max_kw;
        rows.coeff.row(r) = sens.flow.row(l);
        rows.rhs(r++) = fmax;
        rows.coeff.row(r) = -sens.flow.row(l);
        rows.rhs(r++) = fmax;
    }
    rows.coeff.col(0).setZero();
    return rows;
}

}  // namespace p2pm
