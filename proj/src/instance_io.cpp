#include "p2pm/instance_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace p2pm {

using nlohmann::json;

std::string to_string(NetworkMode mode) { return mode == NetworkMode::penalty ? "penalty" : "report-only"; }

std::string to_string(TieBreak rule) {
    return rule == TieBreak::proportional_to_previous ? "proportional-to-previous" : "lowest-index";
}

namespace {

NetworkMode parse_network_mode(const std::string& s) {
    if (s == "report-only") return NetworkMode::report_only;
    if (s == "penalty") return NetworkMode::penalty;
    throw std::invalid_argument("unknown network_mode '" + s + "'");
}

TieBreak parse_tie_break(const std::string& s) {
    if (s == "lowest-index") return TieBreak::lowest_index;
    if (s == "proportional-to-previous") return TieBreak::proportional_to_previous;
    throw std::invalid_argument("unknown tie_break '" + s + "'");
}

// NaN is not representable in JSON.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json clearing_to_json(const ClearingConfig& c) {
    json j;
    j["eta"] = c.eta.empty() ? json(nullptr) : json(c.eta);
    j["fallback_eta"] = c.fallback_eta;
    j["epsilon"] = c.epsilon;
    j["max_iter"] = c.max_iter;
    j["accelerated"] = c.accelerated;
    j["network_mode"] = to_string(c.network_mode);
    j["rho"] = c.response.rho;
    j["tie_break"] = to_string(c.response.tie_break);
    if (c.lambda0.kind == InitialPrices::Kind::explicit_values)
        j["lambda0"] = {{"policy", "explicit"}, {"values", c.lambda0.values}};
    else
        j["lambda0"] = {{"policy", "cost-plus"}, {"markup", c.lambda0.markup}};
    j["network_step"] = c.network_step;
    j["network_tolerance"] = c.network_tolerance;
    return j;
}

ClearingConfig clearing_from_json(const json& j, std::size_t edge_count) {
    ClearingConfig c;
    if (j.contains("eta") && !j["eta"].is_null()) {
        if (j["eta"].is_number())
            c.eta.assign(edge_count, j["eta"].get<double>());
        else
            c.eta = j["eta"].get<std::vector<double>>();
    }
    c.fallback_eta = j.value("fallback_eta", c.fallback_eta);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.max_iter = j.value("max_iter", c.max_iter);
    c.accelerated = j.value("accelerated", c.accelerated);
    if (j.contains("network_mode")) c.network_mode = parse_network_mode(j["network_mode"].get<std::string>());
    c.response.rho = j.value("rho", c.response.rho);
    if (j.contains("tie_break")) c.response.tie_break = parse_tie_break(j["tie_break"].get<std::string>());
    if (j.contains("lambda0")) {
        const auto& l = j["lambda0"];
        const std::string policy = l.value("policy", "cost-plus");
        if (policy == "explicit") {
            c.lambda0.kind = InitialPrices::Kind::explicit_values;
            c.lambda0.values = l.at("values").get<std::vector<double>>();
        } else if (policy == "cost-plus") {
            c.lambda0.markup = l.value("markup", c.lambda0.markup);
        } else {
            throw std::invalid_argument("unknown lambda0 policy '" + policy + "'");
        }
    }
    c.network_step = j.value("network_step", c.network_step);
    c.network_tolerance = j.value("network_tolerance", c.network_tolerance);
    return c;
}

json grid_to_json(const GridModel& g) {
    json j;
    j["base_kw"] = g.base_kw;
    j["bus_count"] = g.bus_count;
    json lines = json::array();
    for (const auto& l : g.lines)
        lines.push_back({{"from_bus", l.from_bus}, {"to_bus", l.to_bus}, {"r_pu", l.r_pu}, {"x_pu", l.x_pu},
                         {"f_max_kw", l.f_max_kw}});
    j["lines"] = lines;
    json buses = json::array();
    for (std::size_t b = 0; b < g.limits.size(); ++b)
        buses.push_back({{"bus", b}, {"v_min", g.limits[b].v_min}, {"v_max", g.limits[b].v_max}});
    j["buses"] = buses;
    json map = json::array();
    for (std::size_t b = 0; b < g.occupant.size(); ++b) {
        if (!g.occupant[b]) continue;
        map.push_back({{"bus", b},
                       {"role", g.occupant[b]->role == AgentRole::producer ? "producer" : "consumer"},
                       {"index", g.occupant[b]->index}});
    }
    j["bus_map"] = map;
    return j;
}

GridModel grid_from_json(const json& j) {
    GridModel g;
    g.base_kw = j.value("base_kw", 100.0);
    g.bus_count = j.at("bus_count").get<std::size_t>();
    for (const auto& l : j.at("lines"))
        g.lines.push_back({l.at("from_bus").get<std::size_t>(), l.at("to_bus").get<std::size_t>(),
                           l.at("r_pu").get<double>(), l.value("x_pu", 0.0), l.at("f_max_kw").get<double>()});
    g.limits.assign(g.bus_count, BusLimits{});
    if (j.contains("buses"))
        for (const auto& b : j["buses"]) {
            const auto bus = b.at("bus").get<std::size_t>();
            if (bus >= g.bus_count) throw std::invalid_argument("grid: bus index out of range in limits");
            g.limits[bus] = {b.value("v_min", 0.9), b.value("v_max", 1.1)};
        }
    g.occupant.assign(g.bus_count, std::nullopt);
    for (const auto& m : j.at("bus_map")) {
        const auto bus = m.at("bus").get<std::size_t>();
        if (bus >= g.bus_count) throw std::invalid_argument("grid: bus index out of range in bus_map");
        const auto role = m.at("role").get<std::string>();
        if (role != "producer" && role != "consumer") throw std::invalid_argument("grid: unknown role '" + role + "'");
        g.occupant[bus] = BusOccupant{role == "producer" ? AgentRole::producer : AgentRole::consumer,
                                      m.at("index").get<std::size_t>()};
    }
    return g;
}

}  // namespace

json to_json(const Instance& inst) {
    json doc;
    json producers = json::array();
    for (const auto& p : inst.market.producers)
        producers.push_back({{"a", p.a}, {"b", p.b}, {"c", p.c}, {"x_min", p.x_min}, {"x_max", p.x_max}});
    doc["producers"] = producers;
    json consumers = json::array();
    for (const auto& c : inst.market.consumers)
        consumers.push_back({{"omega", c.omega}, {"delta", c.delta}, {"y_min", c.y_min}, {"y_max", c.y_max}});
    doc["consumers"] = consumers;
    json edges = json::array();
    for (const auto& e : inst.market.graph.edges())
        edges.push_back({{"producer", e.producer}, {"consumer", e.consumer}, {"alpha", e.alpha}});
    doc["edges"] = edges;
    doc["grid"] = inst.grid ? grid_to_json(*inst.grid) : json(nullptr);
    doc["clearing"] = clearing_to_json(inst.clearing);
    return doc;
}

Instance instance_from_json(const json& doc) {
    Instance inst;
    for (const auto& p : doc.at("producers"))
        inst.market.producers.push_back({p.at("a").get<double>(), p.at("b").get<double>(), p.value("c", 0.0),
                                         p.value("x_min", 0.0), p.at("x_max").get<double>()});
    for (const auto& c : doc.at("consumers"))
        inst.market.consumers.push_back({c.at("omega").get<double>(), c.at("delta").get<double>(),
                                         c.value("y_min", 0.0), c.at("y_max").get<double>()});
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
        Edge ed{e.at("producer").get<std::size_t>(), e.at("consumer").get<std::size_t>(), 0.0};
        if (e.contains("alpha")) {
            ed.alpha = e["alpha"].get<double>();
        } else if (e.contains("criteria")) {
            std::vector<CriterionEntry> crit;
            for (const auto& s : e["criteria"])
                crit.push_back({s.value("id", std::string{}), s.at("r").get<double>(), s.at("d").get<double>()});
            ed.alpha = transaction_coefficient(crit);
        }
        edges.push_back(ed);
    }
    inst.market.graph =
        TradingGraph(inst.market.producers.size(), inst.market.consumers.size(), std::move(edges));
    inst.market.validate();
    if (doc.contains("grid") && !doc["grid"].is_null()) {
        inst.grid = grid_from_json(doc["grid"]);
        inst.grid->validate();
    }
    if (doc.contains("clearing")) inst.clearing = clearing_from_json(doc["clearing"], inst.market.graph.edge_count());
    inst.clearing.validate(inst.market.graph.edge_count());
    return inst;
}

Instance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open instance file '" + path + "'");
    return instance_from_json(json::parse(in));
}

void save_instance(const Instance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write instance file '" + path + "'");
    out << to_json(inst).dump(2) << '\n';
}

void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace) {
    os << "k,mismatch_inf,welfare,dual_value,dual_gap,wall_ms\n";
    char buf[256];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.k, r.mismatch_inf, r.welfare, r.dual_value,
                      r.dual_gap, r.wall_ms);
        os << buf;
    }
}

json to_json(const ConstraintReport& rep) {
    return {{"voltage_ok", rep.voltage_ok},
            {"flow_ok", rep.flow_ok},
            {"worst_voltage_violation", rep.worst_voltage_violation},
            {"worst_flow_violation", rep.worst_flow_violation},
            {"voltages", rep.voltages},
            {"flows", rep.flows}};
}

json result_summary(const Instance& inst, const ClearingResult& res, const std::optional<SelectionResult>& selection) {
    const auto& g = inst.market.graph;
    json j;
    j["converged"] = res.converged;
    j["iterations"] = res.iterations;
    j["welfare"] = res.welfare;
    j["mismatch_inf"] = res.trace.empty() ? 0.0 : res.trace.back().mismatch_inf;
    j["step_size_flagged"] = res.step_size_flagged;
    json edges = json::array();
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        edges.push_back({{"producer", g.edge(e).producer},
                         {"consumer", g.edge(e).consumer},
                         {"x", res.allocation.x[e]},
                         {"y", res.allocation.y[e]},
                         {"price", res.prices[e]}});
    j["edges"] = edges;
    j["constraints"] = res.constraints ? to_json(*res.constraints) : json(nullptr);
    if (!res.bus_charges.empty()) j["bus_charges"] = res.bus_charges;
    if (selection)
        j["selection"] = {{"edges_before", selection->edges_before},
                          {"edges_after", selection->edges_after},
                          {"isolated_producers", selection->isolated_producers}};
    return j;
}

json to_json(const Instance& inst, const OracleSolution& sol) {
    const auto& g = inst.market.graph;
    json j;
    j["welfare"] = sol.welfare;
    j["kkt_residual"] = sol.kkt_residual;
    j["iterations"] = sol.iterations;
    json edges = json::array();
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        edges.push_back({{"producer", g.edge(e).producer},
                         {"consumer", g.edge(e).consumer},
                         {"trade", sol.trades[e]},
                         {"price", number_or_null(sol.prices[e])}});
    j["edges"] = edges;
    if (!sol.bus_charges.empty()) j["bus_charges"] = sol.bus_charges;
    return j;
}

std::string spec_hash(const json& doc) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : doc.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace p2pm
