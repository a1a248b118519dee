#include "p2pm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace p2pm {

using nlohmann::json;

namespace {

double draw(std::mt19937_64& rng, const Range& r) {
    if (r.hi < r.lo) throw std::invalid_argument("scenario: range with hi < lo");
    if (r.hi == r.lo) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

std::string to_string(GridTemplate t) {
    switch (t) {
        case GridTemplate::chain: return "chain";
        case GridTemplate::ieee15: return "ieee15";
        default: return "none";
    }
}

}  // namespace

ScenarioSpec ieee15_scenario(std::uint64_t seed) {
    ScenarioSpec s;
    s.producers = 7;
    s.consumers = 7;
    s.grid = GridTemplate::ieee15;
    s.seed = seed;
    return s;
}

nlohmann::json to_json(const ScenarioSpec& s) {
    return {{"producers", s.producers},
            {"consumers", s.consumers},
            {"a", range_json(s.a)},
            {"b", range_json(s.b)},
            {"c", range_json(s.c)},
            {"x_max", range_json(s.x_max)},
            {"omega", range_json(s.omega)},
            {"y_max", range_json(s.y_max)},
            {"knee_margin", range_json(s.knee_margin)},
            {"alpha", range_json(s.alpha)},
            {"grid", to_string(s.grid)},
            {"topology", s.topology == Topology::matched_pairs ? "matched-pairs" : "complete"},
            {"seed", s.seed}};
}

GridModel chain_grid(std::size_t producers, std::size_t consumers, double r_pu, double f_max_kw, double base_kw) {
    GridModel g;
    g.bus_count = producers + consumers + 1;
    g.base_kw = base_kw;
    for (std::size_t b = 1; b < g.bus_count; ++b) g.lines.push_back({b - 1, b, r_pu, r_pu, f_max_kw});
    g.limits.assign(g.bus_count, BusLimits{});
    g.occupant.assign(g.bus_count, std::nullopt);
    std::size_t next_p = 0, next_c = 0;
    for (std::size_t b = 1; b < g.bus_count; ++b) {
        const bool producer_turn = (b % 2 == 1 && next_p < producers) || next_c >= consumers;
        if (producer_turn)
            g.occupant[b] = BusOccupant{AgentRole::producer, next_p++};
        else
            g.occupant[b] = BusOccupant{AgentRole::consumer, next_c++};
    }
    return g;
}

Instance gen_instance(const ScenarioSpec& spec) {
    if (spec.producers == 0 || spec.consumers == 0) throw std::invalid_argument("scenario: need producers and consumers");
    if (spec.grid == GridTemplate::ieee15 && (spec.producers != 7 || spec.consumers != 7))
        throw std::invalid_argument("scenario: the ieee15 template hosts exactly 7 producers and 7 consumers");
    if (spec.topology == Topology::matched_pairs && spec.producers != spec.consumers)
        throw std::invalid_argument("scenario: matched pairs need equal producer and consumer counts");
    if (spec.knee_margin.lo < 1.0) throw std::invalid_argument("scenario: knee margin must be >= 1");

    std::mt19937_64 rng(spec.seed);
    Instance inst;
    for (std::size_t i = 0; i < spec.producers; ++i) {
        ProducerParams p;
        p.a = draw(rng, spec.a);
        p.b = draw(rng, spec.b);
        p.c = draw(rng, spec.c);
        p.x_min = 0.0;
        p.x_max = draw(rng, spec.x_max);
        inst.market.producers.push_back(p);
    }
    for (std::size_t j = 0; j < spec.consumers; ++j) {
        ConsumerParams c;
        c.omega = draw(rng, spec.omega);
        c.y_min = 0.0;
        c.y_max = draw(rng, spec.y_max);
        c.delta = c.omega / (c.y_max * draw(rng, spec.knee_margin));
        inst.market.consumers.push_back(c);
    }
    std::vector<Edge> edges;
    if (spec.topology == Topology::matched_pairs) {
        for (std::size_t i = 0; i < spec.producers; ++i) edges.push_back({i, i, draw(rng, spec.alpha)});
    } else {
        for (std::size_t i = 0; i < spec.producers; ++i)
            for (std::size_t j = 0; j < spec.consumers; ++j) edges.push_back({i, j, draw(rng, spec.alpha)});
    }
    inst.market.graph = TradingGraph(spec.producers, spec.consumers, std::move(edges));
    if (spec.grid == GridTemplate::ieee15) inst.grid = ieee15_grid();
    if (spec.grid == GridTemplate::chain) inst.grid = chain_grid(spec.producers, spec.consumers);
    inst.market.validate();
    return inst;
}

Instance restrict_instance(const Instance& inst, std::span<const std::size_t> kept_edges) {
    Instance out = inst;
    out.market.graph = restrict_edges(inst.market.graph, kept_edges);
    auto pick = [&](const std::vector<double>& v) {
        std::vector<double> r;
        r.reserve(kept_edges.size());
        for (std::size_t e : kept_edges) r.push_back(v.at(e));
        return r;
    };
    if (!inst.clearing.eta.empty()) out.clearing.eta = pick(inst.clearing.eta);
    if (inst.clearing.lambda0.kind == InitialPrices::Kind::explicit_values)
        out.clearing.lambda0.values = pick(inst.clearing.lambda0.values);
    return out;
}

SelectedRun clear_with_selection(const Instance& inst, const SelectionConfig& cfg, const RunOptions& opts) {
    SelectedRun out;
    out.selection = apply_selection(inst.market.graph, cfg);
    out.instance = restrict_instance(inst, out.selection.kept_edges);
    RunOptions o = opts;
    if (out.instance.grid) o.grid = &*out.instance.grid;
    out.result = run(out.instance.market, out.instance.clearing, o);
    return out;
}

std::string to_string(Method m) {
    switch (m) {
        case Method::plain: return "plain";
        case Method::accelerated: return "accelerated";
        default: return "accelerated+selection";
    }
}

Method parse_method(const std::string& s) {
    if (s == "plain") return Method::plain;
    if (s == "accelerated") return Method::accelerated;
    if (s == "accelerated+selection" || s == "selection") return Method::accelerated_selection;
    throw std::invalid_argument("unknown method '" + s + "'");
}

ComparisonReport run_compare(const Instance& inst, std::span<const Method> methods, const SelectionConfig& selection) {
    if (methods.size() < 2) throw std::invalid_argument("compare: need at least two methods");
    ComparisonReport rep;
    RunOptions opts;
    if (inst.grid) opts.grid = &*inst.grid;
    for (Method m : methods) {
        Instance local = inst;
        local.clearing.accelerated = m != Method::plain;
        ComparisonRow row;
        row.method = m;
        ClearingResult res;
        if (m == Method::accelerated_selection) {
            auto sel = clear_with_selection(local, selection);
            res = std::move(sel.result);
            row.edges = sel.selection.edges_after;
        } else {
            res = run(local.market, local.clearing, opts);
            row.edges = local.market.graph.edge_count();
        }
        row.converged = res.converged;
        row.iterations = res.iterations;
        row.welfare = res.welfare;
        row.wall_ms = res.trace.empty() ? 0.0 : res.trace.back().wall_ms;
        rep.rows.push_back(row);
    }
    return rep;
}

std::vector<MonteCarloTrial> run_montecarlo(const Instance& inst, std::size_t trials, std::uint64_t seed,
                                            std::size_t threads) {
    if (trials == 0) throw std::invalid_argument("montecarlo: need at least one trial");
    const auto& g = inst.market.graph;
    std::vector<MonteCarloTrial> out(trials);

    auto one = [&](std::size_t t) {
        std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(t)};
        std::mt19937_64 rng(sq);
        std::vector<bool> keep(g.edge_count(), false);
        for (std::size_t j = 0; j < g.consumer_count(); ++j) {
            const auto idx = g.consumer_edges(j);
            if (idx.empty()) continue;
            if (idx.size() < 64) {
                // Uniform over the 2^d - 1 nonempty subsets.
                const std::uint64_t hi = (std::uint64_t{1} << idx.size()) - 1;
                const std::uint64_t mask = std::uniform_int_distribution<std::uint64_t>(1, hi)(rng);
                for (std::size_t k = 0; k < idx.size(); ++k)
                    if (mask >> k & 1u) keep[idx[k]] = true;
            } else {
                std::bernoulli_distribution coin(0.5);
                bool any = false;
                while (!any)
                    for (std::size_t k = 0; k < idx.size(); ++k) any |= (keep[idx[k]] = coin(rng));
            }
        }
        std::vector<std::size_t> kept;
        for (std::size_t e = 0; e < keep.size(); ++e)
            if (keep[e]) kept.push_back(e);
        const Instance local = restrict_instance(inst, kept);
        RunOptions opts;
        if (local.grid) opts.grid = &*local.grid;
        const auto res = run(local.market, local.clearing, opts);
        out[t] = {t, kept.size(), res.welfare, res.iterations, res.converged,
                  res.trace.empty() ? 0.0 : res.trace.back().wall_ms};
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, trials));
    if (workers == 1) {
        for (std::size_t t = 0; t < trials; ++t) one(t);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t t = next++; t < trials; t = next++) one(t);
        });
    pool.clear();
    return out;
}

std::vector<SweepPoint> run_benchmark_sweep(const Instance& inst, std::span<const double> benchmarks) {
    std::vector<SweepPoint> out;
    for (double b : benchmarks) {
        const auto sel = clear_with_selection(inst, SelectionConfig{b});
        out.push_back({b, sel.result.welfare, sel.result.iterations, sel.selection.edges_after, sel.result.converged});
    }
    return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace p2pm
