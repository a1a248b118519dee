// Command-line front end: generate instances, clear them, and run the experiment drivers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "p2pm/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace p2pm;

namespace {

struct Common {
    std::string instance;
    std::uint64_t seed = 1;
    std::optional<double> eta;
    std::optional<double> epsilon;
    std::optional<std::size_t> max_iter;
    bool accelerated = false;
    bool plain = false;
    std::optional<double> select;
    std::optional<double> rho;
    std::string network_mode;
    std::string out = "out";
    std::size_t threads = 1;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--instance", c.instance, "Instance JSON (default: seeded ieee15 scenario)");
    app->add_option("--seed", c.seed, "Seed for generated instances and random trials");
    app->add_option("--eta", c.eta, "Uniform step size for every edge (default: 1/L per edge)");
    app->add_option("--epsilon", c.epsilon, "Per-edge consensus tolerance in kWh (default 0.001)");
    app->add_option("--max-iter", c.max_iter, "Iteration cap");
    auto* acc = app->add_flag("--accelerated", c.accelerated, "Use momentum (default)");
    app->add_flag("--plain", c.plain, "Disable momentum")->excludes(acc);
    app->add_option("--select", c.select, "Apply partner selection at this benchmark")
        ->expected(0, 1)
        ->default_str("0");
    app->add_option("--rho", c.rho, "Proximal weight in the local best responses");
    app->add_option("--network-mode", c.network_mode, "report-only | penalty")
        ->check(CLI::IsMember({"report-only", "penalty"}));
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--threads", c.threads, "Worker threads");
}

Instance load_or_generate(const Common& c) {
    Instance inst = c.instance.empty() ? gen_instance(ieee15_scenario(c.seed)) : load_instance(c.instance);
    if (c.eta) inst.clearing.eta.assign(inst.market.graph.edge_count(), *c.eta);
    if (c.epsilon) inst.clearing.epsilon = *c.epsilon;
    if (c.max_iter) inst.clearing.max_iter = *c.max_iter;
    if (c.accelerated) inst.clearing.accelerated = true;
    if (c.plain) inst.clearing.accelerated = false;
    if (c.rho) inst.clearing.response.rho = *c.rho;
    if (c.network_mode == "penalty") inst.clearing.network_mode = NetworkMode::penalty;
    if (c.network_mode == "report-only") inst.clearing.network_mode = NetworkMode::report_only;
    inst.clearing.threads = c.threads;
    inst.clearing.validate(inst.market.graph.edge_count());
    return inst;
}

fs::path prepare_out(const Common& c) {
    fs::path dir(c.out);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << j.dump(2) << '\n';
}

std::ofstream open_csv(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

void write_manifest(const fs::path& dir, const std::string& command, const Instance& inst, const Common& c,
                    const std::vector<std::string>& files) {
    write_json(dir / "manifest.json", {{"command", command},
                                       {"spec_hash", spec_hash(to_json(inst))},
                                       {"seed", c.seed},
                                       {"files", files}});
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int cmd_gen(const Common& c, const ScenarioSpec& spec) {
    const auto dir = prepare_out(c);
    Instance inst = gen_instance(spec);
    if (c.epsilon) inst.clearing.epsilon = *c.epsilon;
    if (c.max_iter) inst.clearing.max_iter = *c.max_iter;
    if (c.rho) inst.clearing.response.rho = *c.rho;
    if (c.plain) inst.clearing.accelerated = false;
    if (c.network_mode == "penalty") inst.clearing.network_mode = NetworkMode::penalty;
    if (c.eta) inst.clearing.eta.assign(inst.market.graph.edge_count(), *c.eta);
    save_instance(inst, (dir / "instance.json").string());
    json scen = to_json(spec);
    write_json(dir / "scenario.json", {{"scenario", scen}, {"spec_hash", spec_hash(to_json(inst))}});
    write_manifest(dir, "gen", inst, c, {"instance.json", "scenario.json"});
    std::cout << "wrote " << (dir / "instance.json").string() << " (" << inst.market.graph.edge_count()
              << " edges, hash " << spec_hash(to_json(inst)) << ")\n";
    return 0;
}

int cmd_solve(const Common& c) {
    const auto dir = prepare_out(c);
    const Instance inst = load_or_generate(c);
    Instance cleared = inst;
    ClearingResult res;
    std::optional<SelectionResult> sel;
    if (c.select) {
        auto s = clear_with_selection(inst, SelectionConfig{*c.select});
        sel = std::move(s.selection);
        cleared = std::move(s.instance);
        res = std::move(s.result);
    } else {
        RunOptions opts;
        if (inst.grid) opts.grid = &*inst.grid;
        res = run(inst.market, inst.clearing, opts);
    }
    {
        auto os = open_csv(dir / "trace.csv");
        write_trace_csv(os, res.trace);
    }
    json summary = result_summary(cleared, res, sel);
    summary["spec_hash"] = spec_hash(to_json(inst));
    summary["accelerated"] = cleared.clearing.accelerated;
    summary["network_mode"] = to_string(cleared.clearing.network_mode);
    write_json(dir / "summary.json", summary);
    write_manifest(dir, "solve", inst, c, {"trace.csv", "summary.json"});
    std::cout << (res.converged ? "converged" : "not converged") << " after " << res.iterations
              << " iterations, welfare " << fmt(res.welfare) << "\n";
    if (res.constraints)
        std::cout << "network: " << (res.constraints->ok() ? "within limits" : "limits violated") << "\n";
    return res.converged ? 0 : 2;
}

int cmd_oracle(const Common& c, bool with_network) {
    const auto dir = prepare_out(c);
    const Instance inst = load_or_generate(c);
    OracleOptions o;
    o.with_network = with_network;
    const auto sol = solve_centralized(inst.market, inst.grid ? &*inst.grid : nullptr, o);
    json j = to_json(inst, sol);
    j["spec_hash"] = spec_hash(to_json(inst));
    j["with_network"] = with_network;
    write_json(dir / "oracle.json", j);
    write_manifest(dir, "oracle", inst, c, {"oracle.json"});
    std::cout << "welfare " << fmt(sol.welfare) << ", kkt residual " << fmt(sol.kkt_residual) << "\n";
    return 0;
}

int cmd_compare(const Common& c, const std::vector<std::string>& names) {
    const auto dir = prepare_out(c);
    const Instance inst = load_or_generate(c);
    std::vector<Method> methods;
    for (const auto& n : names) methods.push_back(parse_method(n));
    const auto rep = run_compare(inst, methods, SelectionConfig{c.select.value_or(0.0)});
    auto os = open_csv(dir / "compare.csv");
    os << "method,converged,iterations,wall_ms,welfare,edges\n";
    for (const auto& r : rep.rows) {
        os << to_string(r.method) << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << fmt(r.wall_ms)
           << ',' << fmt(r.welfare) << ',' << r.edges << '\n';
        std::cout << to_string(r.method) << ": " << r.iterations << " iterations, welfare " << fmt(r.welfare)
                  << (r.converged ? "" : " (not converged)") << "\n";
    }
    write_manifest(dir, "compare", inst, c, {"compare.csv"});
    return 0;
}

int cmd_montecarlo(const Common& c, std::size_t trials) {
    const auto dir = prepare_out(c);
    const Instance inst = load_or_generate(c);
    const auto rows = run_montecarlo(inst, trials, c.seed, c.threads);
    auto os = open_csv(dir / "montecarlo.csv");
    os << "trial,pairs,welfare,iterations,converged,wall_ms\n";
    std::vector<double> pairs, welfare;
    for (const auto& r : rows) {
        os << r.trial << ',' << r.pairs << ',' << fmt(r.welfare) << ',' << r.iterations << ','
           << (r.converged ? 1 : 0) << ',' << fmt(r.wall_ms) << '\n';
        pairs.push_back(static_cast<double>(r.pairs));
        welfare.push_back(r.welfare);
    }
    const auto sel = clear_with_selection(inst, SelectionConfig{c.select.value_or(0.0)});
    write_json(dir / "montecarlo_summary.json",
               {{"spec_hash", spec_hash(to_json(inst))},
                {"trials", trials},
                {"spearman_pairs_welfare", rows.size() > 1 ? spearman(pairs, welfare) : 0.0},
                {"selection", {{"pairs", sel.selection.edges_after},
                               {"welfare", sel.result.welfare},
                               {"iterations", sel.result.iterations}}}});
    write_manifest(dir, "montecarlo", inst, c, {"montecarlo.csv", "montecarlo_summary.json"});
    std::cout << trials << " trials written; selection run: " << sel.selection.edges_after << " pairs, welfare "
              << fmt(sel.result.welfare) << "\n";
    return 0;
}

int cmd_sweep(const Common& c, std::vector<double> benchmarks) {
    const auto dir = prepare_out(c);
    const Instance inst = load_or_generate(c);
    if (benchmarks.empty())
        for (int i = -10; i <= 10; ++i) benchmarks.push_back(i / 10.0);
    const auto rows = run_benchmark_sweep(inst, benchmarks);
    auto os = open_csv(dir / "sweep.csv");
    os << "benchmark,welfare,iterations,edges,converged\n";
    for (const auto& r : rows)
        os << fmt(r.benchmark) << ',' << fmt(r.welfare) << ',' << r.iterations << ',' << r.edges << ','
           << (r.converged ? 1 : 0) << '\n';
    write_manifest(dir, "sweep", inst, c, {"sweep.csv"});
    std::cout << rows.size() << " benchmark points written\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peer-to-peer electricity market clearing"};
    app.require_subcommand(1);

    Common common;

    ScenarioSpec spec;
    std::string grid = "ieee15", topology = "complete";
    auto* gen = app.add_subcommand("gen", "Generate a seeded instance");
    add_common(gen, common);
    gen->add_option("--producers", spec.producers, "Producer count");
    gen->add_option("--consumers", spec.consumers, "Consumer count");
    gen->add_option("--grid", grid, "none | chain | ieee15")->check(CLI::IsMember({"none", "chain", "ieee15"}));
    gen->add_option("--topology", topology, "complete | matched-pairs")
        ->check(CLI::IsMember({"complete", "matched-pairs"}));

    auto* solve = app.add_subcommand("solve", "Clear an instance with the distributed mechanism");
    add_common(solve, common);

    bool with_network = false;
    auto* oracle = app.add_subcommand("oracle", "Solve the centralized welfare program");
    add_common(oracle, common);
    oracle->add_flag("--network", with_network, "Include voltage and flow limits");

    std::vector<std::string> methods{"plain", "accelerated", "accelerated+selection"};
    auto* compare = app.add_subcommand("compare", "Compare clearing methods on one instance");
    add_common(compare, common);
    compare->add_option("--methods", methods, "plain, accelerated, accelerated+selection")->delimiter(',');

    std::size_t trials = 200;
    auto* mc = app.add_subcommand("montecarlo", "Random partner pruning trials");
    add_common(mc, common);
    mc->add_option("--trials", trials, "Trial count")->check(CLI::PositiveNumber);

    std::vector<double> benchmarks;
    auto* sweep = app.add_subcommand("sweep", "Selection benchmark sweep");
    add_common(sweep, common);
    sweep->add_option("--benchmarks", benchmarks, "Benchmarks in [-1, 1] (default -1:0.1:1)")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            spec.seed = common.seed;
            spec.grid = grid == "none" ? GridTemplate::none : grid == "chain" ? GridTemplate::chain : GridTemplate::ieee15;
            spec.topology = topology == "matched-pairs" ? Topology::matched_pairs : Topology::complete;
            return cmd_gen(common, spec);
        }
        if (*solve) return cmd_solve(common);
        if (*oracle) return cmd_oracle(common, with_network);
        if (*compare) return cmd_compare(common, methods);
        if (*mc) return cmd_montecarlo(common, trials);
        if (*sweep) return cmd_sweep(common, benchmarks);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
