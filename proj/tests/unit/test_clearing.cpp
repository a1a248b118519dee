#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <numeric>

#include "p2pm/clearing.hpp"
#include "p2pm/experiments.hpp"

using namespace p2pm;

namespace {

Market one_by_one(double alpha = 0.0) {
    return {{{1, 1, 0, 0, 10}}, {{10, 2, 0, 5}}, TradingGraph(1, 1, {{0, 0, alpha}})};
}

ClearingConfig literal_config() {
    ClearingConfig cfg;
    cfg.response.rho = 0.0;
    cfg.lambda0.kind = InitialPrices::Kind::explicit_values;
    return cfg;
}

}  // namespace

TEST_CASE("gamma recurrence") {
    const double g2 = gamma_next(1, 1.0);
    CHECK(g2 == doctest::Approx(1.0 + std::sqrt(5.0)).epsilon(1e-15));
    CHECK(g2 == doctest::Approx(3.2360680).epsilon(1e-7));
    const double g3 = gamma_next(2, g2);
    CHECK(g3 == doctest::Approx(6.580581255993161).epsilon(1e-14));

    double g = 1.0;
    for (std::size_t k = 1; k <= 100000; ++k) {
        const double gn = gamma_next(k, g);
        const double kk = static_cast<double>(k);
        REQUIRE(gn >= (kk + 1) * (kk + 1) / 2.0);
        const double lhs = (gn / (kk + 1)) * (gn / (kk + 1)) - gn / (kk + 1);
        const double rhs = (g / kk) * (g / kk);
        REQUIRE(std::abs(lhs - rhs) <= 1e-9 * std::abs(rhs));
        g = gn;
    }
}

TEST_CASE("momentum extrapolation") {
    const std::vector<double> l1{2.0, -1.0}, l0{1.0, 3.0};
    // first step carries no momentum
    CHECK(momentum_extrapolate(1, 1.0, gamma_next(1, 1.0), l1, l0) == l1);
    CHECK(momentum_extrapolate(5, 20.0, gamma_next(5, 20.0), l1, l1) == l1);

    const double g2 = gamma_next(1, 1.0);
    const double g3 = gamma_next(2, g2);
    const std::vector<double> a{5.0}, b{4.0};
    const auto hat = momentum_extrapolate(2, g2, g3, a, b);
    CHECK(hat[0] - 5.0 == doctest::Approx(0.28175352512532087).epsilon(1e-13));
    CHECK_THROWS_AS(momentum_extrapolate(2, g2, g3, a, l1), std::invalid_argument);
}

TEST_CASE("price update and stopping") {
    const std::vector<double> h{5.0}, e{0.1}, x{3.0}, y{2.0};
    CHECK(price_update(h, e, x, y)[0] == doctest::Approx(4.9));
    CHECK(price_update(h, e, x, x)[0] == 5.0);
    const std::vector<double> h4{4.0}, e5{0.5}, x0{0.0};
    CHECK(price_update(h4, e5, x0, y)[0] == doctest::Approx(5.0));
    CHECK_THROWS_AS(price_update(h, e, x, std::vector<double>{}), std::invalid_argument);

    const double eps = 0.25;
    const std::vector<double> a{1.0, 2.0}, same{1.0, 2.0}, off{1.0, 2.5}, edge{1.25, 1.75};
    CHECK(stopping_check(a, same, eps));
    CHECK_FALSE(stopping_check(a, off, eps));
    CHECK(stopping_check(a, edge, eps));
    CHECK(mismatch_inf(a, off) == 0.5);
}

TEST_CASE("dual function of the 1x1 market") {
    const auto m = one_by_one();
    const std::vector<double> l4{4.0}, l6{6.0};
    CHECK(dual_value(m, l4) == doctest::Approx(13.5));
    CHECK(dual_value(m, l6) == doctest::Approx(16.5));
    for (double l = -5.0; l <= 20.0; l += 0.125) {
        const std::vector<double> lv{l};
        CHECK(dual_value(m, lv) >= 13.5 - 1e-12);
    }
}

TEST_CASE("accelerated run on the 1x1 market") {
    const auto m = one_by_one();
    auto cfg = literal_config();
    cfg.lambda0.values = {0.0};
    cfg.eta = {2.0 / 3.0};
    const auto res = run(m, cfg);
    REQUIRE(res.converged);
    CHECK(res.allocation.x[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(res.allocation.y[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(res.prices[0] == doctest::Approx(4.0).epsilon(1e-3));
    CHECK(res.welfare == doctest::Approx(13.5).epsilon(1e-3));
    CHECK(res.trace.back().mismatch_inf <= 1e-3);
    CHECK_FALSE(res.step_size_flagged);
    CHECK(res.trace.size() == res.iterations);

    // At eta = 1/L the plain step is exact on this quadratic dual.
    cfg.accelerated = false;
    const auto plain = run(m, cfg);
    REQUIRE(plain.converged);
    CHECK(plain.iterations == 3);
    CHECK(res.iterations == 4);

    cfg.eta = {0.1};
    const auto slow_plain = run(m, cfg);
    cfg.accelerated = true;
    const auto slow_acc = run(m, cfg);
    REQUIRE(slow_plain.converged);
    REQUIRE(slow_acc.converged);
    CHECK(slow_acc.iterations <= slow_plain.iterations);
}

TEST_CASE("starting at the optimum stops at the first iteration") {
    const auto m = one_by_one();
    auto cfg = literal_config();
    cfg.lambda0.values = {4.0};
    RunOptions opts;
    opts.initial_allocation = Allocation{{3.0}, {3.0}};
    opts.dual_optimum = 13.5;
    const auto res = run(m, cfg, opts);
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    CHECK(res.trace[0].dual_gap == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("default step sizes and flags") {
    const auto m = one_by_one();
    CHECK(default_step_sizes(m, 0.1)[0] == doctest::Approx(2.0 / 3.0));
    Market flat = m;
    flat.consumers[0].y_max = 8.0;
    CHECK(default_step_sizes(flat, 0.1)[0] == 0.1);
    ClearingConfig cfg;
    cfg.max_iter = 3;
    CHECK(run(flat, cfg).step_size_flagged);
    cfg.eta = {1.0};
    CHECK(run(m, cfg).step_size_flagged);
    cfg.eta = {0.5};
    CHECK_FALSE(run(m, cfg).step_size_flagged);
}

TEST_CASE("config validation") {
    ClearingConfig cfg;
    CHECK_NOTHROW(cfg.validate(2));
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(2), std::invalid_argument);
    cfg = {};
    cfg.max_iter = 0;
    CHECK_THROWS_AS(cfg.validate(2), std::invalid_argument);
    cfg = {};
    cfg.eta = {0.1};
    CHECK_THROWS_AS(cfg.validate(2), std::invalid_argument);
    cfg.eta = {0.1, -0.1};
    CHECK_THROWS_AS(cfg.validate(2), std::invalid_argument);
    cfg = {};
    cfg.network_mode = NetworkMode::penalty;
    CHECK_THROWS_AS(run(one_by_one(), cfg), std::invalid_argument);
    cfg = {};
    cfg.lambda0.kind = InitialPrices::Kind::explicit_values;
    CHECK_THROWS_AS(run(one_by_one(), cfg), std::invalid_argument);
}

TEST_CASE("non-convergence is reported, not thrown") {
    auto cfg = literal_config();
    cfg.lambda0.values = {0.0};
    cfg.eta = {1e-3};
    cfg.max_iter = 5;
    const auto res = run(one_by_one(), cfg);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 5);
}

TEST_CASE("trace does not depend on the worker count") {
    ScenarioSpec spec;
    spec.producers = 9;
    spec.consumers = 8;
    spec.seed = 5;
    auto inst = gen_instance(spec);
    inst.clearing.max_iter = 300;
    inst.clearing.response.rho = 0.1;
    inst.clearing.accelerated = false;
    const auto a = run(inst.market, inst.clearing);
    inst.clearing.threads = 4;
    const auto b = run(inst.market, inst.clearing);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
        CHECK(a.trace[k].mismatch_inf == b.trace[k].mismatch_inf);
        CHECK(a.trace[k].welfare == b.trace[k].welfare);
        CHECK(a.trace[k].dual_value == b.trace[k].dual_value);
    }
    CHECK(a.prices == b.prices);
    CHECK(a.allocation.x == b.allocation.x);
}

TEST_CASE("payments cancel at convergence") {
    ScenarioSpec spec;
    spec.producers = 4;
    spec.consumers = 5;
    spec.seed = 9;
    auto inst = gen_instance(spec);
    inst.clearing.response.rho = 0.1;
    inst.clearing.accelerated = false;
    const auto res = run(inst.market, inst.clearing);
    REQUIRE(res.converged);
    const auto& g = inst.market.graph;
    double total = 0.0, slack = 0.0;
    for (std::size_t i = 0; i < g.producer_count(); ++i) {
        const auto idx = g.producer_edges(i);
        total += producer_welfare(inst.market.producers[i], g.gather(res.prices, idx), g.gather(res.allocation.x, idx));
    }
    std::vector<double> alpha(g.edge_count());
    for (std::size_t e = 0; e < alpha.size(); ++e) alpha[e] = g.edge(e).alpha;
    for (std::size_t j = 0; j < g.consumer_count(); ++j) {
        const auto idx = g.consumer_edges(j);
        total += consumer_welfare(inst.market.consumers[j], g.gather(res.prices, idx), g.gather(alpha, idx),
                                  g.gather(res.allocation.y, idx));
    }
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        slack += std::abs(res.prices[e]) * std::abs(res.allocation.x[e] - res.allocation.y[e]);
    CHECK(std::abs(total - res.welfare) <= 1e-6 * (1.0 + std::abs(res.welfare)) + slack);
}

TEST_CASE("report-only mode leaves the trajectory unchanged") {
    auto inst = gen_instance(ieee15_scenario(2));
    inst.clearing.max_iter = 50;
    RunOptions with_grid;
    with_grid.grid = &*inst.grid;
    const auto a = run(inst.market, inst.clearing, with_grid);
    const auto b = run(inst.market, inst.clearing);
    CHECK(a.prices == b.prices);
    CHECK(a.constraints.has_value());
    CHECK_FALSE(b.constraints.has_value());
    CHECK(a.bus_charges.empty());
}

TEST_CASE("penalty mode steers a congested feeder back within limits") {
    // Two producers on a 2-line chain, a long consumer tail with a tight first line.
    ScenarioSpec spec;
    spec.producers = 2;
    spec.consumers = 2;
    spec.grid = GridTemplate::chain;
    spec.seed = 4;
    auto inst = gen_instance(spec);
    for (auto& l : inst.grid->lines) l.f_max_kw = 60.0;
    inst.grid->lines[0].f_max_kw = 1e3;
    inst.grid->lines[2].f_max_kw = 4.0;
    inst.clearing.response.rho = 0.1;
    inst.clearing.accelerated = false;
    inst.clearing.max_iter = 200000;
    RunOptions opts;
    opts.grid = &*inst.grid;
    const auto free = run(inst.market, inst.clearing, opts);
    REQUIRE(free.converged);
    REQUIRE_FALSE(free.constraints->flow_ok);

    inst.clearing.network_mode = NetworkMode::penalty;
    inst.clearing.network_step = 1.0;
    const auto pen = run(inst.market, inst.clearing, opts);
    CHECK(pen.converged);
    CHECK(pen.constraints->worst_flow_violation <= inst.clearing.network_tolerance + 1e-9);
    CHECK(pen.bus_charges.size() == inst.grid->bus_count);

    OracleOptions oo;
    oo.with_network = true;
    const auto opt = solve_centralized(inst.market, &*inst.grid, oo);
    CHECK(pen.welfare == doctest::Approx(opt.welfare).epsilon(1e-2));
}
