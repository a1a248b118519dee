#include <doctest.h>

#include <random>
#include <stdexcept>

#include "p2pm/selection.hpp"

using namespace p2pm;

namespace {

const std::vector<double> kRow{0.54, 0.71, 0.60, 0.54, 0.42, 0.64, 0.43};

TradingGraph random_graph(std::uint64_t seed, std::size_t np, std::size_t nc) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> alpha(np * nc);
    for (double& a : alpha) a = u(rng);
    return TradingGraph::complete(np, nc, alpha);
}

}  // namespace

TEST_CASE("min-max normalization") {
    const auto v = normalize_coefficients(kRow);
    const std::vector<double> want{-0.172, 1.0, 0.241, -0.172, -1.0, 0.517, -0.931};
    REQUIRE(v.size() == want.size());
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(v[k] == doctest::Approx(want[k]).epsilon(1e-3));
    CHECK(v[1] == 1.0);
    CHECK(v[4] == -1.0);

    const std::vector<double> flat{0.3, 0.3, 0.3};
    CHECK(normalize_coefficients(flat) == std::vector<double>{0.0, 0.0, 0.0});
    const std::vector<double> ends{0.0, 1.0};
    CHECK(normalize_coefficients(ends) == std::vector<double>{-1.0, 1.0});
    CHECK_THROWS_AS(normalize_coefficients(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("partner selection on the quoted row") {
    const auto v = normalize_coefficients(kRow);
    // producers 2, 3 and 6 in one-based numbering
    CHECK(select_partners(v, 0.0) == std::vector<std::size_t>{1, 2, 5});
    CHECK(select_partners(v, -1.0).size() == kRow.size());
    CHECK(select_partners(v, 1.0) == std::vector<std::size_t>{1});
}

TEST_CASE("apply_selection") {
    const auto g = random_graph(3, 7, 7);
    SUBCASE("benchmark -1 keeps everything") {
        const auto s = apply_selection(g, {-1.0});
        CHECK(s.edges_after == g.edge_count());
        CHECK(s.edges_before == g.edge_count());
        for (std::size_t e = 0; e < g.edge_count(); ++e) CHECK(s.kept_edges[e] == e);
    }
    SUBCASE("benchmark 0 prunes") {
        const auto s = apply_selection(g, {0.0});
        CHECK(s.edges_after < g.edge_count());
        for (std::size_t j = 0; j < g.consumer_count(); ++j) CHECK_FALSE(s.graph.consumer_edges(j).empty());
        for (std::size_t k = 0; k < s.kept_edges.size(); ++k) {
            CHECK(s.graph.edge(k).producer == g.edge(s.kept_edges[k]).producer);
            CHECK(s.graph.edge(k).alpha == g.edge(s.kept_edges[k]).alpha);
        }
    }
    SUBCASE("benchmark 1 keeps one partner per consumer") {
        const auto s = apply_selection(g, {1.0});
        CHECK(s.edges_after == g.consumer_count());
    }
    SUBCASE("a second pass never adds edges") {
        for (double b : {-1.0, 1.0}) {
            const auto once = apply_selection(g, {b});
            CHECK(apply_selection(once.graph, {b}).edges_after == once.edges_after);
        }
        // interior benchmarks re-normalize the shorter rows, so a second pass may prune more
        const auto once = apply_selection(g, {0.2});
        const auto twice = apply_selection(once.graph, {0.2});
        CHECK(twice.edges_after <= once.edges_after);
        CHECK(twice.edges_after >= g.consumer_count());
    }
    SUBCASE("monotone in the benchmark") {
        std::size_t last = g.edge_count();
        for (int b = -10; b <= 10; ++b) {
            const auto s = apply_selection(g, {b / 10.0});
            CHECK(s.edges_after <= last);
            last = s.edges_after;
        }
    }
    SUBCASE("invalid benchmark") {
        CHECK_THROWS_AS(apply_selection(g, {1.5}), std::invalid_argument);
        CHECK_THROWS_AS(apply_selection(g, {-1.01}), std::invalid_argument);
    }
}

TEST_CASE("selection is affine invariant per consumer") {
    std::vector<Edge> a, b;
    for (std::size_t i = 0; i < kRow.size(); ++i) {
        a.push_back({i, 0, kRow[i]});
        b.push_back({i, 0, 3.0 * kRow[i] - 2.0});
    }
    const TradingGraph ga(kRow.size(), 1, a), gb(kRow.size(), 1, b);
    for (double bench : {-0.5, 0.0, 0.3, 0.9}) CHECK(apply_selection(ga, {bench}).kept_edges == apply_selection(gb, {bench}).kept_edges);
}

TEST_CASE("constant rows are never pruned") {
    const TradingGraph g(3, 2, {{0, 0, 0.4}, {1, 0, 0.4}, {2, 0, 0.4}, {2, 1, 0.9}});
    for (double b : {-1.0, 0.0, 0.5, 1.0}) {
        const auto s = apply_selection(g, {b});
        CHECK(s.edges_after == 4);
    }
}

TEST_CASE("identical rows select identical producers") {
    std::vector<Edge> edges;
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < kRow.size(); ++i) edges.push_back({i, j, kRow[i]});
    const TradingGraph g(kRow.size(), 2, edges);
    const auto s = apply_selection(g, {0.0});
    std::vector<std::size_t> p0, p1;
    for (std::size_t e : s.graph.consumer_edges(0)) p0.push_back(s.graph.edge(e).producer);
    for (std::size_t e : s.graph.consumer_edges(1)) p1.push_back(s.graph.edge(e).producer);
    CHECK(p0 == p1);
    CHECK(s.isolated_producers == std::vector<std::size_t>{0, 3, 4, 6});
}
