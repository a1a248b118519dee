#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <numeric>
#include <random>

#include "p2pm/subproblem.hpp"

using namespace p2pm;

namespace {

const BestResponseConfig kUndamped{0.0, TieBreak::lowest_index};

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Largest objective over a lattice of `pts` points per axis on [0, hi]^n with the total in [lo_t, hi_t].
template <class F>
double lattice_max(std::size_t n, double hi, double lo_t, double hi_t, int pts, F&& f) {
    double best = -INFINITY;
    std::vector<double> v(n);
    std::vector<int> idx(n, 0);
    while (true) {
        double t = 0.0;
        for (std::size_t k = 0; k < n; ++k) t += v[k] = hi * idx[k] / (pts - 1);
        if (t >= lo_t - 1e-12 && t <= hi_t + 1e-12) best = std::max(best, f(v));
        std::size_t k = 0;
        while (k < n && ++idx[k] == pts) idx[k++] = 0;
        if (k == n) break;
    }
    return best;
}

}  // namespace

TEST_CASE("producer best response examples") {
    const ProducerParams p{1, 1, 0, 0, 10};
    const std::vector<double> z1{0.0};
    const std::vector<double> l1{3.0};
    CHECK(producer_best_response(p, l1, z1, kUndamped) == std::vector<double>{2.0});
    const std::vector<double> low{0.5};
    CHECK(producer_best_response(p, low, z1, kUndamped) == std::vector<double>{0.0});

    const std::vector<double> l2{3.0, 2.0}, z2{0.0, 0.0};
    CHECK(producer_best_response(p, l2, z2, kUndamped) == std::vector<double>{2.0, 0.0});

    const ProducerParams fixed{1, 1, 0, 5, 5};
    for (double l : {-3.0, 0.0, 2.0, 50.0}) {
        const std::vector<double> lv{l};
        CHECK(producer_best_response(fixed, lv, z1, kUndamped)[0] == doctest::Approx(5.0));
        CHECK(producer_best_response(fixed, lv, z1, {})[0] == doctest::Approx(5.0));
    }
}

TEST_CASE("consumer best response examples") {
    const ConsumerParams c{10, 2, 0, 5};
    const std::vector<double> z1{0.0}, a0{0.0};
    const std::vector<double> l4{4.0}, l10{10.0};
    CHECK(consumer_best_response(c, l4, a0, z1, kUndamped)[0] == doctest::Approx(3.0));
    CHECK(consumer_best_response(c, l10, a0, z1, kUndamped)[0] == 0.0);

    const std::vector<double> l2{4.0, 4.0}, a2{1.0, 0.0}, z2{0.0, 0.0};
    const auto y = consumer_best_response(c, l2, a2, z2, kUndamped);
    CHECK(y[0] == doctest::Approx(3.5));
    CHECK(y[1] == 0.0);
}

TEST_CASE("tie breaking at rho = 0") {
    const ProducerParams p{1, 1, 0, 0, 10};
    const std::vector<double> tie{3.0, 3.0, 1.0};
    const std::vector<double> prev{1.0, 3.0, 5.0};
    CHECK(producer_best_response(p, tie, prev, kUndamped) == std::vector<double>{2.0, 0.0, 0.0});
    const BestResponseConfig prop{0.0, TieBreak::proportional_to_previous};
    const auto x = producer_best_response(p, tie, prev, prop);
    CHECK(x[0] == doctest::Approx(0.5));
    CHECK(x[1] == doctest::Approx(1.5));
    CHECK(x[2] == 0.0);
    // no history on the tied edges falls back to the lowest index
    const std::vector<double> cold{0.0, 0.0, 5.0};
    CHECK(producer_best_response(p, tie, cold, prop) == std::vector<double>{2.0, 0.0, 0.0});
}

TEST_CASE("best response input errors") {
    const ProducerParams p{1, 1, 0, 0, 10};
    const ConsumerParams c{10, 2, 0, 5};
    const std::vector<double> none, one{1.0}, two{1.0, 2.0};
    CHECK_THROWS_AS(producer_best_response(p, none, none, {}), std::invalid_argument);
    CHECK_THROWS_AS(consumer_best_response(c, none, none, none, {}), std::invalid_argument);
    CHECK_THROWS_AS(producer_best_response(p, two, one, {}), std::invalid_argument);
    CHECK_THROWS_AS(consumer_best_response(c, two, one, two, {}), std::invalid_argument);
    CHECK_THROWS_AS(producer_best_response({1, 1, 0, 3, 2}, one, one, {}), std::invalid_argument);
    CHECK_THROWS_AS(consumer_best_response({10, 2, 3, 2}, one, one, one, {}), std::invalid_argument);
    CHECK_THROWS_AS(producer_best_response(p, one, one, {-1.0, TieBreak::lowest_index}), std::invalid_argument);
}

TEST_CASE("step size bound") {
    CHECK(*step_size_bound({1, 1, 0, 0, 10}, {1, 1, 0, 1}) == doctest::Approx(0.5));
    CHECK(*step_size_bound({2, 1, 0, 0, 10}, {4, 2, 0, 2}) == doctest::Approx(1.0));
    CHECK(*step_size_bound({0.5, 1, 0, 0, 10}, {4, 2, 0, 2}) == doctest::Approx(0.4));
    // demand range reaching the flat branch
    CHECK_FALSE(step_size_bound({1, 1, 0, 0, 10}, {10, 2, 0, 6}).has_value());
}

TEST_CASE("best responses match a lattice search") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int pts = 41;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + trial % 3;
        const double rho = trial % 2 == 0 ? 0.0 : 0.05 + u(rng);
        const BestResponseConfig cfg{rho, TieBreak::lowest_index};
        std::vector<double> lam(n), prev(n), alpha(n);
        for (std::size_t k = 0; k < n; ++k) {
            lam[k] = 1.0 + 5.0 * u(rng);
            prev[k] = 4.0 * u(rng);
            alpha[k] = u(rng) - 0.2;
        }
        const ProducerParams p{0.2 + u(rng), 0.5 + 2 * u(rng), 0.0, trial % 5 == 0 ? 1.0 : 0.0, 4.0 + 4 * u(rng)};
        const double hi = p.x_max;
        const auto x = producer_best_response(p, lam, prev, cfg);
        const double fx = producer_objective(p, lam, prev, rho, x);
        CHECK(total(x) <= p.x_max + 1e-9);
        CHECK(total(x) >= p.x_min - 1e-9);
        for (double v : x) CHECK(v >= 0.0);
        const double lat = lattice_max(n, hi, p.x_min, p.x_max, pts,
                                       [&](const std::vector<double>& v) { return producer_objective(p, lam, prev, rho, v); });
        CHECK(fx >= lat - 1e-8);

        const ConsumerParams c{4.0 + 6 * u(rng), 0.5 + u(rng), trial % 7 == 0 ? 0.5 : 0.0, 3.0 + 6 * u(rng)};
        const auto y = consumer_best_response(c, lam, alpha, prev, cfg);
        const double fy = consumer_objective(c, lam, alpha, prev, rho, y);
        CHECK(total(y) <= c.y_max + 1e-9);
        CHECK(total(y) >= c.y_min - 1e-9);
        const double laty = lattice_max(n, c.y_max, c.y_min, c.y_max, pts, [&](const std::vector<double>& v) {
            return consumer_objective(c, lam, alpha, prev, rho, v);
        });
        CHECK(fy >= laty - 1e-8);
    }
}

TEST_CASE("stationarity at interior optima") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 4;
        std::vector<double> lam(n), prev(n, 0.0), alpha(n);
        for (std::size_t k = 0; k < n; ++k) {
            lam[k] = 2.0 + 3.0 * u(rng);
            alpha[k] = u(rng);
        }
        const ProducerParams p{0.5 + u(rng), 1.0, 0.0, 0.0, 100.0};
        const double t = total(producer_best_response(p, lam, prev, kUndamped));
        if (t > 0.0 && t < p.x_max)
            CHECK(std::abs(*std::max_element(lam.begin(), lam.end()) - marginal_cost(p, t)) <= 1e-9);

        const ConsumerParams c{8.0 + 2 * u(rng), 0.5 + u(rng), 0.0, 100.0};
        const double s = total(consumer_best_response(c, lam, alpha, prev, kUndamped));
        double best = INFINITY;
        for (std::size_t k = 0; k < n; ++k) best = std::min(best, lam[k] - alpha[k]);
        if (s > 0.0 && s < std::min(c.y_max, c.knee()))
            CHECK(std::abs(c.omega - c.delta * s - best) <= 1e-9);
    }
}

TEST_CASE("monotone totals") {
    const ProducerParams p{0.7, 1.5, 0.0, 0.0, 12.0};
    const ConsumerParams c{9.0, 1.3, 0.0, 6.0};
    const std::vector<double> prev{0.0, 0.0}, alpha{0.3, 0.1};
    double last_x = -1.0, last_y = INFINITY;
    for (double l = 0.0; l <= 12.0; l += 0.25) {
        const std::vector<double> lam{l, l - 0.5};
        const double tx = total(producer_best_response(p, lam, prev, kUndamped));
        const double ty = total(consumer_best_response(c, lam, alpha, prev, kUndamped));
        CHECK(tx >= last_x);
        CHECK(ty <= last_y);
        last_x = tx;
        last_y = ty;
    }
}

TEST_CASE("damped responses are deterministic and unique") {
    const ProducerParams p{0.3, 1.2, 0.0, 0.0, 9.0};
    const BestResponseConfig cfg{1e-3, TieBreak::lowest_index};
    const std::vector<double> lam{3.0, 3.0, 2.9}, prev{0.4, 1.0, 2.0};
    const auto a = producer_best_response(p, lam, prev, cfg);
    const auto b = producer_best_response(p, lam, prev, cfg);
    CHECK(a == b);
    // equal prices, the split follows the previous iterate
    CHECK(a[1] - a[0] == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("dual terms equal the undamped optimal values") {
    const ProducerParams p{1, 1, 0, 0, 10};
    const ConsumerParams c{10, 2, 0, 5};
    const std::vector<double> l4{4.0}, l6{6.0}, a0{0.0};
    CHECK(producer_dual_term(p, l4) == doctest::Approx(4.5));
    CHECK(consumer_dual_term(c, l4, a0) == doctest::Approx(9.0));
    CHECK(producer_dual_term(p, l6) == doctest::Approx(12.5));
    CHECK(consumer_dual_term(c, l6, a0) == doctest::Approx(4.0));
    const std::vector<double> none;
    CHECK(producer_dual_term({1, 1, 2.5, 0, 10}, none) == doctest::Approx(-2.5));
    CHECK(consumer_dual_term(c, none, none) == 0.0);
}
