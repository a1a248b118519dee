#include "p2pm/clearing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace p2pm {

std::vector<double> InitialPrices::resolve(const Market& market) const {
    const auto& g = market.graph;
    if (kind == Kind::explicit_values) {
        if (values.size() != g.edge_count())
            throw std::invalid_argument("initial prices: need one value per edge");
        return values;
    }
    std::vector<double> out(g.edge_count());
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = market.producers[g.edge(e).producer].b + markup;
    return out;
}

void ClearingConfig::validate(std::size_t edge_count) const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("clearing: epsilon must be > 0");
    if (max_iter == 0) throw std::invalid_argument("clearing: max_iter must be >= 1");
    if (!eta.empty()) {
        if (eta.size() != edge_count) throw std::invalid_argument("clearing: need one step size per edge");
        for (double v : eta)
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("clearing: step sizes must be > 0");
    }
    if (!(fallback_eta > 0.0)) throw std::invalid_argument("clearing: fallback step size must be > 0");
    if (!(response.rho >= 0.0)) throw std::invalid_argument("clearing: rho must be >= 0");
}

double gamma_next(std::size_t k, double gamma_k) {
    const double kk = static_cast<double>(k);
    const double t = gamma_k / kk;
    return (kk + 1.0) * (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
}

std::vector<double> momentum_extrapolate(std::size_t k, double gamma_k, double gamma_next,
                                         std::span<const double> lambda_k, std::span<const double> lambda_prev) {
    if (lambda_k.size() != lambda_prev.size()) throw std::invalid_argument("momentum: index set mismatch");
    const double kk = static_cast<double>(k);
    const double coef = (kk + 1.0) * (gamma_k - kk) / (kk * gamma_next);
    std::vector<double> out(lambda_k.size());
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = lambda_k[e] + coef * (lambda_k[e] - lambda_prev[e]);
    return out;
}

std::vector<double> price_update(std::span<const double> lambda_hat, std::span<const double> eta,
                                 std::span<const double> x, std::span<const double> y) {
    const std::size_t n = lambda_hat.size();
    if (eta.size() != n || x.size() != n || y.size() != n)
        throw std::invalid_argument("price update: index set mismatch");
    std::vector<double> out(n);
    for (std::size_t e = 0; e < n; ++e) out[e] = lambda_hat[e] - eta[e] * (x[e] - y[e]);
    return out;
}

double mismatch_inf(std::span<const double> x, std::span<const double> y) {
    double m = 0.0;
    for (std::size_t e = 0; e < x.size(); ++e) m = std::max(m, std::abs(x[e] - y[e]));
    return m;
}

bool stopping_check(std::span<const double> x, std::span<const double> y, double epsilon) {
    if (x.size() != y.size()) throw std::invalid_argument("stopping check: index set mismatch");
    for (std::size_t e = 0; e < x.size(); ++e)
        if (!(std::abs(x[e] - y[e]) <= epsilon)) return false;
    return true;
}

double dual_value(const Market& market, std::span<const double> lambda) {
    const auto& g = market.graph;
    if (lambda.size() != g.edge_count()) throw std::invalid_argument("dual value: index set mismatch");
    double q = 0.0;
    std::vector<double> alpha;
    for (std::size_t i = 0; i < g.producer_count(); ++i)
        q += producer_dual_term(market.producers[i], g.gather(lambda, g.producer_edges(i)));
    for (std::size_t j = 0; j < g.consumer_count(); ++j) {
        const auto idx = g.consumer_edges(j);
        alpha.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) alpha[k] = g.edge(idx[k]).alpha;
        q += consumer_dual_term(market.consumers[j], g.gather(lambda, idx), alpha);
    }
    return q;
}

std::vector<double> default_step_sizes(const Market& market, double fallback) {
    const auto& g = market.graph;
    std::vector<double> eta(g.edge_count(), fallback);
    for (std::size_t e = 0; e < eta.size(); ++e) {
        const auto& ed = g.edge(e);
        if (auto b = step_size_bound(market.producers[ed.producer], market.consumers[ed.consumer])) eta[e] = *b;
    }
    return eta;
}

namespace {

// Runs body(begin, end) over [0, n) on up to `threads` workers. Each index writes only
// to its own output slot, so the split does not affect results.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
    if (threads <= 1 || n < 2 * threads) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t begin = 0; begin < n; begin += chunk)
        pool.emplace_back([&body, begin, end = std::min(n, begin + chunk)] { body(begin, end); });
}

struct NetworkPenalty {
    NetworkRows rows;
    Eigen::VectorXd scale;
    Eigen::VectorXd multipliers;
};

}  // namespace

ClearingResult run(const Market& market, const ClearingConfig& cfg, const RunOptions& opts) {
    market.validate();
    const auto& g = market.graph;
    const std::size_t n_edges = g.edge_count();
    cfg.validate(n_edges);

    ClearingResult res;
    res.eta = cfg.eta.empty() ? default_step_sizes(market, cfg.fallback_eta) : cfg.eta;
    for (std::size_t e = 0; e < n_edges; ++e) {
        const auto& ed = g.edge(e);
        const auto bound = step_size_bound(market.producers[ed.producer], market.consumers[ed.consumer]);
        if (!bound || res.eta[e] > *bound * (1.0 + 1e-12)) res.step_size_flagged = true;
    }
    res.lambda0 = cfg.lambda0.resolve(market);

    std::optional<SensitivityMatrices> sens;
    std::vector<std::size_t> producer_bus, consumer_bus;
    std::optional<NetworkPenalty> penalty;
    if (opts.grid) {
        opts.grid->validate();
        sens = build_sensitivities(*opts.grid);
        producer_bus = opts.grid->producer_buses(g.producer_count());
        consumer_bus = opts.grid->consumer_buses(g.consumer_count());
        if (cfg.network_mode == NetworkMode::penalty) {
            NetworkPenalty np{network_rows(*opts.grid, *sens), {}, {}};
            np.scale = np.rows.rhs.cwiseAbs().cwiseMax(1e-6);
            np.multipliers = Eigen::VectorXd::Zero(np.rows.rhs.size());
            penalty = std::move(np);
        }
    } else if (cfg.network_mode == NetworkMode::penalty) {
        throw std::invalid_argument("clearing: penalty mode needs a grid");
    }

    MarketState st;
    st.k = 1;
    st.lambda_prev = res.lambda0;
    st.lambda_hat = res.lambda0;
    st.gamma = 1.0;
    st.alloc = opts.initial_allocation ? *opts.initial_allocation : Allocation::zeros(n_edges);
    if (st.alloc.x.size() != n_edges || st.alloc.y.size() != n_edges)
        throw std::invalid_argument("clearing: initial allocation has wrong size");

    std::vector<double> bus_charge(opts.grid ? opts.grid->bus_count : 0, 0.0);
    std::vector<double> alpha(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e) alpha[e] = g.edge(e).alpha;

    const auto start = std::chrono::steady_clock::now();
    Allocation next = st.alloc;

    for (std::size_t k = 1; k <= cfg.max_iter; ++k) {
        st.k = k;
        // Best responses against the frozen lambda_hat^k.
        parallel_for(g.producer_count(), cfg.threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const auto idx = g.producer_edges(i);
                if (idx.empty()) continue;
                auto lh = g.gather(st.lambda_hat, idx);
                if (penalty)
                    for (double& v : lh) v += bus_charge[producer_bus[i]];
                const auto x = producer_best_response(market.producers[i], lh, g.gather(st.alloc.x, idx),
                                                      cfg.response);
                for (std::size_t m = 0; m < idx.size(); ++m) next.x[idx[m]] = x[m];
            }
        });
        parallel_for(g.consumer_count(), cfg.threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j) {
                const auto idx = g.consumer_edges(j);
                if (idx.empty()) continue;
                auto lh = g.gather(st.lambda_hat, idx);
                if (penalty)
                    for (double& v : lh) v += bus_charge[consumer_bus[j]];
                const auto y = consumer_best_response(market.consumers[j], lh, g.gather(alpha, idx),
                                                      g.gather(st.alloc.y, idx), cfg.response);
                for (std::size_t m = 0; m < idx.size(); ++m) next.y[idx[m]] = y[m];
            }
        });
        st.alloc = next;

        st.lambda = price_update(st.lambda_hat, res.eta, st.alloc.x, st.alloc.y);

        IterationRecord rec;
        rec.k = k;
        rec.mismatch_inf = mismatch_inf(st.alloc.x, st.alloc.y);
        rec.welfare = social_welfare(market, st.alloc);
        rec.dual_value = cfg.trace_dual ? dual_value(market, st.lambda) : std::numeric_limits<double>::quiet_NaN();
        rec.dual_gap = opts.dual_optimum ? rec.dual_value - *opts.dual_optimum
                                         : std::numeric_limits<double>::quiet_NaN();

        bool network_ok = true;
        if (penalty) {
            const auto inj = bus_injections(*opts.grid, g, st.alloc);
            const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(inj.data(), static_cast<Eigen::Index>(inj.size()));
            const Eigen::VectorXd viol = penalty->rows.coeff * p - penalty->rows.rhs;
            network_ok = viol.size() == 0 || viol.maxCoeff() <= cfg.network_tolerance;
            const Eigen::VectorXd rel = viol.cwiseQuotient(penalty->scale);
            penalty->multipliers = (penalty->multipliers + cfg.network_step * rel).cwiseMax(0.0);
            const Eigen::VectorXd charge =
                -(penalty->rows.coeff.transpose() * penalty->multipliers.cwiseQuotient(penalty->scale));
            for (std::size_t b = 0; b < bus_charge.size(); ++b) bus_charge[b] = charge(static_cast<Eigen::Index>(b));
        }

        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        res.trace.push_back(rec);

        if (network_ok && stopping_check(st.alloc.x, st.alloc.y, cfg.epsilon)) {
            res.converged = true;
            break;
        }

        if (cfg.accelerated) {
            const double gn = gamma_next(k, st.gamma);
            st.lambda_hat = momentum_extrapolate(k, st.gamma, gn, st.lambda, st.lambda_prev);
            st.gamma = gn;
        } else {
            st.lambda_hat = st.lambda;
        }
        st.lambda_prev = st.lambda;
    }

    res.iterations = st.k;
    res.allocation = st.alloc;
    res.prices = st.lambda;
    res.welfare = social_welfare(market, st.alloc);
    if (opts.grid) res.constraints = check_constraints(*opts.grid, *sens, g, st.alloc);
    if (penalty) res.bus_charges = bus_charge;
    return res;
}

}  // namespace p2pm
