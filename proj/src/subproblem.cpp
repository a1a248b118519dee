#include "p2pm/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace p2pm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(std::size_t n, std::size_t prev, double rho) {
    if (n == 0) throw std::invalid_argument("best response: empty edge set");
    if (prev != n) throw std::invalid_argument("best response: previous iterate has wrong length");
    if (!(rho >= 0.0)) throw std::invalid_argument("best response: rho must be >= 0");
}

// Places `total` on the tied best edges.
std::vector<double> concentrate(std::span<const std::size_t> best, std::span<const double> prev, double total,
                                std::size_t n, TieBreak rule) {
    std::vector<double> out(n, 0.0);
    if (rule == TieBreak::proportional_to_previous) {
        double weight = 0.0;
        for (std::size_t k : best) weight += prev[k];
        if (weight > 0.0) {
            for (std::size_t k : best) out[k] = total * prev[k] / weight;
            return out;
        }
    }
    out[best.front()] = total;
    return out;
}

// Breakpoints in activation order. Producer: x_e(mu) = max(0, (beta_e - mu) / rho), activated
// in descending beta. Consumer: y_e(mu) = max(0, (mu - kappa_e) / rho), activated in ascending kappa.
struct Waterfill {
    std::vector<double> sorted;  // breakpoints in activation order
    std::vector<double> prefix;  // prefix sums of `sorted`
    double rho;

    Waterfill(std::vector<double> bp, bool descending, double rho_) : sorted(std::move(bp)), rho(rho_) {
        if (descending)
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
        else
            std::sort(sorted.begin(), sorted.end());
        prefix.resize(sorted.size() + 1, 0.0);
        for (std::size_t k = 0; k < sorted.size(); ++k) prefix[k + 1] = prefix[k] + sorted[k];
    }
    std::size_t size() const { return sorted.size(); }
    double next(std::size_t k, double fallback) const { return k < sorted.size() ? sorted[k] : fallback; }
};

// Producer: multiplier mu giving total t, t > 0.
double producer_mu_for_total(const Waterfill& w, double t) {
    if (t <= 0.0) return w.sorted.front();
    for (std::size_t k = 1; k <= w.size(); ++k) {
        const double mu = (w.prefix[k] - w.rho * t) / static_cast<double>(k);
        if (mu >= w.next(k, -kInf)) return mu;
    }
    return (w.prefix.back() - w.rho * t) / static_cast<double>(w.size());
}

double consumer_mu_for_total(const Waterfill& w, double t) {
    if (t <= 0.0) return w.sorted.front();
    for (std::size_t k = 1; k <= w.size(); ++k) {
        const double mu = (w.rho * t + w.prefix[k]) / static_cast<double>(k);
        if (mu <= w.next(k, kInf)) return mu;
    }
    return (w.rho * t + w.prefix.back()) / static_cast<double>(w.size());
}

double sum_positive(std::span<const double> bp, double mu, double rho, bool producer) {
    double t = 0.0;
    for (double b : bp) t += std::max(0.0, producer ? (b - mu) / rho : (mu - b) / rho);
    return t;
}

}  // namespace

std::vector<double> producer_best_response(const ProducerParams& p, std::span<const double> lambda_hat,
                                           std::span<const double> x_prev, const BestResponseConfig& cfg) {
    const std::size_t n = lambda_hat.size();
    check_inputs(n, x_prev.size(), cfg.rho);
    if (p.x_min > p.x_max) throw std::invalid_argument("producer best response: infeasible bounds");

    if (cfg.rho == 0.0) {
        const double best = *std::max_element(lambda_hat.begin(), lambda_hat.end());
        const double total = std::clamp((best - p.b) / p.a, p.x_min, p.x_max);
        std::vector<std::size_t> tied;
        for (std::size_t k = 0; k < n; ++k)
            if (lambda_hat[k] == best) tied.push_back(k);
        return concentrate(tied, x_prev, total, n, cfg.tie_break);
    }

    const double rho = cfg.rho;
    std::vector<double> beta(n);
    for (std::size_t k = 0; k < n; ++k) beta[k] = lambda_hat[k] + rho * x_prev[k];
    const Waterfill w(beta, true, rho);

    // Stationary multiplier: mu = a * T(mu) + b.
    double mu = p.b;
    if (p.b < w.sorted.front()) {
        for (std::size_t k = 1; k <= n; ++k) {
            mu = (p.a * w.prefix[k] + rho * p.b) / (rho + p.a * static_cast<double>(k));
            if (mu >= w.next(k, -kInf)) break;
        }
    }
    const double total = sum_positive(beta, mu, rho, true);
    if (total > p.x_max)
        mu = producer_mu_for_total(w, p.x_max);
    else if (total < p.x_min)
        mu = producer_mu_for_total(w, p.x_min);

    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = std::max(0.0, (beta[k] - mu) / rho);
    return x;
}

std::vector<double> consumer_best_response(const ConsumerParams& c, std::span<const double> lambda_hat,
                                           std::span<const double> alpha, std::span<const double> y_prev,
                                           const BestResponseConfig& cfg) {
    const std::size_t n = lambda_hat.size();
    check_inputs(n, y_prev.size(), cfg.rho);
    if (alpha.size() != n) throw std::invalid_argument("consumer best response: alpha has wrong length");
    if (c.y_min > c.y_max) throw std::invalid_argument("consumer best response: infeasible bounds");

    if (cfg.rho == 0.0) {
        std::vector<double> eff(n);
        for (std::size_t k = 0; k < n; ++k) eff[k] = lambda_hat[k] - alpha[k];
        const double best = *std::min_element(eff.begin(), eff.end());
        // A negative effective price makes every extra kWh profitable even on the flat branch.
        const double unclipped = best < 0.0 ? kInf : std::max(0.0, (c.omega - best) / c.delta);
        const double total = std::clamp(unclipped, c.y_min, c.y_max);
        std::vector<std::size_t> tied;
        for (std::size_t k = 0; k < n; ++k)
            if (eff[k] == best) tied.push_back(k);
        return concentrate(tied, y_prev, total, n, cfg.tie_break);
    }

    const double rho = cfg.rho;
    std::vector<double> kappa(n);
    for (std::size_t k = 0; k < n; ++k) kappa[k] = lambda_hat[k] - alpha[k] - rho * y_prev[k];
    const Waterfill w(kappa, false, rho);

    // Stationary multiplier: mu = max(0, omega - delta * T(mu)).
    double mu = 0.0;
    if (sum_positive(kappa, 0.0, rho, false) < c.knee()) {
        mu = c.omega;
        if (c.omega > w.sorted.front()) {
            for (std::size_t k = 1; k <= n; ++k) {
                mu = (rho * c.omega + c.delta * w.prefix[k]) / (rho + c.delta * static_cast<double>(k));
                if (mu <= w.next(k, kInf)) break;
            }
        }
    }
    const double total = sum_positive(kappa, mu, rho, false);
    if (total > c.y_max)
        mu = consumer_mu_for_total(w, c.y_max);
    else if (total < c.y_min)
        mu = consumer_mu_for_total(w, c.y_min);

    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = std::max(0.0, (mu - kappa[k]) / rho);
    return y;
}

double producer_dual_term(const ProducerParams& p, std::span<const double> lambda) {
    if (lambda.empty()) return -cost(p, 0.0);
    const double best = *std::max_element(lambda.begin(), lambda.end());
    const double total = std::clamp((best - p.b) / p.a, p.x_min, p.x_max);
    return best * total - cost(p, total);
}

double consumer_dual_term(const ConsumerParams& c, std::span<const double> lambda, std::span<const double> alpha) {
    if (alpha.size() != lambda.size()) throw std::invalid_argument("consumer dual term: alpha has wrong length");
    if (lambda.empty()) return 0.0;
    double best = kInf;
    for (std::size_t k = 0; k < lambda.size(); ++k) best = std::min(best, lambda[k] - alpha[k]);
    const double unclipped = best < 0.0 ? kInf : std::max(0.0, (c.omega - best) / c.delta);
    const double total = std::clamp(unclipped, c.y_min, c.y_max);
    return utility(c, total) - best * total;
}

double producer_objective(const ProducerParams& p, std::span<const double> lambda_hat,
                          std::span<const double> x_prev, double rho, std::span<const double> x) {
    double v = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - x_prev[k];
        v += lambda_hat[k] * x[k] - 0.5 * rho * d * d;
        total += x[k];
    }
    return v - cost(p, total);
}

double consumer_objective(const ConsumerParams& c, std::span<const double> lambda_hat,
                          std::span<const double> alpha, std::span<const double> y_prev, double rho,
                          std::span<const double> y) {
    double v = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double d = y[k] - y_prev[k];
        v += (alpha[k] - lambda_hat[k]) * y[k] - 0.5 * rho * d * d;
        total += y[k];
    }
    return v + utility(c, total);
}

std::optional<double> step_size_bound(const ProducerParams& p, const ConsumerParams& c) {
    if (!c.strictly_concave_on_bounds()) return std::nullopt;
    const double lipschitz = (p.a + c.delta) / (p.a * c.delta);
    return 1.0 / lipschitz;
}

}  // namespace p2pm
