#include "p2pm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace p2pm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// Convex QP in minimization form:
//   min 1/2 v'Qv + c'v  s.t.  A v = b,  G v <= h.
// v = [z (per edge); s (per consumer)], where s_j <= y_j and s_j <= knee_j turns the
// saturating utility into omega s - delta/2 s^2.
struct Program {
    MatrixXd Q;
    VectorXd c;
    MatrixXd A;
    VectorXd b;
    MatrixXd G;
    VectorXd h;

    // Row bookkeeping for multiplier recovery.
    std::vector<Index> prod_hi, prod_lo, prod_eq;  // -1 when absent
    std::vector<Index> cons_hi, cons_lo, cons_eq;
    std::vector<Index> cons_link;                  // s_j - y_j <= 0
    Index network_first = 0;
    MatrixXd network_bus;                          // scaled rows x bus_count
};

struct QpSolution {
    VectorXd v;
    VectorXd eq_mult;
    VectorXd ineq_mult;
    std::size_t iterations = 0;
};

void check_feasible_bounds(const Market& m) {
    const auto& g = m.graph;
    double sum_xmin = 0, sum_xmax = 0, sum_ymin = 0, sum_ymax = 0;
    for (std::size_t i = 0; i < g.producer_count(); ++i) {
        const auto& p = m.producers[i];
        if (g.producer_edges(i).empty() && p.x_min > 0.0)
            throw std::invalid_argument("oracle: producer " + std::to_string(i) + " must sell but has no partners");
        double reach = 0.0;
        for (std::size_t e : g.producer_edges(i)) reach += m.consumers[g.edge(e).consumer].y_max;
        if (p.x_min > reach) throw std::invalid_argument("oracle: producer " + std::to_string(i) + " minimum exceeds neighbour demand");
        sum_xmin += p.x_min;
        sum_xmax += p.x_max;
    }
    for (std::size_t j = 0; j < g.consumer_count(); ++j) {
        const auto& c = m.consumers[j];
        if (g.consumer_edges(j).empty() && c.y_min > 0.0)
            throw std::invalid_argument("oracle: consumer " + std::to_string(j) + " must buy but has no partners");
        double reach = 0.0;
        for (std::size_t e : g.consumer_edges(j)) reach += m.producers[g.edge(e).producer].x_max;
        if (c.y_min > reach) throw std::invalid_argument("oracle: consumer " + std::to_string(j) + " minimum exceeds neighbour supply");
        sum_ymin += c.y_min;
        sum_ymax += c.y_max;
    }
    if (sum_xmin > sum_ymax || sum_ymin > sum_xmax) throw std::invalid_argument("oracle: infeasible aggregate bounds");
}

Program build_program(const Market& m, const GridModel* grid) {
    const auto& g = m.graph;
    const std::size_t E = g.edge_count();
    const std::size_t P = g.producer_count();
    const std::size_t C = g.consumer_count();
    const Index n = ix(E + C);

    Program pr;
    pr.Q = MatrixXd::Zero(n, n);
    pr.c = VectorXd::Zero(n);
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t e : g.producer_edges(i))
            for (std::size_t f : g.producer_edges(i)) pr.Q(ix(e), ix(f)) += m.producers[i].a;
    for (std::size_t e = 0; e < E; ++e) pr.c(ix(e)) = m.producers[g.edge(e).producer].b - g.edge(e).alpha;
    for (std::size_t j = 0; j < C; ++j) {
        pr.Q(ix(E + j), ix(E + j)) = m.consumers[j].delta;
        pr.c(ix(E + j)) = -m.consumers[j].omega;
    }

    std::vector<VectorXd> g_rows, a_rows;
    std::vector<double> h_vals, b_vals;
    auto add_ineq = [&](VectorXd row, double rhs) {
        g_rows.push_back(std::move(row));
        h_vals.push_back(rhs);
        return ix(g_rows.size() - 1);
    };
    auto add_eq = [&](VectorXd row, double rhs) {
        a_rows.push_back(std::move(row));
        b_vals.push_back(rhs);
        return ix(a_rows.size() - 1);
    };

    for (std::size_t e = 0; e < E; ++e) {
        VectorXd row = VectorXd::Zero(n);
        row(ix(e)) = -1.0;
        add_ineq(std::move(row), 0.0);
    }
    pr.prod_hi.assign(P, -1);
    pr.prod_lo.assign(P, -1);
    pr.prod_eq.assign(P, -1);
    for (std::size_t i = 0; i < P; ++i) {
        const auto idx = g.producer_edges(i);
        if (idx.empty()) continue;
        VectorXd row = VectorXd::Zero(n);
        for (std::size_t e : idx) row(ix(e)) = 1.0;
        const auto& p = m.producers[i];
        if (p.x_min == p.x_max) {
            pr.prod_eq[i] = add_eq(row, p.x_max);
        } else {
            pr.prod_hi[i] = add_ineq(row, p.x_max);
            if (p.x_min > 0.0) pr.prod_lo[i] = add_ineq(-row, -p.x_min);
        }
    }
    pr.cons_hi.assign(C, -1);
    pr.cons_lo.assign(C, -1);
    pr.cons_eq.assign(C, -1);
    pr.cons_link.assign(C, -1);
    for (std::size_t j = 0; j < C; ++j) {
        const auto idx = g.consumer_edges(j);
        const auto& cp = m.consumers[j];
        VectorXd row = VectorXd::Zero(n);
        for (std::size_t e : idx) row(ix(e)) = 1.0;
        if (!idx.empty()) {
            if (cp.y_min == cp.y_max) {
                pr.cons_eq[j] = add_eq(row, cp.y_max);
            } else {
                pr.cons_hi[j] = add_ineq(row, cp.y_max);
                if (cp.y_min > 0.0) pr.cons_lo[j] = add_ineq(-row, -cp.y_min);
            }
        }
        VectorXd link = -row;
        link(ix(E + j)) = 1.0;
        pr.cons_link[j] = add_ineq(std::move(link), 0.0);
        VectorXd cap = VectorXd::Zero(n);
        cap(ix(E + j)) = 1.0;
        add_ineq(std::move(cap), cp.knee());
    }

    pr.network_first = ix(g_rows.size());
    if (grid) {
        const auto sens = build_sensitivities(*grid);
        const auto rows = network_rows(*grid, sens);
        const auto pb = grid->producer_buses(P);
        const auto cb = grid->consumer_buses(C);
        pr.network_bus = MatrixXd::Zero(rows.coeff.rows(), rows.coeff.cols());
        for (Index r = 0; r < rows.coeff.rows(); ++r) {
            // Scale each row to unit right-hand side magnitude for conditioning.
            const double scale = std::max(std::abs(rows.rhs(r)), 1e-6);
            pr.network_bus.row(r) = rows.coeff.row(r) / scale;
            VectorXd row = VectorXd::Zero(n);
            for (std::size_t e = 0; e < E; ++e) {
                const auto& ed = g.edge(e);
                row(ix(e)) = pr.network_bus(r, ix(pb[ed.producer])) - pr.network_bus(r, ix(cb[ed.consumer]));
            }
            add_ineq(std::move(row), rows.rhs(r) / scale);
        }
    }

    pr.G = MatrixXd::Zero(ix(g_rows.size()), n);
    pr.h = VectorXd::Zero(ix(h_vals.size()));
    for (std::size_t r = 0; r < g_rows.size(); ++r) {
        pr.G.row(ix(r)) = g_rows[r].transpose();
        pr.h(ix(r)) = h_vals[r];
    }
    pr.A = MatrixXd::Zero(ix(a_rows.size()), n);
    pr.b = VectorXd::Zero(ix(b_vals.size()));
    for (std::size_t r = 0; r < a_rows.size(); ++r) {
        pr.A.row(ix(r)) = a_rows[r].transpose();
        pr.b(ix(r)) = b_vals[r];
    }
    return pr;
}

double max_step(const VectorXd& x, const VectorXd& dx) {
    double a = 1.0;
    for (Index k = 0; k < x.size(); ++k)
        if (dx(k) < 0.0) a = std::min(a, -x(k) / dx(k));
    return a;
}

// Mehrotra predictor-corrector on the KKT system, eliminating slacks and inequality multipliers.
QpSolution interior_point(const Program& pr, double tol, std::size_t max_iter) {
    const Index n = pr.Q.rows();
    const Index me = pr.A.rows();
    const Index mi = pr.G.rows();
    constexpr double kReg = 1e-12;

    VectorXd v = VectorXd::Zero(n);
    VectorXd y = VectorXd::Zero(me);
    VectorXd s = (pr.h - pr.G * v).cwiseMax(1.0);
    VectorXd z = VectorXd::Ones(mi);

    const double scale_c = 1.0 + pr.c.lpNorm<Eigen::Infinity>();
    const double scale_h = 1.0 + std::max(pr.h.size() ? pr.h.lpNorm<Eigen::Infinity>() : 0.0,
                                          pr.b.size() ? pr.b.lpNorm<Eigen::Infinity>() : 0.0);

    QpSolution out;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const VectorXd rd = pr.Q * v + pr.c + pr.A.transpose() * y + pr.G.transpose() * z;
        const VectorXd rp = pr.A * v - pr.b;
        const VectorXd rg = pr.G * v + s - pr.h;
        const double mu = mi > 0 ? s.dot(z) / static_cast<double>(mi) : 0.0;
        const double res_d = rd.size() ? rd.lpNorm<Eigen::Infinity>() : 0.0;
        const double res_p = std::max(rp.size() ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                                      rg.size() ? rg.lpNorm<Eigen::Infinity>() : 0.0);
        out.iterations = it;
        if (res_d <= tol * scale_c && res_p <= tol * scale_h && mu <= tol * 1e-2) break;

        const VectorXd w = z.cwiseQuotient(s);
        MatrixXd K = MatrixXd::Zero(n + me, n + me);
        K.topLeftCorner(n, n) = pr.Q + pr.G.transpose() * w.asDiagonal() * pr.G;
        K.topRightCorner(n, me) = pr.A.transpose();
        K.bottomLeftCorner(me, n) = pr.A;
        K.bottomRightCorner(me, me) = -kReg * MatrixXd::Identity(me, me);
        const Eigen::PartialPivLU<MatrixXd> lu(K);

        auto solve = [&](const VectorXd& rc, VectorXd& dv, VectorXd& dy, VectorXd& ds, VectorXd& dz) {
            const VectorXd t = (-rc + z.cwiseProduct(rg)).cwiseQuotient(s);
            VectorXd rhs(n + me);
            rhs.head(n) = -rd - pr.G.transpose() * t;
            rhs.tail(me) = -rp;
            const VectorXd sol = lu.solve(rhs);
            dv = sol.head(n);
            dy = sol.tail(me);
            ds = -rg - pr.G * dv;
            dz = t + w.cwiseProduct(pr.G * dv);
        };

        VectorXd dv, dy, ds, dz;
        solve(s.cwiseProduct(z), dv, dy, ds, dz);
        const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
        const double mu_aff = mi > 0 ? (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi) : 0.0;
        const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
        const VectorXd rc = s.cwiseProduct(z) + ds.cwiseProduct(dz) - VectorXd::Constant(mi, sigma * mu);
        solve(rc, dv, dy, ds, dz);
        const double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
        v += a * dv;
        y += a * dy;
        s += a * ds;
        z += a * dz;
        out.iterations = it + 1;
    }
    out.v = v;
    out.eq_mult = y;
    out.ineq_mult = z;
    return out;
}

// Recovers edge prices and network charges from the QP multipliers.
void recover_prices(const Market& m, const Program& pr, const GridModel* grid, const QpSolution& qp,
                    OracleSolution& sol) {
    const auto& g = m.graph;
    const std::size_t P = g.producer_count();
    const std::size_t C = g.consumer_count();
    const auto xs = producer_totals(g, sol.trades);
    auto mult = [&](Index row) { return row < 0 ? 0.0 : qp.ineq_mult(row); };
    auto eqm = [&](Index row) { return row < 0 ? 0.0 : qp.eq_mult(row); };

    std::vector<double> prod_net(P, 0.0), cons_net(C, 0.0);
    if (grid) {
        const Index rows = pr.network_bus.rows();
        const VectorXd xi = qp.ineq_mult.segment(pr.network_first, rows);
        const VectorXd per_bus = pr.network_bus.transpose() * xi;
        sol.bus_charges.assign(grid->bus_count, 0.0);
        for (std::size_t b = 0; b < grid->bus_count; ++b) sol.bus_charges[b] = -per_bus(ix(b));
        const auto pb = grid->producer_buses(P);
        const auto cb = grid->consumer_buses(C);
        AgentCharges ch;
        ch.producer.resize(P);
        ch.consumer.resize(C);
        for (std::size_t i = 0; i < P; ++i) {
            prod_net[i] = per_bus(ix(pb[i]));
            ch.producer[i] = -prod_net[i];
        }
        for (std::size_t j = 0; j < C; ++j) {
            cons_net[j] = per_bus(ix(cb[j]));
            ch.consumer[j] = -cons_net[j];
        }
        sol.charges = std::move(ch);
    }

    sol.prices.assign(g.edge_count(), 0.0);
    for (std::size_t i = 0; i < P; ++i) {
        const double mu = marginal_cost(m.producers[i], xs[i]) + mult(pr.prod_hi[i]) - mult(pr.prod_lo[i]) +
                          eqm(pr.prod_eq[i]) + prod_net[i];
        for (std::size_t e : g.producer_edges(i)) sol.prices[e] = mu;
    }
}

}  // namespace

OracleSolution solve_centralized(const Market& market, const GridModel* grid, const OracleOptions& opts) {
    market.validate();
    check_feasible_bounds(market);
    const GridModel* net = opts.with_network ? grid : nullptr;
    if (opts.with_network && !grid) throw std::invalid_argument("oracle: network mode needs a grid");
    if (net) net->validate();

    const auto& g = market.graph;
    const std::size_t E = g.edge_count();
    const Program pr = build_program(market, net);
    QpSolution qp = interior_point(pr, std::min(opts.tolerance, 1e-9) * 1e-2, opts.max_iter);

    auto finish = [&](const QpSolution& q, OracleSolution& sol) {
        sol.trades.assign(E, 0.0);
        for (std::size_t e = 0; e < E; ++e) sol.trades[e] = std::max(0.0, q.v(ix(e)));
        sol.welfare = social_welfare(market, sol.allocation());
        recover_prices(market, pr, net, q, sol);
        sol.kkt_residual = kkt_residual(market, sol.trades, sol.prices, sol.charges ? &*sol.charges : nullptr);
        if (net) {
            const auto sens = build_sensitivities(*net);
            const auto rep = check_constraints(*net, sens, g, sol.allocation());
            sol.kkt_residual = std::max({sol.kkt_residual, rep.worst_flow_violation, rep.worst_voltage_violation});
        }
    };

    OracleSolution sol;
    sol.iterations = qp.iterations;
    finish(qp, sol);

    // Active-set polish: fix the identified active rows and take one exact Newton step on
    // the resulting equality-constrained QP. Kept only if it stays feasible and helps.
    {
        const Index n = pr.Q.rows();
        const VectorXd slack = pr.h - pr.G * qp.v;
        std::vector<Index> active;
        for (Index r = 0; r < pr.G.rows(); ++r)
            if (qp.ineq_mult(r) > slack(r)) active.push_back(r);
        const Index me = pr.A.rows();
        const Index ma = ix(active.size());
        MatrixXd Ceq(me + ma, n);
        VectorXd d(me + ma);
        Ceq.topRows(me) = pr.A;
        d.head(me) = pr.b;
        for (Index k = 0; k < ma; ++k) {
            Ceq.row(me + k) = pr.G.row(active[static_cast<std::size_t>(k)]);
            d(me + k) = pr.h(active[static_cast<std::size_t>(k)]);
        }
        MatrixXd K = MatrixXd::Zero(n + me + ma, n + me + ma);
        K.topLeftCorner(n, n) = pr.Q;
        K.topRightCorner(n, me + ma) = Ceq.transpose();
        K.bottomLeftCorner(me + ma, n) = Ceq;
        VectorXd rhs(n + me + ma);
        rhs.head(n) = -(pr.Q * qp.v + pr.c);
        rhs.tail(me + ma) = d - Ceq * qp.v;
        const VectorXd step = K.completeOrthogonalDecomposition().solve(rhs);

        QpSolution polished = qp;
        polished.v = qp.v + step.head(n);
        polished.eq_mult = step.segment(n, me);
        polished.ineq_mult = VectorXd::Zero(pr.G.rows());
        bool ok = true;
        for (Index k = 0; k < ma; ++k) {
            const double lam = step(n + me + k);
            if (lam < -1e-10) ok = false;
            polished.ineq_mult(active[static_cast<std::size_t>(k)]) = std::max(0.0, lam);
        }
        const VectorXd viol = pr.G * polished.v - pr.h;
        if (viol.size() && viol.maxCoeff() > 1e-10 * (1.0 + pr.h.lpNorm<Eigen::Infinity>())) ok = false;
        if (ok) {
            OracleSolution cand;
            cand.iterations = qp.iterations;
            cand.polished = true;
            finish(polished, cand);
            if (cand.kkt_residual <= sol.kkt_residual) sol = std::move(cand);
        }
    }

    if (!(sol.kkt_residual <= opts.tolerance))
        throw std::runtime_error("oracle: KKT residual " + std::to_string(sol.kkt_residual) +
                                 " above tolerance after " + std::to_string(sol.iterations) + " iterations");
    return sol;
}

double theoretical_bound(BoundKind kind, std::size_t k, std::span<const double> eta,
                         std::span<const double> lambda0, std::span<const double> lambda_star) {
    if (k < 1) throw std::invalid_argument("bound: k must be >= 1");
    if (eta.size() != lambda0.size() || lambda0.size() != lambda_star.size())
        throw std::invalid_argument("bound: index set mismatch");
    const double kk = static_cast<double>(k);
    double sum = 0.0;
    for (std::size_t e = 0; e < eta.size(); ++e) {
        if (!(eta[e] > 0.0)) throw std::invalid_argument("bound: step sizes must be > 0");
        const double d = lambda0[e] - lambda_star[e];
        sum += kind == BoundKind::accelerated ? 2.0 * d * d / (eta[e] * kk * kk) : d * d / (2.0 * eta[e] * kk);
    }
    return sum;
}

double kkt_residual(const Market& market, std::span<const double> trades, std::span<const double> prices,
                    const AgentCharges* charges) {
    const auto& g = market.graph;
    if (trades.size() != g.edge_count() || prices.size() != g.edge_count())
        throw std::invalid_argument("kkt residual: index set mismatch");
    const std::size_t P = g.producer_count();
    const std::size_t C = g.consumer_count();
    const auto xs = producer_totals(g, trades);
    const auto ys = consumer_totals(g, trades);
    auto pc = [&](std::size_t i) { return charges ? charges->producer.at(i) : 0.0; };
    auto cc = [&](std::size_t j) { return charges ? charges->consumer.at(j) : 0.0; };

    double primal = 0.0;
    for (double z : trades) primal = std::max(primal, -z);
    for (std::size_t i = 0; i < P; ++i) {
        const auto& p = market.producers[i];
        primal = std::max({primal, xs[i] - p.x_max, p.x_min - xs[i]});
    }
    for (std::size_t j = 0; j < C; ++j) {
        const auto& c = market.consumers[j];
        primal = std::max({primal, ys[j] - c.y_max, c.y_min - ys[j]});
    }

    // Best effective price per agent and the natural-map stationarity gap of its total.
    std::vector<double> best_p(P, -std::numeric_limits<double>::infinity());
    std::vector<double> best_c(C, std::numeric_limits<double>::infinity());
    std::vector<double> gap_p(P, 0.0), gap_c(C, 0.0);
    for (std::size_t i = 0; i < P; ++i) {
        const auto& p = market.producers[i];
        for (std::size_t e : g.producer_edges(i)) best_p[i] = std::max(best_p[i], prices[e] + pc(i));
        if (g.producer_edges(i).empty()) continue;
        const double moved = std::clamp(xs[i] + (best_p[i] - marginal_cost(p, xs[i])), p.x_min, p.x_max);
        gap_p[i] = std::abs(xs[i] - moved);
    }
    for (std::size_t j = 0; j < C; ++j) {
        const auto& c = market.consumers[j];
        for (std::size_t e : g.consumer_edges(j))
            best_c[j] = std::min(best_c[j], prices[e] + cc(j) - g.edge(e).alpha);
        if (g.consumer_edges(j).empty()) continue;
        const double moved = std::clamp(ys[j] + (marginal_utility(c, ys[j]) - best_c[j]), c.y_min, c.y_max);
        gap_c[j] = std::abs(ys[j] - moved);
    }

    double worst = primal;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const auto& ed = g.edge(e);
        const double z = std::max(0.0, trades[e]);
        const double slack_p = best_p[ed.producer] - (prices[e] + pc(ed.producer));
        const double slack_c = (prices[e] + cc(ed.consumer) - ed.alpha) - best_c[ed.consumer];
        const double r = gap_p[ed.producer] + gap_c[ed.consumer] + std::min(z, slack_p) + std::min(z, slack_c);
        worst = std::max(worst, r);
    }
    return worst;
}

}  // namespace p2pm
