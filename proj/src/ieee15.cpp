#include <array>

#include "p2pm/experiments.hpp"

namespace p2pm {

namespace {

// External data, mirrored in data/ieee15_feeder.csv: published 15-bus radial feeder
// impedances (ohm, 11 kV), buses renumbered from 0.
struct FeederLine {
    std::size_t from, to;
    double r_ohm, x_ohm;
};

constexpr std::array<FeederLine, 14> kFeeder{{
    {0, 1, 1.35309, 1.32349},
    {1, 2, 1.17024, 1.14464},
    {2, 3, 0.84111, 0.82271},
    {3, 4, 1.52348, 1.02760},
    {1, 8, 2.01317, 1.35790},
    {8, 9, 1.68671, 1.13770},
    {1, 5, 2.55727, 1.72490},
    {5, 6, 1.08820, 0.73400},
    {5, 7, 1.25143, 0.84410},
    {2, 10, 1.79553, 1.21110},
    {10, 11, 2.44845, 1.65150},
    {11, 12, 2.01317, 1.35790},
    {3, 13, 2.23081, 1.50470},
    {3, 14, 1.19702, 0.80740},
}};

constexpr double kBaseKv = 11.0;
constexpr std::array<std::size_t, 7> kProducerBuses{1, 3, 4, 5, 9, 10, 11};
constexpr std::array<std::size_t, 7> kConsumerBuses{2, 6, 7, 8, 12, 13, 14};

}  // namespace

GridModel ieee15_grid(double base_kw) {
    GridModel g;
    g.bus_count = 15;
    g.base_kw = base_kw;
    const double z_base = kBaseKv * kBaseKv * 1e6 / (base_kw * 1e3);
    for (const auto& l : kFeeder) g.lines.push_back({l.from, l.to, l.r_ohm / z_base, l.x_ohm / z_base, 60.0});
    g.limits.assign(g.bus_count, BusLimits{0.9, 1.1});
    g.occupant.assign(g.bus_count, std::nullopt);
    for (std::size_t i = 0; i < kProducerBuses.size(); ++i)
        g.occupant[kProducerBuses[i]] = BusOccupant{AgentRole::producer, i};
    for (std::size_t j = 0; j < kConsumerBuses.size(); ++j)
        g.occupant[kConsumerBuses[j]] = BusOccupant{AgentRole::consumer, j};
    return g;
}

}  // namespace p2pm
