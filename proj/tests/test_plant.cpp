#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "thermocell/common.hpp"
#include "thermocell/thermal_plant.hpp"

using namespace thermocell;

namespace {

// 1 - (1 + x) e^-x = 1/2, solved by bisection offline
constexpr double kCrossingHalf = 1.6783469900166608;
constexpr double kGambDefault = 0.004153846153846154;  // 0.27 W / 65 K

PlantParams defaults() { return fit_defaults(65.0, 0.27, 10.0); }

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

TEST(Plant, EquilibriumIsFixedPoint) {
    const ThermalGrid g = make_grid(9, 6, defaults(), 25.0, 1e-3);
    const ThermalGrid n = step(g, std::vector<double>(54, 0.0), 1e-3);
    EXPECT_EQ(n.temp, g.temp);
}

TEST(Plant, SingleNodeSteadyState) {
    const PlantParams p = defaults();
    ThermalGrid g = make_grid(1, 1, p, 25.0, 1e-3);
    std::vector<double> s;
    for (int k = 0; k < 100000; ++k) step_inplace(g, {0.27}, 1e-3, s);
    EXPECT_NEAR(g.temp[0], 25.0 + 0.27 / p.g_amb, 1e-6);
    EXPECT_NEAR(g.temp[0], 90.0, 1e-6);
}

// centre node heated, neighbours clamped to ambient: first-order response
// with conductance g_amb + 4 g_lat
TEST(Plant, ClampedNeighbourTimeConstant) {
    const PlantParams p = defaults();
    ThermalGrid g = make_grid(3, 3, p, 25.0, 1e-3);
    const double gt = p.g_amb + 4.0 * p.g_lat;
    const double tau = p.c_th / gt;
    const double final_rise = 0.27 / gt;
    std::vector<double> pw(9, 0.0), s;
    pw[4] = 0.27;
    const auto n = static_cast<long>(std::lround(tau / 1e-3));
    for (long k = 0; k < n; ++k) {
        step_inplace(g, pw, 1e-3, s);
        for (int i = 0; i < 9; ++i)
            if (i != 4) g.temp[static_cast<std::size_t>(i)] = 25.0;
    }
    EXPECT_NEAR((g.temp[4] - 25.0) / final_rise, 1.0 - std::exp(-1.0), 0.01 * (1.0 - std::exp(-1.0)));
}

TEST(Plant, FitDefaults) {
    const PlantParams p = defaults();
    EXPECT_NEAR(p.g_amb, kGambDefault, 1e-15);
    EXPECT_NEAR(p.g_lat, 0.25 * p.g_amb, 1e-15);
    EXPECT_NEAR(critically_damped_crossing(0.5), kCrossingHalf, 1e-12);
    EXPECT_NEAR(p.c_th / p.g_amb, 10.0 / (2.0 * kCrossingHalf), 1e-12);
}

TEST(Plant, LongerStepTimeOnlyGrowsCapacity) {
    const PlantParams a = fit_defaults(65.0, 0.27, 10.0);
    const PlantParams b = fit_defaults(65.0, 0.27, 1e6);
    EXPECT_EQ(a.g_amb, b.g_amb);
    EXPECT_EQ(a.g_lat, b.g_lat);
    EXPECT_NEAR(b.c_th / a.c_th, 1e5, 1e-6);
}

TEST(Plant, StabilityBoundEnforced) {
    PlantParams p = defaults();
    EXPECT_THROW(make_grid(9, 6, p, 25.0, 10.0), ConfigError);
    ThermalGrid g = make_grid(9, 6, p, 25.0, 1e-3);
    EXPECT_THROW(step(g, std::vector<double>(54, 0.0), 2.0 * stability_limit(g)), ConfigError);
    EXPECT_THROW(step(g, std::vector<double>(3, 0.0), 1e-3), ConfigError);
    EXPECT_THROW(fit_defaults(-1.0, 0.27, 10.0), FitError);
}

TEST(PlantProperty, MaximumPrincipleWithHeatersOff) {
    Rng rng(11);
    ThermalGrid g = make_grid(9, 6, defaults(), 25.0, 1e-3);
    for (auto& t : g.temp) t = 25.0 + 60.0 * (rng.uniform() - 0.3);
    std::vector<double> off(54, 0.0), s;
    auto dev = [&] {
        double m = 0.0;
        for (double t : g.temp) m = std::max(m, std::abs(t - 25.0));
        return m;
    };
    double prev = dev();
    for (int k = 0; k < 5000; ++k) {
        step_inplace(g, off, 1e-3, s);
        const double d = dev();
        ASSERT_LE(d, prev);
        prev = d;
    }
}

TEST(PlantProperty, HeatBalancePerStep) {
    Rng rng(5);
    const PlantParams p = defaults();
    ThermalGrid g = make_grid(9, 6, p, 25.0, 1e-3);
    for (auto& t : g.temp) t = 25.0 + 50.0 * rng.uniform();
    std::vector<double> pw(54), s;
    for (int k = 0; k < 200; ++k) {
        for (auto& x : pw) x = 0.27 * rng.uniform();
        const double e0 = p.c_th * sum(g.temp);
        double loss = 0.0;
        for (double t : g.temp) loss += p.g_amb * (t - 25.0);
        const double want = sum(pw) - loss;
        step_inplace(g, pw, 1e-3, s);
        const double got = (p.c_th * sum(g.temp) - e0) / 1e-3;
        ASSERT_NEAR(got, want, 1e-9 * std::max(std::abs(want), sum(pw)));
    }
}

TEST(PlantProperty, MirroredPatternsGiveMirroredFields) {
    Rng rng(9);
    const PlantParams p = defaults();
    ThermalGrid a = make_grid(9, 6, p, 25.0, 1e-3);
    ThermalGrid lr = a, ud = a;
    std::vector<double> pw(54), pw_lr(54), pw_ud(54), s;
    for (int k = 0; k < 300; ++k) {
        for (auto& x : pw) x = 0.27 * rng.uniform();
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 6; ++c) {
                pw_lr[static_cast<std::size_t>(r * 6 + (5 - c))] = pw[static_cast<std::size_t>(r * 6 + c)];
                pw_ud[static_cast<std::size_t>((8 - r) * 6 + c)] = pw[static_cast<std::size_t>(r * 6 + c)];
            }
        step_inplace(a, pw, 1e-3, s);
        step_inplace(lr, pw_lr, 1e-3, s);
        step_inplace(ud, pw_ud, 1e-3, s);
    }
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 6; ++c) {
            EXPECT_EQ(a.at(r, c), lr.at(r, 5 - c));
            EXPECT_EQ(a.at(r, c), ud.at(8 - r, c));
        }
}
