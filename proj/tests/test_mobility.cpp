#include "sticmac/mobility.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace sticmac;

TEST(Mobility, ReflectsOffTheBoundary)
{
    StationState s;
    s.position = {99.0, 0.0};
    s.velocity = {2.0, 0.0};
    move_reflecting(s, 1.0, 100.0);
    EXPECT_NEAR(s.position.x, 99.0, 1e-12);
    EXPECT_NEAR(s.position.y, 0.0, 1e-12);
    EXPECT_NEAR(s.velocity.x, -2.0, 1e-12);
    EXPECT_NEAR(s.velocity.y, 0.0, 1e-12);
}

TEST(Mobility, ObliqueReflectionKeepsSpeed)
{
    StationState s;
    s.position = {0.0, 90.0};
    s.velocity = {1.5, 1.5};
    move_reflecting(s, 40.0, 100.0);
    EXPECT_LE(norm(s.position), 100.0 + 1e-9);
    EXPECT_NEAR(std::hypot(s.velocity.x, s.velocity.y), std::hypot(1.5, 1.5), 1e-12);
}

TEST(Mobility, StaysInsideTheDisk)
{
    MobilityConfig cfg;
    cfg.v_min = 5.0;
    cfg.v_max = 20.0;
    MobilityField field(init_positions(50, cfg.cell_radius, 3), cfg, 4);
    for (double t = 0.1; t <= 300.0; t += 0.1) {
        field.advance_to(t);
        for (const auto& p : field.positions())
            ASSERT_LE(norm(p), cfg.cell_radius + 1e-9);
    }
}

TEST(Mobility, LegDrawsRespectBounds)
{
    MobilityConfig cfg;
    Rng rng(5);
    StationState s;
    for (int i = 0; i < 10000; ++i) {
        start_leg(s, cfg, rng);
        const double v = std::hypot(s.velocity.x, s.velocity.y);
        EXPECT_GE(v, cfg.v_min - 1e-12);
        EXPECT_LE(v, cfg.v_max + 1e-12);
        EXPECT_GE(s.leg_remaining, cfg.t_min);
        EXPECT_LE(s.leg_remaining, cfg.t_max);
    }
}

TEST(Mobility, DwellsBetweenLegs)
{
    MobilityConfig cfg;
    Rng rng(6);
    StationState s = initial_state({0.0, 0.0}, cfg, rng);
    const double leg = s.leg_remaining;
    step(s, leg + 0.5, cfg, rng);
    EXPECT_TRUE(s.dwelling);
    const Point parked = s.position;
    step(s, 0.25, cfg, rng);
    EXPECT_EQ(s.position.x, parked.x);
    EXPECT_EQ(s.position.y, parked.y);
    step(s, 0.5, cfg, rng);
    EXPECT_FALSE(s.dwelling);
    EXPECT_THROW(step(s, 0.0, cfg, rng), ValidationError);
}

TEST(Mobility, InitialPositionsAreUniformOnTheDisk)
{
    // Kolmogorov-Smirnov on r^2 / R^2, which is U(0,1) for a uniform disk.
    const std::size_t n = 20000;
    const auto pts = init_positions(n, 100.0, 7);
    std::vector<double> u;
    for (const auto& p : pts)
        u.push_back(std::pow(norm(p) / 100.0, 2));
    std::sort(u.begin(), u.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        d = std::max({d, std::abs(u[i] - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - u[i])});
    EXPECT_LT(d, 1.63 / std::sqrt(static_cast<double>(n))); // p = 0.01
}

TEST(Mobility, DeterministicPerSeed)
{
    MobilityConfig cfg;
    const auto init = init_positions(10, 100.0, 8);
    MobilityField a(init, cfg, 9), b(init, cfg, 9), c(init, cfg, 10);
    a.advance_to(30.0);
    b.advance_to(30.0);
    c.advance_to(30.0);
    for (std::size_t i = 0; i < init.size(); ++i) {
        EXPECT_EQ(a.positions()[i].x, b.positions()[i].x);
        EXPECT_EQ(a.positions()[i].y, b.positions()[i].y);
    }
    EXPECT_NE(a.positions()[0].x, c.positions()[0].x);
}

TEST(Mobility, ConfigValidation)
{
    MobilityConfig cfg;
    cfg.v_max = 0.5;
    try {
        cfg.validate();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "v_max");
    }
}

TEST(Mobility, TraceFormat)
{
    std::ostringstream out;
    write_mobility_trace(out, init_positions(2, 100.0, 1), MobilityConfig{}, 1, 1.0, 0.5);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,station,x,y");
    int rows = 0;
    while (std::getline(in, line))
        ++rows;
    EXPECT_EQ(rows, 6);
}
