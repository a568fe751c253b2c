#include "sticmac/per_table.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace sticmac;

TEST(PerTable, PoolAdjacentViolators)
{
    const auto fit = isotonic_nondecreasing({1.0, 3.0, 2.0, 4.0}, {1.0, 1.0, 1.0, 1.0});
    const std::vector<double> expected{1.0, 2.5, 2.5, 4.0};
    ASSERT_EQ(fit.size(), expected.size());
    for (std::size_t i = 0; i < fit.size(); ++i)
        EXPECT_DOUBLE_EQ(fit[i], expected[i]);

    const auto weighted = isotonic_nondecreasing({0.0, 0.5, 0.2}, {1.0, 1.0, 3.0});
    EXPECT_DOUBLE_EQ(weighted[1], (0.5 + 0.6) / 4.0);
    EXPECT_DOUBLE_EQ(weighted[2], weighted[1]);

    const std::vector<double> sorted{0.1, 0.2, 0.2, 0.9};
    EXPECT_EQ(isotonic_nondecreasing(sorted, {1, 1, 1, 1}), sorted);
}

TEST(PerTable, CurveInterpolation)
{
    PerGrid g{1e-4, 1e-1, 1};
    ASSERT_EQ(g.size(), 4u);
    PerCurve c(CodeRate::Half, 100, g, {1e-4, 1e-2, 0.5, 1.0}, {100, 100, 100, 100});
    for (std::size_t i = 0; i < g.size(); ++i)
        EXPECT_NEAR(c.at(g.ber_at(i)), c.values()[i], 1e-12);
    EXPECT_NEAR(c.at(std::sqrt(1e-4 * 1e-3)), 1e-3, 1e-12);
    EXPECT_EQ(c.at(0.0), 0.0);
    EXPECT_EQ(c.at(0.4), 1.0);
    // below the grid the tail falls as ber^5 for rate 1/2
    EXPECT_NEAR(c.at(1e-5), 1e-4 * 1e-5, 1e-15);
}

TEST(PerTable, CurveIsMonotoneAfterFit)
{
    PerGrid g{1e-3, 1e-1, 2};
    PerCurve c(CodeRate::ThreeQuarters, 50, g, {0.0, 0.1, 0.05, 0.4, 1.0}, {500, 500, 500, 500, 500});
    double prev = 0.0;
    for (double e = -3.0; e <= -1.0; e += 0.01) {
        const double v = c.at(std::pow(10.0, e));
        EXPECT_GE(v, prev - 1e-15);
        prev = v;
    }
}

TEST(PerTable, SaveLoadRoundTrip)
{
    const PerGrid g{1e-3, 0.5, 4};
    AdaptiveTrials rule;
    rule.max_trials = 400;
    const auto path = std::filesystem::temp_directory_path() / "sticmac_per_roundtrip.json";

    PerTable a(77, g, rule);
    const PerCurve& ca = a.curve(CodeRate::TwoThirds, 12);
    EXPECT_TRUE(a.dirty());
    a.save(path);
    EXPECT_FALSE(a.dirty());

    PerTable b(77, g, rule);
    ASSERT_TRUE(b.load(path));
    EXPECT_EQ(b.curve_count(), 1u);
    const PerCurve& cb = b.curve(CodeRate::TwoThirds, 12);
    EXPECT_EQ(ca.raw(), cb.raw());
    EXPECT_EQ(ca.trials(), cb.trials());
    EXPECT_FALSE(b.dirty());

    PerTable other_seed(78, g, rule);
    EXPECT_FALSE(other_seed.load(path));
    PerTable other_grid(77, PerGrid{1e-3, 0.5, 8}, rule);
    EXPECT_FALSE(other_grid.load(path));
    std::filesystem::remove(path);
}

TEST(PerTable, CurveBuildIsDeterministic)
{
    const PerGrid g{1e-3, 0.5, 2};
    AdaptiveTrials rule;
    rule.max_trials = 300;
    const auto x = build_per_curve(CodeRate::Half, 14, g, 5, rule);
    const auto y = build_per_curve(CodeRate::Half, 14, g, 5, rule);
    EXPECT_EQ(x.raw(), y.raw());
    EXPECT_EQ(x.values().back(), 1.0);
}
