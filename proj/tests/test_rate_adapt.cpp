#include "shared_context.hpp"

#include <gtest/gtest.h>

using namespace sticmac;

namespace {

Topology cell(std::size_t n, double source_distance, std::uint64_t seed)
{
    Topology t;
    t.stations = init_positions(n, 100.0, seed);
    t.stations[0] = {source_distance, 0.0};
    return t;
}

} // namespace

TEST(RateAdapt, TwoHopRate)
{
    EXPECT_DOUBLE_EQ(two_hop_rate(12, 12), 6.0);
    EXPECT_DOUBLE_EQ(two_hop_rate(54, 54, 0.75), 1.0 / (1.0 / 54 + 1.0 / 40.5));
    EXPECT_TRUE(rate_less(6.0, 6.1));
    EXPECT_FALSE(rate_less(6.0, 6.0 + 1e-12));
}

TEST(RateAdapt, CandidateOrder)
{
    const AdaptConfig cfg;
    const auto c = two_hop_candidates(cfg, cfg.stc_dimensions);
    ASSERT_EQ(c.size(), 3u * 64u);
    EXPECT_EQ(c.front().r1.rate_mbps, 54);
    EXPECT_EQ(c.front().r2.rate_mbps, 54);
    EXPECT_EQ(c.front().dimension, 2);
    for (std::size_t i = 1; i < c.size(); ++i) {
        EXPECT_FALSE(rate_less(c[i - 1].objective, c[i].objective));
        if (!rate_less(c[i].objective, c[i - 1].objective) && c[i].dimension == c[i - 1].dimension)
            EXPECT_LE(c[i].r1.rate_mbps, c[i - 1].r1.rate_mbps);
    }
}

TEST(RateAdapt, ConfigValidation)
{
    AdaptConfig cfg;
    cfg.gamma = 1.0;
    try {
        cfg.validate();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "gamma");
        EXPECT_STREQ(e.what(), "gamma out of (0,1)");
    }
    cfg.gamma = 0.05;
    cfg.rates = {7};
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(RateAdapt, DirectNearApIsFastest)
{
    const AdaptEnv env = shared_context().env();
    Topology t;
    t.stations = {{1.0, 0.0}};
    EXPECT_EQ(optimize_direct(t, 0, env).r1.rate_mbps, 54);
}

TEST(RateAdapt, DirectPicksHighestCompliantRate)
{
    const AdaptEnv env = shared_context().env();
    for (double d = 5.0; d <= 100.0; d += 5.0) {
        const double snr = snr_at(d, env.budget);
        const TxParams p = direct_params_at(snr, env);
        if (!p.compliant) {
            EXPECT_EQ(p.r1.rate_mbps, 6);
            EXPECT_GT(env.averaged->at(base_rate(), snr), env.cfg.gamma);
            continue;
        }
        EXPECT_LE(env.averaged->at(p.r1, snr), env.cfg.gamma);
        for (const auto& m : rate_set())
            if (m.rate_mbps > p.r1.rate_mbps)
                EXPECT_GT(env.averaged->at(m, snr), env.cfg.gamma) << d << " " << m.rate_mbps;
    }
}

TEST(RateAdapt, DirectRateNonincreasingWithDistance)
{
    const AdaptEnv env = shared_context().env();
    int prev = 54;
    for (double d = 1.0; d <= 100.0; d += 1.0) {
        const int r = direct_params_at(snr_at(d, env.budget), env).r1.rate_mbps;
        EXPECT_LE(r, prev) << d;
        prev = r;
    }
}

TEST(RateAdapt, LooseTargetAllowsTopRate)
{
    AdaptEnv env = shared_context().env();
    env.cfg.gamma = 0.9999;
    EXPECT_EQ(direct_params_at(snr_at(30.0, env.budget), env).r1.rate_mbps, 54);
}

TEST(RateAdapt, FallbackRule)
{
    TxParams direct;
    direct.e2e_rate_mbps = 12.0;
    TxParams coop;
    coop.scheme = TxScheme::CoopMac;
    coop.e2e_rate_mbps = 9.0;
    EXPECT_EQ(apply_direct_fallback(std::nullopt, direct).scheme, TxScheme::Direct);
    EXPECT_EQ(apply_direct_fallback(coop, direct).scheme, TxScheme::Direct);
    coop.e2e_rate_mbps = 12.0;
    EXPECT_EQ(apply_direct_fallback(coop, direct).scheme, TxScheme::Direct);
    coop.e2e_rate_mbps = 13.5;
    EXPECT_EQ(apply_direct_fallback(coop, direct).scheme, TxScheme::CoopMac);
}

TEST(RateAdapt, CsBeatsDirectAtTheEdgeInADenseCell)
{
    const AdaptEnv env = shared_context().env();
    const Topology t = cell(48, 95.0, 3);
    const TxParams direct = optimize_direct(t, 0, env);
    const TxParams cs = optimize_sticmac_cs(t, 0, env, 11);
    ASSERT_EQ(cs.scheme, TxScheme::Rdstc);
    EXPECT_GT(cs.e2e_rate_mbps, direct.e2e_rate_mbps);
    ASSERT_TRUE(cs.r2 && cs.stc_dimension);

    // Re-estimate on independent draws with more trials.
    RelayDraws fresh(t, 0, env.budget, 4 * env.cfg.per_trials, 12345);
    E2eEvaluator<CodedLinkModel> eval(fresh, *env.link);
    const auto e = eval.rdstc(cs.r1, *cs.r2, *cs.stc_dimension);
    EXPECT_LE(e.per, env.cfg.gamma + 2.0 * e.half_width_95);
}

TEST(RateAdapt, CooperativeNeverBelowDirect)
{
    const AdaptEnv env = shared_context().env();
    for (std::uint64_t s = 1; s <= 3; ++s) {
        const Topology t = cell(16, 40.0 + 20.0 * static_cast<double>(s), s);
        const double direct = optimize_direct(t, 0, env).e2e_rate_mbps;
        EXPECT_GE(optimize_coop(t, 0, env).e2e_rate_mbps, direct);
        EXPECT_GE(optimize_dstc_greedy(t, 0, env, s).e2e_rate_mbps, direct);
        EXPECT_GE(optimize_sticmac_cs(t, 0, env, s).e2e_rate_mbps, direct);
    }
}

TEST(RateAdapt, UcLookup)
{
    const UcTable& table = shared_context().uc_table();
    const auto& g = table.options().grid;
    EXPECT_FALSE(table.lookup(16, 47.0).clamped);
    EXPECT_TRUE(table.lookup(100, 47.0).clamped);
    EXPECT_TRUE(table.lookup(16, 120.0).clamped);
    EXPECT_EQ(tx_params_to_json(table.lookup(17, 47.0)), tx_params_to_json(table.lookup(16, 47.0)));
    EXPECT_EQ(table.lookup(1, 95.0).scheme, TxScheme::Direct);
    for (std::size_t b = 0; b < g.bin_count(); ++b)
        EXPECT_GE(table.entry(g.user_counts.size() - 1, b).params.e2e_rate_mbps, table.direct(b).e2e_rate_mbps);
    EXPECT_TRUE(table.matches(shared_context().env().budget, shared_context().env().cfg));
}

TEST(RateAdapt, TxParamsJsonRoundTrip)
{
    TxParams p;
    p.scheme = TxScheme::Dstc;
    p.r1 = mcs_for_rate(24);
    p.r2 = mcs_for_rate(36);
    p.stc_dimension = 3;
    p.relay_set = {4, 9};
    p.e2e_rate_mbps = 12.5;
    p.expected_per = 0.01;
    const TxParams q = tx_params_from_json(tx_params_to_json(p));
    EXPECT_EQ(tx_params_to_json(q), tx_params_to_json(p));
}
