#include "sticmac/mac.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace sticmac;

namespace {

TransactionChannel flat_channel(std::size_t n)
{
    TransactionChannel ch;
    ch.direct_snr = 10.0;
    ch.hop1_snr.assign(n, 100.0);
    ch.hop2_gain.assign(n, cdouble{10.0, 0.0});
    ch.weights.assign(n, {cdouble{1.0, 0.0}, cdouble{0.0, 1.0}, cdouble{1.0, 0.0}, cdouble{0.0, 1.0}});
    return ch;
}

const FrameErrorFn perfect = [](const Frame&, double) { return 0.0; };

TxParams rdstc(int r1, int r2, int l)
{
    TxParams p;
    p.scheme = TxScheme::Rdstc;
    p.r1 = mcs_for_rate(r1);
    p.r2 = mcs_for_rate(r2);
    p.stc_dimension = l;
    p.e2e_rate_mbps = two_hop_rate(r1, r2, stc_for_dimension(l).code_rate);
    return p;
}

// 16 service bits + 6 tail bits, 4 us symbols, 20 us preamble.
SimTime airtime_by_hand(std::size_t bytes, int ndbps, double stc_rate = 1.0)
{
    double symbols = std::ceil((22.0 + 8.0 * static_cast<double>(bytes)) / ndbps);
    symbols = std::ceil(symbols / stc_rate - 1e-9);
    return 20 + 4 * static_cast<SimTime>(symbols);
}

TransactionOutcome run(const TxParams& p, MacMode mode, const FrameErrorFn& errors, std::size_t n = 6,
                       std::uint64_t seed = 1)
{
    TransactionRequest req;
    req.params = p;
    req.mode = mode;
    Rng rng(seed);
    return run_transaction(req, flat_channel(n), errors, rng, n);
}

void expect_no_overlap(const TransactionOutcome& o)
{
    for (std::size_t i = 1; i < o.frames.size(); ++i)
        EXPECT_GE(o.frames[i].start, o.frames[i - 1].end) << i;
    for (const auto& f : o.frames)
        EXPECT_LE(f.end, o.elapsed);
}

} // namespace

TEST(Mac, Airtimes)
{
    const MacTiming tm;
    EXPECT_EQ(frame_airtime(make_frame(FrameKind::Rts, kRtsBytes, base_rate()), tm), 52);
    EXPECT_EQ(frame_airtime(make_frame(FrameKind::DataS, 1500, mcs_for_rate(54)), tm), 244);
    EXPECT_EQ(frame_airtime(make_frame(FrameKind::Ack, 0, base_rate()), tm), 24);
    for (const auto& m : rate_set())
        for (std::size_t b : {0u, 14u, 20u, 1500u})
            EXPECT_EQ(frame_airtime(make_frame(FrameKind::DataS, b, m), tm), airtime_by_hand(b, m.data_bits_per_symbol));
    const Frame stc3 = make_frame(FrameKind::DataR, 1500, mcs_for_rate(24), stc_for_dimension(3));
    EXPECT_EQ(frame_airtime(stc3, tm), airtime_by_hand(1500, 96, 0.75));
    const Frame stc2 = make_frame(FrameKind::DataR, 1500, mcs_for_rate(24), stc_for_dimension(2));
    EXPECT_EQ(frame_airtime(stc2, tm), airtime_by_hand(1500, 96));
}

TEST(Mac, PerfectLinkRdstcExchange)
{
    const TxParams p = rdstc(12, 24, 3);
    const auto o = run(p, MacMode::RtsOn, perfect);
    ASSERT_TRUE(o.success);
    const SimTime expected = airtime_by_hand(20, 24) + airtime_by_hand(22, 48) + airtime_by_hand(14, 96, 0.75) +
                             airtime_by_hand(14, 24) + airtime_by_hand(1500, 48) + airtime_by_hand(1500, 96, 0.75) +
                             airtime_by_hand(14, 24) + 6 * 16;
    EXPECT_EQ(o.elapsed, expected);
    EXPECT_EQ(o.elapsed, success_time(p, MacMode::RtsOn, 1500));
    EXPECT_EQ(o.relays_forwarding, 5u);
    ASSERT_EQ(o.frames.size(), 7u);
    const FrameKind order[] = {FrameKind::Rts, FrameKind::Hr,    FrameKind::Hts, FrameKind::Cts,
                               FrameKind::DataS, FrameKind::DataR, FrameKind::Ack};
    for (std::size_t i = 0; i < 7; ++i)
        EXPECT_EQ(o.frames[i].kind, order[i]);
    expect_no_overlap(o);
}

TEST(Mac, SuccessTimeMatchesEveryPerfectExchange)
{
    TxParams direct;
    direct.r1 = mcs_for_rate(36);
    TxParams coop;
    coop.scheme = TxScheme::CoopMac;
    coop.r1 = mcs_for_rate(24);
    coop.r2 = mcs_for_rate(48);
    coop.relay = 2;
    TxParams dstc;
    dstc.scheme = TxScheme::Dstc;
    dstc.r1 = mcs_for_rate(18);
    dstc.r2 = mcs_for_rate(36);
    dstc.stc_dimension = 2;
    dstc.relay_set = {1, 3};
    for (MacMode mode : {MacMode::RtsOn, MacMode::RtsOff}) {
        for (const TxParams& p : {direct, coop, dstc, rdstc(54, 54, 2)}) {
            const auto o = run(p, mode, perfect);
            ASSERT_TRUE(o.success) << tx_scheme_name(p.scheme);
            EXPECT_EQ(o.elapsed, success_time(p, mode, 1500)) << tx_scheme_name(p.scheme) << mac_mode_name(mode);
            expect_no_overlap(o);
        }
    }
}

TEST(Mac, DirectHandshakeByHand)
{
    TxParams p;
    p.r1 = mcs_for_rate(54);
    EXPECT_EQ(success_time(p, MacMode::RtsOn, 1500), 52 + 44 + 244 + 44 + 3 * 16);
    EXPECT_EQ(success_time(p, MacMode::RtsOff, 1500), 244 + 44 + 16);
}

TEST(Mac, DstcRelayOverhead)
{
    TxParams p;
    p.scheme = TxScheme::Dstc;
    p.r1 = mcs_for_rate(12);
    p.r2 = mcs_for_rate(12);
    p.stc_dimension = 2;
    p.relay_set = {1, 2};
    TxParams c;
    c.scheme = TxScheme::CoopMac;
    c.r1 = p.r1;
    c.r2 = p.r2;
    c.relay = 1;
    // Longer RTS, a relay-ack slot and a pilot slot per relay, no HTS.
    const SimTime diff = success_time(p, MacMode::RtsOn, 1500) - success_time(c, MacMode::RtsOn, 1500);
    EXPECT_EQ(diff, airtime_by_hand(22, 24) - airtime_by_hand(20, 24) + 4 * 9 - airtime_by_hand(14, 24));
}

TEST(Mac, RtsOffCarriesShim)
{
    const TxParams p = rdstc(12, 24, 2);
    std::vector<std::pair<FrameKind, std::size_t>> seen;
    const FrameErrorFn spy = [&](const Frame& f, double) {
        seen.emplace_back(f.kind, f.checked_bytes());
        return 0.0;
    };
    const auto o = run(p, MacMode::RtsOff, spy);
    ASSERT_TRUE(o.success);
    EXPECT_EQ(o.elapsed, airtime_by_hand(1502, 48) + airtime_by_hand(1500, 96) + airtime_by_hand(14, 24) + 2 * 16);
    for (const auto& [kind, bytes] : seen)
        if (kind == FrameKind::DataS)
            EXPECT_EQ(bytes, 1500u);
    EXPECT_EQ(o.frames.front().kind, FrameKind::DataS);
}

TEST(Mac, NoHelperDecodesHr)
{
    const FrameErrorFn no_hr = [](const Frame& f, double) { return f.kind == FrameKind::Hr ? 1.0 : 0.0; };
    const auto o = run(rdstc(12, 24, 2), MacMode::RtsOn, no_hr);
    EXPECT_FALSE(o.success);
    EXPECT_EQ(o.reason, FailureReason::NoRelay);
    EXPECT_EQ(o.frames.size(), 2u);
    expect_no_overlap(o);
}

TEST(Mac, LostDataAndAck)
{
    const FrameErrorFn no_data = [](const Frame& f, double) { return f.kind == FrameKind::DataR ? 1.0 : 0.0; };
    EXPECT_EQ(run(rdstc(12, 24, 2), MacMode::RtsOn, no_data).reason, FailureReason::DataLost);
    const FrameErrorFn no_ack = [](const Frame& f, double) { return f.kind == FrameKind::Ack ? 1.0 : 0.0; };
    const auto o = run(rdstc(12, 24, 2), MacMode::RtsOn, no_ack);
    EXPECT_EQ(o.reason, FailureReason::AckLost);
    EXPECT_GT(o.elapsed, success_time(rdstc(12, 24, 2), MacMode::RtsOn, 1500));
    const FrameErrorFn no_rts = [](const Frame& f, double) { return f.kind == FrameKind::Rts ? 1.0 : 0.0; };
    EXPECT_EQ(run(rdstc(12, 24, 2), MacMode::RtsOn, no_rts).reason, FailureReason::NoCts);
}

TEST(Mac, RelaysFailingDataSDoNotForward)
{
    // Station 3 never hears the source.
    TransactionChannel ch = flat_channel(6);
    ch.hop1_snr[3] = 0.0;
    const FrameErrorFn threshold = [](const Frame&, double snr) { return snr < 1.0 ? 1.0 : 0.0; };
    TransactionRequest req;
    req.params = rdstc(12, 24, 2);
    Rng rng(2);
    const auto o = run_transaction(req, ch, threshold, rng, 6);
    ASSERT_TRUE(o.success);
    EXPECT_EQ(o.relays_forwarding, 4u);
    for (const auto& f : o.frames)
        if (f.kind == FrameKind::DataR)
            EXPECT_EQ(std::count(f.transmitters.begin(), f.transmitters.end(), 3), 0);
}

TEST(Mac, ChannelForSourceScalesWeights)
{
    Topology t;
    t.stations = {{50.0, 0.0}, {20.0, 0.0}, {0.0, 20.0}};
    const auto r = sample_realization(t, LinkBudget{}, 3, stc_for_dimension(2), 4);
    const auto ch = channel_for_source(r, 0);
    EXPECT_EQ(ch.direct_snr, r.snr(0, kAccessPoint));
    EXPECT_EQ(ch.hop1_snr[1], r.snr(0, 1));
    EXPECT_EQ(ch.hop2_gain[2], r.gain(2, kAccessPoint));
    EXPECT_NEAR(std::abs(ch.weights[1][0]), std::abs(r.weights(1, 0)) * std::sqrt(2.0), 1e-12);
}

TEST(Mac, ModeParsing)
{
    EXPECT_EQ(parse_mac_mode("rts_off"), MacMode::RtsOff);
    EXPECT_THROW(parse_mac_mode("maybe"), ValidationError);
}

TEST(Mac, InvalidParamsRejected)
{
    TxParams p;
    p.scheme = TxScheme::Dstc;
    p.r2 = base_rate();
    p.stc_dimension = 3;
    p.relay_set = {1};
    EXPECT_THROW(validate_params(p), Error);
}
