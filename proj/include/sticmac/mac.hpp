#pragma once

// Frame timing and the per-scheme frame exchange of one channel access.

#include "sticmac/error.hpp"
#include "sticmac/link_model.hpp"
#include "sticmac/phy.hpp"
#include "sticmac/random.hpp"
#include "sticmac/rate_adapt.hpp"
#include "sticmac/topology.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace sticmac {

using SimTime = std::int64_t; // microseconds

enum class MacMode { RtsOn, RtsOff };

inline const char* mac_mode_name(MacMode m) { return m == MacMode::RtsOn ? "rts_on" : "rts_off"; }

inline MacMode parse_mac_mode(const std::string& s)
{
    if (s == "rts_on")
        return MacMode::RtsOn;
    if (s == "rts_off")
        return MacMode::RtsOff;
    throw ValidationError("mode", "mode must be rts_on or rts_off");
}

struct MacTiming {
    SimTime slot = 9;
    SimTime sifs = 16;
    SimTime difs = 34;
    SimTime preamble = 20;
    SimTime symbol = 4;
    SimTime guard = 9;
};

// RelayAck and Pilot are the 1-slot DSTC bursts, not MAC frames proper.
enum class FrameKind { Rts, Hr, Hts, Cts, DataS, DataR, Ack, RelayAck, Pilot };

inline const char* frame_kind_name(FrameKind k)
{
    switch (k) {
    case FrameKind::Rts: return "RTS";
    case FrameKind::Hr: return "HR";
    case FrameKind::Hts: return "HTS";
    case FrameKind::Cts: return "CTS";
    case FrameKind::DataS: return "DATA_S";
    case FrameKind::DataR: return "DATA_R";
    case FrameKind::Ack: return "ACK";
    case FrameKind::RelayAck: return "RELAY_ACK";
    case FrameKind::Pilot: return "PILOT";
    }
    return "?";
}

inline constexpr std::size_t kRtsBytes = 20;
inline constexpr std::size_t kCtsBytes = 14;
inline constexpr std::size_t kAckBytes = 14;
inline constexpr std::size_t kHrBytes = 22;
inline constexpr std::size_t kHtsBytes = 14;
inline constexpr std::size_t kShimBytes = 2;
inline constexpr std::size_t kOfdmOverheadBits = 16 + 6;

struct Frame {
    FrameKind kind = FrameKind::Rts;
    std::size_t bytes = 0;
    Mcs rate = base_rate();
    std::optional<StcCode> stc;
    SimTime duration_field = 0;
    StationId src = 0;
    StationId dst = kAccessPoint;
    std::size_t error_bytes = 0; // length the error model sees; 0 means `bytes`

    std::size_t checked_bytes() const { return error_bytes ? error_bytes : bytes; }
};

inline SimTime frame_airtime(const Frame& f, const MacTiming& tm = {})
{
    const std::size_t bits = kOfdmOverheadBits + 8 * f.bytes;
    const auto ndbps = static_cast<std::size_t>(f.rate.data_bits_per_symbol);
    auto symbols = static_cast<SimTime>((bits + ndbps - 1) / ndbps);
    if (f.stc && f.stc->code_rate < 1.0)
        symbols = static_cast<SimTime>(std::ceil(static_cast<double>(symbols) / f.stc->code_rate - 1e-9));
    return tm.preamble + tm.symbol * symbols;
}

// Instantaneous channel seen by one transaction (block fading): the
// source-AP link, source-to-station and station-to-AP links, and unit
// variance R-DSTC weights per station.
struct TransactionChannel {
    double direct_snr = 0.0;
    std::vector<double> hop1_snr;
    std::vector<cdouble> hop2_gain;
    std::vector<std::array<cdouble, 4>> weights;
};

inline TransactionChannel sample_transaction_channel(const Topology& topology, StationId source,
                                                     const LinkBudget& budget, Rng& rng)
{
    TransactionChannel ch;
    const std::size_t n = topology.size();
    const Point src = topology.position(source);
    ch.direct_snr = std::norm(complex_gaussian(rng, mean_snr_between(src, topology.ap, budget)));
    ch.hop1_snr.assign(n, 0.0);
    ch.hop2_gain.assign(n, cdouble{});
    ch.weights.assign(n, {});
    for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<StationId>(j) == source)
            continue;
        const Point p = topology.stations[j];
        ch.hop1_snr[j] = std::norm(complex_gaussian(rng, mean_snr_between(src, p, budget)));
        ch.hop2_gain[j] = complex_gaussian(rng, mean_snr_between(p, topology.ap, budget));
        for (auto& w : ch.weights[j])
            w = complex_gaussian(rng, 1.0);
    }
    return ch;
}

// Views a full ChannelRealization from one source's perspective. Weight
// rows are taken per station when the matrix has one row per station.
inline TransactionChannel channel_for_source(const ChannelRealization& r, StationId source)
{
    TransactionChannel ch;
    const std::size_t n = r.station_count;
    ch.direct_snr = r.snr(source, kAccessPoint);
    ch.hop1_snr.assign(n, 0.0);
    ch.hop2_gain.assign(n, cdouble{});
    ch.weights.assign(n, {});
    const double scale = std::sqrt(static_cast<double>(std::max<std::size_t>(r.weights.cols(), 1)));
    for (std::size_t j = 0; j < n; ++j) {
        const auto id = static_cast<StationId>(j);
        if (id == source)
            continue;
        ch.hop1_snr[j] = r.snr(source, id);
        ch.hop2_gain[j] = r.gain(id, kAccessPoint);
        if (r.weights.rows() == n)
            for (std::size_t l = 0; l < std::min<std::size_t>(4, r.weights.cols()); ++l)
                ch.weights[j][l] = r.weights(j, l) * scale;
    }
    return ch;
}

// Error probability of a frame received at a given instantaneous SNR.
using FrameErrorFn = std::function<double(const Frame&, double)>;

// (code rate, length) pairs any exchange can ask the error model for.
inline std::vector<std::pair<CodeRate, std::size_t>> frame_error_curves(std::size_t pdu_bytes)
{
    std::vector<std::pair<CodeRate, std::size_t>> out;
    for (auto rate : {CodeRate::Half, CodeRate::TwoThirds, CodeRate::ThreeQuarters})
        for (std::size_t b : {pdu_bytes, kHtsBytes, kHrBytes})
            out.emplace_back(rate, b);
    for (std::size_t l = 0; l <= 4; ++l)
        if (kRtsBytes + l != kHrBytes)
            out.emplace_back(CodeRate::Half, kRtsBytes + l);
    return out;
}

inline FrameErrorFn coded_frame_errors(const CodedLinkModel& link)
{
    return [&link](const Frame& f, double snr) { return link.packet_error(f.rate, snr, f.checked_bytes()); };
}

enum class FailureReason { None, NoCts, NoRelay, DataLost, AckLost, Collision };

inline const char* failure_reason_name(FailureReason r)
{
    switch (r) {
    case FailureReason::None: return "ok";
    case FailureReason::NoCts: return "no_cts";
    case FailureReason::NoRelay: return "no_relay";
    case FailureReason::DataLost: return "data_lost";
    case FailureReason::AckLost: return "ack_lost";
    case FailureReason::Collision: return "collision";
    }
    return "?";
}

struct FrameRecord {
    SimTime start = 0;
    SimTime end = 0;
    FrameKind kind = FrameKind::Rts;
    std::vector<StationId> transmitters;
    StationId dst = kAccessPoint;
    int rate_mbps = 6;
    bool delivered = false;
    SimTime duration_field = 0;
};

struct TransactionOutcome {
    bool success = false;
    SimTime elapsed = 0;
    FailureReason reason = FailureReason::None;
    std::size_t relays_forwarding = 0;
    std::vector<FrameRecord> frames;
};

struct TransactionRequest {
    StationId source = 0;
    TxParams params;
    MacMode mode = MacMode::RtsOn;
    std::size_t pdu_bytes = 1500;
    MacTiming timing;
};

namespace detail {

class Exchange {
public:
    Exchange(const TransactionRequest& req, const TransactionChannel& ch, const FrameErrorFn& errors, Rng& rng)
        : req_(req)
        , ch_(ch)
        , errors_(errors)
        , rng_(rng)
    {
    }

    SimTime now() const { return out_.elapsed; }

    Frame frame(FrameKind kind, std::size_t bytes, const Mcs& rate, std::optional<StcCode> stc = std::nullopt,
                StationId dst = kAccessPoint) const
    {
        Frame f;
        f.kind = kind;
        f.bytes = bytes;
        f.rate = rate;
        f.stc = stc;
        f.src = req_.source;
        f.dst = dst;
        return f;
    }

    SimTime airtime(const Frame& f) const { return frame_airtime(f, req_.timing); }

    // Transmits `f` from `tx`, with NAV covering `remaining` after it ends.
    void send(const Frame& f, std::vector<StationId> tx, SimTime remaining)
    {
        FrameRecord r;
        r.start = out_.elapsed;
        r.end = r.start + airtime(f);
        r.kind = f.kind;
        r.transmitters = std::move(tx);
        r.dst = f.dst;
        r.rate_mbps = f.rate.rate_mbps;
        r.duration_field = remaining;
        out_.frames.push_back(std::move(r));
        out_.elapsed = out_.frames.back().end;
    }

    void burst(FrameKind kind, std::vector<StationId> tx, SimTime length)
    {
        FrameRecord r;
        r.start = out_.elapsed;
        r.end = r.start + length;
        r.kind = kind;
        r.transmitters = std::move(tx);
        r.delivered = true;
        out_.frames.push_back(std::move(r));
        out_.elapsed += length;
    }

    void idle(SimTime t) { out_.elapsed += t; }
    void sifs() { out_.elapsed += req_.timing.sifs; }

    bool decode(const Frame& f, double snr)
    {
        const double p = errors_(f, snr);
        const bool ok = uniform01(rng_) >= p;
        if (!out_.frames.empty() && out_.frames.back().kind == f.kind)
            out_.frames.back().delivered = out_.frames.back().delivered || ok;
        return ok;
    }

    // Equivalent second-hop SNR for the given forwarders. dimension 0 means
    // R = I (DSTC); otherwise R-DSTC with L streams.
    double second_hop_snr(const std::vector<StationId>& relays, int dimension) const
    {
        if (dimension == 0) {
            double e = 0.0;
            for (auto j : relays)
                e += std::norm(ch_.hop2_gain[static_cast<std::size_t>(j)]);
            return e;
        }
        double e = 0.0;
        for (int l = 0; l < dimension; ++l) {
            cdouble acc = 0.0;
            for (auto j : relays)
                acc += ch_.hop2_gain[static_cast<std::size_t>(j)] * ch_.weights[static_cast<std::size_t>(j)][l];
            e += std::norm(acc);
        }
        return e / dimension;
    }

    double hop1(StationId j) const { return ch_.hop1_snr[static_cast<std::size_t>(j)]; }
    double direct() const { return ch_.direct_snr; }

    // Source waits for a reply of airtime `expected` that never comes.
    TransactionOutcome fail_waiting(SimTime expected, FailureReason why)
    {
        out_.elapsed += req_.timing.sifs + expected + req_.timing.guard;
        return finish(false, why);
    }

    // A reply was sent but the source could not decode it.
    TransactionOutcome fail_after_reply(FailureReason why)
    {
        out_.elapsed += req_.timing.guard;
        return finish(false, why);
    }

    TransactionOutcome finish(bool ok, FailureReason why)
    {
        out_.success = ok;
        out_.reason = ok ? FailureReason::None : why;
        return out_;
    }

    TransactionOutcome& out() { return out_; }

private:
    const TransactionRequest& req_;
    const TransactionChannel& ch_;
    const FrameErrorFn& errors_;
    Rng& rng_;
    TransactionOutcome out_;
};

inline SimTime sum_after(const std::vector<SimTime>& steps, std::size_t i, SimTime sifs)
{
    SimTime t = 0;
    for (std::size_t k = i + 1; k < steps.size(); ++k)
        t += sifs + steps[k];
    return t;
}

} // namespace detail

// Frames of a successful exchange in order, with the 1-slot DSTC bursts
// folded into a pseudo-step. Used for NAV durations and the closed-form
// success time.
struct ExchangePlan {
    std::vector<Frame> frames;
    std::vector<SimTime> steps; // airtime of each step (frame or burst group)
    std::vector<bool> sifs_before;

    SimTime total() const
    {
        SimTime t = 0;
        for (std::size_t i = 0; i < steps.size(); ++i)
            t += steps[i];
        return t;
    }
};

inline Frame make_frame(FrameKind kind, std::size_t bytes, const Mcs& rate, std::optional<StcCode> stc = std::nullopt)
{
    Frame f;
    f.kind = kind;
    f.bytes = bytes;
    f.rate = rate;
    f.stc = stc;
    return f;
}

inline int dstc_size(const TxParams& p)
{
    return static_cast<int>(p.relay_set.size());
}

// Airtime of a successful exchange, measured from channel grant.
inline SimTime success_time(const TxParams& p, MacMode mode, std::size_t pdu, const MacTiming& tm = {})
{
    const Mcs& r0 = base_rate();
    auto at = [&](FrameKind k, std::size_t b, const Mcs& r, std::optional<StcCode> s = std::nullopt) {
        return frame_airtime(make_frame(k, b, r, s), tm);
    };
    const SimTime ack = at(FrameKind::Ack, kAckBytes, r0);
    if (mode == MacMode::RtsOn) {
        const SimTime rts = at(FrameKind::Rts, kRtsBytes, r0);
        const SimTime cts = at(FrameKind::Cts, kCtsBytes, r0);
        switch (p.scheme) {
        case TxScheme::Direct: return rts + cts + at(FrameKind::DataS, pdu, p.r1) + ack + 3 * tm.sifs;
        case TxScheme::CoopMac:
            return rts + at(FrameKind::Hts, kHtsBytes, r0) + cts + at(FrameKind::DataS, pdu, p.r1) +
                   at(FrameKind::DataR, pdu, *p.r2) + ack + 5 * tm.sifs;
        case TxScheme::Dstc: {
            const int l = dstc_size(p);
            return at(FrameKind::Rts, kRtsBytes + l, r0) + 2 * l * tm.slot + cts + at(FrameKind::DataS, pdu, p.r1) +
                   at(FrameKind::DataR, pdu, *p.r2, p.stc()) + ack + 5 * tm.sifs;
        }
        case TxScheme::Rdstc:
            return rts + at(FrameKind::Hr, kHrBytes, p.r1) + at(FrameKind::Hts, kHtsBytes, *p.r2, p.stc()) + cts +
                   at(FrameKind::DataS, pdu, p.r1) + at(FrameKind::DataR, pdu, *p.r2, p.stc()) + ack + 6 * tm.sifs;
        }
    }
    switch (p.scheme) {
    case TxScheme::Direct: return at(FrameKind::DataS, pdu, p.r1) + ack + tm.sifs;
    case TxScheme::CoopMac:
        return at(FrameKind::DataS, pdu + kShimBytes, p.r1) + at(FrameKind::DataR, pdu, *p.r2) + ack + 2 * tm.sifs;
    case TxScheme::Dstc: {
        const int l = dstc_size(p);
        return at(FrameKind::DataS, pdu + kShimBytes + l, p.r1) + l * tm.slot + at(FrameKind::DataR, pdu, *p.r2, p.stc()) +
               ack + 2 * tm.sifs;
    }
    case TxScheme::Rdstc:
        return at(FrameKind::DataS, pdu + kShimBytes, p.r1) + at(FrameKind::DataR, pdu, *p.r2, p.stc()) + ack +
               2 * tm.sifs;
    }
    return 0;
}

// What a source sends before it can notice a collision, and how long it then
// waits before giving up.
struct CollisionProfile {
    SimTime burst = 0;
    SimTime timeout = 0;
    std::vector<FrameKind> kinds;
};

inline CollisionProfile collision_profile(const TxParams& p, MacMode mode, std::size_t pdu, const MacTiming& tm = {})
{
    const Mcs& r0 = base_rate();
    auto at = [&](FrameKind k, std::size_t b, const Mcs& r, std::optional<StcCode> s = std::nullopt) {
        return frame_airtime(make_frame(k, b, r, s), tm);
    };
    const SimTime ack = at(FrameKind::Ack, kAckBytes, r0);
    CollisionProfile c;
    if (mode == MacMode::RtsOn) {
        switch (p.scheme) {
        case TxScheme::Direct:
            c.burst = at(FrameKind::Rts, kRtsBytes, r0);
            c.timeout = tm.sifs + at(FrameKind::Cts, kCtsBytes, r0) + tm.guard;
            c.kinds = {FrameKind::Rts};
            break;
        case TxScheme::CoopMac:
            c.burst = at(FrameKind::Rts, kRtsBytes, r0);
            c.timeout = tm.sifs + at(FrameKind::Hts, kHtsBytes, r0) + tm.guard;
            c.kinds = {FrameKind::Rts};
            break;
        case TxScheme::Dstc:
            c.burst = at(FrameKind::Rts, kRtsBytes + dstc_size(p), r0);
            c.timeout = tm.sifs + dstc_size(p) * tm.slot + tm.guard;
            c.kinds = {FrameKind::Rts};
            break;
        case TxScheme::Rdstc:
            c.burst = at(FrameKind::Rts, kRtsBytes, r0) + tm.sifs + at(FrameKind::Hr, kHrBytes, p.r1);
            c.timeout = tm.sifs + at(FrameKind::Hts, kHtsBytes, *p.r2, p.stc()) + tm.guard;
            c.kinds = {FrameKind::Rts, FrameKind::Hr};
            break;
        }
        return c;
    }
    c.kinds = {FrameKind::DataS};
    switch (p.scheme) {
    case TxScheme::Direct:
        c.burst = at(FrameKind::DataS, pdu, p.r1);
        c.timeout = tm.sifs + ack + tm.guard;
        break;
    case TxScheme::CoopMac:
        c.burst = at(FrameKind::DataS, pdu + kShimBytes, p.r1);
        c.timeout = tm.sifs + at(FrameKind::DataR, pdu, *p.r2) + tm.sifs + ack + tm.guard;
        break;
    case TxScheme::Dstc:
        c.burst = at(FrameKind::DataS, pdu + kShimBytes + dstc_size(p), p.r1);
        c.timeout = tm.sifs + dstc_size(p) * tm.slot + at(FrameKind::DataR, pdu, *p.r2, p.stc()) + tm.sifs + ack +
                    tm.guard;
        break;
    case TxScheme::Rdstc:
        c.burst = at(FrameKind::DataS, pdu + kShimBytes, p.r1);
        c.timeout = tm.sifs + at(FrameKind::DataR, pdu, *p.r2, p.stc()) + tm.sifs + ack + tm.guard;
        break;
    }
    return c;
}

inline void validate_params(const TxParams& p)
{
    switch (p.scheme) {
    case TxScheme::Direct: return;
    case TxScheme::CoopMac:
        if (!p.r2 || !p.relay)
            throw Error("internal: CoopMAC parameters need r2 and a relay");
        return;
    case TxScheme::Dstc:
        if (!p.r2 || !p.stc_dimension || p.relay_set.empty() || dstc_size(p) != *p.stc_dimension)
            throw Error("internal: DSTC parameters need r2 and a relay set of size L");
        return;
    case TxScheme::Rdstc:
        if (!p.r2 || !p.stc_dimension)
            throw Error("internal: R-DSTC parameters need r2 and L");
        return;
    }
}

// One channel access by `req.source`, from channel grant to the end of the
// exchange or the source's timeout.
inline TransactionOutcome run_transaction(const TransactionRequest& req, const TransactionChannel& ch,
                                          const FrameErrorFn& errors, Rng& rng, std::size_t station_count)
{
    const TxParams& p = req.params;
    validate_params(p);
    detail::Exchange x(req, ch, errors, rng);
    const Mcs& r0 = base_rate();
    const MacTiming& tm = req.timing;
    const StationId s = req.source;
    const std::size_t pdu = req.pdu_bytes;
    const SimTime total = success_time(p, req.mode, pdu, tm);
    auto remaining = [&] { return std::max<SimTime>(total - x.now(), 0); };

    std::vector<StationId> others;
    for (std::size_t j = 0; j < station_count; ++j)
        if (static_cast<StationId>(j) != s)
            others.push_back(static_cast<StationId>(j));

    const Frame ack = x.frame(FrameKind::Ack, kAckBytes, r0, std::nullopt, s);
    const Frame cts = x.frame(FrameKind::Cts, kCtsBytes, r0, std::nullopt, s);

    auto finish_with_ack = [&](bool data_ok) {
        if (!data_ok)
            return x.fail_waiting(x.airtime(ack), FailureReason::DataLost);
        x.sifs();
        x.send(ack, {kAccessPoint}, 0);
        x.out().frames.back().transmitters = {kAccessPoint};
        if (!x.decode(ack, x.direct()))
            return x.fail_after_reply(FailureReason::AckLost);
        return x.finish(true, FailureReason::None);
    };

    auto cts_step = [&](bool ap_ready) -> bool {
        if (!ap_ready)
            return false;
        x.sifs();
        x.send(cts, {kAccessPoint}, remaining() - x.airtime(cts));
        return x.decode(cts, x.direct());
    };

    if (req.mode == MacMode::RtsOn) {
        switch (p.scheme) {
        case TxScheme::Direct: {
            const Frame rts = x.frame(FrameKind::Rts, kRtsBytes, r0);
            x.send(rts, {s}, remaining() - x.airtime(rts));
            const bool ap = x.decode(rts, x.direct());
            if (!ap)
                return x.fail_waiting(x.airtime(cts), FailureReason::NoCts);
            if (!cts_step(true))
                return x.fail_after_reply(FailureReason::NoCts);
            x.sifs();
            const Frame data = x.frame(FrameKind::DataS, pdu, p.r1);
            x.send(data, {s}, remaining() - x.airtime(data));
            return finish_with_ack(x.decode(data, x.direct()));
        }
        case TxScheme::CoopMac: {
            const StationId relay = *p.relay;
            const Frame rts = x.frame(FrameKind::Rts, kRtsBytes, r0);
            x.send(rts, {s}, remaining() - x.airtime(rts));
            const bool ap_rts = x.decode(rts, x.direct());
            const bool relay_rts = x.decode(rts, x.hop1(relay));
            const Frame hts = x.frame(FrameKind::Hts, kHtsBytes, r0);
            if (!relay_rts)
                return x.fail_waiting(x.airtime(hts), FailureReason::NoRelay);
            x.sifs();
            x.send(hts, {relay}, remaining() - x.airtime(hts));
            const bool ap_hts = x.decode(hts, std::norm(ch.hop2_gain[static_cast<std::size_t>(relay)]));
            if (!(ap_rts && ap_hts))
                return x.fail_waiting(x.airtime(cts), FailureReason::NoCts);
            if (!cts_step(true))
                return x.fail_after_reply(FailureReason::NoCts);
            x.sifs();
            const Frame ds = x.frame(FrameKind::DataS, pdu, p.r1, std::nullopt, relay);
            x.send(ds, {s}, remaining() - x.airtime(ds));
            const bool relay_ok = x.decode(ds, x.hop1(relay));
            x.sifs();
            const Frame dr = x.frame(FrameKind::DataR, pdu, *p.r2);
            bool ok = false;
            if (relay_ok) {
                x.send(dr, {relay}, remaining() - x.airtime(dr));
                ok = x.decode(dr, std::norm(ch.hop2_gain[static_cast<std::size_t>(relay)]));
                x.out().relays_forwarding = 1;
            } else {
                x.idle(x.airtime(dr));
            }
            return finish_with_ack(ok);
        }
        case TxScheme::Dstc: {
            const int l = dstc_size(p);
            const Frame rts = x.frame(FrameKind::Rts, kRtsBytes + static_cast<std::size_t>(l), r0);
            x.send(rts, {s}, remaining() - x.airtime(rts));
            const bool ap_rts = x.decode(rts, x.direct());
            std::vector<StationId> ready;
            for (auto j : p.relay_set)
                if (x.decode(rts, x.hop1(j)))
                    ready.push_back(j);
            x.sifs();
            if (ready.empty()) {
                x.idle(l * tm.slot);
                return x.fail_after_reply(FailureReason::NoRelay);
            }
            x.burst(FrameKind::RelayAck, ready, l * tm.slot);
            x.burst(FrameKind::Pilot, ready, l * tm.slot);
            if (!ap_rts)
                return x.fail_waiting(x.airtime(cts), FailureReason::NoCts);
            if (!cts_step(true))
                return x.fail_after_reply(FailureReason::NoCts);
            x.sifs();
            const Frame ds = x.frame(FrameKind::DataS, pdu, p.r1);
            x.send(ds, {s}, remaining() - x.airtime(ds));
            std::vector<StationId> fwd;
            for (auto j : ready)
                if (x.decode(ds, x.hop1(j)))
                    fwd.push_back(j);
            x.sifs();
            const Frame dr = x.frame(FrameKind::DataR, pdu, *p.r2, p.stc());
            bool ok = false;
            if (!fwd.empty()) {
                x.send(dr, fwd, remaining() - x.airtime(dr));
                ok = x.decode(dr, x.second_hop_snr(fwd, 0));
                x.out().relays_forwarding = fwd.size();
            } else {
                x.idle(x.airtime(dr));
            }
            return finish_with_ack(ok);
        }
        case TxScheme::Rdstc: {
            const Frame rts = x.frame(FrameKind::Rts, kRtsBytes, r0);
            x.send(rts, {s}, remaining() - x.airtime(rts));
            const bool ap_rts = x.decode(rts, x.direct());
            x.sifs();
            const Frame hr = x.frame(FrameKind::Hr, kHrBytes, p.r1);
            x.send(hr, {s}, remaining() - x.airtime(hr));
            std::vector<StationId> recruited;
            for (auto j : others)
                if (x.decode(hr, x.hop1(j)))
                    recruited.push_back(j);
            const Frame hts = x.frame(FrameKind::Hts, kHtsBytes, *p.r2, p.stc());
            if (recruited.empty())
                return x.fail_waiting(x.airtime(hts), FailureReason::NoRelay);
            x.sifs();
            x.send(hts, recruited, remaining() - x.airtime(hts));
            const bool ap_hts = x.decode(hts, x.second_hop_snr(recruited, *p.stc_dimension));
            if (!(ap_rts && ap_hts))
                return x.fail_waiting(x.airtime(cts), FailureReason::NoCts);
            if (!cts_step(true))
                return x.fail_after_reply(FailureReason::NoCts);
            x.sifs();
            const Frame ds = x.frame(FrameKind::DataS, pdu, p.r1);
            x.send(ds, {s}, remaining() - x.airtime(ds));
            std::vector<StationId> fwd;
            for (auto j : recruited)
                if (x.decode(ds, x.hop1(j)))
                    fwd.push_back(j);
            x.sifs();
            const Frame dr = x.frame(FrameKind::DataR, pdu, *p.r2, p.stc());
            bool ok = false;
            if (!fwd.empty()) {
                x.send(dr, fwd, remaining() - x.airtime(dr));
                ok = x.decode(dr, x.second_hop_snr(fwd, *p.stc_dimension));
                x.out().relays_forwarding = fwd.size();
            } else {
                x.idle(x.airtime(dr));
            }
            return finish_with_ack(ok);
        }
        }
        throw Error("internal: unknown scheme");
    }

    // RTS/CTS off: the source starts with the data frame; second-hop
    // parameters travel in a shim header.
    switch (p.scheme) {
    case TxScheme::Direct: {
        const Frame data = x.frame(FrameKind::DataS, pdu, p.r1);
        x.send(data, {s}, remaining() - x.airtime(data));
        return finish_with_ack(x.decode(data, x.direct()));
    }
    case TxScheme::CoopMac: {
        const StationId relay = *p.relay;
        Frame ds = x.frame(FrameKind::DataS, pdu + kShimBytes, p.r1, std::nullopt, relay);
        ds.error_bytes = pdu;
        x.send(ds, {s}, remaining() - x.airtime(ds));
        const bool relay_ok = x.decode(ds, x.hop1(relay));
        x.sifs();
        const Frame dr = x.frame(FrameKind::DataR, pdu, *p.r2);
        bool ok = false;
        if (relay_ok) {
            x.send(dr, {relay}, remaining() - x.airtime(dr));
            ok = x.decode(dr, std::norm(ch.hop2_gain[static_cast<std::size_t>(relay)]));
            x.out().relays_forwarding = 1;
        } else {
            x.idle(x.airtime(dr));
        }
        return finish_with_ack(ok);
    }
    case TxScheme::Dstc: {
        const int l = dstc_size(p);
        Frame ds = x.frame(FrameKind::DataS, pdu + kShimBytes + static_cast<std::size_t>(l), p.r1);
        ds.error_bytes = pdu;
        x.send(ds, {s}, remaining() - x.airtime(ds));
        std::vector<StationId> fwd;
        for (auto j : p.relay_set)
            if (x.decode(ds, x.hop1(j)))
                fwd.push_back(j);
        x.sifs();
        const Frame dr = x.frame(FrameKind::DataR, pdu, *p.r2, p.stc());
        bool ok = false;
        if (!fwd.empty()) {
            x.burst(FrameKind::Pilot, fwd, l * tm.slot);
            x.send(dr, fwd, remaining() - x.airtime(dr));
            ok = x.decode(dr, x.second_hop_snr(fwd, 0));
            x.out().relays_forwarding = fwd.size();
        } else {
            x.idle(l * tm.slot + x.airtime(dr));
        }
        return finish_with_ack(ok);
    }
    case TxScheme::Rdstc: {
        Frame ds = x.frame(FrameKind::DataS, pdu + kShimBytes, p.r1);
        ds.error_bytes = pdu;
        x.send(ds, {s}, remaining() - x.airtime(ds));
        std::vector<StationId> fwd;
        for (auto j : others)
            if (x.decode(ds, x.hop1(j)))
                fwd.push_back(j);
        x.sifs();
        const Frame dr = x.frame(FrameKind::DataR, pdu, *p.r2, p.stc());
        bool ok = false;
        if (!fwd.empty()) {
            x.send(dr, fwd, remaining() - x.airtime(dr));
            ok = x.decode(dr, x.second_hop_snr(fwd, *p.stc_dimension));
            x.out().relays_forwarding = fwd.size();
        } else {
            x.idle(x.airtime(dr));
        }
        return finish_with_ack(ok);
    }
    }
    throw Error("internal: unknown scheme");
}

} // namespace sticmac
