#pragma once

// Contention engine for one cell where every station hears every other.
// Backoff counts down in slots while the medium is idle; stations whose
// counters expire in the same slot collide.

#include "sticmac/mac.hpp"
#include "sticmac/mobility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

namespace sticmac {

struct DcfConfig {
    int cw_min = 15;
    int cw_max = 1023;
    int retry_limit = 7;
    std::size_t pdu_bytes = 1500;
    MacMode mode = MacMode::RtsOn;
    MacTiming timing;
    double duration_s = 10.0;
    bool saturated = true;
    double arrival_rate_pps = 0.0;    // per active station, when not saturated
    double epoch_s = 0.0;             // parameter refresh interval; 0 means never
    double mobility_tick_s = 0.01;
    bool record_tx_log = false;
};

inline SimTime eifs(const MacTiming& tm)
{
    return tm.sifs + frame_airtime(make_frame(FrameKind::Ack, kAckBytes, base_rate()), tm) + tm.difs;
}

// One transmitter radiating for `duration` µs.
struct TxLogEntry {
    Point position;
    SimTime duration = 0;
};

struct MacMetrics {
    SimTime duration = 0;
    std::vector<double> delivered_bits;
    std::vector<std::size_t> delivered_packets;
    std::vector<std::size_t> dropped;
    std::vector<std::size_t> offered;
    std::size_t attempts = 0;
    std::size_t collisions = 0;
    std::size_t failures = 0;
    std::vector<double> delay_us;
    std::array<SimTime, 9> airtime_by_kind{};
    SimTime busy_time = 0;
    std::vector<TxLogEntry> tx_log;

    double total_delivered_bits() const
    {
        double s = 0.0;
        for (double b : delivered_bits)
            s += b;
        return s;
    }

    double throughput_mbps() const
    {
        return duration > 0 ? total_delivered_bits() / static_cast<double>(duration) : 0.0;
    }

    double station_throughput_mbps(StationId id) const
    {
        return duration > 0 ? delivered_bits[static_cast<std::size_t>(id)] / static_cast<double>(duration) : 0.0;
    }

    double mean_delay_us() const
    {
        if (delay_us.empty())
            return 0.0;
        double s = 0.0;
        for (double d : delay_us)
            s += d;
        return s / static_cast<double>(delay_us.size());
    }
};

// Supplies per-station parameters for the current positions. Called at the
// start and at every epoch boundary.
using ParamProvider = std::function<std::vector<TxParams>(double t_s, const Topology&)>;

// Returns the backoff draw in [0, cw] for a station.
using BackoffSource = std::function<int(StationId, int cw)>;

struct DcfInputs {
    std::vector<Point> initial_positions;
    Point ap{};
    std::vector<bool> active; // empty means all stations contend
    ParamProvider params;
    FrameErrorFn frame_errors;
    LinkBudget budget;
    std::optional<MobilityConfig> mobility;
    BackoffSource backoff;
    std::ostream* trace = nullptr;
};

class DcfEngine {
public:
    DcfEngine(DcfInputs in, DcfConfig cfg, std::uint64_t seed)
        : in_(std::move(in))
        , cfg_(cfg)
        , seed_(seed)
        , channel_rng_(make_rng(seed, {stream::kChannel}))
        , decode_rng_(make_rng(seed, {stream::kDecode}))
    {
        const std::size_t n = in_.initial_positions.size();
        if (n == 0)
            throw ValidationError("stations", "at least one station is required");
        if (!in_.params)
            throw Error("internal: no parameter provider");
        if (!in_.frame_errors)
            throw Error("internal: no frame error model");
        if (in_.active.empty())
            in_.active.assign(n, true);
        if (in_.active.size() != n)
            throw ValidationError("active", "active mask size must match the station count");
        if (!cfg_.saturated && !(cfg_.arrival_rate_pps > 0.0))
            throw ValidationError("arrival_rate", "arrival rate must be positive for unsaturated traffic");
        if (!(cfg_.duration_s > 0.0))
            throw ValidationError("duration", "duration must be positive");
        if (!(cfg_.mobility_tick_s >= 1e-6))
            throw ValidationError("mobility_tick", "mobility tick must be at least 1 us");
        topology_.stations = in_.initial_positions;
        topology_.ap = in_.ap;
        if (in_.mobility)
            field_.emplace(in_.initial_positions, *in_.mobility, seed);
        st_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            st_[i].backoff_rng = make_rng(seed, {stream::kBackoff, i});
            st_[i].traffic_rng = make_rng(seed, {stream::kTraffic, i});
            st_[i].cw = cfg_.cw_min;
        }
        m_.delivered_bits.assign(n, 0.0);
        m_.delivered_packets.assign(n, 0);
        m_.dropped.assign(n, 0);
        m_.offered.assign(n, 0);
    }

    MacMetrics run()
    {
        const SimTime end = static_cast<SimTime>(std::llround(cfg_.duration_s * 1e6));
        m_.duration = end;
        refresh_params(0.0);
        const SimTime epoch = cfg_.epoch_s > 0 ? static_cast<SimTime>(std::llround(cfg_.epoch_s * 1e6)) : 0;
        SimTime next_epoch = epoch > 0 ? epoch : std::numeric_limits<SimTime>::max();

        for (std::size_t i = 0; i < st_.size(); ++i) {
            if (!in_.active[i])
                continue;
            if (cfg_.saturated) {
                push_packet(i, 0);
            } else {
                st_[i].next_arrival = draw_interarrival(i);
            }
        }
        if (in_.trace)
            *in_.trace << "t_start,t_end,kind,src,dst,rate,outcome\n";

        SimTime now = 0;
        while (true) {
            // Earliest contention winner.
            SimTime grant = std::numeric_limits<SimTime>::max();
            for (std::size_t i = 0; i < st_.size(); ++i)
                if (st_[i].has_packet())
                    grant = std::min(grant, tx_time(i));
            SimTime arrival = std::numeric_limits<SimTime>::max();
            std::size_t who = 0;
            if (!cfg_.saturated)
                for (std::size_t i = 0; i < st_.size(); ++i)
                    if (in_.active[i] && st_[i].next_arrival < arrival) {
                        arrival = st_[i].next_arrival;
                        who = i;
                    }
            if (arrival <= grant && arrival < end) {
                handle_arrival(who, arrival, now);
                continue;
            }
            if (grant >= end)
                break;
            while (next_epoch <= grant) {
                advance_mobility(next_epoch);
                refresh_params(static_cast<double>(next_epoch) * 1e-6);
                next_epoch += epoch;
            }
            advance_mobility(grant);

            std::vector<std::size_t> winners;
            for (std::size_t i = 0; i < st_.size(); ++i)
                if (st_[i].has_packet() && tx_time(i) == grant)
                    winners.push_back(i);
            freeze_others(grant, winners);
            now = winners.size() == 1 ? transact(winners.front(), grant, end) : collide(winners, grant, end);
        }
        return std::move(m_);
    }

    const Topology& topology() const noexcept { return topology_; }

private:
    struct Station {
        Rng backoff_rng;
        Rng traffic_rng;
        int cw = 15;
        int retries = 0;
        int backoff = -1;    // slots left; -1 means not drawn
        SimTime idle_from = 0; // countdown origin (IFS already elapsed)
        SimTime nav_until = 0;
        std::deque<SimTime> queue; // arrival times; front is head of line
        SimTime hol_since = 0;
        SimTime next_arrival = std::numeric_limits<SimTime>::max();

        bool has_packet() const { return !queue.empty(); }
    };

    SimTime tx_time(std::size_t i) const
    {
        const auto& s = st_[i];
        return std::max(s.idle_from, s.nav_until) + cfg_.timing.slot * s.backoff;
    }

    int draw_backoff(std::size_t i)
    {
        auto& s = st_[i];
        if (in_.backoff)
            return std::clamp(in_.backoff(static_cast<StationId>(i), s.cw), 0, s.cw);
        return std::uniform_int_distribution<int>(0, s.cw)(s.backoff_rng);
    }

    SimTime draw_interarrival(std::size_t i)
    {
        auto& s = st_[i];
        const double gap = std::exponential_distribution<double>(cfg_.arrival_rate_pps)(s.traffic_rng);
        const SimTime base = s.next_arrival == std::numeric_limits<SimTime>::max() ? 0 : s.next_arrival;
        return base + std::max<SimTime>(1, static_cast<SimTime>(std::llround(gap * 1e6)));
    }

    void push_packet(std::size_t i, SimTime t)
    {
        auto& s = st_[i];
        const bool was_empty = s.queue.empty();
        s.queue.push_back(t);
        ++m_.offered[i];
        if (was_empty) {
            s.hol_since = t;
            if (s.backoff < 0)
                s.backoff = draw_backoff(i);
        }
    }

    void handle_arrival(std::size_t i, SimTime t, SimTime medium_free)
    {
        auto& s = st_[i];
        const bool was_empty = s.queue.empty();
        push_packet(i, t);
        if (was_empty)
            s.idle_from = std::max(s.idle_from, std::max(t, medium_free) + cfg_.timing.difs);
        s.next_arrival = draw_interarrival(i);
    }

    void freeze_others(SimTime grant, const std::vector<std::size_t>& winners)
    {
        for (std::size_t i = 0; i < st_.size(); ++i) {
            auto& s = st_[i];
            if (!s.has_packet() || std::find(winners.begin(), winners.end(), i) != winners.end())
                continue;
            const SimTime origin = std::max(s.idle_from, s.nav_until);
            if (grant > origin) {
                const auto slots = static_cast<int>((grant - origin) / cfg_.timing.slot);
                s.backoff = std::max(0, s.backoff - slots);
            }
        }
    }

    // Whole ticks only, so positions at a given time never depend on when
    // they were queried.
    void advance_mobility(SimTime t)
    {
        if (!field_)
            return;
        const auto tick = static_cast<SimTime>(std::llround(cfg_.mobility_tick_s * 1e6));
        const SimTime target = t / tick;
        if (target <= ticks_)
            return;
        while (ticks_ < target) {
            ++ticks_;
            field_->advance_to(static_cast<double>(ticks_ * tick) * 1e-6);
        }
        topology_.stations = field_->positions();
    }

    void refresh_params(double t_s)
    {
        params_ = in_.params(t_s, topology_);
        if (params_.size() != st_.size())
            throw Error("internal: parameter provider returned the wrong station count");
    }

    Point where(StationId id) const { return id == kAccessPoint ? topology_.ap : topology_.position(id); }

    void account(const FrameRecord& f)
    {
        const SimTime d = f.end - f.start;
        m_.airtime_by_kind[static_cast<std::size_t>(f.kind)] += d;
        if (cfg_.record_tx_log)
            for (auto id : f.transmitters)
                m_.tx_log.push_back({where(id), d});
        if (in_.trace) {
            *in_.trace << f.start << ',' << f.end << ',' << frame_kind_name(f.kind) << ',';
            for (std::size_t k = 0; k < f.transmitters.size(); ++k)
                *in_.trace << (k ? ";" : "") << f.transmitters[k];
            *in_.trace << ',' << f.dst << ',' << f.rate_mbps << ',' << (f.delivered ? "ok" : "lost") << '\n';
        }
    }

    void retry_or_drop(std::size_t i, SimTime t)
    {
        auto& s = st_[i];
        ++s.retries;
        if (s.retries > cfg_.retry_limit) {
            ++m_.dropped[i];
            next_packet(i, t);
        } else {
            s.cw = std::min(2 * s.cw + 1, cfg_.cw_max);
        }
        s.backoff = draw_backoff(i);
    }

    void next_packet(std::size_t i, SimTime t)
    {
        auto& s = st_[i];
        s.queue.pop_front();
        s.retries = 0;
        s.cw = cfg_.cw_min;
        if (cfg_.saturated)
            s.queue.push_back(t), ++m_.offered[i];
        if (!s.queue.empty())
            s.hol_since = std::max(s.queue.front(), t);
    }

    SimTime transact(std::size_t i, SimTime grant, SimTime end)
    {
        ++m_.attempts;
        TransactionRequest req;
        req.source = static_cast<StationId>(i);
        req.params = params_[i];
        req.mode = cfg_.mode;
        req.pdu_bytes = cfg_.pdu_bytes;
        req.timing = cfg_.timing;
        const TransactionChannel ch =
            sample_transaction_channel(topology_, req.source, in_.budget, channel_rng_);
        TransactionOutcome out = run_transaction(req, ch, in_.frame_errors, decode_rng_, st_.size());
        const SimTime finish = grant + out.elapsed;
        for (auto& f : out.frames) {
            f.start += grant;
            f.end += grant;
            account(f);
            m_.busy_time += f.end - f.start;
        }
        auto& s = st_[i];
        if (out.success) {
            if (finish <= end) {
                m_.delivered_bits[i] += 8.0 * static_cast<double>(cfg_.pdu_bytes);
                ++m_.delivered_packets[i];
                m_.delay_us.push_back(static_cast<double>(finish - s.hol_since));
            }
            next_packet(i, finish);
            s.backoff = draw_backoff(i);
        } else {
            ++m_.failures;
            retry_or_drop(i, finish);
        }
        // Every other station deferred on the NAV carried by the exchange.
        for (std::size_t k = 0; k < st_.size(); ++k) {
            if (k != i)
                st_[k].nav_until = std::max(st_[k].nav_until, finish);
            st_[k].idle_from = std::max(st_[k].idle_from, finish + cfg_.timing.difs);
        }
        s.idle_from = finish + cfg_.timing.difs;
        return finish;
    }

    SimTime collide(const std::vector<std::size_t>& winners, SimTime grant, SimTime end)
    {
        ++m_.collisions;
        m_.attempts += winners.size();
        SimTime busy_end = grant;
        std::vector<SimTime> ready(winners.size());
        for (std::size_t w = 0; w < winners.size(); ++w) {
            const std::size_t i = winners[w];
            const CollisionProfile c = collision_profile(params_[i], cfg_.mode, cfg_.pdu_bytes, cfg_.timing);
            busy_end = std::max(busy_end, grant + c.burst);
            ready[w] = grant + c.burst + c.timeout;
            SimTime t = grant;
            for (std::size_t k = 0; k < c.kinds.size(); ++k) {
                FrameRecord f;
                f.kind = c.kinds[k];
                f.start = t;
                f.transmitters = {static_cast<StationId>(i)};
                const TxParams& p = params_[i];
                std::size_t bytes = 0;
                Mcs rate = base_rate();
                switch (f.kind) {
                case FrameKind::Rts: bytes = kRtsBytes + (p.scheme == TxScheme::Dstc ? p.relay_set.size() : 0); break;
                case FrameKind::Hr: bytes = kHrBytes, rate = p.r1; break;
                default:
                    bytes = cfg_.pdu_bytes + kShimBytes + (p.scheme == TxScheme::Dstc ? p.relay_set.size() : 0);
                    rate = p.r1;
                    break;
                }
                f.end = t + frame_airtime(make_frame(f.kind, bytes, rate), cfg_.timing);
                f.rate_mbps = rate.rate_mbps;
                account(f);
                t = f.end + cfg_.timing.sifs;
            }
        }
        m_.busy_time += busy_end - grant;
        for (std::size_t k = 0; k < st_.size(); ++k) {
            st_[k].nav_until = std::max(st_[k].nav_until, busy_end);
            st_[k].idle_from = std::max(st_[k].idle_from, busy_end + eifs(cfg_.timing));
        }
        for (std::size_t w = 0; w < winners.size(); ++w) {
            const std::size_t i = winners[w];
            ++m_.failures;
            retry_or_drop(i, ready[w]);
            st_[i].idle_from = std::max(ready[w], busy_end) + cfg_.timing.difs;
        }
        (void)end;
        return busy_end;
    }

    DcfInputs in_;
    DcfConfig cfg_;
    std::uint64_t seed_;
    Rng channel_rng_;
    Rng decode_rng_;
    Topology topology_;
    std::optional<MobilityField> field_;
    SimTime ticks_ = 0;
    std::vector<Station> st_;
    std::vector<TxParams> params_;
    MacMetrics m_;
};

// Closed-form saturated throughput of one station with error-free links.
inline double single_station_throughput_mbps(const TxParams& p, const DcfConfig& cfg)
{
    const double cycle = static_cast<double>(cfg.timing.difs) +
                         0.5 * static_cast<double>(cfg.cw_min) * static_cast<double>(cfg.timing.slot) +
                         static_cast<double>(success_time(p, cfg.mode, cfg.pdu_bytes, cfg.timing));
    return 8.0 * static_cast<double>(cfg.pdu_bytes) / cycle;
}

// Noise floor and transmit power implied by the link budget.
inline constexpr double kNoiseFloorDbm = -95.0;
inline constexpr double kInterferenceFloorDbm = -200.0;

inline double tx_power_dbm(const LinkBudget& b)
{
    return kNoiseFloorDbm + 10.0 * std::log10(b.edge_snr) + 10.0 * b.path_loss_exponent * std::log10(b.cell_radius_m);
}

inline double path_gain(double distance_m, const LinkBudget& b)
{
    return std::pow(std::max(distance_m, kMinDistanceM), -b.path_loss_exponent);
}

// Time-averaged received power at points `d` metres from the AP, averaged
// over `directions` equally spaced bearings. Values in dBm.
inline std::vector<double> interference_probe(const MacMetrics& m, const std::vector<double>& distances,
                                              const LinkBudget& budget, Point ap = {}, int directions = 16)
{
    std::vector<double> out;
    const double ptx_mw = std::pow(10.0, tx_power_dbm(budget) / 10.0);
    for (double d : distances) {
        double acc = 0.0;
        for (int k = 0; k < directions; ++k) {
            const double a = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.5) / directions;
            const Point probe{ap.x + d * std::cos(a), ap.y + d * std::sin(a)};
            for (const auto& e : m.tx_log)
                acc += path_gain(distance(e.position, probe), budget) * static_cast<double>(e.duration);
        }
        const double mw = m.duration > 0 ? ptx_mw * acc / (directions * static_cast<double>(m.duration)) : 0.0;
        out.push_back(mw > 0.0 ? 10.0 * std::log10(mw) : kInterferenceFloorDbm);
    }
    return out;
}

} // namespace sticmac
