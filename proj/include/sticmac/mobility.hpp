#pragma once

// Random walk with reflection on a disk centred on the AP.

#include "sticmac/error.hpp"
#include "sticmac/random.hpp"
#include "sticmac/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <vector>

namespace sticmac {

struct MobilityConfig {
    double v_min = 1.0;
    double v_max = 2.0;
    double t_min = 2.0;
    double t_max = 5.0;
    double dwell = 1.0;
    double cell_radius = 100.0;

    void validate() const
    {
        if (!(v_min > 0.0))
            throw ValidationError("v_min", "v_min must be positive");
        if (!(v_max >= v_min))
            throw ValidationError("v_max", "v_max must be >= v_min");
        if (!(t_min > 0.0))
            throw ValidationError("t_min", "t_min must be positive");
        if (!(t_max >= t_min))
            throw ValidationError("t_max", "t_max must be >= t_min");
        if (!(dwell >= 0.0))
            throw ValidationError("dwell", "dwell must be nonnegative");
        if (!(cell_radius > 0.0))
            throw ValidationError("cell_radius", "cell_radius must be positive");
    }
};

struct StationState {
    Point position;
    Point velocity;
    double leg_remaining = 0.0;
    bool dwelling = false;
    double dwell_remaining = 0.0;
};

inline std::vector<Point> init_positions(std::size_t count, double cell_radius, std::uint64_t seed)
{
    if (count == 0)
        throw ValidationError("stations", "at least one station is required");
    Rng rng = make_rng(seed, {stream::kPlacement});
    std::vector<Point> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(uniform_in_disk(rng, cell_radius));
    return out;
}

inline void start_leg(StationState& s, const MobilityConfig& cfg, Rng& rng)
{
    const double speed = cfg.v_min + (cfg.v_max - cfg.v_min) * uniform01(rng);
    const double dir = 2.0 * std::numbers::pi * uniform01(rng);
    s.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
    s.leg_remaining = cfg.t_min + (cfg.t_max - cfg.t_min) * uniform01(rng);
    s.dwelling = false;
    s.dwell_remaining = 0.0;
}

inline StationState initial_state(Point position, const MobilityConfig& cfg, Rng& rng)
{
    StationState s;
    s.position = position;
    start_leg(s, cfg, rng);
    return s;
}

// Straight-line motion for time tau inside the disk, mirroring the velocity
// about the tangent at each boundary hit.
inline void move_reflecting(StationState& s, double tau, double radius)
{
    for (int bounces = 0; tau > 0.0 && bounces < 10000; ++bounces) {
        const Point p = s.position, v = s.velocity;
        const double a = v.x * v.x + v.y * v.y;
        if (a == 0.0)
            return;
        const double b = 2.0 * (p.x * v.x + p.y * v.y);
        const double c = p.x * p.x + p.y * p.y - radius * radius;
        const double disc = std::max(b * b - 4.0 * a * c, 0.0);
        const double t_exit = std::max((-b + std::sqrt(disc)) / (2.0 * a), 0.0);
        if (t_exit >= tau) {
            s.position = {p.x + v.x * tau, p.y + v.y * tau};
            break;
        }
        Point hit{p.x + v.x * t_exit, p.y + v.y * t_exit};
        const double r = norm(hit);
        const Point n{hit.x / r, hit.y / r};
        hit = {n.x * radius, n.y * radius};
        const double vn = v.x * n.x + v.y * n.y;
        s.position = hit;
        s.velocity = {v.x - 2.0 * vn * n.x, v.y - 2.0 * vn * n.y};
        tau -= t_exit;
    }
    const double r = norm(s.position);
    if (r > radius)
        s.position = {s.position.x * radius / r, s.position.y * radius / r};
}

// Advances one station by dt seconds: walk, reflect, dwell, redraw.
inline void step(StationState& s, double dt, const MobilityConfig& cfg, Rng& rng)
{
    if (!(dt > 0.0))
        throw ValidationError("dt", "dt must be positive");
    while (dt > 0.0) {
        if (s.dwelling) {
            const double d = std::min(dt, s.dwell_remaining);
            s.dwell_remaining -= d;
            dt -= d;
            if (s.dwell_remaining <= 0.0)
                start_leg(s, cfg, rng);
            continue;
        }
        const double d = std::min(dt, s.leg_remaining);
        move_reflecting(s, d, cfg.cell_radius);
        s.leg_remaining -= d;
        dt -= d;
        if (s.leg_remaining <= 0.0) {
            if (cfg.dwell > 0.0) {
                s.dwelling = true;
                s.dwell_remaining = cfg.dwell;
                s.velocity = {};
            } else {
                start_leg(s, cfg, rng);
            }
        }
    }
}

// All stations of a cell, each with its own stream.
class MobilityField {
public:
    MobilityField(const std::vector<Point>& initial, const MobilityConfig& cfg, std::uint64_t seed)
        : cfg_(cfg)
    {
        cfg_.validate();
        for (std::size_t i = 0; i < initial.size(); ++i) {
            rngs_.push_back(make_rng(seed, {stream::kMobility, i}));
            states_.push_back(initial_state(initial[i], cfg_, rngs_.back()));
        }
    }

    double time() const noexcept { return time_; }
    const std::vector<StationState>& states() const noexcept { return states_; }

    void advance_to(double t)
    {
        if (t <= time_)
            return;
        const double dt = t - time_;
        for (std::size_t i = 0; i < states_.size(); ++i)
            step(states_[i], dt, cfg_, rngs_[i]);
        time_ = t;
    }

    std::vector<Point> positions() const
    {
        std::vector<Point> out;
        out.reserve(states_.size());
        for (const auto& s : states_)
            out.push_back(s.position);
        return out;
    }

private:
    MobilityConfig cfg_;
    std::vector<Rng> rngs_;
    std::vector<StationState> states_;
    double time_ = 0.0;
};

// Per-station (t, x, y) samples at a fixed interval.
inline void write_mobility_trace(std::ostream& out, const std::vector<Point>& initial, const MobilityConfig& cfg,
                                 std::uint64_t seed, double duration, double interval)
{
    MobilityField field(initial, cfg, seed);
    out << "t,station,x,y\n";
    for (double t = 0.0; t <= duration + 1e-9; t += interval) {
        field.advance_to(t);
        const auto pos = field.positions();
        for (std::size_t i = 0; i < pos.size(); ++i)
            out << t << ',' << i << ',' << pos[i].x << ',' << pos[i].y << '\n';
    }
}

} // namespace sticmac
