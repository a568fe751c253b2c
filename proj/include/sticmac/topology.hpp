#pragma once

#include "sticmac/random.hpp"

#include <cmath>
#include <numbers>
#include <cstddef>
#include <vector>

namespace sticmac {

// Stations are numbered 0..N-1; the access point has its own id.
using StationId = int;
inline constexpr StationId kAccessPoint = -1;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double norm(Point p)
{
    return std::hypot(p.x, p.y);
}

// Station positions for one cell. The AP sits at the origin.
struct Topology {
    std::vector<Point> stations;
    Point ap{};

    std::size_t size() const noexcept { return stations.size(); }

    Point position(StationId id) const
    {
        return id == kAccessPoint ? ap : stations[static_cast<std::size_t>(id)];
    }

    double distance_between(StationId a, StationId b) const
    {
        return distance(position(a), position(b));
    }
};

inline Point uniform_in_disk(Rng& rng, double radius)
{
    const double r = radius * std::sqrt(uniform01(rng));
    const double a = 2.0 * std::numbers::pi * uniform01(rng);
    return {r * std::cos(a), r * std::sin(a)};
}

} // namespace sticmac
