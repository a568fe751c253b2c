#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

namespace sticmac {

inline constexpr double kZ95 = 1.959963984540054;

// Monte-Carlo packet error rate with a 95% confidence half-width.
struct PerEstimate {
    double per = 0.0;
    std::uint64_t trials = 0;
    double half_width_95 = 1.0;

    double upper() const { return std::min(1.0, per + half_width_95); }
    double lower() const { return std::max(0.0, per - half_width_95); }
};

// Wilson score half-width for a Bernoulli proportion; stays meaningful at p = 0.
inline double wilson_half_width(double p, std::uint64_t n, double z = kZ95)
{
    if (n == 0)
        return 1.0;
    const double nn = static_cast<double>(n);
    const double z2 = z * z;
    return z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / (1.0 + z2 / nn);
}

// Streaming mean/variance (Welford).
class RunningStats {
public:
    void add(double x)
    {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    std::uint64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_error() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Estimate from per-trial failure probabilities in [0, 1]. Uses the sample
// standard error, floored by the Wilson width so an all-zero sample is not
// reported as exact.
inline PerEstimate estimate_from(const RunningStats& s)
{
    PerEstimate e;
    e.per = s.mean();
    e.trials = s.count();
    const double normal = kZ95 * s.std_error();
    const double floor = wilson_half_width(std::clamp(e.per, 0.0, 1.0), e.trials) * (e.per <= 0.0 ? 1.0 : 0.0);
    e.half_width_95 = std::max(normal, floor);
    return e;
}

struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;
    std::size_t samples = 0;
};

// Two-sided Student-t confidence interval on the mean of independent runs.
inline MeanCi mean_confidence(std::span<const double> xs, double level = 0.90)
{
    MeanCi out;
    out.samples = xs.size();
    if (xs.empty())
        return out;
    RunningStats s;
    for (double x : xs)
        s.add(x);
    out.mean = s.mean();
    if (xs.size() < 2)
        return out;
    boost::math::students_t dist(static_cast<double>(xs.size() - 1));
    const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
    out.half_width = t * s.std_error();
    return out;
}

} // namespace sticmac
