#pragma once

#include "sticmac/error.hpp"
#include "sticmac/random.hpp"
#include "sticmac/topology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace sticmac {

using cdouble = std::complex<double>;

enum class CodeRate { Half, TwoThirds, ThreeQuarters };

inline double code_rate_value(CodeRate r)
{
    switch (r) {
    case CodeRate::Half: return 0.5;
    case CodeRate::TwoThirds: return 2.0 / 3.0;
    case CodeRate::ThreeQuarters: return 0.75;
    }
    return 0.0;
}

inline const char* code_rate_name(CodeRate r)
{
    switch (r) {
    case CodeRate::Half: return "1/2";
    case CodeRate::TwoThirds: return "2/3";
    case CodeRate::ThreeQuarters: return "3/4";
    }
    return "?";
}

// One 802.11g OFDM rate.
struct Mcs {
    int rate_mbps = 6;
    int modulation_order = 2;
    CodeRate code_rate = CodeRate::Half;
    int data_bits_per_symbol = 24;
    int index = 0;

    friend bool operator==(const Mcs& a, const Mcs& b) { return a.rate_mbps == b.rate_mbps; }
};

inline constexpr std::size_t kRateCount = 8;

inline const std::array<Mcs, kRateCount>& rate_set()
{
    static const std::array<Mcs, kRateCount> rates{{
        {6, 2, CodeRate::Half, 24, 0},
        {9, 2, CodeRate::ThreeQuarters, 36, 1},
        {12, 4, CodeRate::Half, 48, 2},
        {18, 4, CodeRate::ThreeQuarters, 72, 3},
        {24, 16, CodeRate::Half, 96, 4},
        {36, 16, CodeRate::ThreeQuarters, 144, 5},
        {48, 64, CodeRate::TwoThirds, 192, 6},
        {54, 64, CodeRate::ThreeQuarters, 216, 7},
    }};
    return rates;
}

inline const Mcs& base_rate() { return rate_set().front(); }

inline const Mcs& mcs_for_rate(int rate_mbps)
{
    for (const auto& m : rate_set())
        if (m.rate_mbps == rate_mbps)
            return m;
    throw ValidationError("rate_mbps", "unsupported PHY rate " + std::to_string(rate_mbps) + " Mbps");
}

// Orthogonal space-time code used by DSTC and R-DSTC relays.
struct StcCode {
    int dimension = 2;
    double code_rate = 1.0;
    int block_length = 2;

    friend bool operator==(const StcCode& a, const StcCode& b) { return a.dimension == b.dimension; }
};

inline StcCode stc_for_dimension(int dimension)
{
    switch (dimension) {
    case 2: return {2, 1.0, 2};      // Alamouti
    case 3: return {3, 0.75, 4};
    case 4: return {4, 0.75, 4};
    default: throw ValidationError("stc_dimension", "STC dimension must be 2, 3 or 4");
    }
}

struct LinkBudget {
    double edge_snr = 1.4;          // linear Es/N0 at the cell radius
    double path_loss_exponent = 3.0;
    double cell_radius_m = 100.0;
};

inline constexpr double kMinDistanceM = 1.0;

// Gaussian tail probability.
inline double q_function(double x)
{
    return 0.5 * std::erfc(x / std::sqrt(2.0));
}

// Mean Es|h|^2/N0 at a given distance under log-distance path loss.
inline double snr_at(double distance_m, const LinkBudget& budget)
{
    if (!(distance_m > 0.0))
        throw Error("degenerate distance");
    return budget.edge_snr * std::pow(budget.cell_radius_m / distance_m, budget.path_loss_exponent);
}

inline double mean_snr_between(Point a, Point b, const LinkBudget& budget)
{
    return snr_at(std::max(distance(a, b), kMinDistanceM), budget);
}

inline double ser_square_qam(const Mcs& mcs, double snr)
{
    snr = std::max(snr, 0.0);
    if (mcs.modulation_order == 2)
        return q_function(std::sqrt(2.0 * snr));
    const double m = mcs.modulation_order;
    const double p_root = 2.0 * (1.0 - 1.0 / std::sqrt(m)) * q_function(std::sqrt(3.0 * snr / (m - 1.0)));
    return 1.0 - (1.0 - p_root) * (1.0 - p_root);
}

inline double ber_from_ser(const Mcs& mcs, double ser)
{
    if (mcs.modulation_order == 2)
        return ser;
    return ser / std::log2(static_cast<double>(mcs.modulation_order));
}

inline double bit_error_rate(const Mcs& mcs, double snr)
{
    return ber_from_ser(mcs, ser_square_qam(mcs, snr));
}

// Dense row-major complex matrix; only used for the small n x L weight matrix.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows)
        , cols_(cols)
        , data_(rows * cols)
    {
    }

    static ComplexMatrix identity(std::size_t n)
    {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    cdouble& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const cdouble& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<cdouble> data_;
};

// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline cdouble complex_gaussian(Rng& rng, double variance)
{
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

// Random R-DSTC weight matrix: n relays by L streams, entries CN(0, 1/L).
inline ComplexMatrix random_weight_matrix(std::size_t relays, int dimension, Rng& rng)
{
    ComplexMatrix r(relays, static_cast<std::size_t>(dimension));
    const double var = 1.0 / dimension;
    for (std::size_t i = 0; i < relays; ++i)
        for (std::size_t l = 0; l < r.cols(); ++l)
            r(i, l) = complex_gaussian(rng, var);
    return r;
}

// ||h R||: the norm of the equivalent channel seen by the STC decoder.
inline double rdstc_equivalent_gain(std::span<const cdouble> second_hop, const ComplexMatrix& weights)
{
    if (second_hop.empty() || weights.rows() != second_hop.size())
        throw Error("dimension mismatch between second-hop gains and weight matrix");
    double energy = 0.0;
    for (std::size_t l = 0; l < weights.cols(); ++l) {
        cdouble acc = 0.0;
        for (std::size_t j = 0; j < second_hop.size(); ++j)
            acc += second_hop[j] * weights(j, l);
        energy += std::norm(acc);
    }
    return std::sqrt(energy);
}

// Complex gains of every station pair and every station-AP link, normalized so
// that |h|^2 is the instantaneous Es|h|^2/N0. Reciprocal: gain(a,b) == gain(b,a).
struct ChannelRealization {
    std::size_t station_count = 0;
    std::vector<cdouble> gains; // (N+1) x (N+1), index N is the AP
    ComplexMatrix weights;

    std::size_t slot(StationId id) const
    {
        return id == kAccessPoint ? station_count : static_cast<std::size_t>(id);
    }

    cdouble gain(StationId a, StationId b) const
    {
        return gains[slot(a) * (station_count + 1) + slot(b)];
    }

    double snr(StationId a, StationId b) const { return std::norm(gain(a, b)); }
};

inline ChannelRealization sample_realization(const Topology& topology, const LinkBudget& budget,
                                             std::size_t relay_count, const StcCode& stc,
                                             std::uint64_t seed)
{
    Rng rng(seed);
    ChannelRealization out;
    out.station_count = topology.size();
    const std::size_t dim = out.station_count + 1;
    out.gains.assign(dim * dim, cdouble{});
    auto pos = [&](std::size_t i) {
        return i == out.station_count ? topology.ap : topology.stations[i];
    };
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = i + 1; j < dim; ++j) {
            const double mean = mean_snr_between(pos(i), pos(j), budget);
            const cdouble h = complex_gaussian(rng, mean);
            out.gains[i * dim + j] = h;
            out.gains[j * dim + i] = h;
        }
    }
    out.weights = random_weight_matrix(relay_count, stc.dimension, rng);
    return out;
}

} // namespace sticmac
