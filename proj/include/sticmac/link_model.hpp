#pragma once

// Packet error of a single link (or an STC second hop) at a given
// instantaneous SNR, and its Rayleigh average at a given mean SNR.

#include "sticmac/per_table.hpp"
#include "sticmac/phy.hpp"
#include "sticmac/topology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

namespace sticmac {

// Anything the end-to-end PER engine can ask for hop error probabilities.
template <class M>
concept HopErrorModel = requires(const M& m, StationId a, StationId b, const Mcs& mcs, double snr,
                                 std::span<const StationId> set) {
    { m.link_per(a, b, mcs, snr) } -> std::convertible_to<double>;
    { m.stc_per(set, mcs, snr) } -> std::convertible_to<double>;
};

// snr -> BER (square QAM / BPSK) -> coded PER from the memoized table. The
// data-length curve is resampled per rate on a fine dB grid for fast lookup.
class CodedLinkModel {
public:
    static constexpr double kDbMin = -30.0;
    static constexpr double kDbMax = 80.0;
    static constexpr double kDbStep = 0.01;

    CodedLinkModel(const PerTable& table, std::size_t pdu_bytes = 1500)
        : table_(&table)
        , pdu_bytes_(pdu_bytes)
    {
        for (std::size_t i = 0; i < curves_.size(); ++i)
            curves_[i] = &table.curve(static_cast<CodeRate>(i), pdu_bytes);
        const auto n = static_cast<std::size_t>(std::lround((kDbMax - kDbMin) / kDbStep)) + 1;
        for (const auto& mcs : rate_set()) {
            auto& row = fast_[static_cast<std::size_t>(mcs.index)];
            row.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                row[i] = data_per_exact(mcs, std::pow(10.0, (kDbMin + static_cast<double>(i) * kDbStep) / 10.0));
        }
    }

    std::size_t pdu_bytes() const noexcept { return pdu_bytes_; }
    const PerTable& table() const noexcept { return *table_; }

    double data_per_exact(const Mcs& mcs, double snr) const
    {
        return curves_[static_cast<std::size_t>(mcs.code_rate)]->at(bit_error_rate(mcs, snr));
    }

    double data_per(const Mcs& mcs, double snr) const
    {
        const auto& row = fast_[static_cast<std::size_t>(mcs.index)];
        if (!(snr > 0.0))
            return row.front();
        const double pos = (10.0 * std::log10(snr) - kDbMin) * (1.0 / kDbStep);
        if (pos <= 0.0)
            return row.front();
        if (pos >= static_cast<double>(row.size() - 1))
            return row.back();
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(i);
        return row[i] + f * (row[i + 1] - row[i]);
    }

    double packet_error(const Mcs& mcs, double snr, std::size_t bytes) const
    {
        if (bytes == pdu_bytes_)
            return data_per(mcs, snr);
        return table_->per(mcs.code_rate, bytes, bit_error_rate(mcs, snr));
    }

    double link_per(StationId, StationId, const Mcs& mcs, double snr) const { return data_per(mcs, snr); }
    double stc_per(std::span<const StationId>, const Mcs& mcs, double snr) const { return data_per(mcs, snr); }

private:
    const PerTable* table_;
    std::size_t pdu_bytes_;
    std::array<const PerCurve*, 3> curves_{};
    std::array<std::vector<double>, kRateCount> fast_;
};

static_assert(HopErrorModel<CodedLinkModel>);

// E[PER(mean * X)] with X ~ Exp(1), tabulated per rate over mean SNR in dB.
struct SnrGrid {
    double db_min = -20.0;
    double db_max = 70.0;
    double db_step = 0.1;
};

class FadingAveragedPer {
public:
    using Grid = SnrGrid;

    explicit FadingAveragedPer(const CodedLinkModel& link, Grid grid = Grid{})
        : grid_(grid)
    {
        const auto n = static_cast<std::size_t>(std::lround((grid.db_max - grid.db_min) / grid.db_step)) + 1;
        // Quadrature in s = ln X: density exp(s - e^s).
        constexpr double s_lo = -30.0, s_hi = 4.0, ds = 0.02;
        std::vector<double> xs, ws;
        for (double s = s_lo; s <= s_hi + 1e-12; s += ds) {
            const double x = std::exp(s);
            xs.push_back(x);
            ws.push_back(std::exp(s - x) * ds);
        }
        const double below = 1.0 - std::exp(-std::exp(s_lo));
        for (const auto& mcs : rate_set()) {
            auto& row = table_[static_cast<std::size_t>(mcs.index)];
            row.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double mean = std::pow(10.0, (grid.db_min + static_cast<double>(i) * grid.db_step) / 10.0);
                double acc = below * link.data_per(mcs, 0.0);
                for (std::size_t k = 0; k < xs.size(); ++k)
                    acc += ws[k] * link.data_per(mcs, mean * xs[k]);
                row[i] = std::clamp(acc, 0.0, 1.0);
            }
        }
    }

    double at(const Mcs& mcs, double mean_snr) const
    {
        const auto& row = table_[static_cast<std::size_t>(mcs.index)];
        if (!(mean_snr > 0.0))
            return row.front();
        const double pos = (10.0 * std::log10(mean_snr) - grid_.db_min) / grid_.db_step;
        if (pos <= 0.0)
            return row.front();
        if (pos >= static_cast<double>(row.size() - 1))
            return row.back();
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(i);
        return row[i] + f * (row[i + 1] - row[i]);
    }

    double at_distance(const Mcs& mcs, Point a, Point b, const LinkBudget& budget) const
    {
        return at(mcs, mean_snr_between(a, b, budget));
    }

private:
    Grid grid_;
    std::array<std::vector<double>, kRateCount> table_;
};

} // namespace sticmac
