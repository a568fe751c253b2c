#pragma once

// Memoized coded packet error rate as a function of channel bit error rate,
// one curve per (code rate, packet length), on a log-spaced BER grid.

#include "sticmac/coding.hpp"
#include "sticmac/error.hpp"
#include "sticmac/random.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

namespace sticmac {

struct PerGrid {
    double ber_min = 1e-6;
    double ber_max = 0.5;
    int points_per_decade = 64;

    std::size_t size() const
    {
        const double decades = std::log10(ber_max) - std::log10(ber_min);
        return static_cast<std::size_t>(std::floor(decades * points_per_decade + 1e-9)) + 1;
    }

    double ber_at(std::size_t i) const
    {
        return std::pow(10.0, std::log10(ber_min) + static_cast<double>(i) / points_per_decade);
    }

    friend bool operator==(const PerGrid&, const PerGrid&) = default;
};

// Pool-adjacent-violators: weighted least-squares nondecreasing fit.
inline std::vector<double> isotonic_nondecreasing(const std::vector<double>& y, const std::vector<double>& w)
{
    struct Block {
        double value, weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], std::max(w[i], 1e-12), 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
            auto b = blocks.back();
            blocks.pop_back();
            auto& a = blocks.back();
            a.value = (a.value * a.weight + b.value * b.weight) / (a.weight + b.weight);
            a.weight += b.weight;
            a.count += b.count;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks)
        out.insert(out.end(), b.count, b.value);
    return out;
}

class PerCurve {
public:
    PerCurve(CodeRate rate, std::size_t pdu_bytes, PerGrid grid, std::vector<double> raw, std::vector<std::uint64_t> trials)
        : rate_(rate)
        , bytes_(pdu_bytes)
        , grid_(grid)
        , raw_(std::move(raw))
        , trials_(std::move(trials))
        , log_min_(std::log10(grid_.ber_min))
        , tail_order_(ConvCode{rate}.guaranteed_correctable() + 1)
    {
        std::vector<double> w(trials_.begin(), trials_.end());
        per_ = isotonic_nondecreasing(raw_, w);
    }

    CodeRate rate() const noexcept { return rate_; }
    std::size_t pdu_bytes() const noexcept { return bytes_; }
    const PerGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& raw() const noexcept { return raw_; }
    const std::vector<double>& values() const noexcept { return per_; }
    const std::vector<std::uint64_t>& trials() const noexcept { return trials_; }

    // Log-log interpolation between grid points. Below the grid the curve
    // falls as ber^(t+1), t being the guaranteed-correctable error weight.
    double at(double ber) const
    {
        if (!(ber > 0.0))
            return 0.0;
        const double pos = (std::log10(ber) - log_min_) * grid_.points_per_decade;
        if (pos <= 0.0)
            return per_.front() * std::pow(ber / grid_.ber_min, tail_order_);
        const std::size_t last = per_.size() - 1;
        if (pos >= static_cast<double>(last))
            return per_.back();
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(i);
        const double y0 = per_[i], y1 = per_[i + 1];
        if (y0 > 0.0 && y1 > 0.0)
            return std::pow(10.0, std::log10(y0) + f * (std::log10(y1) - std::log10(y0)));
        return y0 + f * (y1 - y0);
    }

private:
    CodeRate rate_;
    std::size_t bytes_;
    PerGrid grid_;
    std::vector<double> raw_;
    std::vector<std::uint64_t> trials_;
    std::vector<double> per_;
    double log_min_;
    int tail_order_;
};

// Simulates one curve point by point, from high BER downwards. Once three
// consecutive points are estimated at exactly 1 the remaining higher-BER
// points are set to 1 (the curve is nondecreasing in BER).
inline PerCurve build_per_curve(CodeRate rate, std::size_t pdu_bytes, const PerGrid& grid, std::uint64_t seed,
                                const AdaptiveTrials& rule = {})
{
    CodedPacketSimulator sim(rate, pdu_bytes);
    const std::size_t n = grid.size();
    std::vector<double> per(n, 1.0);
    std::vector<std::uint64_t> trials(n, 0);
    int saturated_run = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (saturated_run >= 3) {
            trials[i] = trials[i - 1];
            continue;
        }
        const double ber = grid.ber_at(i);
        Rng rng(derive_seed(seed, {stream::kPerCurve, static_cast<std::uint64_t>(rate), pdu_bytes, i}));
        std::uint64_t errors = 0, k = 0;
        while (k < rule.max_trials) {
            errors += sim.trial(ber, rng) ? 1 : 0;
            ++k;
            if (k >= rule.min_trials && k % rule.check_every == 0) {
                const double p = static_cast<double>(errors) / static_cast<double>(k);
                if (wilson_half_width(p, k) <= std::max(rule.relative_half_width * p, rule.absolute_half_width))
                    break;
            }
        }
        per[i] = static_cast<double>(errors) / static_cast<double>(k);
        trials[i] = k;
        saturated_run = errors == k ? saturated_run + 1 : 0;
    }
    return PerCurve(rate, pdu_bytes, grid, std::move(per), std::move(trials));
}

// Thread-safe lazy cache of PER curves with optional JSON persistence.
class PerTable {
public:
    static constexpr int kFormatVersion = 1;

    explicit PerTable(std::uint64_t seed = 20240601, PerGrid grid = {}, AdaptiveTrials rule = {})
        : seed_(seed)
        , grid_(grid)
        , rule_(rule)
    {
    }

    PerTable(const PerTable&) = delete;
    PerTable& operator=(const PerTable&) = delete;

    const PerGrid& grid() const noexcept { return grid_; }
    std::uint64_t seed() const noexcept { return seed_; }

    const PerCurve& curve(CodeRate rate, std::size_t pdu_bytes) const
    {
        const Key key{rate, pdu_bytes};
        {
            std::shared_lock lock(mutex_);
            if (auto it = curves_.find(key); it != curves_.end())
                return *it->second;
        }
        std::unique_lock lock(mutex_);
        if (auto it = curves_.find(key); it != curves_.end())
            return *it->second;
        auto built = std::make_unique<PerCurve>(build_per_curve(rate, pdu_bytes, grid_, seed_, rule_));
        const PerCurve& ref = *built;
        curves_.emplace(key, std::move(built));
        dirty_ = true;
        return ref;
    }

    double per(CodeRate rate, std::size_t pdu_bytes, double ber) const { return curve(rate, pdu_bytes).at(ber); }

    std::size_t curve_count() const
    {
        std::shared_lock lock(mutex_);
        return curves_.size();
    }

    bool dirty() const
    {
        std::shared_lock lock(mutex_);
        return dirty_;
    }

    nlohmann::json to_json() const
    {
        std::shared_lock lock(mutex_);
        nlohmann::json j;
        j["format"] = "sticmac-per-cache";
        j["version"] = kFormatVersion;
        j["code"] = {{"constraint_length", kConstraintLength}, {"generators_octal", {"133", "171"}},
                     {"decoder", "hard-decision viterbi, full traceback"}};
        j["grid"] = {{"ber_min", grid_.ber_min}, {"ber_max", grid_.ber_max},
                     {"points_per_decade", grid_.points_per_decade}, {"points", grid_.size()}};
        j["seed"] = seed_;
        j["curves"] = nlohmann::json::array();
        for (const auto& [key, c] : curves_) {
            j["curves"].push_back({{"code_rate", code_rate_name(key.first)},
                                   {"pdu_bytes", key.second},
                                   {"per", c->raw()},
                                   {"trials", c->trials()}});
        }
        return j;
    }

    void save(const std::filesystem::path& path) const
    {
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp);
            if (!out)
                throw Error("cannot write PER cache " + path.string());
            out << to_json().dump() << '\n';
        }
        std::filesystem::rename(tmp, path);
        std::unique_lock lock(mutex_);
        dirty_ = false;
    }

    // Merges curves from a cache file. Files with a different grid, seed or
    // format version are ignored and false is returned.
    bool load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            return false;
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception&) {
            return false;
        }
        if (j.value("format", "") != "sticmac-per-cache" || j.value("version", 0) != kFormatVersion)
            return false;
        PerGrid g;
        g.ber_min = j["grid"]["ber_min"].get<double>();
        g.ber_max = j["grid"]["ber_max"].get<double>();
        g.points_per_decade = j["grid"]["points_per_decade"].get<int>();
        if (!(g == grid_) || j["seed"].get<std::uint64_t>() != seed_)
            return false;
        std::unique_lock lock(mutex_);
        for (const auto& c : j["curves"]) {
            const auto rate = parse_rate(c["code_rate"].get<std::string>());
            const auto bytes = c["pdu_bytes"].get<std::size_t>();
            auto per = c["per"].get<std::vector<double>>();
            auto trials = c["trials"].get<std::vector<std::uint64_t>>();
            if (per.size() != grid_.size() || trials.size() != per.size())
                continue;
            curves_.insert_or_assign(Key{rate, bytes},
                                     std::make_unique<PerCurve>(rate, bytes, grid_, std::move(per), std::move(trials)));
        }
        return true;
    }

    static CodeRate parse_rate(const std::string& s)
    {
        if (s == "1/2")
            return CodeRate::Half;
        if (s == "2/3")
            return CodeRate::TwoThirds;
        if (s == "3/4")
            return CodeRate::ThreeQuarters;
        throw Error("unknown code rate '" + s + "'");
    }

private:
    using Key = std::pair<CodeRate, std::size_t>;

    std::uint64_t seed_;
    PerGrid grid_;
    AdaptiveTrials rule_;
    mutable std::shared_mutex mutex_;
    mutable std::map<Key, std::unique_ptr<PerCurve>> curves_;
    mutable bool dirty_ = false;
};

} // namespace sticmac
