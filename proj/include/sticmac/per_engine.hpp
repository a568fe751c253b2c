#pragma once

// End-to-end packet error rates for direct, single-relay, fixed-set DSTC and
// randomized DSTC transmission, averaged over Rayleigh fading, relay decode
// outcomes and the random weight matrix by sampling.
//
// All candidates evaluated on one RelayDraws object share the same fading,
// decode and weight samples, so comparisons between rates or relay sets are
// paired.

#include "sticmac/error.hpp"
#include "sticmac/link_model.hpp"
#include "sticmac/phy.hpp"
#include "sticmac/random.hpp"
#include "sticmac/stats.hpp"
#include "sticmac/topology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace sticmac {

inline constexpr int kMaxStcDimension = 4;

// Fading and decode samples for one source and a list of candidate relays.
class RelayDraws {
public:
    RelayDraws(const Topology& topology, StationId source, const LinkBudget& budget, std::size_t trials,
               std::uint64_t seed, std::vector<StationId> candidates)
        : source_(source)
        , candidates_(std::move(candidates))
        , trials_(trials)
    {
        if (trials == 0)
            throw ValidationError("trials", "at least one trial is required");
        const std::size_t n = candidates_.size();
        const Point src = topology.position(source);
        const double mean_direct = mean_snr_between(src, topology.ap, budget);
        std::vector<double> mean1(n), mean2(n);
        for (std::size_t j = 0; j < n; ++j) {
            const Point p = topology.position(candidates_[j]);
            mean1[j] = mean_snr_between(src, p, budget);
            mean2[j] = mean_snr_between(p, topology.ap, budget);
        }
        direct_.resize(trials);
        hop1_.resize(trials * n);
        hop2_.resize(trials * n);
        decode_u_.resize(trials * n);
        weights_.resize(trials * n * kMaxStcDimension);
        Rng direct_rng = make_rng(seed, {0});
        for (std::size_t t = 0; t < trials; ++t)
            direct_[t] = std::norm(complex_gaussian(direct_rng, mean_direct));
        // One stream per candidate station, so a station's samples do not
        // depend on which other stations are present.
        for (std::size_t j = 0; j < n; ++j) {
            Rng rng = make_rng(seed, {static_cast<std::uint64_t>(candidates_[j]) + 1});
            for (std::size_t t = 0; t < trials; ++t) {
                const std::size_t k = t * n + j;
                hop1_[k] = std::norm(complex_gaussian(rng, mean1[j]));
                hop2_[k] = complex_gaussian(rng, mean2[j]);
                decode_u_[k] = uniform01(rng);
                for (int l = 0; l < kMaxStcDimension; ++l)
                    weights_[k * kMaxStcDimension + l] = complex_gaussian(rng, 1.0);
            }
        }
    }

    // All stations other than the source are candidates.
    RelayDraws(const Topology& topology, StationId source, const LinkBudget& budget, std::size_t trials,
               std::uint64_t seed)
        : RelayDraws(topology, source, budget, trials, seed, others(topology, source))
    {
    }

    static std::vector<StationId> others(const Topology& topology, StationId source)
    {
        std::vector<StationId> out;
        for (std::size_t i = 0; i < topology.size(); ++i)
            if (static_cast<StationId>(i) != source)
                out.push_back(static_cast<StationId>(i));
        return out;
    }

    StationId source() const noexcept { return source_; }
    const std::vector<StationId>& candidates() const noexcept { return candidates_; }
    std::size_t trials() const noexcept { return trials_; }

    std::size_t index_of(StationId id) const
    {
        auto it = std::find(candidates_.begin(), candidates_.end(), id);
        if (it == candidates_.end())
            throw Error("station " + std::to_string(id) + " is not a relay candidate");
        return static_cast<std::size_t>(it - candidates_.begin());
    }

    double direct_snr(std::size_t t) const { return direct_[t]; }
    double hop1_snr(std::size_t t, std::size_t j) const { return hop1_[t * candidates_.size() + j]; }
    cdouble hop2_gain(std::size_t t, std::size_t j) const { return hop2_[t * candidates_.size() + j]; }
    double decode_u(std::size_t t, std::size_t j) const { return decode_u_[t * candidates_.size() + j]; }
    // Unit-variance weight; scale by 1/sqrt(L) for an R-DSTC weight matrix entry.
    cdouble weight(std::size_t t, std::size_t j, int l) const
    {
        return weights_[(t * candidates_.size() + j) * kMaxStcDimension + static_cast<std::size_t>(l)];
    }

private:
    StationId source_;
    std::vector<StationId> candidates_;
    std::size_t trials_;
    std::vector<double> direct_;
    std::vector<double> hop1_;
    std::vector<cdouble> hop2_;
    std::vector<double> decode_u_;
    std::vector<cdouble> weights_;
};

// Evaluates candidate transmission parameters on shared draws. Per-trial
// failure probabilities are averaged (conditional expectation over the final
// hop), which has lower variance than sampling the final decode.
template <HopErrorModel Model>
class E2eEvaluator {
public:
    E2eEvaluator(const RelayDraws& draws, const Model& model)
        : draws_(&draws)
        , model_(&model)
    {
    }

    const RelayDraws& draws() const noexcept { return *draws_; }

    PerEstimate direct(const Mcs& r) const
    {
        RunningStats s;
        for (std::size_t t = 0; t < draws_->trials(); ++t)
            s.add(model_->link_per(draws_->source(), kAccessPoint, r, draws_->direct_snr(t)));
        return estimate_from(s);
    }

    PerEstimate coop(StationId relay, const Mcs& r1, const Mcs& r2) const
    {
        const std::size_t j = draws_->index_of(relay);
        const StationId one[1] = {relay};
        RunningStats s;
        for (std::size_t t = 0; t < draws_->trials(); ++t) {
            const double p1 = model_->link_per(draws_->source(), relay, r1, draws_->hop1_snr(t, j));
            const double p2 = model_->stc_per(one, r2, std::norm(draws_->hop2_gain(t, j)));
            s.add(1.0 - (1.0 - p1) * (1.0 - p2));
        }
        return estimate_from(s);
    }

    // Fixed relay set, R = I restricted to the relays that decoded hop 1.
    PerEstimate dstc(std::span<const StationId> relay_set, const Mcs& r1, const Mcs& r2) const
    {
        PerEstimate e;
        dstc_within(relay_set, r1, r2, 2.0, &e);
        return e;
    }

    // Randomized DSTC over every candidate that decodes hop 1.
    PerEstimate rdstc(const Mcs& r1, const Mcs& r2, int dimension) const
    {
        PerEstimate e;
        rdstc_within(r1, r2, dimension, 2.0, &e);
        return e;
    }

    // The *_within variants stop as soon as the running failure sum proves
    // the mean exceeds gamma; `out` is filled only when the run completes.
    bool dstc_within(std::span<const StationId> relay_set, const Mcs& r1, const Mcs& r2, double gamma,
                     PerEstimate* out = nullptr) const
    {
        const double cap = gamma * static_cast<double>(draws_->trials());
        return dstc_sum(relay_set, r1, r2, cap, out) <= cap;
    }

    bool rdstc_within(const Mcs& r1, const Mcs& r2, int dimension, double gamma, PerEstimate* out = nullptr) const
    {
        const double cap = gamma * static_cast<double>(draws_->trials());
        return rdstc_sum(r1, r2, dimension, cap, out) <= cap;
    }

    // Sum of per-trial failure probabilities, abandoned once it passes `cap`.
    double dstc_sum(std::span<const StationId> relay_set, const Mcs& r1, const Mcs& r2, double cap,
                    PerEstimate* out = nullptr) const
    {
        if (relay_set.empty() || relay_set.size() > static_cast<std::size_t>(kMaxStcDimension))
            throw ValidationError("relay_set", "DSTC relay set must hold 1 to 4 relays");
        std::array<std::size_t, kMaxStcDimension> idx{};
        for (std::size_t k = 0; k < relay_set.size(); ++k)
            idx[k] = draws_->index_of(relay_set[k]);
        std::array<StationId, kMaxStcDimension> decoded{};
        return accumulate(cap, out, [&](std::size_t t) {
            const double* p1 = hop1_row(r1, t);
            std::size_t m = 0;
            double energy = 0.0;
            for (std::size_t k = 0; k < relay_set.size(); ++k) {
                const std::size_t j = idx[k];
                if (draws_->decode_u(t, j) >= p1[j]) {
                    decoded[m++] = relay_set[k];
                    energy += std::norm(draws_->hop2_gain(t, j));
                }
            }
            if (m == 0)
                return 1.0;
            return model_->stc_per(std::span<const StationId>(decoded.data(), m), r2, energy);
        });
    }

    double rdstc_sum(const Mcs& r1, const Mcs& r2, int dimension, double cap, PerEstimate* out = nullptr) const
    {
        if (dimension < 1 || dimension > kMaxStcDimension)
            throw ValidationError("stc_dimension", "STC dimension must be 1 to 4");
        const std::size_t n = draws_->candidates().size();
        const double scale = 1.0 / dimension;
        decoded_.clear();
        decoded_.reserve(n);
        return accumulate(cap, out, [&](std::size_t t) {
            const double* p1 = hop1_row(r1, t);
            decoded_.clear();
            std::array<cdouble, kMaxStcDimension> acc{};
            for (std::size_t j = 0; j < n; ++j) {
                if (draws_->decode_u(t, j) < p1[j])
                    continue;
                decoded_.push_back(draws_->candidates()[j]);
                const cdouble h = draws_->hop2_gain(t, j);
                for (int l = 0; l < dimension; ++l)
                    acc[static_cast<std::size_t>(l)] += h * draws_->weight(t, j, l);
            }
            if (decoded_.empty())
                return 1.0;
            double energy = 0.0;
            for (int l = 0; l < dimension; ++l)
                energy += std::norm(acc[static_cast<std::size_t>(l)]);
            return model_->stc_per(decoded_, r2, energy * scale);
        });
    }

    // Hop-1 PER of every candidate in trial t at rate r1. Rows are filled
    // lazily in trial order and kept.
    const double* hop1_row(const Mcs& r1, std::size_t t) const
    {
        auto& slot = hop1_cache_[static_cast<std::size_t>(r1.index)];
        const std::size_t n = draws_->candidates().size();
        if (slot.size() <= t * n) {
            const std::size_t from = slot.size() / n;
            slot.resize((t + 1) * n);
            for (std::size_t u = from; u <= t; ++u)
                for (std::size_t j = 0; j < n; ++j)
                    slot[u * n + j] =
                        model_->link_per(draws_->source(), draws_->candidates()[j], r1, draws_->hop1_snr(u, j));
        }
        return slot.data() + t * n;
    }

private:
    template <class F>
    double accumulate(double cap, PerEstimate* out, F&& trial) const
    {
        RunningStats s;
        double sum = 0.0;
        for (std::size_t t = 0; t < draws_->trials(); ++t) {
            const double f = trial(t);
            sum += f;
            if (sum > cap)
                return sum;
            if (out)
                s.add(f);
        }
        if (out)
            *out = estimate_from(s);
        return sum;
    }

    const RelayDraws* draws_;
    const Model* model_;
    mutable std::array<std::vector<double>, kRateCount> hop1_cache_;
    mutable std::vector<StationId> decoded_;
};

template <HopErrorModel Model>
PerEstimate per_e2e_direct(const Topology& topology, StationId source, const Mcs& r, const LinkBudget& budget,
                           const Model& model, std::size_t trials, std::uint64_t seed)
{
    RelayDraws draws(topology, source, budget, trials, seed, {});
    return E2eEvaluator<Model>(draws, model).direct(r);
}

template <HopErrorModel Model>
PerEstimate per_e2e_coop(const Topology& topology, StationId source, StationId relay, const Mcs& r1, const Mcs& r2,
                         const LinkBudget& budget, const Model& model, std::size_t trials, std::uint64_t seed)
{
    if (relay == source)
        throw ValidationError("relay", "relay must differ from the source");
    RelayDraws draws(topology, source, budget, trials, seed, {relay});
    return E2eEvaluator<Model>(draws, model).coop(relay, r1, r2);
}

template <HopErrorModel Model>
PerEstimate per_e2e_dstc(const Topology& topology, StationId source, std::span<const StationId> relay_set,
                         const Mcs& r1, const Mcs& r2, const StcCode& stc, const LinkBudget& budget,
                         const Model& model, std::size_t trials, std::uint64_t seed)
{
    if (relay_set.size() > static_cast<std::size_t>(stc.dimension))
        throw ValidationError("relay_set", "relay set larger than the STC dimension");
    for (auto id : relay_set)
        if (id == source || id == kAccessPoint)
            throw ValidationError("relay_set", "relay set must not contain the source or the AP");
    RelayDraws draws(topology, source, budget, trials, seed, {relay_set.begin(), relay_set.end()});
    return E2eEvaluator<Model>(draws, model).dstc(relay_set, r1, r2);
}

template <HopErrorModel Model>
PerEstimate per_e2e_rdstc(const Topology& topology, StationId source, const Mcs& r1, const Mcs& r2,
                          const StcCode& stc, const LinkBudget& budget, const Model& model, std::size_t trials,
                          std::uint64_t seed)
{
    if (topology.size() < 2)
        throw ValidationError("stations", "R-DSTC needs at least one other station");
    RelayDraws draws(topology, source, budget, trials, seed);
    return E2eEvaluator<Model>(draws, model).rdstc(r1, r2, stc.dimension);
}

} // namespace sticmac
