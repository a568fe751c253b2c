#pragma once

// Rate and relay selection for direct, CoopMAC, DSTC and R-DSTC (channel
// statistics and user-count variants) under an end-to-end PER constraint.

#include "sticmac/error.hpp"
#include "sticmac/link_model.hpp"
#include "sticmac/per_engine.hpp"
#include "sticmac/phy.hpp"
#include "sticmac/random.hpp"
#include "sticmac/topology.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace sticmac {

// What goes on air for one packet.
enum class TxScheme { Direct, CoopMac, Dstc, Rdstc };

inline const char* tx_scheme_name(TxScheme s)
{
    switch (s) {
    case TxScheme::Direct: return "direct";
    case TxScheme::CoopMac: return "coopmac";
    case TxScheme::Dstc: return "dstc";
    case TxScheme::Rdstc: return "rdstc";
    }
    return "?";
}

inline TxScheme parse_tx_scheme(const std::string& s)
{
    for (auto v : {TxScheme::Direct, TxScheme::CoopMac, TxScheme::Dstc, TxScheme::Rdstc})
        if (s == tx_scheme_name(v))
            return v;
    throw ValidationError("scheme", "unknown transmission scheme '" + s + "'");
}

struct TxParams {
    TxScheme scheme = TxScheme::Direct;
    Mcs r1 = base_rate();
    std::optional<Mcs> r2;
    std::optional<int> stc_dimension;
    std::optional<StationId> relay;
    std::vector<StationId> relay_set;
    double e2e_rate_mbps = 6.0;
    double expected_per = 0.0;
    bool compliant = true;
    bool clamped = false;

    std::optional<StcCode> stc() const
    {
        if (!stc_dimension)
            return std::nullopt;
        return stc_for_dimension(*stc_dimension);
    }
};

inline double two_hop_rate(double r1, double r2, double stc_rate = 1.0)
{
    return 1.0 / (1.0 / r1 + 1.0 / (stc_rate * r2));
}

struct AdaptConfig {
    double gamma = 0.05;
    std::vector<int> rates{6, 9, 12, 18, 24, 36, 48, 54};
    std::vector<int> stc_dimensions{2, 3, 4};
    std::size_t per_trials = 4000;

    void validate() const
    {
        if (!(gamma > 0.0 && gamma < 1.0))
            throw ValidationError("gamma", "gamma out of (0,1)");
        if (rates.empty())
            throw ValidationError("rates", "rate set must not be empty");
        for (int r : rates)
            (void)mcs_for_rate(r);
        if (stc_dimensions.empty())
            throw ValidationError("stc_dimensions", "STC set must not be empty");
        for (int l : stc_dimensions)
            (void)stc_for_dimension(l);
        if (per_trials == 0)
            throw ValidationError("per_trials", "per_trials must be positive");
    }

    std::vector<Mcs> mcs_list() const
    {
        std::vector<Mcs> out;
        for (int r : rates)
            out.push_back(mcs_for_rate(r));
        std::sort(out.begin(), out.end(), [](const Mcs& a, const Mcs& b) { return a.rate_mbps < b.rate_mbps; });
        return out;
    }
};

// Everything an optimizer needs besides the geometry.
struct AdaptEnv {
    LinkBudget budget;
    AdaptConfig cfg;
    const CodedLinkModel* link = nullptr;
    const FadingAveragedPer* averaged = nullptr;
};

struct RateCombo {
    Mcs r1;
    Mcs r2;
    int dimension = 0; // 0 for single-relay forwarding
    double objective = 0.0;
};

inline bool rate_less(double a, double b)
{
    return a < b - 1e-9 * std::max(1.0, std::abs(b));
}

// Candidate (r1, r2, L) in search order: highest e2e rate, then smallest L,
// then highest r1.
inline std::vector<RateCombo> two_hop_candidates(const AdaptConfig& cfg, std::span<const int> dimensions)
{
    const auto rates = cfg.mcs_list();
    std::vector<RateCombo> out;
    auto add = [&](int dim, double rc) {
        for (const auto& a : rates)
            for (const auto& b : rates)
                out.push_back({a, b, dim, two_hop_rate(a.rate_mbps, b.rate_mbps, rc)});
    };
    if (dimensions.empty())
        add(0, 1.0);
    for (int d : dimensions)
        add(d, stc_for_dimension(d).code_rate);
    std::stable_sort(out.begin(), out.end(), [](const RateCombo& x, const RateCombo& y) {
        if (rate_less(y.objective, x.objective))
            return true;
        if (rate_less(x.objective, y.objective))
            return false;
        if (x.dimension != y.dimension)
            return x.dimension < y.dimension;
        return x.r1.rate_mbps > y.r1.rate_mbps;
    });
    return out;
}

inline TxParams direct_params_at(double mean_snr, const AdaptEnv& env)
{
    const auto rates = env.cfg.mcs_list();
    for (auto it = rates.rbegin(); it != rates.rend(); ++it) {
        const double p = env.averaged->at(*it, mean_snr);
        if (p <= env.cfg.gamma) {
            TxParams out;
            out.r1 = *it;
            out.e2e_rate_mbps = it->rate_mbps;
            out.expected_per = p;
            return out;
        }
    }
    TxParams out;
    out.r1 = rates.front();
    out.e2e_rate_mbps = rates.front().rate_mbps;
    out.expected_per = env.averaged->at(rates.front(), mean_snr);
    out.compliant = false;
    return out;
}

inline TxParams optimize_direct(const Topology& topology, StationId source, const AdaptEnv& env)
{
    return direct_params_at(mean_snr_between(topology.position(source), topology.ap, env.budget), env);
}

// Keeps the cooperative choice only if its rate beats the direct rate.
inline TxParams apply_direct_fallback(const std::optional<TxParams>& coop, const TxParams& direct)
{
    if (!coop || !rate_less(direct.e2e_rate_mbps, coop->e2e_rate_mbps))
        return direct;
    return *coop;
}

// Best single relay and rates by the Rayleigh-averaged two-hop PER, before
// the direct fallback.
inline std::optional<TxParams> best_single_relay(const Topology& topology, StationId source, const AdaptEnv& env)
{
    const Point src = topology.position(source);
    const auto combos = two_hop_candidates(env.cfg, {});
    const auto rates = env.cfg.mcs_list();
    struct Cand {
        StationId id;
        std::array<double, kRateCount> p1, p2;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < topology.size(); ++i) {
        const auto id = static_cast<StationId>(i);
        if (id == source)
            continue;
        Cand c{id, {}, {}};
        const Point p = topology.stations[i];
        const double m1 = mean_snr_between(src, p, env.budget);
        const double m2 = mean_snr_between(p, topology.ap, env.budget);
        for (const auto& r : rates) {
            c.p1[static_cast<std::size_t>(r.index)] = env.averaged->at(r, m1);
            c.p2[static_cast<std::size_t>(r.index)] = env.averaged->at(r, m2);
        }
        cands.push_back(c);
    }
    for (const auto& combo : combos) {
        for (const auto& c : cands) {
            const double per = 1.0 - (1.0 - c.p1[static_cast<std::size_t>(combo.r1.index)]) *
                                         (1.0 - c.p2[static_cast<std::size_t>(combo.r2.index)]);
            if (per <= env.cfg.gamma) {
                TxParams out;
                out.scheme = TxScheme::CoopMac;
                out.r1 = combo.r1;
                out.r2 = combo.r2;
                out.relay = c.id;
                out.e2e_rate_mbps = combo.objective;
                out.expected_per = per;
                return out;
            }
        }
    }
    return std::nullopt;
}

inline TxParams optimize_coop(const Topology& topology, StationId source, const AdaptEnv& env)
{
    return apply_direct_fallback(best_single_relay(topology, source, env), optimize_direct(topology, source, env));
}

namespace detail {

struct SetChoice {
    bool feasible = false;
    RateCombo combo{};
    double per = 1.0;
};

// Highest-objective feasible rates for a fixed DSTC relay set, considering
// only combos whose objective exceeds `must_beat`.
template <class Eval>
SetChoice best_rates_for_set(const Eval& eval, std::span<const StationId> set, const std::vector<RateCombo>& combos,
                             double gamma, double must_beat)
{
    for (const auto& c : combos) {
        if (!rate_less(must_beat, c.objective))
            break;
        PerEstimate e;
        if (eval.dstc_within(set, c.r1, c.r2, gamma, &e))
            return {true, c, e.per};
    }
    return {};
}

} // namespace detail

struct DstcSearch {
    std::optional<TxParams> cooperative; // best DSTC choice before the direct fallback
    TxParams chosen;
};

// Greedy relay-set construction: first relay from the single-relay optimum,
// then one relay at a time maximizing the e2e rate with those already chosen.
inline DstcSearch search_dstc_greedy(const Topology& topology, StationId source, const AdaptEnv& env,
                                     std::uint64_t seed)
{
    DstcSearch out;
    const TxParams direct = optimize_direct(topology, source, env);
    out.chosen = direct;
    const auto others = RelayDraws::others(topology, source);
    int max_dim = 0;
    for (int d : env.cfg.stc_dimensions)
        max_dim = std::max(max_dim, d);
    if (others.size() < 2 || max_dim < 2) {
        out.chosen = optimize_coop(topology, source, env);
        return out;
    }

    RelayDraws draws(topology, source, env.budget, env.cfg.per_trials, seed);
    E2eEvaluator<CodedLinkModel> eval(draws, *env.link);

    StationId first = others.front();
    if (auto coop = best_single_relay(topology, source, env)) {
        first = *coop->relay;
    } else {
        double best = std::numeric_limits<double>::infinity();
        const Mcs r0 = env.cfg.mcs_list().front();
        for (auto id : others) {
            const StationId one[1] = {id};
            const double p = eval.dstc(one, r0, r0).per;
            if (p < best) {
                best = p;
                first = id;
            }
        }
    }

    std::vector<StationId> set{first};
    std::optional<TxParams> best_overall;
    const Mcs r0 = env.cfg.mcs_list().front();
    while (static_cast<int>(set.size()) < max_dim && set.size() < others.size()) {
        const int dim = static_cast<int>(set.size()) + 1;
        const std::vector<int> dims{dim};
        const auto combos = two_hop_candidates(env.cfg, dims);
        std::optional<StationId> pick;
        detail::SetChoice pick_choice;
        double beat = 0.0;
        std::vector<StationId> trial = set;
        trial.push_back(-2);
        for (auto id : others) {
            if (std::find(set.begin(), set.end(), id) != set.end())
                continue;
            trial.back() = id;
            auto choice = detail::best_rates_for_set(eval, trial, combos, env.cfg.gamma, beat);
            if (choice.feasible) {
                pick = id;
                pick_choice = choice;
                beat = choice.combo.objective;
            }
        }
        if (!pick) {
            // Nothing feasible at this size: extend with the most reliable relay.
            double best = std::numeric_limits<double>::infinity();
            for (auto id : others) {
                if (std::find(set.begin(), set.end(), id) != set.end())
                    continue;
                trial.back() = id;
                const double p = eval.dstc(trial, r0, r0).per;
                if (p < best) {
                    best = p;
                    pick = id;
                }
            }
        }
        set.push_back(*pick);
        const bool allowed =
            std::find(env.cfg.stc_dimensions.begin(), env.cfg.stc_dimensions.end(), dim) != env.cfg.stc_dimensions.end();
        if (allowed && pick_choice.feasible &&
            (!best_overall || rate_less(best_overall->e2e_rate_mbps, pick_choice.combo.objective))) {
            TxParams p;
            p.scheme = TxScheme::Dstc;
            p.r1 = pick_choice.combo.r1;
            p.r2 = pick_choice.combo.r2;
            p.stc_dimension = dim;
            p.relay_set = set;
            p.e2e_rate_mbps = pick_choice.combo.objective;
            p.expected_per = pick_choice.per;
            best_overall = p;
        }
    }
    out.cooperative = best_overall;
    out.chosen = apply_direct_fallback(best_overall, direct);
    return out;
}

// Seed of the independent draws a screened choice must also pass.
inline std::uint64_t confirm_seed(std::uint64_t seed) { return derive_seed(seed, {stream::kOptimizer, 0xc0f}); }

// Greedy search, then the chosen set must also meet gamma on independent
// draws; otherwise its rates step down until both agree.
inline TxParams optimize_dstc_greedy(const Topology& topology, StationId source, const AdaptEnv& env,
                                     std::uint64_t seed)
{
    const DstcSearch search = search_dstc_greedy(topology, source, env, seed);
    const TxParams& p = search.chosen;
    if (p.scheme != TxScheme::Dstc)
        return p;
    const RelayDraws a(topology, source, env.budget, env.cfg.per_trials, seed, p.relay_set);
    const RelayDraws b(topology, source, env.budget, env.cfg.per_trials, confirm_seed(seed), p.relay_set);
    const E2eEvaluator<CodedLinkModel> ea(a, *env.link), eb(b, *env.link);
    const std::vector<int> dims{*p.stc_dimension};
    for (const auto& c : two_hop_candidates(env.cfg, dims)) {
        if (rate_less(p.e2e_rate_mbps, c.objective))
            continue;
        PerEstimate e;
        if (ea.dstc_within(p.relay_set, c.r1, c.r2, env.cfg.gamma, &e) &&
            eb.dstc_within(p.relay_set, c.r1, c.r2, env.cfg.gamma)) {
            TxParams out = p;
            out.r1 = c.r1;
            out.r2 = c.r2;
            out.e2e_rate_mbps = c.objective;
            out.expected_per = e.per;
            return apply_direct_fallback(out, optimize_direct(topology, source, env));
        }
    }
    return optimize_direct(topology, source, env);
}

// Exhaustive search over (r1, r2, L) with the relay population sampled per
// trial; the first combo feasible on two independent sets of draws wins.
inline TxParams optimize_sticmac_cs(const Topology& topology, StationId source, const AdaptEnv& env,
                                    std::uint64_t seed)
{
    const TxParams direct = optimize_direct(topology, source, env);
    if (topology.size() < 2)
        return direct;
    RelayDraws draws(topology, source, env.budget, env.cfg.per_trials, seed);
    E2eEvaluator<CodedLinkModel> eval(draws, *env.link);
    std::optional<RelayDraws> second;
    std::optional<E2eEvaluator<CodedLinkModel>> confirm;
    for (const auto& c : two_hop_candidates(env.cfg, env.cfg.stc_dimensions)) {
        if (!rate_less(direct.e2e_rate_mbps, c.objective))
            return direct;
        PerEstimate e;
        if (!eval.rdstc_within(c.r1, c.r2, c.dimension, env.cfg.gamma, &e))
            continue;
        if (!confirm) {
            second.emplace(topology, source, env.budget, env.cfg.per_trials, confirm_seed(seed));
            confirm.emplace(*second, *env.link);
        }
        if (confirm->rdstc_within(c.r1, c.r2, c.dimension, env.cfg.gamma)) {
            TxParams p;
            p.scheme = TxScheme::Rdstc;
            p.r1 = c.r1;
            p.r2 = c.r2;
            p.stc_dimension = c.dimension;
            p.e2e_rate_mbps = c.objective;
            p.expected_per = e.per;
            return apply_direct_fallback(p, direct);
        }
    }
    return direct;
}

// ---------------------------------------------------------------------------
// User-count lookup table

struct UcGrid {
    std::vector<int> user_counts{2, 4, 8, 16, 24, 32, 48};
    double bin_m = 5.0;
    double radius_m = 100.0;

    std::size_t bin_count() const { return static_cast<std::size_t>(std::ceil(radius_m / bin_m - 1e-9)); }
    double bin_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_m; }
};

struct UcEntry {
    int user_count = 0;
    double distance_m = 0.0;
    TxParams params;
};

inline nlohmann::json tx_params_to_json(const TxParams& p)
{
    nlohmann::json j{{"scheme", tx_scheme_name(p.scheme)},
                     {"r1", p.r1.rate_mbps},
                     {"e2e_rate_mbps", p.e2e_rate_mbps},
                     {"expected_per", p.expected_per},
                     {"compliant", p.compliant}};
    if (p.r2)
        j["r2"] = p.r2->rate_mbps;
    if (p.stc_dimension)
        j["L"] = *p.stc_dimension;
    if (p.relay)
        j["relay"] = *p.relay;
    if (!p.relay_set.empty())
        j["relay_set"] = p.relay_set;
    return j;
}

inline TxParams tx_params_from_json(const nlohmann::json& j)
{
    TxParams p;
    p.scheme = parse_tx_scheme(j.at("scheme").get<std::string>());
    p.r1 = mcs_for_rate(j.at("r1").get<int>());
    p.e2e_rate_mbps = j.at("e2e_rate_mbps").get<double>();
    p.expected_per = j.value("expected_per", 0.0);
    p.compliant = j.value("compliant", true);
    if (j.contains("r2"))
        p.r2 = mcs_for_rate(j["r2"].get<int>());
    if (j.contains("L"))
        p.stc_dimension = j["L"].get<int>();
    if (j.contains("relay"))
        p.relay = j["relay"].get<StationId>();
    if (j.contains("relay_set"))
        p.relay_set = j["relay_set"].get<std::vector<StationId>>();
    return p;
}

struct UcBuildOptions {
    UcGrid grid;
    std::size_t topologies_per_cell = 20;
    std::size_t trials_per_topology = 500;
    std::uint64_t seed = 7;
    unsigned workers = 1;
};

class UcTable {
public:
    static constexpr int kFormatVersion = 1;

    UcTable() = default;
    UcTable(UcBuildOptions options, LinkBudget budget, AdaptConfig cfg)
        : options_(std::move(options))
        , budget_(budget)
        , cfg_(std::move(cfg))
    {
        entries_.resize(options_.grid.user_counts.size() * options_.grid.bin_count());
        direct_.resize(options_.grid.bin_count());
    }

    const UcBuildOptions& options() const noexcept { return options_; }
    const LinkBudget& budget() const noexcept { return budget_; }
    const AdaptConfig& config() const noexcept { return cfg_; }
    const std::vector<UcEntry>& entries() const noexcept { return entries_; }

    UcEntry& entry(std::size_t n_index, std::size_t bin) { return entries_[n_index * options_.grid.bin_count() + bin]; }
    const UcEntry& entry(std::size_t n_index, std::size_t bin) const
    {
        return entries_[n_index * options_.grid.bin_count() + bin];
    }
    TxParams& direct(std::size_t bin) { return direct_[bin]; }
    const TxParams& direct(std::size_t bin) const { return direct_[bin]; }

    // Nearest grid cell; `clamped` is set when N or the distance lies outside
    // the grid. Fewer than two users means no relay can exist.
    TxParams lookup(std::size_t user_count, double distance_m) const
    {
        const auto& g = options_.grid;
        bool clamped = distance_m < 0.0 || distance_m > g.radius_m;
        const double d = std::clamp(distance_m, 0.0, g.radius_m);
        const auto bin = std::min(static_cast<std::size_t>(d / g.bin_m), g.bin_count() - 1);
        if (user_count < 2)
            return direct_[bin];
        const int n = static_cast<int>(user_count);
        clamped = clamped || n < g.user_counts.front() || n > g.user_counts.back();
        std::size_t best = 0;
        for (std::size_t i = 1; i < g.user_counts.size(); ++i)
            if (std::abs(g.user_counts[i] - n) < std::abs(g.user_counts[best] - n))
                best = i;
        TxParams p = entry(best, bin).params;
        p.clamped = clamped;
        return p;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["format"] = "sticmac-uc-table";
        j["version"] = kFormatVersion;
        j["budget"] = {{"edge_snr", budget_.edge_snr},
                       {"path_loss_exponent", budget_.path_loss_exponent},
                       {"cell_radius_m", budget_.cell_radius_m}};
        j["config"] = {{"gamma", cfg_.gamma}, {"rates", cfg_.rates}, {"stc_dimensions", cfg_.stc_dimensions}};
        j["grid"] = {{"user_counts", options_.grid.user_counts},
                     {"bin_m", options_.grid.bin_m},
                     {"radius_m", options_.grid.radius_m}};
        j["seed"] = options_.seed;
        j["topologies_per_cell"] = options_.topologies_per_cell;
        j["trials_per_topology"] = options_.trials_per_topology;
        j["direct"] = nlohmann::json::array();
        for (const auto& p : direct_)
            j["direct"].push_back(tx_params_to_json(p));
        j["entries"] = nlohmann::json::array();
        for (const auto& e : entries_) {
            auto row = tx_params_to_json(e.params);
            row["N"] = e.user_count;
            row["distance_m"] = e.distance_m;
            j["entries"].push_back(row);
        }
        return j;
    }

    static UcTable from_json(const nlohmann::json& j)
    {
        if (j.value("format", "") != "sticmac-uc-table" || j.value("version", 0) != kFormatVersion)
            throw Error("not a UC table file (or unsupported version)");
        UcBuildOptions o;
        o.grid.user_counts = j["grid"]["user_counts"].get<std::vector<int>>();
        o.grid.bin_m = j["grid"]["bin_m"].get<double>();
        o.grid.radius_m = j["grid"]["radius_m"].get<double>();
        o.seed = j["seed"].get<std::uint64_t>();
        o.topologies_per_cell = j["topologies_per_cell"].get<std::size_t>();
        o.trials_per_topology = j["trials_per_topology"].get<std::size_t>();
        LinkBudget b{j["budget"]["edge_snr"].get<double>(), j["budget"]["path_loss_exponent"].get<double>(),
                     j["budget"]["cell_radius_m"].get<double>()};
        AdaptConfig c;
        c.gamma = j["config"]["gamma"].get<double>();
        c.rates = j["config"]["rates"].get<std::vector<int>>();
        c.stc_dimensions = j["config"]["stc_dimensions"].get<std::vector<int>>();
        UcTable t(o, b, c);
        const auto& dj = j.at("direct");
        const auto& ej = j.at("entries");
        if (dj.size() != t.direct_.size() || ej.size() != t.entries_.size())
            throw Error("UC table size does not match its grid");
        for (std::size_t i = 0; i < dj.size(); ++i)
            t.direct_[i] = tx_params_from_json(dj[i]);
        for (std::size_t i = 0; i < ej.size(); ++i) {
            t.entries_[i].user_count = ej[i]["N"].get<int>();
            t.entries_[i].distance_m = ej[i]["distance_m"].get<double>();
            t.entries_[i].params = tx_params_from_json(ej[i]);
        }
        return t;
    }

    // True when the table was built for this budget and PER threshold.
    bool matches(const LinkBudget& b, const AdaptConfig& c) const
    {
        return b.edge_snr == budget_.edge_snr && b.path_loss_exponent == budget_.path_loss_exponent &&
               b.cell_radius_m == budget_.cell_radius_m && c.gamma == cfg_.gamma && c.rates == cfg_.rates &&
               c.stc_dimensions == cfg_.stc_dimensions;
    }

    void save(const std::filesystem::path& path) const
    {
        std::ofstream out(path);
        if (!out)
            throw Error("cannot write UC table " + path.string());
        out << to_json().dump(1) << '\n';
    }

    static UcTable load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw Error("cannot read UC table " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw Error("UC table " + path.string() + ": " + e.what());
        }
        return from_json(j);
    }

private:
    UcBuildOptions options_;
    LinkBudget budget_;
    AdaptConfig cfg_;
    std::vector<UcEntry> entries_;
    std::vector<TxParams> direct_;
};

// The k-th sampled cell population: station 0 is the source at `distance`
// on the x axis; stations 1..N-1 are uniform on the disk. Station i's
// position depends only on (seed, k, i), so populations nest across N.
inline Topology uc_population(std::size_t user_count, double distance, std::size_t k, const UcBuildOptions& o)
{
    Topology t;
    t.stations.push_back({distance, 0.0});
    for (std::size_t i = 1; i < user_count; ++i) {
        Rng rng = make_rng(o.seed, {stream::kUcTable, k, i});
        t.stations.push_back(uniform_in_disk(rng, o.grid.radius_m));
    }
    return t;
}

// Position-averaged optimum for one (N, distance) cell.
inline TxParams solve_uc_cell(std::size_t user_count, double distance, const AdaptEnv& env, const UcBuildOptions& o)
{
    TxParams direct = direct_params_at(snr_at(std::max(distance, kMinDistanceM), env.budget), env);
    if (user_count < 2)
        return direct;
    std::vector<RelayDraws> draws;
    draws.reserve(o.topologies_per_cell);
    for (std::size_t k = 0; k < o.topologies_per_cell; ++k)
        draws.emplace_back(uc_population(user_count, distance, k, o), 0, env.budget, o.trials_per_topology,
                           derive_seed(o.seed, {stream::kUcTable, k, 0xd0}));
    std::vector<E2eEvaluator<CodedLinkModel>> evals;
    for (const auto& d : draws)
        evals.emplace_back(d, *env.link);
    const double total = static_cast<double>(o.topologies_per_cell * o.trials_per_topology);
    const double cap = env.cfg.gamma * total;
    for (const auto& c : two_hop_candidates(env.cfg, env.cfg.stc_dimensions)) {
        if (!rate_less(direct.e2e_rate_mbps, c.objective))
            return direct;
        double sum = 0.0;
        for (const auto& e : evals) {
            sum += e.rdstc_sum(c.r1, c.r2, c.dimension, cap - sum);
            if (sum > cap)
                break;
        }
        if (sum <= cap) {
            TxParams p;
            p.scheme = TxScheme::Rdstc;
            p.r1 = c.r1;
            p.r2 = c.r2;
            p.stc_dimension = c.dimension;
            p.e2e_rate_mbps = c.objective;
            p.expected_per = sum / total;
            return apply_direct_fallback(p, direct);
        }
    }
    return direct;
}

inline UcTable build_uc_table(const AdaptEnv& env, const UcBuildOptions& options)
{
    env.cfg.validate();
    if (options.grid.user_counts.empty() || options.grid.bin_count() == 0)
        throw ValidationError("uc_grid", "UC table grids must be nonempty");
    if (options.topologies_per_cell == 0 || options.trials_per_topology == 0)
        throw ValidationError("uc_samples", "UC table sampling counts must be positive");
    UcTable table(options, env.budget, env.cfg);
    const auto& g = options.grid;
    for (std::size_t b = 0; b < g.bin_count(); ++b)
        table.direct(b) = direct_params_at(snr_at(g.bin_center(b), env.budget), env);
    const std::size_t cells = g.user_counts.size() * g.bin_count();
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cells;) {
            const std::size_t n_index = i / g.bin_count();
            const std::size_t bin = i % g.bin_count();
            auto& e = table.entry(n_index, bin);
            e.user_count = g.user_counts[n_index];
            e.distance_m = g.bin_center(bin);
            e.params = solve_uc_cell(static_cast<std::size_t>(e.user_count), e.distance_m, env, options);
        }
    };
    const unsigned workers = std::max(1u, options.workers);
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w)
        pool.emplace_back(work);
    work();
    pool.clear();
    return table;
}

// Table entry, or direct at the exact distance when that is not slower.
inline TxParams optimize_sticmac_uc(std::size_t user_count, double source_distance, const UcTable& table,
                                    const AdaptEnv& env)
{
    const TxParams entry = table.lookup(user_count, source_distance);
    const TxParams direct = direct_params_at(snr_at(std::max(source_distance, kMinDistanceM), env.budget), env);
    if (entry.scheme == TxScheme::Direct)
        return direct;
    return apply_direct_fallback(entry, direct);
}

} // namespace sticmac
