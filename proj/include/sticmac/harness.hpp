#pragma once

// Configuration, experiment orchestration and result files.

#include "sticmac/dcf.hpp"
#include "sticmac/error.hpp"
#include "sticmac/link_model.hpp"
#include "sticmac/mobility.hpp"
#include "sticmac/per_table.hpp"
#include "sticmac/rate_adapt.hpp"
#include "sticmac/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace sticmac {

enum class Scheme { Direct, CoopMac, Dstc, SticmacCs, SticmacUc };

inline const char* scheme_name(Scheme s)
{
    switch (s) {
    case Scheme::Direct: return "direct";
    case Scheme::CoopMac: return "coopmac";
    case Scheme::Dstc: return "dstc";
    case Scheme::SticmacCs: return "sticmac_cs";
    case Scheme::SticmacUc: return "sticmac_uc";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string& s)
{
    for (auto v : {Scheme::Direct, Scheme::CoopMac, Scheme::Dstc, Scheme::SticmacCs, Scheme::SticmacUc})
        if (s == scheme_name(v))
            return v;
    throw ValidationError("schemes", "unknown scheme '" + s + "'");
}

inline const std::vector<Scheme>& all_schemes()
{
    static const std::vector<Scheme> v{Scheme::Direct, Scheme::CoopMac, Scheme::Dstc, Scheme::SticmacCs,
                                       Scheme::SticmacUc};
    return v;
}

struct SimConfig {
    LinkBudget budget;
    AdaptConfig adapt;
    MobilityConfig mobility;
    int cw_min = 15;
    int cw_max = 1023;
    int retry_limit = 7;
    std::size_t pdu_bytes = 1500;
    double duration_s = 10.0;
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
    double epoch_s = 2.0;
    std::vector<int> n_grid{2, 8, 16, 24, 32, 48};
    std::vector<double> distances{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::vector<double> probe_distances{100, 150, 200, 250, 300};
    int distance_users = 48;
    int interference_users = 24;
    double interference_load = 0.6;
    std::vector<Scheme> schemes = all_schemes();
    std::string per_cache = "per_cache.json";
    std::string uc_table = "uc_table.json";
    UcBuildOptions uc;
    std::uint64_t per_seed = 20240601;

    DcfConfig dcf(MacMode mode) const
    {
        DcfConfig d;
        d.cw_min = cw_min;
        d.cw_max = cw_max;
        d.retry_limit = retry_limit;
        d.pdu_bytes = pdu_bytes;
        d.mode = mode;
        d.duration_s = duration_s;
        return d;
    }

    void validate() const
    {
        if (!(adapt.gamma > 0.0 && adapt.gamma < 1.0))
            throw ValidationError("gamma", "gamma out of (0,1)");
        adapt.validate();
        if (!(budget.edge_snr > 0.0))
            throw ValidationError("edge_snr", "edge_snr must be positive");
        if (!(budget.path_loss_exponent > 0.0))
            throw ValidationError("path_loss_exponent", "path_loss_exponent must be positive");
        if (!(budget.cell_radius_m > 0.0))
            throw ValidationError("cell_radius", "cell_radius must be positive");
        mobility.validate();
        if (cw_min < 0 || cw_min > cw_max)
            throw ValidationError("cw_min", "cw_min must be in [0, cw_max]");
        if (cw_max > 1023)
            throw ValidationError("cw_max", "cw_max must be at most 1023");
        if (retry_limit < 0)
            throw ValidationError("retry_limit", "retry_limit must be nonnegative");
        if (pdu_bytes == 0 || pdu_bytes > 4095)
            throw ValidationError("pdu_bytes", "pdu_bytes must be in [1, 4095]");
        if (!(duration_s > 0.0))
            throw ValidationError("duration_s", "duration_s must be positive");
        if (seeds < 3)
            throw ValidationError("seeds", "at least 3 seeds are needed for confidence intervals");
        if (!(epoch_s > 0.0))
            throw ValidationError("epoch_s", "epoch_s must be positive");
        if (n_grid.empty())
            throw ValidationError("n_grid", "n_grid must be nonempty");
        for (int n : n_grid)
            if (n < 1)
                throw ValidationError("n_grid", "user counts must be positive");
        if (distances.empty())
            throw ValidationError("distances", "distances must be nonempty");
        for (double d : distances)
            if (!(d > 0.0 && d <= budget.cell_radius_m))
                throw ValidationError("distances", "distances must lie in (0, cell_radius]");
        if (probe_distances.empty())
            throw ValidationError("probe_distances", "probe_distances must be nonempty");
        for (double d : probe_distances)
            if (!(d > 0.0))
                throw ValidationError("probe_distances", "probe distances must be positive");
        if (distance_users < 1)
            throw ValidationError("distance_users", "distance_users must be positive");
        if (interference_users < 1)
            throw ValidationError("interference_users", "interference_users must be positive");
        if (!(interference_load > 0.0 && interference_load < 1.0))
            throw ValidationError("interference_load", "interference_load must be in (0,1)");
        if (schemes.empty())
            throw ValidationError("schemes", "at least one scheme is required");
        if (uc.grid.user_counts.empty() || !(uc.grid.bin_m > 0.0))
            throw ValidationError("uc", "UC grid must be nonempty");
        if (uc.topologies_per_cell == 0 || uc.trials_per_topology == 0)
            throw ValidationError("uc", "UC sampling counts must be positive");
    }
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out)
{
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(key, std::string("field '") + key + "' has the wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where)
{
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* n : known)
            ok = ok || k == n;
        if (!ok)
            throw ValidationError(where.empty() ? k : where + "." + k, "unknown field '" + k + "'");
    }
}

} // namespace detail

inline SimConfig config_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ValidationError("config", "configuration must be a JSON object");
    detail::reject_unknown(j,
                           {"gamma", "edge_snr", "path_loss_exponent", "cell_radius", "rates", "stc_dimensions",
                            "per_trials", "cw_min", "cw_max", "retry_limit", "pdu_bytes", "duration_s", "seeds",
                            "base_seed", "epoch_s", "n_grid", "distances", "probe_distances", "distance_users",
                            "interference_users", "interference_load", "schemes", "per_cache", "uc_table", "mobility",
                            "uc", "per_seed"},
                           "");
    SimConfig c;
    using detail::read_field;
    read_field(j, "gamma", c.adapt.gamma);
    read_field(j, "edge_snr", c.budget.edge_snr);
    read_field(j, "path_loss_exponent", c.budget.path_loss_exponent);
    read_field(j, "cell_radius", c.budget.cell_radius_m);
    read_field(j, "rates", c.adapt.rates);
    read_field(j, "stc_dimensions", c.adapt.stc_dimensions);
    read_field(j, "per_trials", c.adapt.per_trials);
    read_field(j, "cw_min", c.cw_min);
    read_field(j, "cw_max", c.cw_max);
    read_field(j, "retry_limit", c.retry_limit);
    read_field(j, "pdu_bytes", c.pdu_bytes);
    read_field(j, "duration_s", c.duration_s);
    read_field(j, "seeds", c.seeds);
    read_field(j, "base_seed", c.base_seed);
    read_field(j, "epoch_s", c.epoch_s);
    read_field(j, "n_grid", c.n_grid);
    read_field(j, "distances", c.distances);
    read_field(j, "probe_distances", c.probe_distances);
    read_field(j, "distance_users", c.distance_users);
    read_field(j, "interference_users", c.interference_users);
    read_field(j, "interference_load", c.interference_load);
    read_field(j, "per_cache", c.per_cache);
    read_field(j, "uc_table", c.uc_table);
    read_field(j, "per_seed", c.per_seed);
    if (j.contains("schemes")) {
        std::vector<std::string> names;
        read_field(j, "schemes", names);
        c.schemes.clear();
        for (const auto& n : names)
            c.schemes.push_back(parse_scheme(n));
    }
    if (j.contains("mobility")) {
        const auto& m = j.at("mobility");
        if (!m.is_object())
            throw ValidationError("mobility", "mobility must be an object");
        detail::reject_unknown(m, {"v_min", "v_max", "t_min", "t_max", "dwell"}, "mobility");
        read_field(m, "v_min", c.mobility.v_min);
        read_field(m, "v_max", c.mobility.v_max);
        read_field(m, "t_min", c.mobility.t_min);
        read_field(m, "t_max", c.mobility.t_max);
        read_field(m, "dwell", c.mobility.dwell);
    }
    if (j.contains("uc")) {
        const auto& u = j.at("uc");
        if (!u.is_object())
            throw ValidationError("uc", "uc must be an object");
        detail::reject_unknown(u, {"user_counts", "bin_m", "topologies_per_cell", "trials_per_topology", "seed"},
                               "uc");
        read_field(u, "user_counts", c.uc.grid.user_counts);
        read_field(u, "bin_m", c.uc.grid.bin_m);
        read_field(u, "topologies_per_cell", c.uc.topologies_per_cell);
        read_field(u, "trials_per_topology", c.uc.trials_per_topology);
        read_field(u, "seed", c.uc.seed);
    }
    c.mobility.cell_radius = c.budget.cell_radius_m;
    c.uc.grid.radius_m = c.budget.cell_radius_m;
    c.validate();
    return c;
}

inline SimConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        return config_from_json(nlohmann::json::object());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config", std::string("parse error: ") + e.what());
    }
    return config_from_json(j);
}

inline unsigned worker_count()
{
    if (const char* w = std::getenv("STICMAC_WORKERS")) {
        const int n = std::atoi(w);
        if (n > 0)
            return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs jobs 0..count-1 on a small pool; job results must be written to
// per-job slots by the callee.
template <class F>
void parallel_for(std::size_t count, unsigned workers, F&& job)
{
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < std::min<std::size_t>(workers, count); ++w)
            pool.emplace_back(work);
        work();
    }
    if (failure)
        std::rethrow_exception(failure);
}

// Shared models: PER cache, link model, Rayleigh averages and the UC table.
class Context {
public:
    explicit Context(SimConfig cfg, std::filesystem::path data_dir = ".")
        : cfg_(std::move(cfg))
        , data_dir_(std::move(data_dir))
        , table_(cfg_.per_seed)
    {
        cfg_.validate();
        table_.load(per_cache_path());
        link_ = std::make_unique<CodedLinkModel>(table_, cfg_.pdu_bytes);
        averaged_ = std::make_unique<FadingAveragedPer>(*link_);
    }

    const SimConfig& config() const noexcept { return cfg_; }
    const PerTable& per_table() const noexcept { return table_; }
    const CodedLinkModel& link() const noexcept { return *link_; }
    const FadingAveragedPer& averaged() const noexcept { return *averaged_; }

    AdaptEnv env() const
    {
        AdaptEnv e;
        e.budget = cfg_.budget;
        e.cfg = cfg_.adapt;
        e.link = link_.get();
        e.averaged = averaged_.get();
        return e;
    }

    std::filesystem::path per_cache_path() const { return resolve(cfg_.per_cache); }
    std::filesystem::path uc_table_path() const { return resolve(cfg_.uc_table); }

    // Makes sure every curve the MAC can ask for exists, then persists.
    void warm_per_cache()
    {
        for (auto [rate, bytes] : frame_error_curves(cfg_.pdu_bytes))
            table_.curve(rate, bytes);
        save_per_cache();
    }

    void save_per_cache() const
    {
        if (table_.dirty())
            table_.save(per_cache_path());
    }

    const UcTable& uc_table()
    {
        std::lock_guard lock(uc_mutex_);
        if (!uc_) {
            const auto path = uc_table_path();
            if (std::filesystem::exists(path)) {
                UcTable t = UcTable::load(path);
                if (t.matches(cfg_.budget, cfg_.adapt))
                    uc_ = std::move(t);
            }
            if (!uc_) {
                UcBuildOptions o = cfg_.uc;
                o.workers = worker_count();
                uc_ = build_uc_table(env(), o);
                uc_->save(path);
            }
        }
        return *uc_;
    }

    void set_uc_table(UcTable t)
    {
        std::lock_guard lock(uc_mutex_);
        uc_ = std::move(t);
    }

    FrameErrorFn frame_errors() const { return coded_frame_errors(*link_); }

    // Parameters are a pure function of this key, so runs that differ only
    // in MAC mode or traffic share them.
    using ParamKey = std::tuple<int, std::size_t, std::uint64_t, bool, double, int>;

    std::optional<std::vector<TxParams>> cached_params(const ParamKey& k)
    {
        std::lock_guard lock(param_mutex_);
        if (auto it = params_.find(k); it != params_.end())
            return it->second;
        return std::nullopt;
    }

    void store_params(const ParamKey& k, const std::vector<TxParams>& p)
    {
        std::lock_guard lock(param_mutex_);
        params_.emplace(k, p);
    }

private:
    std::filesystem::path resolve(const std::string& p) const
    {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : data_dir_ / path;
    }

    SimConfig cfg_;
    std::filesystem::path data_dir_;
    PerTable table_;
    std::unique_ptr<CodedLinkModel> link_;
    std::unique_ptr<FadingAveragedPer> averaged_;
    std::mutex uc_mutex_;
    std::optional<UcTable> uc_;
    std::mutex param_mutex_;
    std::map<ParamKey, std::vector<TxParams>> params_;
};

// Parameters one scheme picks for one station.
inline TxParams choose_params(Scheme s, const Topology& topology, StationId id, Context& ctx, std::uint64_t seed)
{
    const AdaptEnv env = ctx.env();
    switch (s) {
    case Scheme::Direct: return optimize_direct(topology, id, env);
    case Scheme::CoopMac: return optimize_coop(topology, id, env);
    case Scheme::Dstc: return optimize_dstc_greedy(topology, id, env, seed);
    case Scheme::SticmacCs: return optimize_sticmac_cs(topology, id, env, seed);
    case Scheme::SticmacUc:
        return optimize_sticmac_uc(topology.size(), distance(topology.position(id), topology.ap), ctx.uc_table(),
                                   env);
    }
    throw Error("internal: unknown scheme");
}

enum class Traffic { Saturated, Poisson };

// One simulation point: a scheme, a population, a seed and the MAC setup.
struct PointSpec {
    Scheme scheme = Scheme::Direct;
    std::size_t users = 1;
    std::uint64_t seed = 1;
    bool mobile = false;
    MacMode mode = MacMode::RtsOn;
    Traffic traffic = Traffic::Saturated;
    double arrival_rate_pps = 0.0;
    std::optional<double> single_source_distance; // only station 0 contends, placed at this distance
    bool record_tx_log = false;
};

struct PointResult {
    double throughput_mbps = 0.0;
    double source_throughput_mbps = 0.0;
    double mean_delay_ms = 0.0;
    std::size_t delivered = 0;
    std::size_t dropped = 0;
    std::size_t collisions = 0;
    std::vector<double> probe_dbm;
};

inline std::vector<Point> point_positions(const PointSpec& p, const SimConfig& cfg)
{
    auto pos = init_positions(p.users, cfg.budget.cell_radius_m, p.seed);
    if (p.single_source_distance) {
        Rng rng = make_rng(p.seed, {stream::kPlacement, 0xd1});
        const double a = 2.0 * std::numbers::pi * uniform01(rng);
        pos[0] = {*p.single_source_distance * std::cos(a), *p.single_source_distance * std::sin(a)};
    }
    return pos;
}

inline PointResult simulate_point(const PointSpec& p, Context& ctx)
{
    const SimConfig& cfg = ctx.config();
    DcfConfig dcf = cfg.dcf(p.mode);
    dcf.saturated = p.traffic == Traffic::Saturated;
    dcf.arrival_rate_pps = p.arrival_rate_pps;
    dcf.epoch_s = p.mobile ? cfg.epoch_s : 0.0;
    dcf.record_tx_log = p.record_tx_log;

    DcfInputs in;
    in.initial_positions = point_positions(p, cfg);
    in.budget = cfg.budget;
    in.frame_errors = ctx.frame_errors();
    if (p.mobile) {
        MobilityConfig m = cfg.mobility;
        m.cell_radius = cfg.budget.cell_radius_m;
        in.mobility = m;
    }
    if (p.single_source_distance) {
        in.active.assign(p.users, false);
        in.active[0] = true;
    } else {
        in.active.assign(p.users, true);
    }
    const std::vector<bool> active = in.active;
    const Scheme scheme = p.scheme;
    const std::uint64_t seed = p.seed;
    int epoch = 0;
    in.params = [&, scheme, seed, active](double, const Topology& topology) {
        const Context::ParamKey key{static_cast<int>(scheme), topology.size(), seed, p.mobile,
                                    p.single_source_distance.value_or(-1.0), epoch};
        if (auto hit = ctx.cached_params(key)) {
            ++epoch;
            return *hit;
        }
        std::vector<TxParams> out(topology.size());
        for (std::size_t i = 0; i < topology.size(); ++i) {
            const auto id = static_cast<StationId>(i);
            out[i] = active[i] ? choose_params(scheme, topology, id, ctx,
                                               derive_seed(seed, {stream::kOptimizer, static_cast<std::uint64_t>(epoch), i}))
                               : optimize_direct(topology, id, ctx.env());
        }
        ctx.store_params(key, out);
        ++epoch;
        return out;
    };
    DcfEngine engine(std::move(in), dcf, p.seed);
    const MacMetrics m = engine.run();

    PointResult r;
    r.throughput_mbps = m.throughput_mbps();
    r.source_throughput_mbps = m.station_throughput_mbps(0);
    r.mean_delay_ms = m.mean_delay_us() * 1e-3;
    for (auto n : m.delivered_packets)
        r.delivered += n;
    for (auto n : m.dropped)
        r.dropped += n;
    r.collisions = m.collisions;
    if (p.record_tx_log)
        r.probe_dbm = interference_probe(m, cfg.probe_distances, cfg.budget);
    return r;
}

enum class ExperimentId {
    ThroughputVsDistance,
    AggregateStatic,
    AggregateMobile,
    DelayStatic,
    DelayMobile,
    Interference,
    NoRtsStatic,
    NoRtsMobile
};

inline const char* experiment_name(ExperimentId e)
{
    switch (e) {
    case ExperimentId::ThroughputVsDistance: return "throughput_vs_distance";
    case ExperimentId::AggregateStatic: return "aggregate_static";
    case ExperimentId::AggregateMobile: return "aggregate_mobile";
    case ExperimentId::DelayStatic: return "delay_static";
    case ExperimentId::DelayMobile: return "delay_mobile";
    case ExperimentId::Interference: return "interference";
    case ExperimentId::NoRtsStatic: return "no_rts_static";
    case ExperimentId::NoRtsMobile: return "no_rts_mobile";
    }
    return "?";
}

inline const std::vector<ExperimentId>& all_experiments()
{
    static const std::vector<ExperimentId> v{
        ExperimentId::ThroughputVsDistance, ExperimentId::AggregateStatic, ExperimentId::AggregateMobile,
        ExperimentId::DelayStatic,          ExperimentId::DelayMobile,     ExperimentId::Interference,
        ExperimentId::NoRtsStatic,          ExperimentId::NoRtsMobile};
    return v;
}

inline ExperimentId parse_experiment(const std::string& s)
{
    for (auto e : all_experiments())
        if (s == experiment_name(e))
            return e;
    throw ValidationError("experiment", "unknown experiment '" + s + "'");
}

struct ExperimentSpec {
    ExperimentId id = ExperimentId::AggregateStatic;
    std::vector<Scheme> schemes;
    std::vector<int> user_counts;
    std::vector<std::uint64_t> seeds;
    std::optional<MacMode> mode; // overrides the experiment's own mode

    void validate() const
    {
        if (schemes.empty())
            throw ValidationError("schemes", "at least one scheme is required");
        if (user_counts.empty())
            throw ValidationError("n_grid", "at least one user count is required");
        if (seeds.size() < 3)
            throw ValidationError("seeds", "at least 3 seeds are needed for confidence intervals");
    }
};

inline std::vector<std::uint64_t> seed_list(const SimConfig& cfg)
{
    std::vector<std::uint64_t> s;
    for (std::size_t k = 0; k < cfg.seeds; ++k)
        s.push_back(cfg.base_seed + k);
    return s;
}

inline ExperimentSpec default_spec(ExperimentId id, const SimConfig& cfg)
{
    ExperimentSpec s;
    s.id = id;
    s.schemes = cfg.schemes;
    s.seeds = seed_list(cfg);
    switch (id) {
    case ExperimentId::ThroughputVsDistance: s.user_counts = {cfg.distance_users}; break;
    case ExperimentId::Interference: s.user_counts = {cfg.interference_users}; break;
    default: s.user_counts = cfg.n_grid; break;
    }
    return s;
}

struct ResultRow {
    std::string experiment;
    std::string scheme;
    int n = 0;
    double x = 0.0;
    double value = 0.0;
    double ci = 0.0;
    std::size_t seeds = 0;

    bool operator==(const ResultRow&) const = default;
};

// Memoizes simulation points so experiments sharing runs (throughput and
// delay) simulate once.
class PointCache {
public:
    using Key = std::tuple<int, std::size_t, std::uint64_t, bool, int, int, double, double, bool>;

    PointResult get(const PointSpec& p, Context& ctx)
    {
        const Key k{static_cast<int>(p.scheme), p.users,
                    p.seed, p.mobile,
                    static_cast<int>(p.mode), static_cast<int>(p.traffic),
                    p.arrival_rate_pps, p.single_source_distance.value_or(-1.0),
                    p.record_tx_log};
        {
            std::lock_guard lock(m_);
            if (auto it = cache_.find(k); it != cache_.end())
                return it->second;
        }
        PointResult r = simulate_point(p, ctx);
        std::lock_guard lock(m_);
        cache_.emplace(k, r);
        return r;
    }

private:
    std::mutex m_;
    std::map<Key, PointResult> cache_;
};

// Offered load per station for the interference runs: a fraction of what
// direct transmission sustains at that population.
inline double matched_arrival_rate(const ExperimentSpec& spec, int users, Context& ctx, PointCache& cache)
{
    const SimConfig& cfg = ctx.config();
    std::vector<double> cap(spec.seeds.size());
    parallel_for(spec.seeds.size(), worker_count(), [&](std::size_t k) {
        PointSpec p;
        p.scheme = Scheme::Direct;
        p.users = static_cast<std::size_t>(users);
        p.seed = spec.seeds[k];
        p.mobile = true;
        cap[k] = cache.get(p, ctx).throughput_mbps;
    });
    double mean = 0.0;
    for (double c : cap)
        mean += c / static_cast<double>(cap.size());
    return cfg.interference_load * mean * 1e6 / (8.0 * static_cast<double>(cfg.pdu_bytes) * users);
}

inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, Context& ctx, PointCache& cache)
{
    spec.validate();
    const SimConfig& cfg = ctx.config();
    const ExperimentId id = spec.id;
    const bool mobile = id == ExperimentId::AggregateMobile || id == ExperimentId::DelayMobile ||
                        id == ExperimentId::Interference || id == ExperimentId::NoRtsMobile;
    const MacMode mode = spec.mode.value_or((id == ExperimentId::NoRtsStatic || id == ExperimentId::NoRtsMobile)
                                                ? MacMode::RtsOff
                                                : MacMode::RtsOn);
    if (std::find(spec.schemes.begin(), spec.schemes.end(), Scheme::SticmacUc) != spec.schemes.end())
        ctx.uc_table();

    struct Job {
        std::size_t scheme, users_index, x_index, seed_index;
    };
    std::vector<double> xs;
    if (id == ExperimentId::ThroughputVsDistance)
        xs = cfg.distances;
    else
        xs = {0.0};
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < spec.schemes.size(); ++s)
        for (std::size_t u = 0; u < spec.user_counts.size(); ++u)
            for (std::size_t x = 0; x < xs.size(); ++x)
                for (std::size_t k = 0; k < spec.seeds.size(); ++k)
                    jobs.push_back({s, u, x, k});

    std::vector<double> rates(spec.user_counts.size(), 0.0);
    if (id == ExperimentId::Interference)
        for (std::size_t u = 0; u < spec.user_counts.size(); ++u)
            rates[u] = matched_arrival_rate(spec, spec.user_counts[u], ctx, cache);

    std::vector<PointResult> results(jobs.size());
    parallel_for(jobs.size(), worker_count(), [&](std::size_t j) {
        const Job& job = jobs[j];
        PointSpec p;
        p.scheme = spec.schemes[job.scheme];
        p.users = static_cast<std::size_t>(spec.user_counts[job.users_index]);
        p.seed = spec.seeds[job.seed_index];
        p.mobile = mobile;
        p.mode = mode;
        if (id == ExperimentId::ThroughputVsDistance)
            p.single_source_distance = xs[job.x_index];
        if (id == ExperimentId::Interference) {
            p.traffic = Traffic::Poisson;
            p.arrival_rate_pps = rates[job.users_index];
            p.record_tx_log = true;
        }
        results[j] = cache.get(p, ctx);
    });

    std::vector<ResultRow> rows;
    const std::size_t per_group = spec.seeds.size();
    for (std::size_t g = 0; g < jobs.size(); g += per_group) {
        const Job& job = jobs[g];
        const int users = spec.user_counts[job.users_index];
        auto emit = [&](double x, auto metric) {
            std::vector<double> v;
            for (std::size_t k = 0; k < per_group; ++k)
                v.push_back(metric(results[g + k]));
            const MeanCi ci = mean_confidence(v, 0.90);
            rows.push_back({experiment_name(id), scheme_name(spec.schemes[job.scheme]), users, x, ci.mean,
                            ci.half_width, per_group});
        };
        switch (id) {
        case ExperimentId::ThroughputVsDistance:
            emit(xs[job.x_index], [](const PointResult& r) { return r.source_throughput_mbps; });
            break;
        case ExperimentId::AggregateStatic:
        case ExperimentId::AggregateMobile:
        case ExperimentId::NoRtsStatic:
        case ExperimentId::NoRtsMobile:
            emit(users, [](const PointResult& r) { return r.throughput_mbps; });
            break;
        case ExperimentId::DelayStatic:
        case ExperimentId::DelayMobile:
            emit(users, [](const PointResult& r) { return r.mean_delay_ms; });
            break;
        case ExperimentId::Interference:
            for (std::size_t d = 0; d < cfg.probe_distances.size(); ++d)
                emit(cfg.probe_distances[d], [d](const PointResult& r) { return r.probe_dbm[d]; });
            break;
        }
    }
    return rows;
}

inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, Context& ctx)
{
    PointCache cache;
    return run_experiment(spec, ctx, cache);
}

enum class OutputFormat { Csv, Json };

inline OutputFormat parse_format(const std::string& s)
{
    if (s == "csv")
        return OutputFormat::Csv;
    if (s == "json")
        return OutputFormat::Json;
    throw ValidationError("format", "format must be csv or json");
}

inline constexpr const char* kCsvHeader = "experiment,scheme,N,x,value,ci,seeds";

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string results_to_csv(const std::vector<ResultRow>& rows)
{
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rows)
        out += r.experiment + ',' + r.scheme + ',' + std::to_string(r.n) + ',' + format_double(r.x) + ',' +
               format_double(r.value) + ',' + format_double(r.ci) + ',' + std::to_string(r.seeds) + '\n';
    return out;
}

inline nlohmann::json results_to_json(const std::vector<ResultRow>& rows)
{
    nlohmann::json j;
    j["format"] = "sticmac-results";
    j["version"] = 1;
    j["columns"] = {"experiment", "scheme", "N", "x", "value", "ci", "seeds"};
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"experiment", r.experiment},
                             {"scheme", r.scheme},
                             {"N", r.n},
                             {"x", r.x},
                             {"value", r.value},
                             {"ci", r.ci},
                             {"seeds", r.seeds}});
    return j;
}

inline std::vector<ResultRow> results_from_json(const nlohmann::json& j)
{
    std::vector<ResultRow> rows;
    for (const auto& r : j.at("rows"))
        rows.push_back({r.at("experiment").get<std::string>(), r.at("scheme").get<std::string>(), r.at("N").get<int>(),
                        r.at("x").get<double>(), r.at("value").get<double>(), r.at("ci").get<double>(),
                        r.at("seeds").get<std::size_t>()});
    return rows;
}

inline std::vector<ResultRow> results_from_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw Error("results CSV has an unexpected header");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');)
            f.push_back(cell);
        if (f.size() != 7)
            throw Error("results CSV row has " + std::to_string(f.size()) + " fields");
        rows.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5]),
                        static_cast<std::size_t>(std::stoull(f[6]))});
    }
    return rows;
}

// Writes one file per experiment into `dir`; returns the paths written.
inline std::vector<std::filesystem::path> emit_results(const std::vector<ResultRow>& rows, OutputFormat format,
                                                       const std::filesystem::path& dir)
{
    if (rows.empty())
        throw ValidationError("rows", "no result rows to write");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::map<std::string, std::vector<ResultRow>> by_experiment;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        if (!by_experiment.contains(r.experiment))
            order.push_back(r.experiment);
        by_experiment[r.experiment].push_back(r);
    }
    std::vector<std::filesystem::path> written;
    for (const auto& name : order) {
        const auto path = dir / (name + (format == OutputFormat::Csv ? ".csv" : ".json"));
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw Error("cannot write " + path.string());
        if (format == OutputFormat::Csv)
            out << results_to_csv(by_experiment[name]);
        else
            out << results_to_json(by_experiment[name]).dump(2) << '\n';
        if (!out)
            throw Error("failed writing " + path.string());
        written.push_back(path);
    }
    return written;
}

} // namespace sticmac
