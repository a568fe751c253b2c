#include "sticmac/harness.hpp"
#include "sticmac/validation.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace sticmac;

namespace {

struct Common {
    std::string config;
    std::string data_dir = ".";
    std::string seeds;
};

SimConfig read_config(const Common& c)
{
    SimConfig cfg = c.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(c.config);
    if (!c.seeds.empty()) {
        if (c.seeds.find(',') == std::string::npos) {
            std::size_t pos = 0;
            unsigned long n = 0;
            try {
                n = std::stoul(c.seeds, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos == 0 || pos != c.seeds.size())
                throw ValidationError("seeds", "--seeds takes a count or a comma separated list");
            cfg.seeds = n;
        }
    }
    cfg.validate();
    return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s)
{
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ValidationError("seeds", "bad seed '" + item + "'");
        }
    }
    return out;
}

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "JSON configuration file");
    app->add_option("--data-dir", c.data_dir, "Directory holding the PER cache and UC table");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cooperative MAC simulator"};
    app.require_subcommand(1);

    Common common;
    std::string out_dir = "results";
    std::string format = "csv";
    std::string mode;
    std::string experiment;
    std::string seed_list;

    auto* run = app.add_subcommand("run", "Run an experiment (or 'all')");
    add_common(run, common);
    run->add_option("experiment", experiment, "Experiment id or 'all'")->required();
    run->add_option("--seeds", common.seeds, "Seed count, or a comma separated list of seeds");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--format", format, "csv or json");
    run->add_option("--mode", mode, "rts_on or rts_off");

    auto* uc = app.add_subcommand("build-uc-table", "Build the user-count lookup table");
    add_common(uc, common);
    std::string uc_out;
    uc->add_option("--out", uc_out, "Output path (default: the configured table path)");

    auto* per = app.add_subcommand("build-per-cache", "Simulate and persist every PER curve the MAC needs");
    add_common(per, common);

    auto* phy = app.add_subcommand("validate-phy", "Compare analytic SER with symbol-level simulation");
    std::uint64_t symbols = 1000000;
    phy->add_option("--symbols", symbols, "Symbols per point");

    auto* trace = app.add_subcommand("trace", "Write a frame-level trace of a short run");
    add_common(trace, common);
    std::string scheme = "sticmac_cs";
    int users = 8;
    double duration = 0.05;
    std::uint64_t seed = 1;
    bool mobile = false;
    std::string mobility_out;
    trace->add_option("--scheme", scheme, "Scheme");
    trace->add_option("--users", users, "Station count");
    trace->add_option("--duration", duration, "Seconds");
    trace->add_option("--seed", seed, "Seed");
    trace->add_flag("--mobile", mobile, "Stations move");
    trace->add_option("--mode", mode, "rts_on or rts_off");
    std::string trace_out = "trace.csv";
    trace->add_option("--out", trace_out, "Frame trace CSV path");
    trace->add_option("--mobility-out", mobility_out, "Mobility trace CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            SimConfig cfg = read_config(common);
            Context ctx(cfg, common.data_dir);
            const OutputFormat fmt = parse_format(format);
            if (common.seeds.find(',') != std::string::npos)
                seed_list = common.seeds;
            std::vector<ExperimentId> ids;
            if (experiment == "all")
                ids = all_experiments();
            else
                ids = {parse_experiment(experiment)};
            PointCache cache;
            std::vector<ResultRow> rows;
            for (auto id : ids) {
                ExperimentSpec spec = default_spec(id, cfg);
                if (!seed_list.empty())
                    spec.seeds = parse_seed_list(seed_list);
                if (!mode.empty())
                    spec.mode = parse_mac_mode(mode);
                auto r = run_experiment(spec, ctx, cache);
                rows.insert(rows.end(), r.begin(), r.end());
                std::cerr << experiment_name(id) << ": " << r.size() << " rows\n";
            }
            ctx.save_per_cache();
            for (const auto& p : emit_results(rows, fmt, out_dir))
                std::cout << p.string() << '\n';
            return 0;
        }
        if (*uc) {
            SimConfig cfg = read_config(common);
            Context ctx(cfg, common.data_dir);
            UcBuildOptions o = cfg.uc;
            o.workers = worker_count();
            const UcTable t = build_uc_table(ctx.env(), o);
            const std::filesystem::path path = uc_out.empty() ? ctx.uc_table_path() : std::filesystem::path(uc_out);
            t.save(path);
            ctx.save_per_cache();
            std::cout << path.string() << '\n';
            return 0;
        }
        if (*per) {
            SimConfig cfg = read_config(common);
            Context ctx(cfg, common.data_dir);
            ctx.warm_per_cache();
            std::cout << ctx.per_cache_path().string() << " (" << ctx.per_table().curve_count() << " curves)\n";
            return 0;
        }
        if (*phy) {
            std::printf("M,snr_db,ser_analytic,ser_simulated,stderr,z\n");
            for (int m : {2, 4, 16, 64}) {
                for (double db : {0.0, 5.0, 10.0, 15.0}) {
                    const double snr = std::pow(10.0, db / 10.0);
                    const double a = m == 2 ? q_function(std::sqrt(2.0 * snr))
                                            : ser_square_qam(mcs_for_modulation(m), snr);
                    const auto s = simulate_symbol_errors(m, snr, symbols, derive_seed(1, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(db)}));
                    std::printf("%d,%g,%.6e,%.6e,%.2e,%.2f\n", m, db, a, s.ser, s.standard_error,
                                (s.ser - a) / s.standard_error);
                }
            }
            return 0;
        }
        if (*trace) {
            SimConfig cfg = read_config(common);
            cfg.duration_s = duration;
            Context ctx(cfg, common.data_dir);
            if (users < 1)
                throw ValidationError("users", "users must be positive");
            if (!(duration > 0.0))
                throw ValidationError("duration", "duration must be positive");
            const Scheme s = parse_scheme(scheme);
            const MacMode m = mode.empty() ? MacMode::RtsOn : parse_mac_mode(mode);
            DcfConfig dcf = cfg.dcf(m);
            dcf.epoch_s = mobile ? cfg.epoch_s : 0.0;
            DcfInputs in;
            in.initial_positions = init_positions(static_cast<std::size_t>(users), cfg.budget.cell_radius_m, seed);
            in.budget = cfg.budget;
            in.frame_errors = ctx.frame_errors();
            if (mobile)
                in.mobility = cfg.mobility;
            int epoch = 0;
            in.params = [&](double, const Topology& t) {
                std::vector<TxParams> out;
                for (std::size_t i = 0; i < t.size(); ++i)
                    out.push_back(choose_params(s, t, static_cast<StationId>(i), ctx,
                                                derive_seed(seed, {stream::kOptimizer, static_cast<std::uint64_t>(epoch), i})));
                ++epoch;
                return out;
            };
            const std::string& path = trace_out;
            std::ofstream f(path);
            if (!f)
                throw Error("cannot write " + path);
            in.trace = &f;
            if (!mobility_out.empty()) {
                std::ofstream mf(mobility_out);
                if (!mf)
                    throw Error("cannot write " + mobility_out);
                write_mobility_trace(mf, in.initial_positions, cfg.mobility, seed, duration, 0.1);
            }
            DcfEngine engine(std::move(in), dcf, seed);
            const MacMetrics metrics = engine.run();
            std::cout << path << ": " << metrics.attempts << " attempts, " << metrics.throughput_mbps()
                      << " Mbps\n";
            return 0;
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error [" << e.field() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
