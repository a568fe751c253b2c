#include "shared_context.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace sticmac;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text)
{
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << text;
    return path;
}

std::string field_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "";
}

std::vector<ResultRow> sample_rows()
{
    return {{"aggregate_static", "sticmac_cs", 48, 48, 7.123456789012345, 0.1, 5},
            {"aggregate_static", "direct", 8, 8, 1.0 / 3.0, 0.0, 5},
            {"interference", "dstc", 24, 250, -87.5, 1e-17, 12}};
}

} // namespace

TEST(Harness, ConfigDefaults)
{
    const SimConfig c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.adapt.gamma, 0.05);
    EXPECT_EQ(c.budget.edge_snr, 1.4);
    EXPECT_EQ(c.budget.path_loss_exponent, 3.0);
    EXPECT_EQ(c.budget.cell_radius_m, 100.0);
    EXPECT_EQ(c.cw_min, 15);
    EXPECT_EQ(c.cw_max, 1023);
    EXPECT_EQ(c.pdu_bytes, 1500u);
    EXPECT_EQ(c.seeds, 5u);
    EXPECT_EQ(c.mobility.v_min, 1.0);
    EXPECT_EQ(c.mobility.v_max, 2.0);
    EXPECT_EQ(c.schemes.size(), 5u);
    const auto empty = write_temp("sticmac_empty.json", "  \n");
    EXPECT_EQ(load_config(empty).adapt.gamma, 0.05);
    std::filesystem::remove(empty);
}

TEST(Harness, ConfigOverridesAndErrors)
{
    const SimConfig c = config_from_json(nlohmann::json::parse(R"({"mobility": {"v_max": 3.5}, "seeds": 8})"));
    EXPECT_EQ(c.mobility.v_max, 3.5);
    EXPECT_EQ(c.seeds, 8u);

    try {
        config_from_json(nlohmann::json::parse(R"({"gamma": 1.5})"));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "gamma");
        EXPECT_STREQ(e.what(), "gamma out of (0,1)");
    }
    EXPECT_NE(field_of([] { config_from_json(nlohmann::json::parse(R"({"gama": 0.1})")); }), "");
    EXPECT_EQ(field_of([] { config_from_json(nlohmann::json::parse(R"({"seeds": 2})")); }), "seeds");
    EXPECT_EQ(field_of([] { config_from_json(nlohmann::json::parse(R"({"mobility": {"v_min": -1}})")); }), "v_min");
    EXPECT_EQ(field_of([] { config_from_json(nlohmann::json::parse(R"({"schemes": []})")); }), "schemes");
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"schemes": ["telepathy"]})")), ValidationError);
    const auto bad = write_temp("sticmac_bad.json", "{ not json");
    EXPECT_EQ(field_of([&] { load_config(bad); }), "config");
    std::filesystem::remove(bad);
}

TEST(Harness, NamesRoundTrip)
{
    for (auto s : all_schemes())
        EXPECT_EQ(parse_scheme(scheme_name(s)), s);
    for (auto e : all_experiments())
        EXPECT_EQ(parse_experiment(experiment_name(e)), e);
    EXPECT_THROW(parse_experiment("fig99"), ValidationError);
    EXPECT_THROW(parse_format("xml"), ValidationError);
}

TEST(Harness, CsvRoundTrip)
{
    const auto rows = sample_rows();
    const std::string csv = results_to_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,scheme,N,x,value,ci,seeds");
    EXPECT_EQ(results_from_csv(csv), rows);
    EXPECT_THROW(results_from_csv("a,b\n"), Error);
}

TEST(Harness, JsonRoundTrip)
{
    const auto rows = sample_rows();
    const auto j = results_to_json(rows);
    EXPECT_EQ(j["format"], "sticmac-results");
    EXPECT_EQ(results_from_json(nlohmann::json::parse(j.dump())), rows);
}

TEST(Harness, EmitWritesOneFilePerExperiment)
{
    const auto dir = std::filesystem::temp_directory_path() / "sticmac_emit";
    std::filesystem::remove_all(dir);
    const auto paths = emit_results(sample_rows(), OutputFormat::Csv, dir);
    ASSERT_EQ(paths.size(), 2u);
    EXPECT_EQ(paths[0].filename(), "aggregate_static.csv");
    std::ifstream in(paths[1]);
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(results_from_csv(ss.str()).size(), 1u);
    std::filesystem::remove_all(dir);
}

TEST(Harness, ConfidenceIntervalShrinksWithSeeds)
{
    Rng rng(3);
    std::normal_distribution<double> n(5.0, 1.0);
    std::vector<double> xs;
    for (int i = 0; i < 12; ++i)
        xs.push_back(n(rng));
    const auto three = mean_confidence(std::span<const double>(xs.data(), 3));
    const auto twelve = mean_confidence(xs);
    EXPECT_LT(twelve.half_width, three.half_width);
    // t quantile for 2 dof at 90%: 2.919986
    RunningStats s;
    for (int i = 0; i < 3; ++i)
        s.add(xs[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(three.half_width, 2.919986 * s.std_error(), 1e-5);
}

TEST(Harness, SimulatePointIsDeterministic)
{
    Context& ctx = shared_context();
    PointSpec p;
    p.scheme = Scheme::SticmacCs;
    p.users = 8;
    p.seed = 21;
    SimConfig short_run = ctx.config();
    short_run.duration_s = 0.3;
    Context local(short_run, STICMAC_DATA_DIR);
    const auto a = simulate_point(p, local);
    const auto b = simulate_point(p, local);
    EXPECT_EQ(a.throughput_mbps, b.throughput_mbps);
    EXPECT_EQ(a.mean_delay_ms, b.mean_delay_ms);
    EXPECT_GT(a.throughput_mbps, 0.0);
    p.seed = 22;
    EXPECT_NE(simulate_point(p, local).throughput_mbps, a.throughput_mbps);
}

TEST(Harness, SingleSourcePlacement)
{
    const SimConfig cfg;
    PointSpec p;
    p.users = 10;
    p.seed = 4;
    p.single_source_distance = 70.0;
    const auto pos = point_positions(p, cfg);
    ASSERT_EQ(pos.size(), 10u);
    EXPECT_NEAR(norm(pos[0]), 70.0, 1e-9);
    for (const auto& q : pos)
        EXPECT_LE(norm(q), 100.0);
}
