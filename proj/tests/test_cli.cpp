#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfp/cli.hpp"

using namespace mfp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("mfpeng_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kSmall = R"({"problem": "TP1", "N": 60, "M": 40, "seed": 3, "eps_grid": [0.2, 0.1, 0.05, 0.025],
    "spike": {"t0": 0.3, "eps": 0.05}, "third_N": 6, "derivative_points": 5, "maxprin_knots": 5,
    "control": {"kind": "riccati"}})";

RunOptions opts(const std::string& sub, const fs::path& cfg, const fs::path& out) {
    RunOptions o;
    o.subcommand = sub;
    o.config_path = cfg.string();
    o.out = out.string();
    return o;
}

} // namespace

TEST(Cli, SimulateWritesPathsAndSidecar) {
    fs::path dir = scratch("simulate");
    fs::path cfg = write_config(dir, kSmall);
    std::ostringstream out, err;
    EXPECT_EQ(run(opts("simulate", cfg, dir / "out"), out, err), 0) << err.str();
    std::string hash = config_hash(load_config(cfg.string()));
    for (const char* f : {"paths.csv", "paths.json", "report.json"}) {
        ASSERT_TRUE(fs::exists(dir / "out" / f)) << f;
        EXPECT_NE(slurp(dir / "out" / f).find(hash), std::string::npos) << f;
    }
    auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
    EXPECT_EQ(report["schema_version"], kReportSchemaVersion);
    EXPECT_TRUE(report["all_pass"].get<bool>());
    EXPECT_TRUE(report.contains("timing"));
}

TEST(Cli, OrderStudyWritesEveryQuantity) {
    fs::path dir = scratch("order");
    fs::path cfg = write_config(dir, kSmall);
    std::ostringstream out, err;
    int rc = run(opts("order-study", cfg, dir / "out"), out, err);
    EXPECT_TRUE(rc == 0 || rc == 1);
    std::string csv = slurp(dir / "out" / "slopes.csv");
    for (const char* q : {"\ndX,", "\nY,", "\nZ,", "\ndX-Y,", "\nK,"}) EXPECT_NE(csv.find(q), std::string::npos) << q;
}

TEST(Cli, FailingCheckExitsOneAndNamesIt) {
    fs::path dir = scratch("fail");
    fs::path cfg = write_config(dir, R"({"problem": "TP1", "N": 100, "M": 20, "seed": 3, "eps_grid": [0.2, 0.1],
        "control": {"kind": "riccati", "value": 0.5}, "maxprin_knots": 10})");
    std::ostringstream out, err;
    EXPECT_EQ(run(opts("maxprin", cfg, dir / "out"), out, err), 1);
    EXPECT_NE(err.str().find("maxprin/min_V_over_scale"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "out" / "maxprin.csv"));
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
    fs::path dir = scratch("usage");
    std::ostringstream out, err;
    EXPECT_EQ(run(opts("simulate", dir / "missing.json", dir / "out"), out, err), 2);
    fs::path bad = write_config(dir, R"({"N": -3})");
    EXPECT_EQ(run(opts("simulate", bad, dir / "out"), out, err), 2);
    fs::path good = write_config(dir, kSmall);
    EXPECT_EQ(run(opts("launch", good, dir / "out"), out, err), 2);
    RunOptions o = opts("simulate", good, dir / "out");
    o.workers = -1;
    EXPECT_EQ(run(o, out, err), 2);
}

TEST(Cli, SeedOverrideChangesHash) {
    fs::path dir = scratch("seed");
    fs::path cfg = write_config(dir, kSmall);
    std::ostringstream out, err;
    RunOptions o = opts("simulate", cfg, dir / "a");
    o.seed_override = 99;
    ASSERT_EQ(run(o, out, err), 0);
    auto report = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
    EXPECT_EQ(report["config"]["seed"], 99);
    EXPECT_NE(report["config_hash"].get<std::string>(), config_hash(load_config(cfg.string())));
}

TEST(Cli, AllIsDeterministicAcrossWorkers) {
    fs::path dir = scratch("all");
    fs::path cfg = write_config(dir, kSmall);
    std::ostringstream out, err;
    RunOptions a = opts("all", cfg, dir / "a"), b = opts("all", cfg, dir / "b");
    a.workers = 1;
    b.workers = 2;
    int ra = run(a, out, err), rb = run(b, out, err);
    EXPECT_EQ(ra, rb);
    for (const auto& f : fs::directory_iterator(dir / "a")) {
        std::string name = f.path().filename().string();
        if (name == "report.json") {
            auto ja = nlohmann::json::parse(slurp(f.path())), jb = nlohmann::json::parse(slurp(dir / "b" / name));
            ja.erase("timing");
            jb.erase("timing");
            EXPECT_EQ(ja, jb);
        } else {
            EXPECT_EQ(slurp(f.path()), slurp(dir / "b" / name)) << name;
        }
    }
}
