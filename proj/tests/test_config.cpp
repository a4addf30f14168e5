#include <gtest/gtest.h>

#include "mfp/config.hpp"
#include "mfp/errors.hpp"

using namespace mfp;
using nlohmann::json;

TEST(Config, DefaultsFromPreset) {
    ExperimentConfig c = parse_config(json{{"problem", "TP3"}, {"N", 50}});
    EXPECT_EQ(c.N, 50);
    EXPECT_EQ(c.params.kappa, tp3_params().kappa);
    EXPECT_EQ(c.u_grid.size(), 41u);
    EXPECT_DOUBLE_EQ(c.u_grid.front(), -2.0);
    EXPECT_EQ(c.backend, Backend::Deterministic);
}

TEST(Config, CoefficientOverridesAndControlSet) {
    ExperimentConfig c = parse_config(json::parse(R"({"problem": "TP2", "coefficients": {"b": 0.0, "tau": 0.1},
        "control_set": {"kind": "interval", "lo": -3, "hi": 3}, "d": 2})"));
    EXPECT_EQ(c.params.b, 0.0);
    EXPECT_EQ(c.params.tau, 0.1);
    EXPECT_EQ(c.params.d, 2);
    EXPECT_EQ(c.params.U.kind, ControlSet::Kind::Interval);
    EXPECT_EQ(c.params.U.hi, 3.0);
}

TEST(Config, RejectsInvalidInput) {
    auto bad = [](const char* text) { EXPECT_THROW(parse_config(json::parse(text)), ConfigError) << text; };
    bad(R"({"N": 1})");
    bad(R"({"M": 0})");
    bad(R"({"T": -1})");
    bad(R"({"problem": "TP9"})");
    bad(R"({"Nn": 10})");
    bad(R"({"coefficients": {"alpha": 1}})");
    bad(R"({"N": "many"})");
    bad(R"({"eps_grid": [0.1, 0.2]})");
    bad(R"({"M": 50, "spike": {"t0": 0.3, "eps": 0.05}})");
    bad(R"({"backend": "magic"})");
    bad(R"({"variant": "skew"})");
    bad(R"({"kappa": 0})");
    bad(R"({"u_grid": []})");
    bad(R"({"control": {"kind": "bang"}})");
    bad(R"({"third_N": 1000, "M": 200})");
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, HashIsStableUnderKeyOrder) {
    json a = json::parse(R"({"problem": "TP1", "N": 100, "seed": 3, "spike": {"t0": 0.3, "beta": 2}})");
    json b = json::parse(R"({"spike": {"beta": 2, "t0": 0.3}, "seed": 3, "N": 100, "problem": "TP1"})");
    EXPECT_EQ(config_hash(parse_config(a)), config_hash(parse_config(b)));
    EXPECT_EQ(config_hash(parse_config(a)).size(), 16u);

    json c = a;
    c["seed"] = 4;
    EXPECT_NE(config_hash(parse_config(a)), config_hash(parse_config(c)));
    json d = a;
    d["output_dir"] = "elsewhere";
    EXPECT_EQ(config_hash(parse_config(a)), config_hash(parse_config(d)));
}

TEST(Config, RoundTrip) {
    ExperimentConfig c = parse_config(json::parse(R"({"problem": "sharp", "variant": "symmetrized",
        "backend": "regression", "control": {"kind": "riccati", "value": 0.5}})"));
    ExperimentConfig r = parse_config(to_json(c));
    EXPECT_EQ(config_hash(c), config_hash(r));
    EXPECT_EQ(r.variant, ThirdVariant::Symmetrized);
    EXPECT_EQ(r.control.kind, "riccati");
}

TEST(Config, Fnv1a) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
