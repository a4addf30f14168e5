#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfp/models.hpp"
#include "mfp/regression.hpp"
#include "mfp/third_adjoint.hpp"

#include <json.hpp>

namespace mfp {

struct ControlSpec {
    std::string kind = "constant";  // constant | riccati
    double value = 0.0;             // constant level, or shift added to the Riccati feedback
};

struct ExperimentConfig {
    std::string problem = "TP1";
    ModelParams params = tp1_params();
    int N = 1000;
    int M = 80;
    double T = 1.0;
    double x0 = 1.0;
    std::uint64_t seed = 1;
    ControlSpec control;
    double spike_t0 = 0.3;
    double spike_eps = 0.05;
    double beta = 1.0;
    std::vector<double> eps_grid{0.2, 0.1, 0.05, 0.025, 0.0125};
    int order_k = 1;
    std::vector<double> u_grid;  // offsets around the reference control
    int maxprin_knots = 50;
    Backend backend = Backend::Deterministic;
    ThirdVariant variant = ThirdVariant::Plain;
    double kappa = 10.0;
    double tol = 1e-14;
    int max_iter = 50;
    int third_N = 256;  // particles per side of the product-space pair array
    int derivative_points = 100;
    int paths_max_particles = 100;
    std::string output_dir = "out";
};

// Throws ConfigError on unknown keys, wrong types or out-of-range values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);
void validate(const ExperimentConfig& c);

// FNV-1a over the canonical (key-sorted) dump of the normalized config.
std::string config_hash(const ExperimentConfig& c);
std::uint64_t fnv1a64(const std::string& s);

} // namespace mfp
