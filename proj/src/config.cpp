#include "mfp/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mfp/errors.hpp"

namespace mfp {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

json coefficients_json(const ModelParams& p) {
    return json{{"a", p.a},           {"abar", p.abar},   {"kappa", p.kappa}, {"kappa2", p.kappa2},
                {"b", p.b},           {"gamma", p.gamma}, {"lambda", p.lambda}, {"w", p.w},
                {"sigma", p.sigma},   {"sigma_u", p.sigma_u}, {"sigma_x", p.sigma_x}, {"sigma_m", p.sigma_m},
                {"tau", p.tau},       {"r", p.r},         {"c", p.c},         {"cbar", p.cbar},
                {"c2", p.c2},         {"cxm", p.cxm},     {"s", p.s},         {"sbar", p.sbar},
                {"s2", p.s2},         {"s22", p.s22}};
}

void read_coefficients(const json& j, ModelParams& p) {
    json known = coefficients_json(p);
    std::set<std::string> keys;
    for (auto it = known.begin(); it != known.end(); ++it) keys.insert(it.key());
    only_keys(j, keys, "coefficients");
    read(j, "a", p.a);
    read(j, "abar", p.abar);
    read(j, "kappa", p.kappa);
    read(j, "kappa2", p.kappa2);
    read(j, "b", p.b);
    read(j, "gamma", p.gamma);
    read(j, "lambda", p.lambda);
    read(j, "w", p.w);
    read(j, "sigma", p.sigma);
    read(j, "sigma_u", p.sigma_u);
    read(j, "sigma_x", p.sigma_x);
    read(j, "sigma_m", p.sigma_m);
    read(j, "tau", p.tau);
    read(j, "r", p.r);
    read(j, "c", p.c);
    read(j, "cbar", p.cbar);
    read(j, "c2", p.c2);
    read(j, "cxm", p.cxm);
    read(j, "s", p.s);
    read(j, "sbar", p.sbar);
    read(j, "s2", p.s2);
    read(j, "s22", p.s22);
}

json control_set_json(const ControlSet& u) {
    if (u.kind == ControlSet::Kind::Finite) return json{{"kind", "finite"}, {"points", u.points}};
    return json{{"kind", "interval"}, {"lo", u.lo}, {"hi", u.hi}, {"grid_points", u.grid_points}};
}

ControlSet read_control_set(const json& j) {
    only_keys(j, {"kind", "points", "lo", "hi", "grid_points"}, "control_set");
    std::string kind = "interval";
    read(j, "kind", kind);
    if (kind == "finite") {
        std::vector<double> pts;
        read(j, "points", pts);
        if (pts.empty()) throw ConfigError("finite control set needs points");
        return ControlSet::finite(pts);
    }
    if (kind != "interval") throw ConfigError("control_set kind must be 'finite' or 'interval'");
    double lo = -10, hi = 10;
    int n = 41;
    read(j, "lo", lo);
    read(j, "hi", hi);
    read(j, "grid_points", n);
    if (!(lo < hi)) throw ConfigError("control_set needs lo < hi");
    return ControlSet::interval(lo, hi, n);
}

std::vector<double> default_u_grid() {
    std::vector<double> g;
    for (int j = 0; j <= 40; ++j) g.push_back(-2.0 + 0.1 * j);
    return g;
}

} // namespace

void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (c.N < 2) fail("N must be at least 2");
    if (c.M < 1) fail("M must be positive");
    if (!(c.T > 0) || !std::isfinite(c.T)) fail("T must be positive");
    if (!std::isfinite(c.x0)) fail("x0 must be finite");
    if (c.params.d < 1 || c.params.d > 2) fail("d must be 1 or 2");
    if (c.control.kind != "constant" && c.control.kind != "riccati") fail("control kind must be constant or riccati");
    if (!(c.spike_t0 >= 0 && c.spike_t0 < c.T)) fail("spike t0 must lie in [0, T)");
    if (!(c.spike_eps > 0) || c.spike_t0 + c.spike_eps > c.T + 1e-12) fail("spike must fit inside [0, T]");
    if (c.eps_grid.empty()) fail("eps_grid must not be empty");
    for (std::size_t i = 0; i < c.eps_grid.size(); ++i) {
        if (!(c.eps_grid[i] > 0)) fail("eps_grid entries must be positive");
        if (i && !(c.eps_grid[i] < c.eps_grid[i - 1])) fail("eps_grid must be strictly decreasing");
        if (c.spike_t0 + c.eps_grid[i] > c.T + 1e-12) fail("eps_grid spike runs past T");
    }
    auto on_grid = [&](double t) {
        double cells = t * c.M / c.T;
        return std::abs(cells - std::round(cells)) <= 1e-9 * std::max(1.0, cells);
    };
    if (!on_grid(c.spike_t0)) fail("spike t0 is not a grid knot");
    if (!on_grid(c.spike_eps)) fail("spike eps is not a whole number of grid cells");
    for (double e : c.eps_grid)
        if (!on_grid(e)) fail("eps_grid entry " + std::to_string(e) + " is not a whole number of grid cells");
    if (c.order_k < 1) fail("order_k must be positive");
    if (c.u_grid.empty()) fail("u_grid must not be empty");
    if (c.maxprin_knots < 1) fail("maxprin_knots must be positive");
    if (!(c.kappa > 0)) fail("kappa must be positive");
    if (!(c.tol > 0)) fail("tol must be positive");
    if (c.max_iter < 1) fail("max_iter must be positive");
    if (c.third_N < 2) fail("third_N must be at least 2");
    double pair_scalars = double(c.third_N) * c.third_N * (c.M + 1) * c.params.d * c.params.d;
    if (pair_scalars > 5.4e7) fail("third_N^2 (M+1) d^2 exceeds the dense pair-array cap of 5.4e7 scalars");
    if (c.derivative_points < 1) fail("derivative_points must be positive");
    if (c.paths_max_particles < 1) fail("paths_max_particles must be positive");
    if (c.output_dir.empty()) fail("output_dir must not be empty");
}

ExperimentConfig parse_config(const json& j) {
    only_keys(j,
              {"problem", "d", "coefficients", "control_set", "N", "M", "T", "x0", "seed", "control", "spike",
               "eps_grid", "order_k", "u_grid", "maxprin_knots", "backend", "variant", "kappa", "tol", "max_iter",
               "third_N", "derivative_points", "paths_max_particles", "output_dir"},
              "config");
    ExperimentConfig c;
    read(j, "problem", c.problem);
    c.params = preset_params(c.problem);
    read(j, "d", c.params.d);
    if (j.contains("coefficients")) read_coefficients(j.at("coefficients"), c.params);
    if (j.contains("control_set")) c.params.U = read_control_set(j.at("control_set"));
    read(j, "N", c.N);
    read(j, "M", c.M);
    read(j, "T", c.T);
    read(j, "x0", c.x0);
    read(j, "seed", c.seed);
    if (j.contains("control")) {
        const json& u = j.at("control");
        only_keys(u, {"kind", "value"}, "control");
        read(u, "kind", c.control.kind);
        read(u, "value", c.control.value);
    }
    if (j.contains("spike")) {
        const json& s = j.at("spike");
        only_keys(s, {"t0", "eps", "beta"}, "spike");
        read(s, "t0", c.spike_t0);
        read(s, "eps", c.spike_eps);
        read(s, "beta", c.beta);
    }
    read(j, "eps_grid", c.eps_grid);
    read(j, "order_k", c.order_k);
    c.u_grid = default_u_grid();
    read(j, "u_grid", c.u_grid);
    read(j, "maxprin_knots", c.maxprin_knots);
    std::string backend = to_string(c.backend), variant = to_string(c.variant);
    read(j, "backend", backend);
    read(j, "variant", variant);
    try {
        c.backend = parse_backend(backend);
        c.variant = parse_variant(variant);
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    read(j, "kappa", c.kappa);
    read(j, "tol", c.tol);
    read(j, "max_iter", c.max_iter);
    read(j, "third_N", c.third_N);
    read(j, "derivative_points", c.derivative_points);
    read(j, "paths_max_particles", c.paths_max_particles);
    read(j, "output_dir", c.output_dir);
    c.params.label = c.problem;
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
    return json{{"problem", c.problem},
                {"d", c.params.d},
                {"coefficients", coefficients_json(c.params)},
                {"control_set", control_set_json(c.params.U)},
                {"N", c.N},
                {"M", c.M},
                {"T", c.T},
                {"x0", c.x0},
                {"seed", c.seed},
                {"control", {{"kind", c.control.kind}, {"value", c.control.value}}},
                {"spike", {{"t0", c.spike_t0}, {"eps", c.spike_eps}, {"beta", c.beta}}},
                {"eps_grid", c.eps_grid},
                {"order_k", c.order_k},
                {"u_grid", c.u_grid},
                {"maxprin_knots", c.maxprin_knots},
                {"backend", to_string(c.backend)},
                {"variant", to_string(c.variant)},
                {"kappa", c.kappa},
                {"tol", c.tol},
                {"max_iter", c.max_iter},
                {"third_N", c.third_N},
                {"derivative_points", c.derivative_points},
                {"paths_max_particles", c.paths_max_particles},
                {"output_dir", c.output_dir}};
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

} // namespace mfp
