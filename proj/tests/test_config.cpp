#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "enscon/config.hpp"

using namespace enscon;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << text;
    out.close();
    return p;
}

const char* kYamlSample = R"(system:
  n: 2
  m: 2
  k: 1
  d: 1
  horizon: 1.0
  noise:
    kind: brownian
  A: ["0", "-b", "b", "0"]
  B: ["1", "0", "0", "1"]
  G: ["0.1", "0.2"]
  x0: ["1", "0"]
  xf: ["0", "0"]
  beta_bounds: [[-10.0, 10.0]]
grids:
  steps: 400
  samples: [5]
synthesis:
  q: 3
  max_condition: 1e4
simulation:
  scheme: em
  h: 0.0005
  trials: 40
  seed: 7
outputs:
  dir: out-test
  trajectories: false
  plot_script: false
)";

} // namespace

TEST_CASE("yaml config parses") {
    auto cfg = load_config_file(write_temp("enscon_sample.yaml", kYamlSample));
    REQUIRE(cfg.system.state_dim == 2);
    REQUIRE(cfg.system.noise.kind == NoiseKind::Brownian);
    REQUIRE(cfg.grid_steps == 400);
    REQUIRE(cfg.grid_samples == std::vector<int>{5});
    REQUIRE(cfg.q == 3);
    REQUIRE(cfg.scheme == Scheme::EulerMaruyama);
    REQUIRE(cfg.sim_step == 0.0005);
    REQUIRE(cfg.trials == 40);
    REQUIRE(cfg.seed == 7);
    REQUIRE(cfg.out_dir == "out-test");
    std::vector<double> beta{4.0};
    REQUIRE(cfg.system.A.eval(0.0, beta)(0, 1) == -4.0);
}

TEST_CASE("json config parses and matrix entries may be numeric") {
    const char* text = R"({
      "system": {
        "n": 1, "m": 1, "k": 1, "d": 1, "horizon": 2.0,
        "noise": {"kind": "poisson", "intensities": [3.5]},
        "A": [0], "B": [1], "G": [0.25],
        "x0": ["1"], "xf": ["0.2"],
        "beta_bounds": [[-5, 5]]
      },
      "grids": {"steps": 100, "samples": 11},
      "simulation": {"scheme": "poisson", "h": 0.01, "trials": 10, "seed": 3}
    })";
    auto cfg = load_config_file(write_temp("enscon_sample.json", text));
    REQUIRE(cfg.system.noise.kind == NoiseKind::Poisson);
    REQUIRE(cfg.system.noise.intensities[0] == 3.5);
    std::vector<double> beta{1.0};
    REQUIRE(cfg.system.A.eval(0.0, beta)(0, 0) == 0.0);
    REQUIRE(cfg.system.G.eval(0.0, beta)(0, 0) == 0.25);
    REQUIRE(cfg.scheme == Scheme::PoissonExact);
}

TEST_CASE("preset reference with overrides") {
    Json j;
    j["preset"] = "scalar-tv";
    j["grids"] = {{"steps", 500}, {"samples", 11}};
    j["simulation"] = {{"trials", 10}};
    auto cfg = config_from_json(j);
    REQUIRE(cfg.preset == "scalar-tv");
    REQUIRE(cfg.grid_steps == 500);
    REQUIRE(cfg.grid_samples == std::vector<int>{11});
    REQUIRE(cfg.trials == 10);
    REQUIRE(cfg.q == 9); // preset recommendation survives
    REQUIRE(cfg.sim_step == 1e-3);
}

TEST_CASE("run_meta documents are accepted as configs") {
    Json j;
    j["preset"] = "scalar-tv";
    j["grids"] = {{"steps", 200}, {"samples", 11}};
    auto cfg = config_from_json(j);
    Json meta;
    meta["config"] = config_to_json(cfg);
    meta["results"] = {{"residual", 1e-7}};
    meta["timestamp"] = "2026-01-01T00:00:00Z";
    auto back = config_from_json(meta);
    REQUIRE(back.grid_steps == 200);
    REQUIRE(back.grid_samples == std::vector<int>{11});
    REQUIRE(back.system.horizon == cfg.system.horizon);
}

TEST_CASE("yaml serialization round-trips every preset") {
    for (const auto& name : builtin_example_names()) {
        Json j;
        j["preset"] = name;
        auto cfg = config_from_json(j);
        auto path = write_temp("enscon_roundtrip_" + name + ".yaml", config_to_yaml(cfg));
        auto back = load_config_file(path);
        INFO("preset " << name);
        REQUIRE(back.grid_steps == cfg.grid_steps);
        REQUIRE(back.system.horizon == cfg.system.horizon);
        REQUIRE(back.system.noise.kind == cfg.system.noise.kind);
        REQUIRE(back.system.param_bounds == cfg.system.param_bounds);
        REQUIRE(back.q == cfg.q);
        REQUIRE(back.sim_step == cfg.sim_step);
        if (cfg.system.noise.kind == NoiseKind::Poisson)
            REQUIRE(back.system.noise.intensities == cfg.system.noise.intensities);
        auto entries_equal = [](const std::vector<Expr>& a, const std::vector<Expr>& b) {
            for (std::size_t i = 0; i < a.size(); ++i)
                if (!a[i].structurally_equal(b[i])) return false;
            return true;
        };
        REQUIRE(entries_equal(cfg.system.A.entries(), back.system.A.entries()));
        REQUIRE(entries_equal(cfg.system.B.entries(), back.system.B.entries()));
        REQUIRE(entries_equal(cfg.system.G.entries(), back.system.G.entries()));
        REQUIRE(entries_equal(cfg.system.x0, back.system.x0));
        REQUIRE(entries_equal(cfg.system.xf, back.system.xf));
    }
}

TEST_CASE("config validation failures") {
    // Missing system and preset.
    REQUIRE_THROWS_AS(config_from_json(Json::object()), ConfigError);

    Json j;
    j["preset"] = "scalar-tv";

    // q above the sample count.
    Json bad_q = j;
    bad_q["grids"] = {{"steps", 500}, {"samples", 4}};
    bad_q["synthesis"] = {{"q", 5}};
    REQUIRE_THROWS_AS(config_from_json(bad_q), ConfigError);

    // Overdetermined grids (n P > m N).
    Json bad_grid = j;
    bad_grid["grids"] = {{"steps", 50}, {"samples", 101}};
    REQUIRE_THROWS_AS(config_from_json(bad_grid), OverdeterminedGrid);

    // Unknown scheme.
    Json bad_scheme = j;
    bad_scheme["simulation"] = {{"scheme", "heun"}};
    REQUIRE_THROWS_AS(config_from_json(bad_scheme), ConfigError);

    // Bad expression inside a matrix.
    Json bad_expr;
    bad_expr["system"] = {{"n", 1},  {"m", 1},  {"k", 1},       {"d", 1},
                          {"horizon", 1.0},     {"A", {"qq"}},  {"B", {"1"}},
                          {"G", {"1"}},         {"x0", {"0"}},  {"xf", {"1"}},
                          {"beta_bounds", {{0, 1}}}};
    bad_expr["grids"] = {{"steps", 10}, {"samples", 2}};
    REQUIRE_THROWS_AS(config_from_json(bad_expr), UnknownIdentifier);
}
