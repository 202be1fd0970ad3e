// Command-line front end: synthesize minimum-norm ensemble controls, simulate
// the controlled stochastic systems, and verify the built-in examples.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "enscon/pipeline.hpp"
#include "enscon/verify.hpp"

namespace fs = std::filesystem;
using namespace enscon;

namespace {

struct CommonArgs {
    std::string preset;
    std::string config_path;
    std::string out_dir;
    int threads = 0;
    std::optional<int> q;
    std::optional<double> max_condition;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scheme;
    std::optional<double> h;
    bool no_stats = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool sim_flags) {
    cmd->set_help_flag("--help", "print usage");
    cmd->add_option("--preset", args.preset, "built-in example name (see `enscon example list`)");
    cmd->add_option("--config", args.config_path, "YAML or JSON config file (or a run_meta.json)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--threads", args.threads, "worker thread cap (default: machine parallelism)");
    cmd->add_option("--q", args.q, "singular triples per input channel (default: condition rule)");
    cmd->add_option("--max-condition", args.max_condition,
                    "condition-ratio limit s1/s_mq for automatic rank selection");
    if (sim_flags) {
        cmd->add_option("--trials", args.trials, "Monte Carlo sample paths per parameter point");
        cmd->add_option("--seed", args.seed, "RNG seed");
        cmd->add_option("--scheme", args.scheme, "integration scheme: rk4|em|sri15|poisson");
        cmd->add_option("--h", args.h, "simulation step size");
        cmd->add_flag("--no-stats", args.no_stats, "skip statistics (allows --trials 1)");
    }
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) {
        cfg = load_config_file(args.config_path);
    } else if (!args.preset.empty()) {
        Json j;
        j["preset"] = args.preset;
        cfg = config_from_json(j);
    } else {
        throw ConfigError("either --preset or --config is required");
    }
    if (args.q) cfg.q = *args.q;
    if (args.max_condition) cfg.max_condition = *args.max_condition;
    if (args.trials) cfg.trials = *args.trials;
    if (args.seed) cfg.seed = *args.seed;
    if (args.scheme) cfg.scheme = scheme_from_name(*args.scheme);
    if (args.h) cfg.sim_step = *args.h;
    if (args.no_stats) cfg.no_stats = true;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    cfg.validate();
    return cfg;
}

SynthesisArtifacts synthesize_from_config(const RunConfig& cfg, int threads) {
    SynthesisOptions opts;
    opts.q = cfg.q;
    opts.max_condition = cfg.max_condition;
    opts.transition.substeps = cfg.transition_substeps;
    opts.threads = threads;
    return run_synthesis(cfg.system, cfg.time_grid(), cfg.parameter_grid(), opts);
}

Json synthesis_results_json(const SynthesisArtifacts& art) {
    Json r;
    r["q"] = art.fact.q;
    r["used_triples"] = art.fact.used_triples();
    r["numerical_rank"] = art.fact.rank;
    r["residual"] = art.residual;
    r["condition_ratio"] = art.condition_ratio;
    r["range_residual"] = art.diagnostic.residual;
    r["control_l2_norm"] = std::sqrt(art.control.l2_norm_sq());
    r["operator_rows"] = art.op_rows;
    r["operator_cols"] = art.op_cols;
    // 1-based singular-triple indices per input channel (interleaved view).
    Json channels = Json::array();
    for (const auto& idx : per_channel_triples(art.fact)) {
        Json ch = Json::array();
        for (int i : idx) ch.push_back(i + 1);
        channels.push_back(ch);
    }
    r["channel_triples"] = channels;
    r["wall_seconds"] = art.wall_seconds;
    r["control_extension"] = "zero";
    return r;
}

int cmd_synthesize(const CommonArgs& args) {
    RunConfig cfg = resolve_config(args);
    const int threads = args.threads > 0 ? args.threads : 0;
    SynthesisArtifacts art = synthesize_from_config(cfg, threads);
    fs::path dir(cfg.out_dir);
    write_synthesis_outputs(dir, art);
    if (cfg.emit_plot_script) write_plot_script(dir / "plot.gp", cfg.system.input_dim, false);
    write_run_meta(dir / "run_meta.json", cfg, synthesis_results_json(art));
    std::cout << "synthesized control: q=" << art.fact.q << " (" << art.fact.used_triples()
              << " triples), residual " << art.residual << ", s1/s_mq " << art.condition_ratio
              << "\nwrote " << (dir / "control.csv").string() << std::endl;
    return 0;
}

int cmd_simulate(const CommonArgs& args, const std::string& control_path, bool zero_control) {
    RunConfig cfg = resolve_config(args);
    const int threads = args.threads > 0 ? args.threads : 0;
    if (cfg.trials < 2 && !cfg.no_stats)
        throw InsufficientTrials(cfg.trials);

    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    ParameterGrid pgrid = cfg.parameter_grid();

    std::optional<ControlSignal> control;
    Json results;
    if (zero_control) {
        results["control"] = "zero";
    } else if (!control_path.empty()) {
        control = read_control_csv(control_path);
        if (control->input_dim != cfg.system.input_dim)
            throw DimensionMismatch("control file has " + std::to_string(control->input_dim) +
                                    " channels, system expects " +
                                    std::to_string(cfg.system.input_dim));
        results["control"] = control_path;
    } else {
        SynthesisArtifacts art = synthesize_from_config(cfg, threads);
        write_synthesis_outputs(dir, art);
        results = synthesis_results_json(art);
        control = std::move(art.control);
    }

    const ControlSignal* u = control ? &*control : nullptr;
    auto terminals = run_ensemble_simulation(cfg.system, pgrid, u, cfg.scheme, cfg.sim_step,
                                             cfg.trials, cfg.seed, threads);
    write_terminals_csv(dir / "terminals.csv", pgrid, terminals);

    if (!cfg.no_stats) {
        const int P = pgrid.count();
        Vec theory(P);
        parallel_for(P, threads, [&](long j) {
            theory[j] = theoretical_mse(cfg.system, cfg.system.horizon,
                                        pgrid.point(static_cast<int>(j)));
        });
        auto stats = monte_carlo_stats(
            terminals, [&](std::span<const double> b) { return cfg.system.xf_at(b); }, pgrid,
            theory);
        write_stats_csv(dir / "stats.csv", pgrid, stats);
        results["J1"] = stats.J1;
        results["J2_empirical"] = stats.J2_empirical;
        results["J2_theory"] = stats.J2_theory;
    }
    if (cfg.dump_trajectories) {
        SimOptions rec;
        rec.record_path = true;
        for (int j = 0; j < pgrid.count(); ++j)
            for (int i = 0; i < cfg.trials; ++i) {
                auto sample = simulate(cfg.system, u, pgrid.point(j), cfg.scheme, cfg.sim_step,
                                       cfg.seed,
                                       static_cast<std::uint64_t>(j) * cfg.trials +
                                           static_cast<std::uint64_t>(i),
                                       rec);
                write_trajectory_csv(dir / ("trajectory_b" + std::to_string(j) + "_t" +
                                            std::to_string(i) + ".csv"),
                                     sample);
            }
    }
    if (cfg.emit_plot_script)
        write_plot_script(dir / "plot.gp", cfg.system.input_dim, !cfg.no_stats);
    write_run_meta(dir / "run_meta.json", cfg, results);
    std::cout << "simulated " << cfg.trials << " paths x " << pgrid.count()
              << " parameter points; wrote " << (dir / "terminals.csv").string() << std::endl;
    return 0;
}

int cmd_verify(const std::string& preset, const CommonArgs& args) {
    VerifyOptions vopts;
    if (args.seed) vopts.seed = *args.seed;
    vopts.threads = args.threads;
    vopts.out_dir = args.out_dir.empty() ? fs::path("out") / ("verify-" + preset)
                                         : fs::path(args.out_dir);
    VerifyReport rep = verify_preset(preset, vopts);
    Json j;
    j["preset"] = rep.preset;
    Json checks = Json::array();
    for (const auto& c : rep.checks) {
        std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << c.detail << "\n";
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    j["checks"] = checks;
    j["all_pass"] = rep.all_pass();
    std::ofstream out(vopts.out_dir / "verify_report.json", std::ios::binary);
    out << j.dump(2) << '\n';
    std::cout << (rep.all_pass() ? "verification passed" : "verification FAILED") << std::endl;
    return rep.all_pass() ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble control synthesis for stochastic linear systems"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print usage"); // frees -h / --h for the step size

    CommonArgs syn_args, sim_args, ver_args;
    std::string control_path, verify_preset_name;
    bool zero_control = false;

    CLI::App* syn = app.add_subcommand("synthesize", "assemble the operator and solve for u*");
    add_common_flags(syn, syn_args, false);

    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo simulation under a control");
    add_common_flags(sim, sim_args, true);
    sim->add_option("--control", control_path, "read the control from a control.csv");
    sim->add_flag("--zero-control", zero_control, "simulate the uncontrolled system");

    CLI::App* ver = app.add_subcommand("verify", "run the quantitative checks for a preset");
    ver->add_option("preset", verify_preset_name, "preset name")->required();
    ver->add_option("--out", ver_args.out_dir, "output directory");
    ver->add_option("--seed", ver_args.seed, "RNG seed");
    ver->add_option("--threads", ver_args.threads, "worker thread cap");

    CLI::App* ex = app.add_subcommand("example", "built-in example systems");
    CLI::App* ex_list = ex->add_subcommand("list", "list available presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        if (syn->parsed()) return cmd_synthesize(syn_args);
        if (sim->parsed()) return cmd_simulate(sim_args, control_path, zero_control);
        if (ver->parsed()) return cmd_verify(verify_preset_name, ver_args);
        if (ex->parsed() && ex_list->parsed()) {
            for (const auto& name : builtin_example_names()) {
                Preset p = builtin_example(name);
                std::printf("%-20s n=%d m=%d k=%d T=%g N=%d P=%d q=%s  %s\n", name.c_str(),
                            p.system.state_dim, p.system.input_dim, p.system.noise_dim,
                            p.system.horizon, p.tgrid.steps, p.pgrid.count(),
                            p.recommended_q ? std::to_string(*p.recommended_q).c_str() : "auto",
                            p.description.c_str());
            }
            return 0;
        }
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.error_class() == ErrorClass::Config ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
