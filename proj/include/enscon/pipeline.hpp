#pragma once

// End-to-end plumbing shared by the CLI, the verify command, and the
// acceptance suite: synthesis -> simulation -> statistics, plus the CSV /
// metadata artifacts each stage emits.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "enscon/config.hpp"
#include "enscon/csv.hpp"
#include "enscon/stats.hpp"

namespace enscon {

struct SynthesisArtifacts {
    TimeGrid tgrid;
    ParameterGrid pgrid;
    OperatorFactorization fact;
    TargetVector target;
    ControlSignal control;
    ControllabilityDiagnostic diagnostic;
    double residual = 0.0;        // ||W g* - xi||
    double condition_ratio = 0.0; // s_1 / s_(used)
    std::vector<Mat> phi_t0;      // per beta: Phi(T, 0, beta_j)
    Mat predicted_mean_error;     // P x n rows: Phi(T,0) * (block_j of (W g* - xi))
    SvdDefects defects{};         // filled when compute_defects is set
    long op_rows = 0, op_cols = 0;
    double wall_seconds = 0.0;
};

struct SynthesisOptions {
    std::optional<int> q;
    double max_condition = 1e4;
    TransitionOptions transition;
    int threads = 0;
    bool compute_defects = false;
    bool validate_entries = true; // full finite sweep of the expressions
};

inline SynthesisArtifacts run_synthesis(const EnsembleSystem& sys, const TimeGrid& tgrid,
                                        const ParameterGrid& pgrid,
                                        const SynthesisOptions& opts = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    const int P = pgrid.count();
    if (static_cast<long>(sys.state_dim) * P > static_cast<long>(sys.input_dim) * tgrid.steps)
        throw OverdeterminedGrid(sys.state_dim * P, sys.input_dim * tgrid.steps);
    if (opts.validate_entries) {
        sys.validate();
        parallel_for(P, opts.threads, [&](long j) {
            auto beta = pgrid.point(static_cast<int>(j));
            sys.x0_at(beta);
            sys.xf_at(beta);
            for (int k = 0; k <= tgrid.steps; ++k) evaluate_matrices(sys, tgrid.node(k), beta);
        });
    }

    SynthesisArtifacts art;
    art.tgrid = tgrid;
    art.pgrid = pgrid;

    std::vector<TransitionTable> tables(static_cast<std::size_t>(P));
    parallel_for(P, opts.threads, [&](long j) {
        tables[static_cast<std::size_t>(j)] =
            transition_table(sys, tgrid, pgrid.point(static_cast<int>(j)), opts.transition);
    });
    art.phi_t0.reserve(static_cast<std::size_t>(P));
    for (const auto& t : tables) art.phi_t0.push_back(t.phiT0);

    art.target = target_vector(sys, pgrid, tables, tgrid);
    {
        Mat W = assemble_operator(sys, tgrid, pgrid, tables, opts.threads);
        tables.clear();
        tables.shrink_to_fit();
        art.op_rows = W.rows();
        art.op_cols = W.cols();
        art.fact = factorize(W);
        art.fact.input_dim = sys.input_dim;
        art.fact.delta = tgrid.delta;
        if (opts.q && (*opts.q < 1 || *opts.q > P))
            throw ConfigError("q must satisfy 1 <= q <= P (P = " + std::to_string(P) + ")");
        art.fact.q = opts.q ? *opts.q
                            : select_rank(art.fact.s, sys.input_dim, opts.max_condition, P);
        if (opts.compute_defects) art.defects = svd_defects(W, art.fact);
    }

    art.control = synthesize_control(art.fact, art.target, tgrid);
    art.residual = synthesis_residual(art.fact, art.target);
    art.diagnostic = controllability_diagnostic(art.fact, art.target);
    const int used = art.fact.used_triples();
    art.condition_ratio = used > 0 ? art.fact.s[0] / art.fact.s[used - 1] : 0.0;

    const int n = sys.state_dim;
    art.predicted_mean_error.resize(P, n);
    {
        Vec proj = art.fact.U.leftCols(used) *
                   (art.fact.U.leftCols(used).transpose() * art.target.xi);
        Vec block_resid = proj - art.target.xi; // W g* - xi
        for (int j = 0; j < P; ++j)
            art.predicted_mean_error.row(j) =
                (art.phi_t0[static_cast<std::size_t>(j)] *
                 block_resid.segment(static_cast<Eigen::Index>(j) * n, n))
                    .transpose();
    }
    art.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return art;
}

/// Terminal states for trials x parameter grid; terminals[j] has one trial
/// per row. Stream ids are (j * trials + trial), so results are independent
/// of scheduling.
inline std::vector<Mat> run_ensemble_simulation(const EnsembleSystem& sys,
                                                const ParameterGrid& pgrid,
                                                const ControlSignal* control, Scheme scheme,
                                                double h, int trials, std::uint64_t seed,
                                                int threads = 0) {
    const int P = pgrid.count();
    std::vector<Mat> terminals(static_cast<std::size_t>(P));
    for (auto& m : terminals) m.resize(trials, sys.state_dim);
    parallel_for(static_cast<long>(P) * trials, threads, [&](long idx) {
        const int j = static_cast<int>(idx / trials);
        const int i = static_cast<int>(idx % trials);
        const auto sample = simulate(sys, control, pgrid.point(j), scheme, h, seed,
                                     static_cast<std::uint64_t>(idx));
        terminals[static_cast<std::size_t>(j)].row(i) = sample.terminal.transpose();
    });
    return terminals;
}

inline void write_terminals_csv(const std::filesystem::path& path, const ParameterGrid& pgrid,
                                const std::vector<Mat>& terminals) {
    CsvWriter w(path);
    std::vector<std::string> head{"trial"};
    if (pgrid.dim() == 1) head.push_back("beta");
    else
        for (int i = 1; i <= pgrid.dim(); ++i) head.push_back("beta" + std::to_string(i));
    const int n = terminals.empty() ? 0 : static_cast<int>(terminals[0].cols());
    for (int i = 1; i <= n; ++i) head.push_back("x" + std::to_string(i));
    w.header(head);
    std::vector<double> row;
    for (int j = 0; j < pgrid.count(); ++j) {
        const Mat& block = terminals[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < block.rows(); ++i) {
            row.clear();
            row.push_back(static_cast<double>(i));
            for (int d = 0; d < pgrid.dim(); ++d) row.push_back(pgrid.points(j, d));
            for (Eigen::Index c = 0; c < block.cols(); ++c) row.push_back(block(i, c));
            w.row(row);
        }
    }
    w.close();
}

inline void write_stats_csv(const std::filesystem::path& path, const ParameterGrid& pgrid,
                            const EnsembleStatistics& stats) {
    CsvWriter w(path);
    const int n = stats.per_beta.empty() ? 0
                                         : static_cast<int>(stats.per_beta[0].mean_terminal.size());
    std::vector<std::string> head;
    if (pgrid.dim() == 1) head.push_back("beta");
    else
        for (int i = 1; i <= pgrid.dim(); ++i) head.push_back("beta" + std::to_string(i));
    for (int i = 1; i <= n; ++i) head.push_back("meanx" + std::to_string(i));
    head.insert(head.end(), {"mse", "mse_se", "mse_theory"});
    w.header(head);
    std::vector<double> row;
    for (int j = 0; j < pgrid.count(); ++j) {
        const auto& b = stats.per_beta[static_cast<std::size_t>(j)];
        row.clear();
        for (int d = 0; d < pgrid.dim(); ++d) row.push_back(pgrid.points(j, d));
        for (int i = 0; i < n; ++i) row.push_back(b.mean_terminal[i]);
        row.push_back(b.mse_empirical);
        row.push_back(b.mse_se);
        row.push_back(b.mse_theory);
        w.row(row);
    }
    w.raw_row({"J1", "J2_emp", "J2_theory"});
    w.row({stats.J1, stats.J2_empirical, stats.J2_theory});
    w.close();
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::string& value_name,
                            const std::vector<SweepPoint>& points) {
    CsvWriter w(path);
    w.header({value_name, "mse", "mse_se", "mse_theory"});
    for (const auto& p : points) w.row({p.value, p.mse_empirical, p.mse_se, p.mse_theory});
    w.close();
}

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const TrajectorySample& sample) {
    CsvWriter w(path);
    std::vector<std::string> head{"t"};
    const int n = sample.states.empty() ? 0 : static_cast<int>(sample.states[0].size());
    for (int i = 1; i <= n; ++i) head.push_back("x" + std::to_string(i));
    w.header(head);
    std::vector<double> row;
    for (std::size_t i = 0; i < sample.times.size(); ++i) {
        row.clear();
        row.push_back(sample.times[i]);
        for (int c = 0; c < n; ++c) row.push_back(sample.states[i][c]);
        w.row(row);
    }
    w.close();
}

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline void write_run_meta(const std::filesystem::path& path, const RunConfig& config,
                           const Json& results) {
    Json meta;
    meta["config"] = config_to_json(config);
    meta["results"] = results;
    meta["timestamp"] = iso_timestamp();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << meta.dump(2) << '\n';
}

inline void write_plot_script(const std::filesystem::path& path, int input_dim, bool with_stats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "# gnuplot script; run from the output directory\n"
           "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set terminal pngcairo size 900,600\n"
           "set output 'control.png'\n"
           "set xlabel 't'\n"
           "set ylabel 'u(t)'\n"
           "plot";
    for (int c = 1; c <= input_dim; ++c)
        out << (c > 1 ? ", " : " ") << "'control.csv' using 1:" << c + 1 << " with lines";
    out << "\n";
    if (with_stats) {
        out << "set output 'mse.png'\n"
               "set xlabel 'beta'\n"
               "set ylabel 'terminal MSE'\n"
               "plot 'stats.csv' using 1:(column('mse')) with points pt 2, "
               "'stats.csv' using 1:(column('mse_theory')) with lines\n";
    }
    out.close();
}

} // namespace enscon
