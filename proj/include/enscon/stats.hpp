#pragma once

// Theoretical minimum MSE tr C(T,beta) by quadrature, Monte Carlo terminal
// statistics, and the ensemble objectives J1 / J2.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "enscon/model.hpp"
#include "enscon/parallel.hpp"
#include "enscon/sde.hpp"
#include "enscon/transition.hpp"

namespace enscon {

/// tr C(T_eval, beta) = int_0^{T_eval} tr[Phi(T,s) G(s) M G'(s) Phi'(T,s)] ds
/// with M = I for Brownian noise and M = diag(lambda) for Poisson counters,
/// by composite trapezoid with quad_steps intervals. Zero without noise.
inline double theoretical_mse(const EnsembleSystem& sys, double t_eval,
                              std::span<const double> beta, int quad_steps = 4096,
                              const TransitionOptions& topts = {}) {
    if (sys.noise.kind == NoiseKind::None) return 0.0;
    if (quad_steps < 16) quad_steps = 16;
    const auto K = horizon_transitions(sys, t_eval, beta, quad_steps, topts);
    Vec sqrt_m = sys.noise.kind == NoiseKind::Poisson
                     ? Vec(sys.noise.intensities.cwiseSqrt())
                     : Vec(Vec::Ones(sys.noise_dim));
    const double ds = t_eval / quad_steps;
    double acc = 0.0;
    for (int j = 0; j <= quad_steps; ++j) {
        const double s = j * ds;
        const Mat G = sys.G.eval(s, beta);
        if (!G.allFinite()) throw NonFiniteEntry("G", 0, 0, s, format_beta(beta));
        const double f = (K[static_cast<std::size_t>(j)] * G * sqrt_m.asDiagonal()).squaredNorm();
        acc += (j == 0 || j == quad_steps) ? 0.5 * f : f;
    }
    return acc * ds;
}

struct BetaStatistics {
    Vec mean_terminal;
    double mse_empirical = 0.0;
    double mse_se = 0.0;
    double mse_theory = 0.0;
    int trials = 0;
};

struct EnsembleStatistics {
    std::vector<BetaStatistics> per_beta;
    double J1 = 0.0;
    double J2_empirical = 0.0;
    double J2_theory = 0.0;
};

/// Per-beta terminal mean, empirical MSE with its standard error, and the
/// quadrature-weighted aggregates:
///   J1   = sqrt( sum_j w_j ||mean_j - XF_j||^2 ),
///   J2_e = sum_j w_j mse_j,   J2_t = sum_j w_j theory_j.
/// `terminals[j]` holds one trial per row; `xf` maps beta to the target.
inline EnsembleStatistics monte_carlo_stats(
    const std::vector<Mat>& terminals,
    const std::function<Vec(std::span<const double>)>& xf, const ParameterGrid& pgrid,
    const std::optional<Vec>& mse_theory = std::nullopt) {
    const int P = pgrid.count();
    if (static_cast<int>(terminals.size()) != P)
        throw DimensionMismatch("need one terminal block per parameter sample");

    EnsembleStatistics stats;
    stats.per_beta.resize(static_cast<std::size_t>(P));
    double j1_sq = 0.0;
    for (int j = 0; j < P; ++j) {
        const Mat& block = terminals[static_cast<std::size_t>(j)];
        const int trials = static_cast<int>(block.rows());
        if (trials < 2) throw InsufficientTrials(trials);
        const Vec target = xf(pgrid.point(j));

        BetaStatistics& b = stats.per_beta[static_cast<std::size_t>(j)];
        b.trials = trials;
        b.mean_terminal = block.colwise().mean().transpose();

        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < trials; ++i) {
            const double d = (block.row(i).transpose() - target).squaredNorm();
            sum += d;
            sum_sq += d * d;
        }
        b.mse_empirical = sum / trials;
        const double var = std::max(0.0, (sum_sq - trials * b.mse_empirical * b.mse_empirical) /
                                             (trials - 1));
        b.mse_se = std::sqrt(var / trials);
        if (mse_theory) b.mse_theory = (*mse_theory)[j];

        const double w = pgrid.weights[j];
        j1_sq += w * (b.mean_terminal - target).squaredNorm();
        stats.J2_empirical += w * b.mse_empirical;
        stats.J2_theory += w * b.mse_theory;
    }
    stats.J1 = std::sqrt(j1_sq);
    return stats;
}

enum class SweepKind { Beta, Horizon };

struct SweepSpec {
    SweepKind kind = SweepKind::Beta;
    double fixed_horizon = 0.0; // Beta sweep: the evaluation horizon T
    Vec fixed_beta;             // Horizon sweep: the parameter point
    Vec values;                 // beta values (d = 1) or horizon values
};

struct SweepPoint {
    double value;
    double mse_empirical;
    double mse_se;
    double mse_theory;
};

/// Empirical-vs-theoretical MSE along a 1-d sweep. Horizon sweeps run each
/// simulation to its own T with the control zero-extended beyond its
/// synthesis horizon.
inline std::vector<SweepPoint> mse_sweep(const EnsembleSystem& sys, const ControlSignal* control,
                                         const SweepSpec& spec, int trials, Scheme scheme,
                                         double h, std::uint64_t seed, int quad_steps = 4096,
                                         int threads = 0) {
    if (trials < 2) throw InsufficientTrials(trials);
    const long n_points = spec.values.size();
    std::vector<SweepPoint> out(static_cast<std::size_t>(n_points));
    parallel_for(n_points, threads, [&](long p) {
        double t_eval;
        Vec beta;
        if (spec.kind == SweepKind::Beta) {
            t_eval = spec.fixed_horizon;
            beta = Vec::Constant(1, spec.values[p]);
        } else {
            t_eval = spec.values[p];
            beta = spec.fixed_beta;
        }
        std::span<const double> bspan{beta.data(), static_cast<std::size_t>(beta.size())};
        const Vec target = sys.xf_at(bspan);
        SimOptions opts;
        opts.horizon = t_eval;

        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < trials; ++i) {
            const std::uint64_t stream = static_cast<std::uint64_t>(p) * trials +
                                         static_cast<std::uint64_t>(i);
            const auto sample = simulate(sys, control, bspan, scheme, h, seed, stream, opts);
            const double d = (sample.terminal - target).squaredNorm();
            sum += d;
            sum_sq += d * d;
        }
        const double mean = sum / trials;
        const double var = std::max(0.0, (sum_sq - trials * mean * mean) / (trials - 1));
        out[static_cast<std::size_t>(p)] = {spec.values[p], mean, std::sqrt(var / trials),
                                            theoretical_mse(sys, t_eval, bspan, quad_steps)};
    });
    return out;
}

} // namespace enscon
