#pragma once

// Controlled trajectory simulation for the ensemble members: deterministic
// RK4, Euler-Maruyama and a strong order-1.5 additive-noise scheme for
// Brownian systems, and exact-event jump simulation for Poisson counters.
// All schemes draw from counter-based streams, so (seed, stream) fixes the
// path bit-exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "enscon/model.hpp"
#include "enscon/rng.hpp"
#include "enscon/synthesis.hpp"

namespace enscon {

struct SimOptions {
    double horizon = 0.0;    // 0: simulate to sys.horizon
    bool record_path = false;
};

struct TrajectorySample {
    Vec beta;
    std::vector<double> times;  // filled when record_path is set
    std::vector<Vec> states;
    Vec terminal;
    std::vector<std::vector<double>> jump_times; // per counter, Poisson only
};

namespace detail {

constexpr double kBlowupLimit = 1e12;

/// Evaluates A, B, G at arbitrary times, caching matrices that are constant
/// in t (detected by three-point sampling, same heuristic as the transition
/// module). One instance per trial; the returned references alias internal
/// storage, so evaluations are not reentrant.
class SystemSampler {
public:
    SystemSampler(const EnsembleSystem& sys, std::span<const double> beta, double t_max)
        : sys_(sys), beta_(beta) {
        a_const_ = probe(sys.A, t_max, a0_);
        b_const_ = probe(sys.B, t_max, b0_);
        g_const_ = probe(sys.G, t_max, g0_);
    }

    const Mat& A(double t) {
        if (!a_const_) eval_into(sys_.A, t, a0_);
        return a0_;
    }
    const Mat& B(double t) {
        if (!b_const_) eval_into(sys_.B, t, b0_);
        return b0_;
    }
    const Mat& G(double t) {
        if (!g_const_) eval_into(sys_.G, t, g0_);
        return g0_;
    }
    bool B_is_constant() const { return b_const_; }
    std::span<const double> beta() const { return beta_; }

private:
    void eval_into(const ExprMatrix& M, double t, Mat& dest) const {
        for (int r = 0; r < M.rows(); ++r)
            for (int c = 0; c < M.cols(); ++c) dest(r, c) = M.at(r, c).eval(t, beta_);
    }

    bool probe(const ExprMatrix& M, double t_max, Mat& cached) {
        cached = M.eval(0.0, beta_);
        const Mat m1 = M.eval(0.5 * t_max, beta_);
        const Mat m2 = M.eval(0.865474 * t_max, beta_);
        for (Eigen::Index i = 0; i < cached.size(); ++i) {
            double scale = std::max({1.0, std::abs(cached(i)), std::abs(m1(i)), std::abs(m2(i))});
            if (std::abs(cached(i) - m1(i)) > 1e-14 * scale ||
                std::abs(cached(i) - m2(i)) > 1e-14 * scale)
                return false;
        }
        return true;
    }

    const EnsembleSystem& sys_;
    std::span<const double> beta_;
    bool a_const_ = false, b_const_ = false, g_const_ = false;
    Mat a0_, b0_, g0_;
};

inline void check_state(const Vec& x, double t, std::span<const double> beta) {
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kBlowupLimit)
        throw NonFiniteState(t, format_beta(beta));
}

inline Vec control_value(const ControlSignal* u, double t, int m) {
    return u ? u->value_at(t) : Vec::Zero(m);
}

inline void record(TrajectorySample& out, bool enabled, double t, const Vec& x) {
    if (!enabled) return;
    out.times.push_back(t);
    out.states.push_back(x);
}

/// Reused stage buffers so the per-step inner loop stays allocation-free.
struct Rk4Workspace {
    Vec u, bu, k1, k2, k3, k4, stage;

    Rk4Workspace(int state_dim, int input_dim)
        : u(input_dim), bu(state_dim), k1(state_dim), k2(state_dim), k3(state_dim),
          k4(state_dim), stage(state_dim) {}
};

/// RK4 over [a, b] with the control held at its value inside the segment;
/// substep count chosen so each step is at most h.
inline void rk4_segment(SystemSampler& sampler, const ControlSignal* control, Vec& x, double a,
                        double b, double h, TrajectorySample& out, bool rec, Rk4Workspace& ws) {
    ws.u = control_value(control, 0.5 * (a + b), static_cast<int>(ws.u.size()));
    const bool const_bu = sampler.B_is_constant();
    if (const_bu) ws.bu.noalias() = sampler.B(a) * ws.u;
    auto drift = [&](double t, const Vec& state, Vec& dest) {
        dest.noalias() = sampler.A(t) * state;
        if (const_bu) dest += ws.bu;
        else dest.noalias() += sampler.B(t) * ws.u;
    };
    const int nsub = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    const double step = (b - a) / nsub;
    for (int i = 0; i < nsub; ++i) {
        const double t = a + i * step;
        drift(t, x, ws.k1);
        ws.stage = x;
        ws.stage.noalias() += (0.5 * step) * ws.k1;
        drift(t + 0.5 * step, ws.stage, ws.k2);
        ws.stage = x;
        ws.stage.noalias() += (0.5 * step) * ws.k2;
        drift(t + 0.5 * step, ws.stage, ws.k3);
        ws.stage = x;
        ws.stage.noalias() += step * ws.k3;
        drift(t + step, ws.stage, ws.k4);
        ws.k1 += 2.0 * ws.k2;
        ws.k1 += 2.0 * ws.k3;
        ws.k1 += ws.k4;
        x.noalias() += (step / 6.0) * ws.k1;
        check_state(x, t + step, sampler.beta());
        record(out, rec, i + 1 == nsub ? b : t + step, x);
    }
}

inline double resolve_horizon(const EnsembleSystem& sys, const SimOptions& opts) {
    return opts.horizon > 0.0 ? opts.horizon : sys.horizon;
}

/// Number of uniform steps for the fixed-step schemes; rejects step sizes
/// that do not divide the horizon.
inline int uniform_step_count(double horizon, double h) {
    const double ratio = horizon / h;
    const int n = static_cast<int>(std::llround(ratio));
    if (n < 1 || std::abs(n * h - horizon) > 1e-12 * std::max(1.0, horizon))
        throw ConfigError("step h=" + std::to_string(h) + " must divide the horizon " +
                          std::to_string(horizon));
    return n;
}

} // namespace detail

/// Noise-free dynamics under the (piecewise-constant) control, integrated
/// with RK4 segment-by-segment so control breakpoints are always hit exactly.
inline TrajectorySample simulate_deterministic(const EnsembleSystem& sys,
                                               const ControlSignal* control,
                                               std::span<const double> beta, double h,
                                               const SimOptions& opts = {}) {
    const double T = detail::resolve_horizon(sys, opts);
    detail::SystemSampler sampler(sys, beta, T);
    detail::Rk4Workspace ws(sys.state_dim, sys.input_dim);
    TrajectorySample out;
    out.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    Vec x = sys.x0_at(beta);
    detail::record(out, opts.record_path, 0.0, x);

    if (!control) {
        detail::rk4_segment(sampler, nullptr, x, 0.0, T, h, out, opts.record_path, ws);
    } else {
        const TimeGrid& cg = control->grid;
        double t = 0.0;
        long k = 1;
        while (t < T * (1.0 - 1e-15)) {
            double next = k <= cg.steps ? std::min(cg.node(static_cast<int>(k)), T) : T;
            if (next > t)
                detail::rk4_segment(sampler, control, x, t, next, h, out, opts.record_path, ws);
            t = next;
            ++k;
        }
    }
    out.terminal = x;
    return out;
}

/// Euler-Maruyama for additive Brownian noise:
/// X_{i+1} = X_i + (A X_i + B u_i) h + G dW_i, dW_i ~ N(0, h I_k).
inline TrajectorySample simulate_brownian_em(const EnsembleSystem& sys,
                                             const ControlSignal* control,
                                             std::span<const double> beta, double h,
                                             std::uint64_t seed, std::uint64_t stream = 0,
                                             const SimOptions& opts = {}) {
    const double T = detail::resolve_horizon(sys, opts);
    const int steps = detail::uniform_step_count(T, h);
    detail::SystemSampler sampler(sys, beta, T);
    CounterRng rng(seed, stream);
    const double sqrt_h = std::sqrt(h);

    TrajectorySample out;
    out.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    Vec x = sys.x0_at(beta);
    detail::record(out, opts.record_path, 0.0, x);
    for (int i = 0; i < steps; ++i) {
        const double t = i * h;
        const Vec u = detail::control_value(control, t + 0.5 * h, sys.input_dim);
        Vec dw(sys.noise_dim);
        for (int c = 0; c < sys.noise_dim; ++c) dw[c] = sqrt_h * rng.next_normal();
        x += h * (sampler.A(t) * x + sampler.B(t) * u) + sampler.G(t) * dw;
        detail::check_state(x, t + h, beta);
        detail::record(out, opts.record_path, (i + 1) * h, x);
    }
    out.terminal = x;
    return out;
}

/// Explicit strong order-1.5 scheme for additive noise. Per step the
/// correlated pair (dW, dZ) with Var dW = h, Var dZ = h^3/3, Cov = h^2/2 is
/// drawn per component; drift is averaged over both endpoints (Heun
/// predictor) and the drift Jacobian enters through A G (dZ - h/2 dW).
inline TrajectorySample simulate_brownian_sri15(const EnsembleSystem& sys,
                                                const ControlSignal* control,
                                                std::span<const double> beta, double h,
                                                std::uint64_t seed, std::uint64_t stream = 0,
                                                const SimOptions& opts = {}) {
    const double T = detail::resolve_horizon(sys, opts);
    const int steps = detail::uniform_step_count(T, h);
    detail::SystemSampler sampler(sys, beta, T);
    CounterRng rng(seed, stream);
    const double sqrt_h = std::sqrt(h);
    const double z_scale = 0.5 * h * sqrt_h;
    const double inv_sqrt3 = 0.57735026918962576451;

    TrajectorySample out;
    out.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    Vec x = sys.x0_at(beta);
    detail::record(out, opts.record_path, 0.0, x);
    for (int i = 0; i < steps; ++i) {
        const double t = i * h;
        const Vec u = detail::control_value(control, t + 0.5 * h, sys.input_dim);
        Vec dw(sys.noise_dim), dz(sys.noise_dim);
        for (int c = 0; c < sys.noise_dim; ++c) {
            const double z1 = rng.next_normal();
            const double z2 = rng.next_normal();
            dw[c] = sqrt_h * z1;
            dz[c] = z_scale * (z1 + inv_sqrt3 * z2);
        }
        const Mat A0 = sampler.A(t);
        const Mat G0 = sampler.G(t);
        const Vec a0 = A0 * x + sampler.B(t) * u;
        const Vec predictor = x + h * a0 + G0 * dw;
        const Vec a1 = sampler.A(t + h) * predictor + sampler.B(t + h) * u;
        x += 0.5 * h * (a0 + a1) + G0 * dw + A0 * (G0 * (dz - (0.5 * h) * dw));
        detail::check_state(x, t + h, beta);
        detail::record(out, opts.record_path, (i + 1) * h, x);
    }
    out.terminal = x;
    return out;
}

/// Exact-event jump simulation: per counter the arrival times are cumulative
/// Exponential(lambda_i) draws; between events the deterministic dynamics run
/// under RK4 (landing exactly on events and control breakpoints), and each
/// arrival of counter i adds the i-th column of G at the jump instant.
inline TrajectorySample simulate_poisson(const EnsembleSystem& sys, const ControlSignal* control,
                                         std::span<const double> beta, std::uint64_t seed,
                                         std::uint64_t stream, double h,
                                         const SimOptions& opts = {}) {
    const double T = detail::resolve_horizon(sys, opts);
    detail::SystemSampler sampler(sys, beta, T);
    CounterRng rng(seed, stream);

    TrajectorySample out;
    out.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    out.jump_times.resize(static_cast<std::size_t>(sys.noise_dim));

    struct Event {
        double time;
        int counter;
    };
    std::vector<Event> events;
    for (int c = 0; c < sys.noise_dim; ++c) {
        const double rate = sys.noise.intensities[c];
        if (!(rate > 0.0)) continue;
        double t = rng.next_exponential(rate);
        while (t <= T) {
            events.push_back({t, c});
            out.jump_times[static_cast<std::size_t>(c)].push_back(t);
            t += rng.next_exponential(rate);
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.time < b.time; });

    detail::Rk4Workspace ws(sys.state_dim, sys.input_dim);
    Vec x = sys.x0_at(beta);
    detail::record(out, opts.record_path, 0.0, x);
    const TimeGrid* cg = control ? &control->grid : nullptr;
    double t = 0.0;
    long kb = 1;
    std::size_t ev = 0;
    while (true) {
        const double tb = (cg && kb <= cg->steps) ? cg->node(static_cast<int>(kb))
                                                  : std::numeric_limits<double>::infinity();
        const double te = ev < events.size() ? events[ev].time
                                             : std::numeric_limits<double>::infinity();
        const double next = std::min({tb, te, T});
        if (next > t)
            detail::rk4_segment(sampler, control, x, t, next, h, out, opts.record_path, ws);
        t = next;
        while (ev < events.size() && events[ev].time <= t) {
            x += sampler.G(t).col(events[ev].counter);
            detail::check_state(x, t, beta);
            detail::record(out, opts.record_path, t, x);
            ++ev;
        }
        while (cg && kb <= cg->steps && cg->node(static_cast<int>(kb)) <= t) ++kb;
        if (t >= T) break;
    }
    out.terminal = x;
    return out;
}

/// Dispatch on the scheme enum; Poisson systems require the Poisson scheme
/// and vice versa.
inline TrajectorySample simulate(const EnsembleSystem& sys, const ControlSignal* control,
                                 std::span<const double> beta, Scheme scheme, double h,
                                 std::uint64_t seed, std::uint64_t stream,
                                 const SimOptions& opts = {}) {
    switch (scheme) {
    case Scheme::DeterministicRk4: return simulate_deterministic(sys, control, beta, h, opts);
    case Scheme::EulerMaruyama:
        if (sys.noise.kind != NoiseKind::Brownian)
            throw ConfigError("euler-maruyama requires Brownian noise");
        return simulate_brownian_em(sys, control, beta, h, seed, stream, opts);
    case Scheme::StrongOrder15:
        if (sys.noise.kind != NoiseKind::Brownian)
            throw ConfigError("sri15 requires Brownian noise");
        return simulate_brownian_sri15(sys, control, beta, h, seed, stream, opts);
    case Scheme::PoissonExact:
        if (sys.noise.kind != NoiseKind::Poisson)
            throw ConfigError("the jump scheme requires Poisson noise");
        return simulate_poisson(sys, control, beta, seed, stream, h, opts);
    }
    throw ConfigError("unknown scheme");
}

} // namespace enscon
