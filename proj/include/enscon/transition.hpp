#pragma once

// State transition matrices Phi(t, t0, beta) of dX/dt = A(t,beta) X, in the
// forward form Phi(t,0) and the backward form Phi(0,t) the operator kernel
// needs. Time-invariant drift takes a matrix-exponential fast path; otherwise
// classical RK4 on the matrix ODE.

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <vector>

#include "enscon/model.hpp"

namespace enscon {

enum class TransitionPath { Auto, ForceRk4, ForceExpm };

struct TransitionOptions {
    int substeps = 1;                       // RK4 steps per grid interval
    TransitionPath path = TransitionPath::Auto;
    double invariance_tol = 1e-14;          // entrywise tolerance of the detector
};

/// Heuristic: A(.,beta) is treated as time-invariant when three samples agree
/// entrywise within tol. Overridable through TransitionOptions::path.
inline bool is_time_invariant(const EnsembleSystem& sys, std::span<const double> beta,
                              double tol = 1e-14) {
    const double T = sys.horizon;
    const Mat a0 = sys.A.eval(0.0, beta);
    const Mat a1 = sys.A.eval(0.5 * T, beta);
    const Mat a2 = sys.A.eval(0.865474 * T, beta);
    auto close = [&](const Mat& x, const Mat& y) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double scale = std::max({1.0, std::abs(x(i)), std::abs(y(i))});
            if (std::abs(x(i) - y(i)) > tol * scale) return false;
        }
        return true;
    };
    return close(a0, a1) && close(a0, a2);
}

namespace detail {

// One classical RK4 step of dM/dt = rhs(t, M); h may be negative.
template <typename Rhs>
inline void rk4_step(Mat& M, double t, double h, const Rhs& rhs) {
    Mat k1 = rhs(t, M);
    Mat k2 = rhs(t + 0.5 * h, M + (0.5 * h) * k1);
    Mat k3 = rhs(t + 0.5 * h, M + (0.5 * h) * k2);
    Mat k4 = rhs(t + h, M + h * k3);
    M += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline bool use_expm(const EnsembleSystem& sys, std::span<const double> beta,
                     const TransitionOptions& opts) {
    switch (opts.path) {
    case TransitionPath::ForceRk4: return false;
    case TransitionPath::ForceExpm: return true;
    case TransitionPath::Auto: return is_time_invariant(sys, beta, opts.invariance_tol);
    }
    return false;
}

} // namespace detail

/// Phi(t1, t0, beta). Integrates forward or backward as needed; `steps` is the
/// number of RK4 steps spread over [t0, t1] (ignored on the expm path).
inline Mat transition_forward(const EnsembleSystem& sys, double t1, double t0,
                              std::span<const double> beta, int steps,
                              const TransitionOptions& opts = {}) {
    const int n = sys.state_dim;
    if (t1 == t0) return Mat::Identity(n, n);
    if (detail::use_expm(sys, beta, opts)) {
        Mat A = sys.A.eval(t0, beta);
        return ((t1 - t0) * A).exp();
    }
    if (steps < 1) steps = 1;
    const double h = (t1 - t0) / steps;
    auto rhs = [&](double t, const Mat& M) -> Mat { return sys.A.eval(t, beta) * M; };
    Mat Phi = Mat::Identity(n, n);
    for (int i = 0; i < steps; ++i) detail::rk4_step(Phi, t0 + i * h, h, rhs);
    if (!Phi.allFinite())
        throw NonFiniteEntry("Phi", 0, 0, t1, format_beta(beta));
    return Phi;
}

/// Per-beta table of backward transitions on a time grid.
struct TransitionTable {
    Vec beta;
    TimeGrid grid;
    std::vector<Mat> phi0t; // entry k = Phi(0, t_k, beta)
    Mat phiT0;              // Phi(T, 0, beta)
};

/// Builds Phi(0, t_k) incrementally via the adjoint ODE dPsi/dt = -Psi A(t)
/// (one step per node, O(N) total), plus Phi(T,0) by a forward pass.
inline TransitionTable transition_table(const EnsembleSystem& sys, const TimeGrid& grid,
                                        std::span<const double> beta,
                                        const TransitionOptions& opts = {}) {
    const int n = sys.state_dim;
    const int N = grid.steps;
    TransitionTable table;
    table.beta = Eigen::Map<const Vec>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    table.grid = grid;
    table.phi0t.reserve(static_cast<std::size_t>(N) + 1);
    table.phi0t.push_back(Mat::Identity(n, n));

    // Transition matrices of a linear ODE are nonsingular; a vanishing or
    // non-finite determinant flags numerical breakdown.
    auto check = [&](const Mat& psi, double t) {
        const double det = psi.determinant();
        if (!psi.allFinite() || !(std::abs(det) > 0.0))
            throw NonFiniteEntry("Phi0t", 0, 0, t, format_beta(beta));
    };
    if (detail::use_expm(sys, beta, opts)) {
        const Mat A = sys.A.eval(0.0, beta);
        const Mat step = (-grid.delta * A).exp();
        Mat psi = Mat::Identity(n, n);
        for (int k = 1; k <= N; ++k) {
            psi = psi * step;
            check(psi, grid.node(k));
            table.phi0t.push_back(psi);
        }
        table.phiT0 = (grid.horizon * A).exp();
    } else {
        auto rhs = [&](double t, const Mat& M) -> Mat { return -(M * sys.A.eval(t, beta)); };
        const int sub = std::max(1, opts.substeps);
        Mat psi = Mat::Identity(n, n);
        for (int k = 1; k <= N; ++k) {
            const double a = grid.node(k - 1);
            const double h = (grid.node(k) - a) / sub;
            for (int i = 0; i < sub; ++i) detail::rk4_step(psi, a + i * h, h, rhs);
            check(psi, grid.node(k));
            table.phi0t.push_back(psi);
        }
        table.phiT0 = transition_forward(sys, grid.horizon, 0.0, beta, N * sub, opts);
    }
    return table;
}

/// Phi(T_eval, sigma_j) at sigma_j = j*T_eval/steps for j = 0..steps, built by
/// one backward sweep of dK/dsigma = -K A(sigma) from K(T_eval) = I.
inline std::vector<Mat> horizon_transitions(const EnsembleSystem& sys, double t_eval,
                                            std::span<const double> beta, int steps,
                                            const TransitionOptions& opts = {}) {
    const int n = sys.state_dim;
    std::vector<Mat> out(static_cast<std::size_t>(steps) + 1);
    out[static_cast<std::size_t>(steps)] = Mat::Identity(n, n);
    const double dsig = t_eval / steps;
    if (detail::use_expm(sys, beta, opts)) {
        const Mat A = sys.A.eval(0.0, beta);
        const Mat step = (dsig * A).exp(); // K(s - d) = K(s) * exp(d A)
        for (int j = steps - 1; j >= 0; --j)
            out[static_cast<std::size_t>(j)] = out[static_cast<std::size_t>(j) + 1] * step;
    } else {
        auto rhs = [&](double t, const Mat& M) -> Mat { return -(M * sys.A.eval(t, beta)); };
        Mat K = Mat::Identity(n, n);
        const int sub = std::max(1, opts.substeps);
        for (int j = steps - 1; j >= 0; --j) {
            const double s = (j + 1) * dsig;
            const double h = -dsig / sub;
            for (int i = 0; i < sub; ++i) detail::rk4_step(K, s + i * h, h, rhs);
            out[static_cast<std::size_t>(j)] = K;
        }
    }
    return out;
}

} // namespace enscon
