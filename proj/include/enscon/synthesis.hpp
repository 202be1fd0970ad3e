#pragma once

// Discretized input-to-state operator: the block matrix W with blocks
// W_{jk} = delta * Phi(0,t_k,beta_j) * B(t_k,beta_j), its SVD (the discrete
// singular system), condition-ratio rank selection, and the truncated
// minimum-norm control. Includes the Poisson drift correction of the target
// and the controllability diagnostic.

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "enscon/model.hpp"
#include "enscon/parallel.hpp"
#include "enscon/transition.hpp"

namespace enscon {

/// Synthesized piecewise-constant control on the synthesis grid:
/// u(t) = values.row(k-1) for t in (t_{k-1}, t_k], k = 1..N, zero beyond T.
struct ControlSignal {
    TimeGrid grid;
    int input_dim = 0;
    Mat values; // N x m, row k-1 holds u_hat(t_k)

    Vec value_at(double t) const {
        if (t <= 0.0) return values.row(0).transpose();
        // Covering synthesis interval; the epsilon keeps node-exact times in
        // their own interval despite rounding in t/delta.
        long k = static_cast<long>(std::ceil(t / grid.delta - 1e-9));
        if (k < 1) k = 1;
        if (k > grid.steps) {
            if (t <= grid.horizon * (1.0 + 1e-12)) k = grid.steps;
            else return Vec::Zero(input_dim); // zero extension past the horizon
        }
        return values.row(k - 1).transpose();
    }

    /// Discrete L2 norm squared: sum_k delta * |u_k|^2.
    double l2_norm_sq() const { return grid.delta * values.squaredNorm(); }

    /// The mN unknown vector in operator block order: entry m(k-1)+c = u_c(t_k).
    Vec stacked() const {
        Vec g(static_cast<Eigen::Index>(grid.steps) * input_dim);
        for (int k = 0; k < grid.steps; ++k)
            for (int c = 0; c < input_dim; ++c)
                g[static_cast<Eigen::Index>(k) * input_dim + c] = values(k, c);
        return g;
    }
};

/// Discretized target: block j = Phi(0,T,beta_j) XF(beta_j) - X0(beta_j),
/// minus the accumulated jump drift for Poisson noise.
struct TargetVector {
    Vec xi;      // length n*P
    int state_dim = 0;
    int samples = 0;
    Vec weights; // parameter-grid quadrature weights, carried for norms

    Vec block(int j) const { return xi.segment(static_cast<Eigen::Index>(j) * state_dim, state_dim); }
};

/// Thin SVD of W truncated to the numerical rank, plus the selected number of
/// singular triples per input channel (q).
struct OperatorFactorization {
    Mat U;   // nP x r
    Vec s;   // r, nonincreasing, > 0
    Mat V;   // mN x r
    int rank = 0;
    int input_dim = 0; // m
    double delta = 0;  // time-grid step carried for reporting
    int q = 0;         // selected triples per channel; 0 = not selected

    /// Number of singular triples the synthesis sum actually uses.
    int used_triples() const { return std::min(input_dim * q, rank); }
};

inline Mat assemble_operator(const EnsembleSystem& sys, const TimeGrid& tgrid,
                             const ParameterGrid& pgrid,
                             const std::vector<TransitionTable>& tables, int threads = 0) {
    const int n = sys.state_dim, m = sys.input_dim;
    const int N = tgrid.steps, P = pgrid.count();
    if (static_cast<int>(tables.size()) != P)
        throw DimensionMismatch("need one transition table per parameter sample");
    if (n * P > m * N) throw OverdeterminedGrid(n * P, m * N);

    Mat W(n * P, static_cast<Eigen::Index>(m) * N);
    parallel_for(P, threads, [&](long j) {
        auto beta = pgrid.point(static_cast<int>(j));
        const auto& table = tables[static_cast<std::size_t>(j)];
        for (int k = 1; k <= N; ++k) {
            const Mat B = sys.B.eval(tgrid.node(k), beta);
            W.block(j * n, static_cast<Eigen::Index>(k - 1) * m, n, m) =
                tgrid.delta * (table.phi0t[static_cast<std::size_t>(k)] * B);
        }
    });
    if (!W.allFinite()) throw NonFiniteEntry("W", 0, 0, tgrid.horizon, "(grid)");
    return W;
}

inline TargetVector target_vector(const EnsembleSystem& sys, const ParameterGrid& pgrid,
                                  const std::vector<TransitionTable>& tables,
                                  const TimeGrid& tgrid) {
    const int n = sys.state_dim, P = pgrid.count();
    TargetVector tv;
    tv.state_dim = n;
    tv.samples = P;
    tv.weights = pgrid.weights;
    tv.xi.resize(static_cast<Eigen::Index>(n) * P);
    for (int j = 0; j < P; ++j) {
        auto beta = pgrid.point(j);
        const auto& table = tables[static_cast<std::size_t>(j)];
        Vec xi_j = table.phi0t[static_cast<std::size_t>(tgrid.steps)] * sys.xf_at(beta) -
                   sys.x0_at(beta);
        if (sys.noise.kind == NoiseKind::Poisson) {
            // Rearranging the jump-mean condition to L u = xi - D with
            // D = int Phi(0,s) G(s) lambda ds, same rectangle rule as W.
            Vec drift = Vec::Zero(n);
            for (int k = 1; k <= tgrid.steps; ++k) {
                const Mat G = sys.G.eval(tgrid.node(k), beta);
                drift += tgrid.delta *
                         (table.phi0t[static_cast<std::size_t>(k)] * (G * sys.noise.intensities));
            }
            xi_j -= drift;
        }
        tv.xi.segment(static_cast<Eigen::Index>(j) * n, n) = xi_j;
    }
    if (!tv.xi.allFinite()) throw NonFiniteEntry("xi", 0, 0, tgrid.horizon, "(grid)");
    return tv;
}

/// Thin SVD with deterministic column signs (largest-magnitude entry of each
/// U column made positive). Short-fat W goes through Householder QR of W' and
/// a Jacobi SVD of the small triangular factor, which keeps every retained
/// column backward stable at eps*s_1.
inline OperatorFactorization factorize(const Mat& W) {
    OperatorFactorization fact;
    const Eigen::Index rows = W.rows(), cols = W.cols();
    Mat U, V;
    Vec s;
    if (rows <= cols) {
        Eigen::HouseholderQR<Mat> qr(W.transpose());
        Mat thin_q = qr.householderQ() * Mat::Identity(cols, rows);
        Mat r_factor = qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>();
        Eigen::JacobiSVD<Mat> svd(r_factor.transpose(),
                                  Eigen::ComputeThinU | Eigen::ComputeThinV);
        U = svd.matrixU();
        s = svd.singularValues();
        V = thin_q * svd.matrixV();
    } else {
        Eigen::JacobiSVD<Mat> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
        U = svd.matrixU();
        s = svd.singularValues();
        V = svd.matrixV();
    }
    if (!s.allFinite()) throw ConvergenceFailure("SVD produced non-finite singular values");

    const double tol = s.size() ? s[0] * 2.220446049250313e-16 *
                                      static_cast<double>(std::max(rows, cols))
                                : 0.0;
    int rank = 0;
    while (rank < s.size() && s[rank] > tol) ++rank;

    fact.U = U.leftCols(rank);
    fact.s = s.head(rank);
    fact.V = V.leftCols(rank);
    fact.rank = rank;
    for (int j = 0; j < rank; ++j) {
        Eigen::Index imax = 0;
        fact.U.col(j).cwiseAbs().maxCoeff(&imax);
        if (fact.U(imax, j) < 0.0) {
            fact.U.col(j) = -fact.U.col(j);
            fact.V.col(j) = -fact.V.col(j);
        }
    }
    return fact;
}

/// Largest q <= q_max such that the smallest singular value the synthesis
/// would use (s_{mq}, since q triples per channel consume m*q values) keeps
/// s_1/s_{mq} < max_condition.
inline int select_rank(const Vec& s, int input_dim, double max_condition = 1e4,
                       int q_max = 0) {
    if (s.size() == 0 || !(s[0] > 0.0))
        throw NoUsableRank("operator has no positive singular values");
    int usable = 0;
    while (usable < s.size() && s[0] / s[usable] < max_condition) ++usable;
    int q = usable / input_dim;
    if (q_max > 0) q = std::min(q, q_max);
    if (q < 1)
        throw NoUsableRank("s_1/s_m = " + std::to_string(s[0] / s[std::min<Eigen::Index>(
                               input_dim - 1, s.size() - 1)]) +
                           " already exceeds the condition limit " + std::to_string(max_condition));
    return q;
}

/// Truncated minimum-norm solution of W g = xi:
/// g* = sum_{j<=mq} (xi' u_j / s_j) v_j, reshaped to N blocks of R^m.
/// Stops at the numerical rank when r < mq.
inline ControlSignal synthesize_control(const OperatorFactorization& fact,
                                        const TargetVector& target, const TimeGrid& tgrid) {
    if (fact.q < 1) throw RankNotSelected();
    const int used = fact.used_triples();
    const int m = fact.input_dim;
    const int N = tgrid.steps;
    Vec coeffs = (fact.U.leftCols(used).transpose() * target.xi).cwiseQuotient(fact.s.head(used));
    Vec g = fact.V.leftCols(used) * coeffs;
    ControlSignal u;
    u.grid = tgrid;
    u.input_dim = m;
    u.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>(g.data(), N, m);
    return u;
}

/// ||W g*(q) - xi|| computed from the factorization (the unused singular
/// directions are exactly the projection residual).
inline double synthesis_residual(const OperatorFactorization& fact, const TargetVector& target) {
    const int used = fact.q < 1 ? 0 : fact.used_triples();
    Vec proj = fact.U.leftCols(used) * (fact.U.leftCols(used).transpose() * target.xi);
    return (target.xi - proj).norm();
}

/// Discrete analogs of the two ensemble-controllability conditions:
/// partial_sums[i] = sum_{j<=i} (xi'u_j)^2 / s_j^2 (growth signals practical
/// uncontrollability), residual = ||xi - U U' xi|| / ||xi|| (distance from
/// the numerical range).
struct ControllabilityDiagnostic {
    Vec partial_sums;
    double residual = 0.0;
};

inline ControllabilityDiagnostic controllability_diagnostic(const OperatorFactorization& fact,
                                                            const TargetVector& target) {
    ControllabilityDiagnostic diag;
    diag.partial_sums.resize(fact.rank);
    double acc = 0.0;
    for (int j = 0; j < fact.rank; ++j) {
        const double c = fact.U.col(j).dot(target.xi);
        acc += (c * c) / (fact.s[j] * fact.s[j]);
        diag.partial_sums[j] = acc;
    }
    const double norm = target.xi.norm();
    if (norm > 0.0) {
        Vec proj = fact.U * (fact.U.transpose() * target.xi);
        diag.residual = (target.xi - proj).norm() / norm;
    }
    return diag;
}

/// Per-channel view of the synthesis series: channel c (0-based) draws the
/// singular triples with 0-based indices c + m*j for j = 0..q-1, clipped to
/// the numerical rank. Interleaved indexing for reporting; the aggregate sum
/// over the leading mq triples is what synthesize_control uses.
inline std::vector<std::vector<int>> per_channel_triples(const OperatorFactorization& fact) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(fact.input_dim));
    for (int c = 0; c < fact.input_dim; ++c)
        for (int j = 0; j < fact.q; ++j) {
            int idx = c + fact.input_dim * j;
            if (idx < fact.rank) out[static_cast<std::size_t>(c)].push_back(idx);
        }
    return out;
}

/// Contract defects for test assertions.
struct SvdDefects {
    double factor_residual; // ||W V - U diag(s)||_F
    double u_orthogonality; // ||U'U - I||_F
    double v_orthogonality; // ||V'V - I||_F
};

inline SvdDefects svd_defects(const Mat& W, const OperatorFactorization& fact) {
    SvdDefects d{};
    d.factor_residual = (W * fact.V - fact.U * fact.s.asDiagonal()).norm();
    d.u_orthogonality =
        (fact.U.transpose() * fact.U - Mat::Identity(fact.rank, fact.rank)).norm();
    d.v_orthogonality =
        (fact.V.transpose() * fact.V - Mat::Identity(fact.rank, fact.rank)).norm();
    return d;
}

} // namespace enscon
