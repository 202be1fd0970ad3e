#pragma once

// The ensemble system dX = (A(t,b)X + B(t,b)u)dt + G(t,b)dS, its
// discretization grids, and the four built-in example systems.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "enscon/errors.hpp"
#include "enscon/expr.hpp"

namespace enscon {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class NoiseKind { None, Brownian, Poisson };

inline std::string noise_kind_name(NoiseKind k) {
    switch (k) {
    case NoiseKind::None: return "none";
    case NoiseKind::Brownian: return "brownian";
    case NoiseKind::Poisson: return "poisson";
    }
    return "?";
}

struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    Vec intensities; // Poisson only: lambda, one rate per counter

    static NoiseSpec none() { return {}; }
    static NoiseSpec brownian() { return {NoiseKind::Brownian, {}}; }
    static NoiseSpec poisson(Vec lambda) { return {NoiseKind::Poisson, std::move(lambda)}; }

    void validate(int noise_dim) const {
        if (kind == NoiseKind::Poisson) {
            if (intensities.size() != noise_dim)
                throw DimensionMismatch("Poisson intensity vector has length " +
                                        std::to_string(intensities.size()) + ", expected k=" +
                                        std::to_string(noise_dim));
            for (Eigen::Index i = 0; i < intensities.size(); ++i)
                if (!(intensities[i] >= 0.0))
                    throw ConfigError("Poisson intensity lambda_" + std::to_string(i + 1) +
                                      " must be >= 0");
        }
    }
};

/// Dense matrix of expressions, row-major construction order.
class ExprMatrix {
public:
    ExprMatrix() = default;
    ExprMatrix(int rows, int cols, std::vector<Expr> entries)
        : rows_(rows), cols_(cols), entries_(std::move(entries)) {
        if (static_cast<int>(entries_.size()) != rows * cols)
            throw DimensionMismatch("expression matrix needs " + std::to_string(rows * cols) +
                                    " entries, got " + std::to_string(entries_.size()));
    }

    static ExprMatrix parse_entries(int rows, int cols, const std::vector<std::string>& sources,
                                    int param_dim) {
        std::vector<Expr> entries;
        entries.reserve(sources.size());
        for (const auto& s : sources) entries.push_back(parse(s, param_dim));
        return ExprMatrix(rows, cols, std::move(entries));
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    const Expr& at(int r, int c) const { return entries_[static_cast<std::size_t>(r) * cols_ + c]; }
    const std::vector<Expr>& entries() const { return entries_; }

    Mat eval(double t, std::span<const double> beta) const {
        Mat out(rows_, cols_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) out(r, c) = at(r, c).eval(t, beta);
        return out;
    }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<Expr> entries_;
};

inline std::string format_beta(std::span<const double> beta) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < beta.size(); ++i) os << (i ? "," : "") << beta[i];
    os << ")";
    return os.str();
}

struct EnsembleSystem {
    int state_dim = 0;  // n
    int input_dim = 0;  // m
    int noise_dim = 0;  // k
    int param_dim = 0;  // d
    double horizon = 0; // T

    ExprMatrix A; // n x n
    ExprMatrix B; // n x m
    ExprMatrix G; // n x k
    std::vector<Expr> x0; // n expressions of beta
    std::vector<Expr> xf; // n expressions of beta
    NoiseSpec noise;
    std::vector<std::pair<double, double>> param_bounds; // d pairs [low, high]

    void validate() const {
        if (state_dim < 1 || input_dim < 1 || noise_dim < 1 || param_dim < 1)
            throw ConfigError("dimensions n, m, k, d must all be >= 1");
        if (!(horizon > 0)) throw ConfigError("horizon T must be > 0");
        if (A.rows() != state_dim || A.cols() != state_dim)
            throw DimensionMismatch("A must be n x n");
        if (B.rows() != state_dim || B.cols() != input_dim)
            throw DimensionMismatch("B must be n x m");
        if (G.rows() != state_dim || G.cols() != noise_dim)
            throw DimensionMismatch("G must be n x k");
        if (static_cast<int>(x0.size()) != state_dim || static_cast<int>(xf.size()) != state_dim)
            throw DimensionMismatch("x0 and xf must have n entries");
        if (static_cast<int>(param_bounds.size()) != param_dim)
            throw DimensionMismatch("beta bounds must have d entries");
        for (const auto& [lo, hi] : param_bounds)
            if (!(lo < hi)) throw InvalidBounds("beta bounds require low < high componentwise");
        noise.validate(noise_dim);
    }

    Vec x0_at(std::span<const double> beta) const { return eval_vector(x0, "X0", beta); }
    Vec xf_at(std::span<const double> beta) const { return eval_vector(xf, "XF", beta); }

private:
    Vec eval_vector(const std::vector<Expr>& v, const char* name,
                    std::span<const double> beta) const {
        Vec out(state_dim);
        for (int i = 0; i < state_dim; ++i) {
            out[i] = v[static_cast<std::size_t>(i)].eval(0.0, beta);
            if (!std::isfinite(out[i])) throw NonFiniteEntry(name, i, 0, 0.0, format_beta(beta));
        }
        return out;
    }
};

/// Entrywise evaluation of (A, B, G) at one (t, beta), rejecting non-finite entries.
struct SystemMatrices {
    Mat A, B, G;
};

inline SystemMatrices evaluate_matrices(const EnsembleSystem& sys, double t,
                                        std::span<const double> beta) {
    SystemMatrices out{sys.A.eval(t, beta), sys.B.eval(t, beta), sys.G.eval(t, beta)};
    auto check = [&](const Mat& M, const char* name) {
        for (Eigen::Index r = 0; r < M.rows(); ++r)
            for (Eigen::Index c = 0; c < M.cols(); ++c)
                if (!std::isfinite(M(r, c)))
                    throw NonFiniteEntry(name, static_cast<int>(r), static_cast<int>(c), t,
                                         format_beta(beta));
    };
    check(out.A, "A");
    check(out.B, "B");
    check(out.G, "G");
    return out;
}

/// Equispaced time nodes t_k = k*delta for k < N and t_N = T.
struct TimeGrid {
    int steps = 0;    // N
    double horizon = 0;
    double delta = 0;

    TimeGrid() = default;
    TimeGrid(int n_steps, double T) : steps(n_steps), horizon(T), delta(T / n_steps) {
        if (n_steps < 1) throw ConfigError("time grid needs N >= 1 steps");
        if (!(T > 0)) throw ConfigError("horizon T must be > 0");
    }

    double node(int k) const { return k == steps ? horizon : k * delta; }
};

/// Quadrature samples of the compact parameter domain K; weights sum to |K|.
/// Points are stored row-major so each sample is a contiguous d-vector.
struct ParameterGrid {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> points; // P x d
    Vec weights;                                                                   // P

    int count() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
    std::span<const double> point(int j) const {
        return {points.data() + static_cast<std::size_t>(j) * points.cols(),
                static_cast<std::size_t>(points.cols())};
    }
    double measure() const { return weights.sum(); }
};

/// Equispaced samples per dimension including endpoints, composite-trapezoid
/// weights; tensor product across dimensions. samples_per_dim of size 1 is
/// broadcast to every dimension.
inline ParameterGrid uniform_parameter_grid(const std::vector<std::pair<double, double>>& bounds,
                                            std::vector<int> samples_per_dim) {
    const int d = static_cast<int>(bounds.size());
    if (d < 1) throw InvalidBounds("parameter domain needs at least one dimension");
    if (samples_per_dim.size() == 1 && d > 1)
        samples_per_dim.assign(static_cast<std::size_t>(d), samples_per_dim[0]);
    if (static_cast<int>(samples_per_dim.size()) != d)
        throw InvalidBounds("need one sample count per dimension");

    std::vector<std::vector<double>> axis_pts(d), axis_w(d);
    for (int i = 0; i < d; ++i) {
        auto [lo, hi] = bounds[static_cast<std::size_t>(i)];
        if (!(lo < hi)) throw InvalidBounds("beta bounds require low < high");
        int P = samples_per_dim[static_cast<std::size_t>(i)];
        if (P < 1) throw InvalidBounds("need at least one sample per dimension");
        if (P == 1) {
            axis_pts[i] = {0.5 * (lo + hi)};
            axis_w[i] = {hi - lo};
            continue;
        }
        double step = (hi - lo) / (P - 1);
        axis_pts[i].resize(static_cast<std::size_t>(P));
        axis_w[i].assign(static_cast<std::size_t>(P), step);
        for (int j = 0; j < P; ++j)
            axis_pts[i][static_cast<std::size_t>(j)] = (j == P - 1) ? hi : lo + j * step;
        axis_w[i].front() = 0.5 * step;
        axis_w[i].back() = 0.5 * step;
    }

    long total = 1;
    for (int i = 0; i < d; ++i) total *= static_cast<long>(axis_pts[static_cast<std::size_t>(i)].size());

    ParameterGrid grid;
    grid.points.resize(total, d);
    grid.weights.resize(total);
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (long row = 0; row < total; ++row) {
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            grid.points(row, i) = axis_pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            w *= axis_w[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        }
        grid.weights[row] = w;
        for (int i = d - 1; i >= 0; --i) {
            if (++idx[static_cast<std::size_t>(i)] <
                static_cast<int>(axis_pts[static_cast<std::size_t>(i)].size()))
                break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
    }
    return grid;
}

/// Sweep every expression entry over the working grids, rejecting systems
/// whose entries go non-finite anywhere on [0,T] x K.
inline void validate_on_grids(const EnsembleSystem& sys, const TimeGrid& tgrid,
                              const ParameterGrid& pgrid) {
    sys.validate();
    for (int j = 0; j < pgrid.count(); ++j) {
        auto beta = pgrid.point(j);
        sys.x0_at(beta);
        sys.xf_at(beta);
        for (int k = 0; k <= tgrid.steps; ++k) evaluate_matrices(sys, tgrid.node(k), beta);
    }
}

enum class Scheme { DeterministicRk4, EulerMaruyama, StrongOrder15, PoissonExact };

inline std::string scheme_name(Scheme s) {
    switch (s) {
    case Scheme::DeterministicRk4: return "rk4";
    case Scheme::EulerMaruyama: return "em";
    case Scheme::StrongOrder15: return "sri15";
    case Scheme::PoissonExact: return "poisson";
    }
    return "?";
}

struct SimDefaults {
    Scheme scheme = Scheme::DeterministicRk4;
    double step = 1e-3;
    int trials = 100;
};

struct Preset {
    std::string name;
    std::string description;
    EnsembleSystem system;
    TimeGrid tgrid;
    ParameterGrid pgrid;
    std::optional<int> recommended_q; // nullopt: select by the condition rule
    SimDefaults sim;
};

namespace detail {

inline std::vector<Expr> parse_vec(const std::vector<std::string>& src, int d) {
    std::vector<Expr> out;
    out.reserve(src.size());
    for (const auto& s : src) out.push_back(parse(s, d));
    return out;
}

} // namespace detail

inline std::vector<std::string> builtin_example_names() {
    return {"bm-oscillator", "poisson-oscillator", "scalar-tv", "quantum-transport"};
}

/// The four built-in systems with their published grids. Returned grids and q
/// are recommendations; synthesis accepts overrides.
inline Preset builtin_example(const std::string& name) {
    Preset p;
    p.name = name;
    EnsembleSystem& s = p.system;
    if (name == "bm-oscillator" || name == "poisson-oscillator") {
        s.state_dim = 2;
        s.input_dim = 2;
        s.noise_dim = 1;
        s.param_dim = 1;
        s.horizon = 1.0;
        s.A = ExprMatrix::parse_entries(2, 2, {"0", "-b", "b", "0"}, 1);
        s.B = ExprMatrix::parse_entries(2, 2, {"1", "0", "0", "1"}, 1);
        s.x0 = detail::parse_vec({"1", "0"}, 1);
        s.xf = detail::parse_vec({"0", "0"}, 1);
        s.param_bounds = {{-10.0, 10.0}};
        p.tgrid = TimeGrid(40000, 1.0);
        p.pgrid = uniform_parameter_grid(s.param_bounds, {21});
        if (name == "bm-oscillator") {
            s.G = ExprMatrix::parse_entries(2, 1, {"0.1", "0.2"}, 1);
            s.noise = NoiseSpec::brownian();
            p.recommended_q = 9;
            p.sim = {Scheme::EulerMaruyama, 5e-4, 400};
            p.description = "harmonic oscillator ensemble, frequency dispersion in [-10,10], "
                            "additive Brownian noise";
        } else {
            s.G = ExprMatrix::parse_entries(2, 1, {"0.05", "0.05"}, 1);
            s.noise = NoiseSpec::poisson(Vec::Constant(1, 20.0));
            p.recommended_q = std::nullopt;
            p.sim = {Scheme::PoissonExact, 1e-3, 400};
            p.description = "harmonic oscillator ensemble with an additive Poisson counter, "
                            "jump rate 20";
        }
    } else if (name == "scalar-tv") {
        s.state_dim = 1;
        s.input_dim = 1;
        s.noise_dim = 1;
        s.param_dim = 1;
        s.horizon = 1.0;
        s.A = ExprMatrix::parse_entries(1, 1, {"-sin(b*t)"}, 1);
        s.B = ExprMatrix::parse_entries(1, 1, {"1"}, 1);
        s.G = ExprMatrix::parse_entries(1, 1, {"1"}, 1);
        s.x0 = detail::parse_vec({"1"}, 1);
        s.xf = detail::parse_vec({"0.2"}, 1);
        s.noise = NoiseSpec::brownian();
        s.param_bounds = {{-5.0, 5.0}};
        p.tgrid = TimeGrid(20000, 1.0);
        p.pgrid = uniform_parameter_grid(s.param_bounds, {101});
        p.recommended_q = 9;
        p.sim = {Scheme::EulerMaruyama, 1e-3, 100};
        p.description = "scalar system with time-varying drift -sin(beta*t), unit Brownian noise";
    } else if (name == "quantum-transport") {
        s.state_dim = 3;
        s.input_dim = 1;
        s.noise_dim = 1;
        s.param_dim = 1;
        s.horizon = 10.0;
        s.A = ExprMatrix::parse_entries(3, 3, {"0", "1", "0", "-b^2", "0", "b^2", "0", "0", "0"}, 1);
        s.B = ExprMatrix::parse_entries(3, 1, {"0", "0", "1"}, 1);
        s.G = ExprMatrix::parse_entries(3, 1, {"0", "0", "0.02"}, 1);
        s.x0 = detail::parse_vec({"0", "0", "1"}, 1);
        s.xf = detail::parse_vec({"0", "0", "0"}, 1);
        s.noise = NoiseSpec::brownian();
        s.param_bounds = {{0.8, 1.0}};
        p.tgrid = TimeGrid(40000, 10.0);
        p.pgrid = uniform_parameter_grid(s.param_bounds, {101});
        p.recommended_q = std::nullopt;
        p.sim = {Scheme::StrongOrder15, 1e-3, 1000};
        p.description = "three-state transport system with noisy input, omega in [0.8,1], "
                        "sigma=0.02; horizon fixed at T=10 with 40000 steps (the source "
                        "reports the same run both as T=10 and as 40001 nodes on [0,20])";
    } else {
        throw UnknownExample(name);
    }
    s.validate();
    return p;
}

} // namespace enscon
