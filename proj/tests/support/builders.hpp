#pragma once

// Small system builders for tests.

#include <string>
#include <vector>

#include "enscon/model.hpp"
#include "enscon/rng.hpp"

namespace builders {

inline std::vector<std::string> entry_strings(const enscon::Mat& M) {
    std::vector<std::string> out;
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c)
            out.push_back(enscon::Expr::literal(M(r, c)).to_string());
    return out;
}

/// System with constant matrices (d = 1, beta unused unless bounds given).
inline enscon::EnsembleSystem constant_system(const enscon::Mat& A, const enscon::Mat& B,
                                              const enscon::Mat& G, const enscon::Vec& x0,
                                              const enscon::Vec& xf, double T,
                                              enscon::NoiseSpec noise = enscon::NoiseSpec::none(),
                                              std::pair<double, double> bounds = {0.0, 1.0}) {
    enscon::EnsembleSystem s;
    s.state_dim = static_cast<int>(A.rows());
    s.input_dim = static_cast<int>(B.cols());
    s.noise_dim = static_cast<int>(G.cols());
    s.param_dim = 1;
    s.horizon = T;
    s.A = enscon::ExprMatrix::parse_entries(s.state_dim, s.state_dim, entry_strings(A), 1);
    s.B = enscon::ExprMatrix::parse_entries(s.state_dim, s.input_dim, entry_strings(B), 1);
    s.G = enscon::ExprMatrix::parse_entries(s.state_dim, s.noise_dim, entry_strings(G), 1);
    for (int i = 0; i < s.state_dim; ++i) {
        s.x0.push_back(enscon::Expr::literal(x0[i]));
        s.xf.push_back(enscon::Expr::literal(xf[i]));
    }
    s.noise = std::move(noise);
    s.param_bounds = {bounds};
    s.validate();
    return s;
}

/// Random well-behaved ensemble: A(b) = A0 + b A1 with moderate coupling,
/// constant B with a dominant diagonal, beta in [0,1].
inline enscon::EnsembleSystem random_affine_system(enscon::CounterRng& rng, int n, int m,
                                                   double T = 1.0) {
    using enscon::Mat;
    using enscon::Vec;
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * rng.next_double(); };

    enscon::EnsembleSystem s;
    s.state_dim = n;
    s.input_dim = m;
    s.noise_dim = 1;
    s.param_dim = 1;
    s.horizon = T;
    std::vector<std::string> a_entries;
    for (int i = 0; i < n * n; ++i) {
        const double c0 = u(-1.0, 1.0);
        const double c1 = u(-3.0, 3.0);
        a_entries.push_back(enscon::Expr::literal(c0).to_string() + "+" +
                            enscon::Expr::literal(c1).to_string() + "*b1");
    }
    s.A = enscon::ExprMatrix::parse_entries(n, n, a_entries, 1);
    Mat B(n, m);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) B(r, c) = (r % m == c ? 1.0 : 0.0) + 0.3 * u(-1.0, 1.0);
    s.B = enscon::ExprMatrix::parse_entries(n, m, entry_strings(B), 1);
    s.G = enscon::ExprMatrix::parse_entries(n, 1, entry_strings(Mat::Zero(n, 1)), 1);
    for (int i = 0; i < n; ++i) {
        s.x0.push_back(enscon::Expr::literal(u(-1.0, 1.0)));
        s.xf.push_back(enscon::Expr::literal(u(-1.0, 1.0)));
    }
    s.noise = enscon::NoiseSpec::none();
    s.param_bounds = {{0.0, 1.0}};
    s.validate();
    return s;
}

} // namespace builders
