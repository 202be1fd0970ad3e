#include <catch2/catch_amalgamated.hpp>

#include "enscon/synthesis.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

using namespace enscon;

namespace {

struct Assembled {
    EnsembleSystem sys;
    TimeGrid tgrid;
    ParameterGrid pgrid;
    Mat W;
    TargetVector xi;
};

Assembled assemble_preset(const std::string& name, int steps, int samples) {
    Assembled a;
    auto p = builtin_example(name);
    a.sys = p.system;
    a.tgrid = TimeGrid(steps, a.sys.horizon);
    a.pgrid = uniform_parameter_grid(a.sys.param_bounds, {samples});
    std::vector<TransitionTable> tables;
    for (int j = 0; j < a.pgrid.count(); ++j)
        tables.push_back(transition_table(a.sys, a.tgrid, a.pgrid.point(j)));
    a.W = assemble_operator(a.sys, a.tgrid, a.pgrid, tables);
    a.xi = target_vector(a.sys, a.pgrid, tables, a.tgrid);
    return a;
}

} // namespace

TEST_CASE("degenerate one-block operator") {
    auto sys = builders::constant_system(Mat::Zero(1, 1), Mat::Ones(1, 1), Mat::Zero(1, 1),
                                         Vec::Zero(1), Vec::Ones(1), 1.0);
    TimeGrid tgrid(1, 1.0);
    auto pgrid = uniform_parameter_grid(sys.param_bounds, {1});
    std::vector<TransitionTable> tables{transition_table(sys, tgrid, pgrid.point(0))};
    Mat W = assemble_operator(sys, tgrid, pgrid, tables);
    REQUIRE(W.rows() == 1);
    REQUIRE(W.cols() == 1);
    REQUIRE(W(0, 0) == 1.0); // delta * Phi * B = 1 * 1 * 1

    auto fact = factorize(W);
    REQUIRE(fact.rank == 1);
    REQUIRE(fact.s[0] == Catch::Approx(1.0).epsilon(1e-14));
    REQUIRE(fact.U(0, 0) == Catch::Approx(1.0).epsilon(1e-14));
    REQUIRE(fact.V(0, 0) == Catch::Approx(1.0).epsilon(1e-14));

    fact.input_dim = 1;
    fact.q = 1;
    TargetVector tv;
    tv.xi = Vec::Constant(1, 3.0);
    tv.state_dim = 1;
    tv.samples = 1;
    tv.weights = pgrid.weights;
    auto u = synthesize_control(fact, tv, tgrid);
    REQUIRE(u.values(0, 0) == Catch::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("operator dimensions follow n P x m N") {
    auto a1 = assemble_preset("bm-oscillator", 50, 5);
    REQUIRE(a1.W.rows() == 10);
    REQUIRE(a1.W.cols() == 100);
    auto a3 = assemble_preset("scalar-tv", 80, 7);
    REQUIRE(a3.W.rows() == 7);
    REQUIRE(a3.W.cols() == 80);
}

TEST_CASE("overdetermined grids are rejected") {
    auto p = builtin_example("bm-oscillator");
    TimeGrid tgrid(5, 1.0); // m N = 10 < n P = 42
    auto pgrid = uniform_parameter_grid(p.system.param_bounds, {21});
    std::vector<TransitionTable> tables;
    for (int j = 0; j < pgrid.count(); ++j)
        tables.push_back(transition_table(p.system, tgrid, pgrid.point(j)));
    REQUIRE_THROWS_AS(assemble_operator(p.system, tgrid, pgrid, tables), OverdeterminedGrid);
}

TEST_CASE("target vector of the oscillator") {
    auto a = assemble_preset("bm-oscillator", 100, 5); // omega in {-10,-5,0,5,10}
    REQUIRE(a.xi.xi.size() == 10);
    // At omega = 0 the transition is the identity: xi = 0 - X0 = (-1, 0).
    const Vec block = a.xi.block(2);
    REQUIRE(block(0) == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(block(1) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("poisson drift correction against an independent quadrature") {
    const int N = 400;
    auto a = assemble_preset("poisson-oscillator", N, 5);
    auto brown = assemble_preset("bm-oscillator", N, 5);
    // The Brownian variant shares A, B, X0, XF, so the difference of targets
    // is exactly the drift D = sum_k delta Phi(0,t_k) G lambda, G lambda = (1,1)'.
    for (int j : {0, 3}) {
        const Vec drift = brown.xi.block(j) - a.xi.block(j);
        const double w = a.pgrid.points(j, 0);
        Vec ref = Vec::Zero(2);
        for (int k = 1; k <= N; ++k) {
            const double t = a.tgrid.node(k);
            ref += a.tgrid.delta * (oracles::rotation(-w, t) * Vec::Ones(2));
        }
        REQUIRE((drift - ref).norm() <= 1e-8);
    }
}

TEST_CASE("svd of a wide rank-one matrix") {
    Mat W(1, 2);
    W << 2.0, 0.0;
    auto fact = factorize(W);
    REQUIRE(fact.rank == 1);
    REQUIRE(fact.s[0] == Catch::Approx(2.0).epsilon(1e-14));
    REQUIRE(fact.V(0, 0) == Catch::Approx(1.0).epsilon(1e-14));
    REQUIRE(fact.V(1, 0) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("svd contract on random wide matrices") {
    CounterRng rng(2024, 5);
    Mat W(6, 40);
    for (Eigen::Index i = 0; i < W.size(); ++i) W(i) = 2.0 * rng.next_double() - 1.0;
    auto fact = factorize(W);
    REQUIRE(fact.rank == 6);
    auto defects = svd_defects(W, fact);
    const double s1 = fact.s[0];
    const double sqrt_r = std::sqrt(static_cast<double>(fact.rank));
    REQUIRE(defects.factor_residual <= 1e-10 * s1 * sqrt_r);
    REQUIRE(defects.u_orthogonality <= 1e-10 * sqrt_r);
    REQUIRE(defects.v_orthogonality <= 1e-10 * sqrt_r);
    REQUIRE((W - fact.U * fact.s.asDiagonal() * fact.V.transpose()).norm() <= 1e-10 * s1);
    for (int j = 0; j < fact.rank; ++j) REQUIRE(fact.s[j] > 0.0);
    for (int j = 1; j < fact.rank; ++j) REQUIRE(fact.s[j] <= fact.s[j - 1]);
    // Sign convention: the dominant entry of each U column is positive.
    for (int j = 0; j < fact.rank; ++j) {
        Eigen::Index imax = 0;
        fact.U.col(j).cwiseAbs().maxCoeff(&imax);
        REQUIRE(fact.U(imax, j) > 0.0);
    }
}

TEST_CASE("rank selection by the condition rule") {
    REQUIRE(select_rank(Vec::Ones(1), 1, 1e4, 1) == 1);

    Vec s(3);
    s << 1.0, 1e-2, 1e-6;
    REQUIRE(select_rank(s, 1, 1e4, 0) == 2);

    // Two channels consume two values per q; the second value breaks the rule.
    Vec bad(2);
    bad << 1.0, 1e-5;
    REQUIRE_THROWS_AS(select_rank(bad, 2, 1e4, 0), NoUsableRank);

    Vec caps(6);
    caps << 1.0, 0.9, 0.8, 0.7, 0.6, 0.5;
    REQUIRE(select_rank(caps, 2, 1e4, 0) == 3);
    REQUIRE(select_rank(caps, 2, 1e4, 2) == 2); // q_max cap
}

TEST_CASE("zero target synthesizes the zero control") {
    auto a = assemble_preset("bm-oscillator", 100, 5);
    auto fact = factorize(a.W);
    fact.input_dim = 2;
    fact.q = 2;
    TargetVector tv = a.xi;
    tv.xi.setZero();
    auto u = synthesize_control(fact, tv, a.tgrid);
    REQUIRE(u.values.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(synthesize_control(fact, tv, a.tgrid).l2_norm_sq() == 0.0);
}

TEST_CASE("rank must be selected before synthesis") {
    auto a = assemble_preset("scalar-tv", 50, 3);
    auto fact = factorize(a.W);
    fact.input_dim = 1;
    REQUIRE_THROWS_AS(synthesize_control(fact, a.xi, a.tgrid), RankNotSelected);
}

TEST_CASE("full-rank truncation reproduces the least-norm oracle") {
    auto a = assemble_preset("bm-oscillator", 200, 5);
    auto fact = factorize(a.W);
    fact.input_dim = 2;
    fact.q = (fact.rank + 1) / 2; // cover every triple
    auto u = synthesize_control(fact, a.xi, a.tgrid);
    Vec g = u.stacked();
    Vec oracle = a.W.transpose() * (a.W * a.W.transpose()).ldlt().solve(a.xi.xi);
    REQUIRE((g - oracle).norm() <= 1e-8 * oracle.norm());
}

TEST_CASE("minimum-norm property under null-space perturbations") {
    auto a = assemble_preset("scalar-tv", 60, 4);
    auto fact = factorize(a.W);
    fact.input_dim = 1;
    fact.q = fact.rank;
    auto u = synthesize_control(fact, a.xi, a.tgrid);
    Vec g = u.stacked();
    const double base_resid = (a.W * g - a.xi.xi).norm();

    CounterRng rng(5, 9);
    for (int i = 0; i < 10; ++i) {
        Vec z(a.W.cols());
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.next_double() - 0.5;
        // Project onto the null space of W (orthogonal complement of V's columns).
        Vec null_dir = z - fact.V * (fact.V.transpose() * z);
        const Vec candidate = g + null_dir;
        REQUIRE((a.W * candidate - a.xi.xi).norm() <= base_resid + 1e-10);
        REQUIRE(candidate.norm() >= g.norm());
    }
}

TEST_CASE("residual is nonincreasing in q") {
    auto a = assemble_preset("bm-oscillator", 300, 7);
    auto fact = factorize(a.W);
    fact.input_dim = 2;
    double prev = a.xi.xi.norm();
    for (int q = 1; 2 * q <= fact.rank; ++q) {
        fact.q = q;
        const double resid = synthesis_residual(fact, a.xi);
        REQUIRE(resid <= prev + 1e-12);
        prev = resid;
    }
}

TEST_CASE("synthesis is linear in the target") {
    auto a = assemble_preset("scalar-tv", 60, 4);
    auto fact = factorize(a.W);
    fact.input_dim = 1;
    fact.q = 3;
    auto u1 = synthesize_control(fact, a.xi, a.tgrid);
    TargetVector scaled = a.xi;
    scaled.xi *= -2.5;
    auto u2 = synthesize_control(fact, scaled, a.tgrid);
    REQUIRE((u2.values + 2.5 * u1.values).cwiseAbs().maxCoeff() <=
            1e-13 * u1.values.cwiseAbs().maxCoeff() * 2.5 + 1e-300);
}

TEST_CASE("controllability diagnostic") {
    auto a = assemble_preset("scalar-tv", 60, 4);
    auto fact = factorize(a.W);

    TargetVector tv = a.xi;
    tv.xi = fact.s[0] * fact.U.col(0);
    auto diag = controllability_diagnostic(fact, tv);
    REQUIRE(diag.residual <= 1e-12);
    for (Eigen::Index j = 0; j < diag.partial_sums.size(); ++j)
        REQUIRE(diag.partial_sums[j] == Catch::Approx(1.0).epsilon(1e-10));

    // Rank-deficient operator: a target orthogonal to the range has residual 1.
    Mat W2(2, 2);
    W2 << 1.0, 0.0, 0.0, 0.0;
    auto f2 = factorize(W2);
    REQUIRE(f2.rank == 1);
    TargetVector perp;
    perp.xi = Vec::Zero(2);
    perp.xi[1] = 1.0;
    perp.state_dim = 1;
    perp.samples = 2;
    perp.weights = Vec::Ones(2);
    REQUIRE(controllability_diagnostic(f2, perp).residual == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("per-channel triples interleave") {
    OperatorFactorization fact;
    fact.input_dim = 2;
    fact.rank = 7;
    fact.q = 3;
    auto view = per_channel_triples(fact);
    REQUIRE(view.size() == 2);
    REQUIRE(view[0] == std::vector<int>{0, 2, 4});
    REQUIRE(view[1] == std::vector<int>{1, 3, 5});
}
