#include <catch2/catch_amalgamated.hpp>

#include "enscon/rng.hpp"
#include "enscon/transition.hpp"
#include "support/oracles.hpp"

using namespace enscon;

TEST_CASE("oscillator transition matches the rotation closed form") {
    auto p = builtin_example("bm-oscillator");
    std::vector<double> beta{7.0};
    const Mat expected = oracles::rotation(7.0, 0.37);

    TransitionOptions expm_opts;
    expm_opts.path = TransitionPath::ForceExpm;
    const Mat via_expm = transition_forward(p.system, 0.37, 0.0, beta, 1, expm_opts);
    REQUIRE((via_expm - expected).cwiseAbs().maxCoeff() <= 1e-10);

    TransitionOptions rk4_opts;
    rk4_opts.path = TransitionPath::ForceRk4;
    const Mat via_rk4 = transition_forward(p.system, 0.37, 0.0, beta, 512, rk4_opts);
    REQUIRE((via_rk4 - expected).cwiseAbs().maxCoeff() <= 1e-10);

    // The two paths agree with each other as well.
    REQUIRE((via_expm - via_rk4).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("zero elapsed time gives the identity") {
    auto p = builtin_example("scalar-tv");
    std::vector<double> beta{3.3};
    const Mat phi = transition_forward(p.system, 0.6, 0.6, beta, 10);
    REQUIRE(phi(0, 0) == 1.0);
}

TEST_CASE("scalar-tv transition matches its closed form, both directions") {
    auto p = builtin_example("scalar-tv");
    CounterRng rng(42, 0);
    for (int i = 0; i < 30; ++i) {
        const double t1 = rng.next_double();
        const double t0 = rng.next_double();
        double b = -5.0 + 10.0 * rng.next_double();
        if (std::abs(b) < 0.1) b += 0.5;
        std::vector<double> beta{b};
        const Mat phi = transition_forward(p.system, t1, t0, beta, 1000);
        REQUIRE(phi(0, 0) == Catch::Approx(oracles::scalar_tv_phi(t1, t0, b)).margin(1e-6));
    }
}

TEST_CASE("time-invariance detection") {
    auto osc = builtin_example("bm-oscillator");
    auto tv = builtin_example("scalar-tv");
    std::vector<double> b1{4.0};
    REQUIRE(is_time_invariant(osc.system, b1));
    REQUIRE_FALSE(is_time_invariant(tv.system, b1));
    std::vector<double> b0{0.0}; // -sin(0*t) is constant
    REQUIRE(is_time_invariant(tv.system, b0));
}

TEST_CASE("transition table basics") {
    auto p = builtin_example("bm-oscillator");
    TimeGrid grid(200, 1.0);
    std::vector<double> beta{7.0};
    auto table = transition_table(p.system, grid, beta);

    REQUIRE(table.phi0t[0].isIdentity(0.0));
    REQUIRE(static_cast<int>(table.phi0t.size()) == grid.steps + 1);

    // Phi(0,t_k) equals rotation by -7 t_k.
    for (int k : {1, 57, 200}) {
        const Mat expected = oracles::rotation(-7.0, grid.node(k));
        REQUIRE((table.phi0t[static_cast<std::size_t>(k)] - expected).cwiseAbs().maxCoeff() <=
                1e-9);
    }
    // Inverse relation Phi(0,t) Phi(t,0) = I.
    for (int k : {3, 101, 200}) {
        const Mat fwd = transition_forward(p.system, grid.node(k), 0.0, beta, 256);
        const Mat prod = table.phi0t[static_cast<std::size_t>(k)] * fwd;
        REQUIRE((prod - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-8);
    }
    REQUIRE((table.phiT0 - oracles::rotation(7.0, 1.0)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("scalar-tv table matches the closed form") {
    auto p = builtin_example("scalar-tv");
    TimeGrid grid(2000, 1.0);
    std::vector<double> beta{5.0};
    auto table = transition_table(p.system, grid, beta);
    for (int k : {1, 333, 1000, 2000}) {
        const double expected = oracles::scalar_tv_phi(0.0, grid.node(k), 5.0);
        REQUIRE(table.phi0t[static_cast<std::size_t>(k)](0, 0) ==
                Catch::Approx(expected).margin(1e-6));
    }
}

TEST_CASE("semigroup property across presets") {
    CounterRng rng(7, 3);
    for (const auto& name : builtin_example_names()) {
        auto p = builtin_example(name);
        const auto& bounds = p.system.param_bounds[0];
        for (int i = 0; i < 5; ++i) {
            double ts[3];
            for (double& t : ts) t = p.system.horizon * rng.next_double();
            std::sort(std::begin(ts), std::end(ts));
            const double b = bounds.first + (bounds.second - bounds.first) * rng.next_double();
            std::vector<double> beta{b};
            const Mat full = transition_forward(p.system, ts[2], ts[0], beta, 1024);
            const Mat second = transition_forward(p.system, ts[2], ts[1], beta, 1024);
            const Mat first = transition_forward(p.system, ts[1], ts[0], beta, 1024);
            REQUIRE((full - second * first).norm() <= 1e-8);
        }
    }
}

TEST_CASE("RK4 convergence order on the scalar-tv closed form") {
    auto p = builtin_example("scalar-tv");
    // beta = 2 happens to sit in a superconvergent spot (the h^4 error
    // coefficient nearly vanishes); beta = 3 shows the generic order.
    std::vector<double> beta{3.0};
    const double exact = oracles::scalar_tv_phi(1.0, 0.0, 3.0);
    TransitionOptions rk4;
    rk4.path = TransitionPath::ForceRk4;
    std::vector<double> hs, errs;
    for (int steps : {8, 16, 32, 64}) {
        const Mat phi = transition_forward(p.system, 1.0, 0.0, beta, steps, rk4);
        hs.push_back(1.0 / steps);
        errs.push_back(std::abs(phi(0, 0) - exact));
    }
    const double slope = oracles::log_log_slope(hs, errs);
    REQUIRE(slope >= 3.5);
    REQUIRE(slope <= 4.5);
}

TEST_CASE("horizon transitions integrate backward correctly") {
    auto p = builtin_example("scalar-tv");
    std::vector<double> beta{2.0};
    const int q = 64;
    auto K = horizon_transitions(p.system, 2.0, beta, q);
    REQUIRE(K[q].isIdentity(0.0));
    for (int j : {0, 13, 40}) {
        const double sigma = 2.0 * j / q;
        REQUIRE(K[static_cast<std::size_t>(j)](0, 0) ==
                Catch::Approx(oracles::scalar_tv_phi(2.0, sigma, 2.0)).margin(1e-8));
    }
}
