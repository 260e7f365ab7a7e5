#include <catch_amalgamated.hpp>

#include "mfim/sampling.hpp"

using namespace mfim;
using Catch::Matchers::WithinAbs;

TEST_CASE("fixed ensemble and draws") {
    const auto e = fixed_ensemble();
    REQUIRE(e.S() == 12);
    CHECK(to_bitstring(e.members.front(), 12) == "100010111110");
    CHECK(to_bitstring(e.members.back(), 12) == "011011101000");
    Rng a = make_rng(5, "x"), b = make_rng(5, "x");
    const auto e1 = draw_ensemble(EnsembleKind::Y_PRODUCT, 8, 20, a);
    const auto e2 = draw_ensemble(EnsembleKind::Y_PRODUCT, 8, 20, b);
    CHECK(e1.members == e2.members);
    Rng c = make_rng(5, "x");
    CHECK(draw_ensemble(EnsembleKind::HAAR, 6, 1, c).S() == 1);
    CHECK_THROWS_AS(draw_ensemble(EnsembleKind::Z_PRODUCT, 3, 9, c), InvalidArgument);
    CHECK_THROWS_AS(draw_ensemble(EnsembleKind::Z_PRODUCT, 4, 0, c), InvalidArgument);
    CHECK_THROWS_AS(ensemble_from_strings({"0101", "011"}), InvalidArgument);
    CHECK(member_state(e1, 3).num_qubits() == 8);
}

TEST_CASE("Haar states reproduce infinite-temperature expectations") {
    const int L = 8;
    Rng rng = make_rng(1, "haar");
    std::vector<StateVector> states;
    for (int k = 0; k < 200; ++k) states.push_back(haar_state(L, rng));
    Rng pick = make_rng(2, "paulis");
    std::uniform_int_distribution<Mask> u(1, (Mask{1} << L) - 1);
    for (int q = 0; q < 10; ++q) {
        const PauliString P{u(pick), u(pick), 1.0};
        std::vector<double> v;
        for (const auto& s : states) v.push_back(expectation(s, P));
        // <P>_inf = 0 for non-identity strings
        const double se = std_of(v) / std::sqrt(200.0);
        CHECK(std::abs(mean_of(v)) < 3.0 * se + 1e-12);
    }
    for (const auto& s : states) REQUIRE(std::abs(s.norm_squared() - 1.0) < 1e-12);
}

TEST_CASE("full-basis estimator is unbiased at L = 6") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const ExactOracle o(p);
    std::vector<std::string> all;
    for (Mask m = 0; m < 64; ++m) all.push_back(to_bitstring(m, 6));
    const auto e = ensemble_from_strings(all);
    const std::vector<double> times{0.0, 0.5, 2.0, 5.0};
    const auto g = estimate_correlators(e, p, times, CorrelatorBackend::EXACT, &o);
    const Eigen::MatrixXd exact = o.correlators_all_sites(p.center(), times);
    CHECK((g.values - exact).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(g.samples.size() == 64);
    CHECK(g.r.front() == -2);
    CHECK(g.r.back() == 3);
    CHECK(g.series(0)[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("Trotter backend converges to the exact backend at first order") {
    const auto e = ensemble_from_strings({"101100", "010111"});
    const std::vector<double> times{0.0, 0.5, 1.0};
    double err[2];
    for (int k = 0; k < 2; ++k) {
        const auto p = ModelParams::main_text(6, 1.0, 2.0, k == 0 ? 0.01 : 0.005);
        const ExactOracle o(p);
        const auto ex = estimate_correlators(e, p, times, CorrelatorBackend::EXACT, &o);
        const auto tr = estimate_correlators(e, p, times, CorrelatorBackend::TROTTER_IDEAL);
        err[k] = (ex.values - tr.values).cwiseAbs().maxCoeff();
        CHECK((ex.values.col(0) - tr.values.col(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(err[0] < 1e-2);
    CHECK(err[0] / err[1] == Catch::Approx(2.0).margin(0.3));
    const auto p = ModelParams::main_text(6, 1.0, 2.0, 0.01);
    CHECK_THROWS_AS(estimate_correlators(e, p, {0.005}, CorrelatorBackend::TROTTER_IDEAL), InvalidArgument);
    CHECK_THROWS_AS(estimate_correlators(e, p, times, CorrelatorBackend::TROTTER_SHOTS), Unsupported);
}

TEST_CASE("equal-time sum rule and denominators") {
    const auto p = ModelParams::main_text(8, 1.0, 2.0);
    const ExactOracle o(p);
    Rng rng = make_rng(3, "den");
    const auto e = draw_ensemble(EnsembleKind::Y_PRODUCT, 8, 6, rng);
    const std::vector<double> times{0.0, 1.0, 3.0, 6.0};
    const auto g = estimate_correlators(e, p, times, CorrelatorBackend::EXACT, &o);
    CHECK_THAT(g.values.col(0).sum(), WithinAbs(sum_rule_constant(p), 1e-8));
    // per-sample denominators are y- and t-independent under exact evolution
    for (const auto& s : g.samples)
        for (Eigen::Index t = 0; t < s.cols(); ++t) REQUIRE(std::abs(s.col(t).sum() - sum_rule_constant(p)) < 1e-8);
}

TEST_CASE("spatial variance estimator") {
    const auto p = ModelParams::main_text(8, 1.0, 2.0);
    const ExactOracle o(p);
    const auto e = ensemble_from_strings({"10110010"});
    const auto g = estimate_correlators(e, p, {0.0}, CorrelatorBackend::EXACT, &o);
    // t = 0: only r in {-1, 0, 1} contribute; oracle from equal-time Pauli traces
    double s0 = 0, s1 = 0, s2 = 0;
    for (int r = -3; r <= 4; ++r) {
        const double c = equal_time_correlator(p, p.center() + r, p.center());
        s0 += c;
        s1 += r * c;
        s2 += r * r * c;
    }
    const double expected = s2 / s0 - (s1 / s0) * (s1 / s0);
    const auto v = spatial_variance_estimator(g);
    CHECK_THAT(v.values[0], WithinAbs(expected, 1e-12));
    CHECK_THAT(v.values[0], WithinAbs(2.0 / 34.0 / sum_rule_constant(p), 1e-12));

    CorrelatorGrid sym;
    sym.L = 4;
    sym.times = {0.0};
    sym.r = r_offsets(4);
    sym.values = Eigen::MatrixXd::Zero(4, 1);
    sym.values(sym.row_of(-1), 0) = 0.5;
    sym.values(sym.row_of(1), 0) = 0.5;
    CHECK_THAT(spatial_variance_estimator(sym).values[0], WithinAbs(1.0, 1e-15));
    sym.values.setZero();
    sym.values(sym.row_of(0), 0) = 0.01;
    CHECK(spatial_variance_estimator(sym).flagged[0]);
    CHECK_THROWS_AS(sym.row_of(3), OutOfRange);
}

TEST_CASE("convergence errors vanish for the full basis and shrink with S") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const ExactOracle o(p);
    const auto times = uniform_grid(0.0, 6.0, 0.2);
    // drawing with replacement cannot cover the basis, so check the full average directly
    std::vector<std::string> all;
    for (Mask m = 0; m < 64; ++m) all.push_back(to_bitstring(m, 6));
    const auto g = estimate_correlators(ensemble_from_strings(all), p, times, CorrelatorBackend::EXACT, &o);
    const Eigen::MatrixXd exact = o.correlators_all_sites(p.center(), times);
    std::vector<double> sq;
    for (std::size_t t = 0; t < times.size(); ++t) {
        const double e = g.values(p.center() - 1, static_cast<Eigen::Index>(t)) - exact(p.center() - 1, static_cast<Eigen::Index>(t));
        sq.push_back(e * e);
    }
    CHECK(time_average(times, sq) < 1e-12);

    const auto res = convergence_errors(o, {1, 4, 16}, 4, 9, times);
    REQUIRE(res.e2_c_mean.size() == 3);
    CHECK(res.e2_c_mean[2] < res.e2_c_mean[0]);
    CHECK(res.c_fit.slope < 0.0);
    CHECK(res.e2_c[0].size() == 4);
}

TEST_CASE("ensemble spread is zero at t = 0 for y states") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const ExactOracle o(p);
    Rng rng = make_rng(4, "spread");
    const auto e = draw_ensemble(EnsembleKind::Y_PRODUCT, 6, 10, rng);
    const auto s = ensemble_spread(o, e, {0.0, 2.0});
    CHECK(s.c0_std[0] < 1e-12);
    CHECK(s.sigma_std[0] < 1e-12);
    CHECK(s.c0_std[1] > 0.0);
}
