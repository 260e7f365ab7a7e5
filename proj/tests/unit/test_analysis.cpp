#include <catch_amalgamated.hpp>

#include <random>

#include "mfim/analysis.hpp"
#include "mfim/exact.hpp"

using namespace mfim;
using Catch::Matchers::WithinAbs;

namespace {

CorrelatorGrid empty_grid(int L, const std::vector<double>& times) {
    CorrelatorGrid g;
    g.L = L;
    g.r = r_offsets(L);
    g.times = times;
    g.values = Eigen::MatrixXd::Zero(L, static_cast<Eigen::Index>(times.size()));
    return g;
}

}  // namespace

TEST_CASE("power-law fits recover z from noisy synthetic data") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.01);
    for (double z : {1.0, 1.5, 2.0}) {
        std::vector<double> t, d, s;
        for (int k = 1; k <= 90; ++k) {
            t.push_back(0.1 * k);
            d.push_back(0.7 * std::pow(t.back(), -1.0 / z) * (1.0 + g(rng)));
            s.push_back(0.3 * std::pow(t.back(), 2.0 / z) * (1.0 + g(rng)));
        }
        const auto fd = fit_power_law(t, d, {2.0, 9.0}, FitKind::DECAY);
        const auto fg = fit_power_law(t, s, {1.0, 5.0}, FitKind::GROWTH);
        CHECK(std::abs(fd.z - z) / z < 0.05);
        CHECK(std::abs(fg.z - z) / z < 0.05);
        CHECK_THAT(fd.amplitude, WithinAbs(0.7, 0.03));
        CHECK(fd.points == 71);
    }
}

TEST_CASE("fit refusal and exclusions") {
    std::vector<double> t{1, 2, 3, 4, 5, 6}, v{1, 0.5, -0.1, 0.25, 0.2, 0.17};
    // the negative point is dropped, leaving 5
    CHECK(fit_power_law(t, v, {1, 6}, FitKind::DECAY).points == 5);
    v[1] = 0.0;
    CHECK_THROWS_AS(fit_power_law(t, v, {1, 6}, FitKind::DECAY), FitRefused);
    CHECK_THROWS_AS(fit_power_law(t, {1, 1, 1, 1, 1, 1}, {1, 6}, FitKind::DECAY), FitRefused);
    CHECK_THROWS_AS(fit_power_law(t, v, {6, 1}, FitKind::DECAY), InvalidArgument);
    std::vector<bool> flags(6, false);
    flags[5] = true;
    v = {1, 0.5, 0.3, 0.25, 0.2, 0.17};
    CHECK(fit_power_law(t, v, {1, 6}, FitKind::DECAY, &flags).points == 5);
    CHECK(default_fit_window(2.0).t_min == 2.0);
    CHECK(default_fit_window(2.0).t_max == 9.0);
    CHECK(default_fit_window(6.0).t_max == 5.0);
}

TEST_CASE("renormalization is scale invariant") {
    auto g = empty_grid(6, {0.0, 1.0, 2.0});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values.data()[i] = u(rng);
    const auto a = renormalize(g);
    auto h = g;
    h.values *= 0.37;
    const auto b = renormalize(h);
    CHECK((a.renorm - b.renorm).cwiseAbs().maxCoeff() < 1e-14);
    for (Eigen::Index t = 0; t < 3; ++t) CHECK_THAT(a.renorm.col(t).sum(), WithinAbs(1.0, 1e-14));
    const auto va = spatial_variance(a), vb = spatial_variance(b);
    for (std::size_t k = 0; k < 3; ++k) CHECK_THAT(va.values[k], WithinAbs(vb.values[k], 1e-13));
}

TEST_CASE("variance of delta and two-point profiles") {
    auto g = empty_grid(8, {0.0, 1.0, 2.0});
    g.values(g.row_of(0), 0) = 0.9;
    g.values(g.row_of(2), 1) = 0.4;
    g.values(g.row_of(-2), 1) = 0.4;
    g.values(g.row_of(1), 2) = 0.01;
    const auto m = renormalize(g);
    const auto v = spatial_variance(m);
    CHECK_THAT(v.values[0], WithinAbs(0.0, 1e-14));
    CHECK_THAT(v.values[1], WithinAbs(4.0, 1e-14));
    CHECK(v.flagged[2]);
    CHECK(m.flagged[2]);
    CHECK(v.unflagged().first.size() == 2);
    CHECK(m.series(0)[0] == 1.0);

    const auto rows = export_heatmap(m);
    CHECK(rows.size() == 3 * 8);
    CHECK(rows[0].r == -3);
    CHECK(rows[8 + 5].r == 2);
    CHECK_THAT(rows[8 + 5].value, WithinAbs(0.5, 1e-14));
    CHECK(rows[16].flagged);
    const auto front = light_cone_front(m, 0.1);
    CHECK(front == std::vector<int>{0, 2, -1});
}

TEST_CASE("sum rule of an exact grid") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    ExactOracle oracle(p);
    const std::vector<double> times{0.0, 0.5, 3.0};
    CorrelatorGrid g = empty_grid(6, times);
    g.values = oracle.correlators_all_sites(p.center(), times);
    const auto s = sum_rule(g, &p);
    REQUIRE(s.constant.has_value());
    for (double v : s.values) CHECK_THAT(v, WithinAbs(*s.constant, 1e-10));
    auto bad = g;
    bad.values = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS_AS(sum_rule(bad), InvalidArgument);
    CHECK(!crossing_time(s, 0.2).has_value());
    CHECK(crossing_time(s, 2.0).value() == 0.0);
}

TEST_CASE("window averages") {
    const std::vector<double> t{0, 1, 2, 3}, a{0, 1, 2, 3}, b{0, 0, 0, 0};
    CHECK_THAT(mean_abs_difference(t, a, b, 0, 3), WithinAbs(1.5, 1e-14));
    CHECK_THAT(mean_abs_difference(t, a, b, 1, 2), WithinAbs(1.5, 1e-14));
    CHECK_THAT(mean_squared_difference(t, a, b, 0, 1), WithinAbs(0.5, 1e-14));
    CHECK_THROWS_AS(mean_abs_difference(t, a, b, 4, 5), InvalidArgument);
}
