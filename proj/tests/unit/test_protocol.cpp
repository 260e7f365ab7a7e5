#include <catch_amalgamated.hpp>

#include "mfim/protocol.hpp"

using namespace mfim;
using Catch::Matchers::WithinAbs;

namespace {

CheckpointData exact_data(const ModelParams& p, const std::string& y, const ProtocolOptions& o, int steps) {
    CheckpointData d;
    const auto prop = ideal_propagator(p);
    Rng rng(0);
    for (const auto& s : build_plan(y, p, o).distinct_states())
        d[key_of(s)] = pauli_table_from_probabilities(prop(prepare_state(s), {steps}, rng).front(), p.L);
    return d;
}

}  // namespace

TEST_CASE("circuit counts per pipeline") {
    for (int L : {6, 8, 12}) {
        const auto p = ModelParams::main_text(L, 1.0, 2.0);
        const std::string y(static_cast<std::size_t>(L), '1');
        CHECK(build_plan(y, p, {false, false}).size() == 16);
        CHECK(build_plan(y, p, {false, true}).size() == 12);
        CHECK(build_plan(y, p, {true, false}).size() == 24);
        CHECK(build_plan(y, p, {true, true}).size() == 16);
        CHECK(build_plan(y, p, {true, true}).distinct_states().size() == 8);
    }
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    CHECK_THROWS_AS(build_plan("0101", p, {}), InvalidArgument);
}

TEST_CASE("prepared states") {
    const std::string y = "101101";
    const int c = 3;
    const auto z_plus = prepare_state({y, 2, +1, std::nullopt});
    CHECK_THAT(z_plus.norm_squared(), WithinAbs(1.0, 1e-14));
    CHECK_THAT(expectation(z_plus, PauliString::single(Pauli::Z, c - 1)), WithinAbs(1.0, 1e-14));
    const auto x_minus = prepare_state({y, 1, -1, std::nullopt});
    CHECK_THAT(expectation(x_minus, PauliString::single(Pauli::X, c - 1)), WithinAbs(-1.0, 1e-14));
    // other sites keep their Y eigenvalues
    CHECK_THAT(expectation(x_minus, PauliString::single(Pauli::Y, 0)), WithinAbs(1.0, 1e-14));
    CHECK_THAT(expectation(x_minus, PauliString::single(Pauli::Y, 1)), WithinAbs(-1.0, 1e-14));

    // (I + Z_c Z_{c+1})|y>/sqrt2 lives on the even-parity pair subspace
    const auto bell = prepare_state({y, 3, +1, std::nullopt});
    CHECK_THAT(bell.norm_squared(), WithinAbs(1.0, 1e-14));
    double odd = 0.0, even = 0.0;
    for (Mask b = 0; b < 64; ++b) {
        const bool parity = ((b >> (c - 1)) ^ (b >> c)) & 1U;
        (parity ? odd : even) += std::norm(bell[static_cast<Eigen::Index>(b)]);
    }
    CHECK(odd < 1e-28);
    CHECK_THAT(even, WithinAbs(1.0, 1e-14));
    // with y_c = '1', y_{c+1} = '1' the pair is (|00> - |11>)/sqrt2 up to a global phase:
    // amplitudes (1/2)(1)(1) and (1/2)(i)(i) = -1/2, times sqrt2 from the projector
    const auto yb = y_state(y);
    const Mask rest = 0;  // sites other than the pair in |0>
    const cplx a00 = bell[static_cast<Eigen::Index>(rest)];
    const cplx a11 = bell[static_cast<Eigen::Index>(rest | (Mask{1} << (c - 1)) | (Mask{1} << c))];
    CHECK(std::abs(a11 / a00 + 1.0) < 1e-12);
    CHECK(std::abs(yb[0]) > 0.0);

    const auto cb = prepare_state({y, 3, -1, std::array<int, 2>{1, 0}});
    CHECK_THAT(expectation(cb, PauliString::single(Pauli::Z, c - 1)), WithinAbs(-1.0, 1e-14));
    CHECK_THAT(expectation(cb, PauliString::single(Pauli::Z, c)), WithinAbs(1.0, 1e-14));
    CHECK_THROWS_AS(prepare_state({y, 2, +1, std::array<int, 2>{0, 0}}), InvalidArgument);
    CHECK_THROWS_AS(prepare_state({y, 3, +1, std::array<int, 2>{0, 1}}), InvalidArgument);
    CHECK_THROWS_AS(prepare_state({y, 5, +1, std::nullopt}), InvalidArgument);
}

TEST_CASE("half-difference estimates at t = 0") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const auto d = exact_data(p, "011010", {}, 0);
    CHECK_THAT(mitarai_fuji_estimate(d, 6, 1, 1, 0), WithinAbs(1.0, 1e-12));
    CHECK_THAT(mitarai_fuji_estimate(d, 6, 1, 2, 0), WithinAbs(0.0, 1e-12));
    CHECK_THAT(mitarai_fuji_estimate(d, 6, 3, 3, 0), WithinAbs(1.0, 1e-12));
    CHECK_THAT(mitarai_fuji_estimate(d, 6, 3, 4, -1), WithinAbs(1.0, 1e-12));
    CheckpointData missing = d;
    missing.erase(StateKey{2, -1, -1});
    CHECK_THROWS_AS(mitarai_fuji_estimate(missing, 6, 2, 2, 0), IncompletePlan);
    CHECK_THROWS_AS(assemble_correlator(pauli_correlators(exact_data(p, "011010", {false, true}, 0), 6), p), IncompletePlan);
}

TEST_CASE("statevector pipeline equals the two-branch oracle") {
    const auto p = ModelParams::main_text(8, 1.0, 2.0);
    const std::string y = "10110100";
    Eigen::MatrixXcd st(256, 1);
    st.col(0) = y_state(y).amplitudes();
    for (int steps : {0, 3, 10}) {
        const auto oracle = trotter_state_correlators(p, st, p.center(), {steps});
        const auto C = assemble_correlator(pauli_correlators(exact_data(p, y, {}, steps), 8), p);
        for (int i = 0; i < 8; ++i) REQUIRE(std::abs(C[i] - oracle.values[0](i, 0)) < 1e-9);
    }
    // t = 0 values equal the trace oracle for every pipeline
    for (ProtocolOptions o : {ProtocolOptions{true, false}, ProtocolOptions{false, true}, ProtocolOptions{true, true}}) {
        const auto C = assemble_correlator(
            [&] {
                auto pc = pauli_correlators(exact_data(p, y, o, 0), 8);
                if (o.use_rs) apply_reflection_symmetry(pc);
                return pc;
            }(),
            p);
        for (int i = 1; i <= 8; ++i) REQUIRE(std::abs(C[i - 1] - equal_time_correlator(p, i, p.center())) < 1e-9);
    }
}

TEST_CASE("Bell value is the computational surrogate plus the off-diagonal term") {
    const auto p = ModelParams::main_text(8, 1.0, 2.0);
    const std::string y = "01101101";
    for (int steps : {0, 4, 9}) {
        const auto bell = pauli_correlators(exact_data(p, y, {false, false}, steps), 8);
        const auto cb = pauli_correlators(exact_data(p, y, {true, false}, steps), 8);
        for (int nu : {3, 4}) {
            for (int mu = 1; mu <= 4; ++mu) {
                for (int r = -3; r <= 4; ++r) {
                    if (!site_pauli(mu, 4 + r, 8)) continue;
                    const double off = off_diagonal_term(p, y, mu, r, {steps}, nu).front();
                    const double b = bell.corr[static_cast<std::size_t>(nu - 1)](mu - 1, 3 + r);
                    const double s = cb.corr[static_cast<std::size_t>(nu - 1)](mu - 1, 3 + r);
                    REQUIRE(std::abs(b - s - off) < 1e-10);
                    // at t = 0 the pair states are orthogonal under operators that do not touch the pair
                    if (steps == 0 && (4 + r < 3 || 4 + r > 6)) REQUIRE(std::abs(off) < 1e-14);
                }
            }
        }
    }
}

TEST_CASE("reflection fill") {
    PauliCorrelators pc;
    pc.L = 6;
    for (auto& t : pc.corr) t = PauliTable::Zero(4, 6);
    pc.present = {true, true, true, false};
    for (int mu = 0; mu < 4; ++mu)
        for (int s = 0; s < 6; ++s) pc.corr[2](mu, s) = 10 * mu + s;
    apply_reflection_symmetry(pc);
    CHECK(pc.present[3]);
    // site 2 (r = -1), mu = 1 <- site 4 (r = +1), mu = 1
    CHECK(pc.corr[3](0, 1) == pc.corr[2](0, 3));
    // mu = 4 at site 4 <- mu = 3 at site 2
    CHECK(pc.corr[3](3, 3) == pc.corr[2](2, 1));
    // site 6 mirrors to site 0, which does not exist
    CHECK(pc.corr[3](0, 5) == 0.0);
    PauliCorrelators empty;
    empty.L = 6;
    CHECK_THROWS_AS(apply_reflection_symmetry(empty), IncompletePlan);
}

TEST_CASE("shot estimates and their scaling") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const auto e = ensemble_from_strings({"110100"});
    ProtocolConfig cfg;
    cfg.shots = 8192;
    cfg.seed = 17;
    const auto run = run_protocol(p, e, {0}, cfg, ideal_propagator(p));
    CHECK_THAT(run.grid.values(p.center() - 1, 0), WithinAbs(1.0, 0.05));
    CHECK(run.circuits_per_checkpoint == 16);

    std::array<double, 3> sd{};
    const std::array<std::uint64_t, 3> shots{512, 2048, 8192};
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> v;
        for (std::uint64_t seed = 0; seed < 150; ++seed) {
            ProtocolConfig c;
            c.shots = shots[k];
            c.seed = 1000 + seed;
            v.push_back(run_protocol(p, e, {4}, c, ideal_propagator(p)).grid.values(p.center() - 1, 0));
        }
        sd[k] = std_of(v);
    }
    CHECK(sd[0] / sd[1] == Catch::Approx(2.0).epsilon(0.2));
    CHECK(sd[1] / sd[2] == Catch::Approx(2.0).epsilon(0.2));
}

TEST_CASE("ensemble run with exact expectations and raw-count records") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const auto e = ensemble_from_strings({"110100", "001011", "111000"});
    ProtocolConfig cfg;
    cfg.threads = 2;
    const auto steps = checkpoint_steps(6, 2);
    REQUIRE(steps == std::vector<int>{0, 2, 4, 6});
    const auto run = run_protocol(p, e, steps, cfg, ideal_propagator(p));
    std::vector<double> times;
    for (int s : steps) times.push_back(s * p.dt);
    const auto ref = estimate_correlators(e, p, times, CorrelatorBackend::TROTTER_IDEAL);
    CHECK((run.grid.values - ref.values).cwiseAbs().maxCoeff() < 1e-9);

    std::size_t records = 0;
    ProtocolConfig shots;
    shots.shots = 64;
    shots.on_counts = [&](std::size_t, const RawCountRecord& r) {
        ++records;
        std::uint64_t total = 0;
        for (const auto& [k, c] : r.counts) total += c;
        CHECK(total == 64);
    };
    const auto a = run_protocol(p, e, {0, 2}, shots, ideal_propagator(p));
    CHECK(records == 3 * 2 * 16);
    shots.on_counts = nullptr;
    shots.threads = 3;
    const auto b = run_protocol(p, e, {0, 2}, shots, ideal_propagator(p));
    CHECK((a.grid.values - b.grid.values).cwiseAbs().maxCoeff() == 0.0);
}
