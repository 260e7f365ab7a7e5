#include <catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "mfim/model.hpp"
#include "mfim/state.hpp"

using namespace mfim;
using Catch::Matchers::WithinAbs;

namespace {

StateVector random_state(int L, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXcd v(Eigen::Index{1} << L);
    for (auto& a : v) a = {g(rng), g(rng)};
    v.normalize();
    return StateVector(L, v);
}

std::string random_bits(int L, std::mt19937_64& rng) {
    std::string s(static_cast<std::size_t>(L), '0');
    for (auto& c : s) c = (rng() & 1U) ? '1' : '0';
    return s;
}

std::vector<Gate> sample_gates(int L) {
    std::vector<Gate> gs;
    for (int q = 0; q < L; ++q) {
        gs.push_back(Gate::rx(q, 0.3 + q));
        gs.push_back(Gate::rz(q, -0.7 + q));
        gs.push_back(Gate::x(q));
        gs.push_back(Gate::y(q));
        gs.push_back(Gate::z(q));
        gs.push_back(Gate::basis_change(Basis::X, q));
        gs.push_back(Gate::basis_change(Basis::Y, q));
    }
    for (int q = 0; q + 1 < L; ++q) gs.push_back(Gate::rzz(q, q + 1, 1.1 * (q + 1)));
    gs.push_back(Gate::rzz(L - 1, 0, 0.4));
    return gs;
}

}  // namespace

TEST_CASE("product state preparation") {
    SECTION("computational ground string") {
        const auto psi = prepare_product_state(ProductStateSpec::uniform("0000", Basis::Z));
        CHECK(std::abs(psi[0] - 1.0) < 1e-15);
        CHECK(psi.amplitudes().tail(15).norm() < 1e-15);
    }
    SECTION("single-qubit Y eigenstate") {
        const auto psi = y_state("1");
        const double s = std::numbers::sqrt2 / 2;
        CHECK(std::abs(psi[0] - cplx(s, 0)) < 1e-15);
        CHECK(std::abs(psi[1] - cplx(0, s)) < 1e-15);
    }
    SECTION("Y expectations follow the bits") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 10; ++trial) {
            const std::string bits = random_bits(6, rng);
            const auto psi = y_state(bits);
            for (int q = 0; q < 6; ++q) {
                const double expect = bits[static_cast<std::size_t>(q)] == '1' ? 1.0 : -1.0;
                CHECK_THAT(expectation(psi, PauliString::single(Pauli::Y, q)), WithinAbs(expect, 1e-12));
                CHECK_THAT(expectation(psi, PauliString::single(Pauli::Z, q)), WithinAbs(0.0, 1e-12));
            }
        }
    }
    SECTION("X basis") {
        const auto psi = prepare_product_state(ProductStateSpec{"01", "XX"});
        CHECK_THAT(expectation(psi, PauliString::single(Pauli::X, 0)), WithinAbs(1.0, 1e-14));
        CHECK_THAT(expectation(psi, PauliString::single(Pauli::X, 1)), WithinAbs(-1.0, 1e-14));
    }
    SECTION("errors") {
        CHECK_THROWS_AS(prepare_product_state(ProductStateSpec::uniform("010", Basis::Y), 4), InvalidArgument);
        CHECK_THROWS_AS(y_state("01a"), InvalidArgument);
    }
}

TEST_CASE("gate examples") {
    SECTION("RX(pi) on |0> gives -i|1>") {
        const auto psi = apply_gate(StateVector(1), Gate::rx(0, std::numbers::pi));
        CHECK(std::abs(psi[0]) < 1e-15);
        CHECK(std::abs(psi[1] - cplx(0, -1)) < 1e-15);
    }
    SECTION("RZZ on |00> is a phase") {
        const double th = 0.37;
        const auto psi = apply_gate(StateVector(2), Gate::rzz(0, 1, th));
        CHECK(std::abs(psi[0] - std::exp(cplx(0, -th / 2))) < 1e-15);
    }
    SECTION("target out of range") {
        StateVector psi(2);
        CHECK_THROWS_AS(apply_gate_inplace(psi, Gate::rx(2, 0.1)), OutOfRange);
        CHECK_THROWS_AS(apply_gate_inplace(psi, Gate::rzz(0, 0, 0.1)), InvalidArgument);
        Circuit c(2);
        CHECK_THROWS_AS(c.append(Gate::rzz(0, 5, 1.0)), OutOfRange);
    }
}

TEST_CASE("gate matrices are unitary and match their generators") {
    for (const auto& g : sample_gates(2)) {
        const Mat4 u = gate_matrix4(g);
        REQUIRE((u * u.adjoint() - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        const Mat4 ui = gate_matrix4(g.inverse());
        REQUIRE((u * ui - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    }
    // rotation generators: exp(-i theta P / 2) = cos I - i sin P
    const double th = 0.81;
    const Mat2 rx = gate_matrix(Gate::rx(0, th));
    const Mat2 x = gate_matrix(Gate::x(0));
    const Mat2 expect = std::cos(th / 2) * Mat2::Identity() - cplx(0, std::sin(th / 2)) * x;
    CHECK((rx - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("unitarity and norm preservation") {
    const int L = 5;
    auto psi = random_state(L, 11);
    const auto start = psi;
    Circuit c(L);
    for (const auto& g : sample_gates(L)) c.append(g);
    for (const auto& g : c.gates()) {
        apply_gate_inplace(psi, g);
        REQUIRE(std::abs(psi.norm_squared() - 1.0) < 1e-10);
    }
    run_circuit_inplace(psi, c.inverse());
    CHECK((psi.amplitudes() - start.amplitudes()).norm() < 1e-12);
    const auto fid = std::norm(start.amplitudes().dot(run_circuit(run_circuit(start, c), c.inverse()).amplitudes()));
    CHECK_THAT(fid, WithinAbs(1.0, 1e-10));
    CHECK((run_circuit(start, Circuit(L)).amplitudes() - start.amplitudes()).norm() == 0.0);
}

TEST_CASE("basis change maps X and Y onto Z") {
    const int L = 3;
    const auto psi = random_state(L, 17);
    for (int q = 0; q < L; ++q) {
        const auto z = PauliString::single(Pauli::Z, q);
        const double ex = expectation(psi, PauliString::single(Pauli::X, q));
        const double ey = expectation(psi, PauliString::single(Pauli::Y, q));
        CHECK_THAT(expectation(apply_gate(psi, Gate::basis_change(Basis::X, q)), z), WithinAbs(ex, 1e-12));
        CHECK_THAT(expectation(apply_gate(psi, Gate::basis_change(Basis::Y, q)), z), WithinAbs(ey, 1e-12));
    }
}

TEST_CASE("density matrix agrees with statevector") {
    const int L = 4;
    auto psi = random_state(L, 23);
    auto rho = DensityMatrix::pure(psi);
    for (const auto& g : sample_gates(L)) {
        apply_gate_inplace(psi, g);
        apply_gate_inplace(rho, g);
    }
    CHECK(rho.is_physical());
    CHECK((rho.matrix() - psi.amplitudes() * psi.amplitudes().adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    // every Pauli string on up to three qubits
    for (Mask x = 0; x < 8; ++x) {
        for (Mask z = 0; z < 8; ++z) {
            for (int shift = 0; shift <= 1; ++shift) {
                const PauliString p{x << shift, z << shift, 1.0};
                REQUIRE(std::abs(expectation_complex(psi, p) - expectation_complex(rho, p)) < 1e-10);
                REQUIRE(std::abs(expectation_complex(rho, p).imag()) < 1e-10);
            }
        }
    }
    CHECK_THROWS_AS(DensityMatrix(11), SizeRefused);
}

TEST_CASE("expectation examples") {
    const auto y = y_state("101101");
    CHECK_THAT(expectation(y, PauliString::single(Pauli::Z, 2)), WithinAbs(0.0, 1e-14));
    CHECK_THAT(expectation(y, PauliString::single(Pauli::Y, 0)), WithinAbs(1.0, 1e-14));
    CHECK_THAT(expectation(StateVector(3), PauliString::from_label("ZZI")), WithinAbs(1.0, 1e-15));
    CHECK_THROWS_AS(expectation(StateVector(2), PauliString::from_label("IIZ")), OutOfRange);
}

TEST_CASE("measurement sampling") {
    SECTION("ground string") {
        Rng rng(1);
        const auto h = sample_counts(StateVector(4), "ZZZZ", 100, rng);
        REQUIRE(h.size() == 1);
        CHECK(h.at(0) == 100);
        CHECK(to_bitstring(h.begin()->first, 4) == "0000");
    }
    SECTION("Born rule at 1e5 shots") {
        Rng rng(2);
        const auto plus = prepare_product_state(ProductStateSpec{"0", "X"});
        const std::uint64_t shots = 100000;
        const auto h = sample_counts(plus, "Z", shots, rng);
        const double f0 = static_cast<double>(h.at(0)) / shots;
        CHECK(std::abs(f0 - 0.5) < 3.0 * std::sqrt(0.25 / shots));
        const auto hx = sample_counts(plus, "X", 1000, rng);
        CHECK(hx.size() == 1);
    }
    SECTION("estimator mean within binomial band") {
        const auto psi = random_state(3, 31);
        const std::uint64_t shots = 4096;
        for (int q = 0; q < 3; ++q) {
            Rng rng(100 + q);
            const auto h = sample_counts(psi, "ZZZ", shots, rng);
            const double est = parity_mean(h, Mask{1} << q);
            const double exact = expectation(psi, PauliString::single(Pauli::Z, q));
            CHECK(std::abs(est - exact) < 3.0 / std::sqrt(static_cast<double>(shots)));
            Rng ry(200 + q);
            const auto hy = sample_counts(psi, "YYY", shots, ry);
            const double exact_y = expectation(psi, PauliString::single(Pauli::Y, q));
            CHECK(std::abs(parity_mean(hy, Mask{1} << q) - exact_y) < 3.0 / std::sqrt(static_cast<double>(shots)));
        }
    }
    SECTION("determinism and errors") {
        const auto psi = random_state(4, 41);
        Rng a(9), b(9);
        CHECK(sample_counts(psi, "XZYZ", 500, a) == sample_counts(psi, "XZYZ", 500, b));
        Rng c(9);
        CHECK_THROWS_AS(sample_counts(psi, "XZYZ", 0, c), InvalidArgument);
        CHECK_THROWS_AS(sample_counts(psi, "XZ", 10, c), InvalidArgument);
    }
}

TEST_CASE("noise hook fires after two-target gates only") {
    const auto p = ModelParams::main_text(6, 1.0, 2.0);
    const Circuit c = trotter_circuit(p, 3);
    int calls = 0;
    NoiseHook<StateVector> hook = [&](StateVector&, const Gate& g) {
        CHECK(g.kind == GateKind::RZZ);
        ++calls;
    };
    run_circuit(StateVector(6), c, hook);
    CHECK(calls == c.entangling_count());
    CHECK(calls == 15);
}

TEST_CASE("bitstring helpers") {
    CHECK(from_bitstring("1011") == 0b1101);
    CHECK(to_bitstring(0b1101, 4) == "1011");
    CHECK_THROWS_AS(from_bitstring("10x"), InvalidArgument);
}
