#pragma once

// Dense statevector and density-matrix engine.
//
// Amplitude index b is little-endian: qubit q is bit q, and chain site i is
// qubit i-1. A density matrix is stored column-major and treated as a vector
// over 2L qubits (row qubit q is bit q, column qubit q is bit L+q), so one
// set of kernels serves both backends: U rho U^dagger applies U on the row
// bits and conj(U) on the column bits.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/pauli.hpp"
#include "mfim/rng.hpp"

namespace mfim {

using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;

// ---- raw kernels -----------------------------------------------------------------

namespace kernel {

inline void apply_1q(cplx* v, int nq, int q, const Mat2& m) {
    const std::size_t d = std::size_t{1} << nq;
    const std::size_t bit = std::size_t{1} << q;
    const cplx m00 = m(0, 0), m01 = m(0, 1), m10 = m(1, 0), m11 = m(1, 1);
    for (std::size_t hi = 0; hi < d; hi += 2 * bit) {
        for (std::size_t b = hi; b < hi + bit; ++b) {
            const cplx a0 = v[b], a1 = v[b | bit];
            v[b] = m00 * a0 + m01 * a1;
            v[b | bit] = m10 * a0 + m11 * a1;
        }
    }
}

inline void apply_diag_1q(cplx* v, int nq, int q, cplx p0, cplx p1) {
    const std::size_t d = std::size_t{1} << nq;
    for (std::size_t b = 0; b < d; ++b) v[b] *= ((b >> q) & 1U) ? p1 : p0;
}

/// Multiplies by `same` where bits a and b agree and by `diff` where they differ.
inline void apply_diag_zz(cplx* v, int nq, int a, int b, cplx same, cplx diff) {
    const std::size_t d = std::size_t{1} << nq;
    for (std::size_t k = 0; k < d; ++k) v[k] *= (((k >> a) ^ (k >> b)) & 1U) ? diff : same;
}

/// General two-qubit matrix; local index is (bit a) + 2 (bit b).
inline void apply_2q(cplx* v, int nq, int a, int b, const Mat4& m) {
    const std::size_t d = std::size_t{1} << nq;
    const std::size_t ba = std::size_t{1} << a, bb = std::size_t{1} << b;
    for (std::size_t k = 0; k < d; ++k) {
        if (k & (ba | bb)) continue;
        const std::size_t idx[4] = {k, k | ba, k | bb, k | ba | bb};
        cplx in[4], out[4];
        for (int s = 0; s < 4; ++s) in[s] = v[idx[s]];
        for (int r = 0; r < 4; ++r) {
            out[r] = m(r, 0) * in[0] + m(r, 1) * in[1] + m(r, 2) * in[2] + m(r, 3) * in[3];
        }
        for (int s = 0; s < 4; ++s) v[idx[s]] = out[s];
    }
}

}  // namespace kernel

// ---- states ----------------------------------------------------------------------

class StateVector {
public:
    StateVector() = default;

    /// |0...0> on num_qubits qubits.
    explicit StateVector(int num_qubits) : num_qubits_(checked(num_qubits)) {
        amp_ = Eigen::VectorXcd::Zero(Eigen::Index{1} << num_qubits);
        amp_[0] = 1.0;
    }

    StateVector(int num_qubits, Eigen::VectorXcd amplitudes)
        : num_qubits_(checked(num_qubits)), amp_(std::move(amplitudes)) {
        if (amp_.size() != (Eigen::Index{1} << num_qubits))
            throw InvalidArgument("amplitude vector length must be 2^L");
    }

    int num_qubits() const { return num_qubits_; }
    Eigen::Index dim() const { return amp_.size(); }
    const Eigen::VectorXcd& amplitudes() const { return amp_; }
    Eigen::VectorXcd& amplitudes() { return amp_; }
    cplx operator[](Eigen::Index b) const { return amp_[b]; }
    cplx* data() { return amp_.data(); }

    double norm_squared() const { return amp_.squaredNorm(); }
    void normalize() { amp_ /= std::sqrt(norm_squared()); }

private:
    static int checked(int n) {
        if (n < 1 || n > 30) throw InvalidArgument("statevector qubit count must be in [1, 30]");
        return n;
    }

    int num_qubits_ = 0;
    Eigen::VectorXcd amp_;
};

class DensityMatrix {
public:
    static constexpr int kMaxQubits = 10;

    DensityMatrix() = default;

    explicit DensityMatrix(int num_qubits) : num_qubits_(checked(num_qubits)) {
        rho_ = Eigen::MatrixXcd::Zero(dim_of(num_qubits), dim_of(num_qubits));
        rho_(0, 0) = 1.0;
    }

    /// Wraps an arbitrary d x d operator. Linear maps (gates, channels) are
    /// valid on non-physical operators too; invariants are checked by is_physical().
    DensityMatrix(int num_qubits, Eigen::MatrixXcd rho) : num_qubits_(checked(num_qubits)), rho_(std::move(rho)) {
        if (rho_.rows() != dim_of(num_qubits) || rho_.cols() != dim_of(num_qubits))
            throw InvalidArgument("density matrix must be 2^L x 2^L");
    }

    static DensityMatrix pure(const StateVector& psi) {
        return DensityMatrix(psi.num_qubits(), psi.amplitudes() * psi.amplitudes().adjoint());
    }

    int num_qubits() const { return num_qubits_; }
    Eigen::Index dim() const { return rho_.rows(); }
    const Eigen::MatrixXcd& matrix() const { return rho_; }
    Eigen::MatrixXcd& matrix() { return rho_; }
    cplx* data() { return rho_.data(); }
    cplx trace() const { return rho_.trace(); }

    bool is_physical(double tol = 1e-10, double eig_tol = 1e-8) const {
        if (std::abs(trace() - 1.0) > tol) return false;
        if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho_, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() >= -eig_tol;
    }

private:
    static Eigen::Index dim_of(int n) { return Eigen::Index{1} << n; }
    static int checked(int n) {
        if (n < 1) throw InvalidArgument("density matrix needs at least one qubit");
        if (n > kMaxQubits) throw SizeRefused("density-matrix backend refused above 10 qubits; use trajectories");
        return n;
    }

    int num_qubits_ = 0;
    Eigen::MatrixXcd rho_;
};

// ---- product states --------------------------------------------------------------

enum class Basis : std::uint8_t { X, Y, Z };

inline char basis_char(Basis b) { return b == Basis::X ? 'X' : (b == Basis::Y ? 'Y' : 'Z'); }

inline Basis basis_from_char(char c) {
    switch (c) {
        case 'X': case 'x': return Basis::X;
        case 'Y': case 'y': return Basis::Y;
        case 'Z': case 'z': return Basis::Z;
        default: throw InvalidArgument("basis label must be X, Y or Z");
    }
}

/// Per-site product state. Character k of `bits` and `bases` refers to qubit k.
///   Y: '1' -> (|0> + i|1>)/sqrt2 (Y = +1), '0' -> (|0> - i|1>)/sqrt2 (Y = -1)
///   Z: '0' -> |0>, '1' -> |1>
///   X: '0' -> |+>, '1' -> |->
struct ProductStateSpec {
    std::string bits;
    std::string bases;

    static ProductStateSpec uniform(std::string bits, Basis basis) {
        std::string b(bits.size(), basis_char(basis));
        return {std::move(bits), std::move(b)};
    }
};

inline std::array<cplx, 2> local_state(Basis basis, char bit) {
    if (bit != '0' && bit != '1') throw InvalidArgument("bitstring characters must be '0' or '1'");
    const double s = std::numbers::sqrt2 / 2.0;
    const bool one = bit == '1';
    switch (basis) {
        case Basis::Z: return one ? std::array<cplx, 2>{0.0, 1.0} : std::array<cplx, 2>{1.0, 0.0};
        case Basis::X: return {cplx(s), cplx(one ? -s : s)};
        case Basis::Y: return {cplx(s), cplx(0.0, one ? s : -s)};
    }
    return {};
}

inline StateVector prepare_product_state(const ProductStateSpec& spec, int num_qubits) {
    if (static_cast<int>(spec.bits.size()) != num_qubits)
        throw InvalidArgument("product state spec length " + std::to_string(spec.bits.size()) +
                              " does not match L = " + std::to_string(num_qubits));
    if (spec.bases.size() != spec.bits.size())
        throw InvalidArgument("product state spec needs one basis label per site");
    Eigen::VectorXcd amp(1);
    amp[0] = 1.0;
    for (int q = 0; q < num_qubits; ++q) {
        const auto loc = local_state(basis_from_char(spec.bases[static_cast<std::size_t>(q)]),
                                     spec.bits[static_cast<std::size_t>(q)]);
        Eigen::VectorXcd next(2 * amp.size());
        next.head(amp.size()) = loc[0] * amp;
        next.tail(amp.size()) = loc[1] * amp;
        amp.swap(next);
    }
    return StateVector(num_qubits, std::move(amp));
}

inline StateVector prepare_product_state(const ProductStateSpec& spec) {
    return prepare_product_state(spec, static_cast<int>(spec.bits.size()));
}

inline StateVector y_state(const std::string& bits) {
    return prepare_product_state(ProductStateSpec::uniform(bits, Basis::Y));
}

// ---- gates and circuits ----------------------------------------------------------

enum class GateKind : std::uint8_t {
    RX, RZ, RZZ, PAULI_X, PAULI_Y, PAULI_Z, BASIS_CHANGE_X, BASIS_CHANGE_Y
};

/// Targets are 0-based qubits. Rotations follow R_P(theta) = exp(-i theta P / 2).
/// BASIS_CHANGE_X is H; BASIS_CHANGE_Y is H S^dagger, mapping the X or Y
/// eigenbasis onto the computational basis. `adjoint` marks the inverse gate.
struct Gate {
    GateKind kind = GateKind::RX;
    std::array<int, 2> targets{0, -1};
    double angle = 0.0;
    bool adjoint = false;

    static Gate rx(int q, double theta) { return {GateKind::RX, {q, -1}, theta, false}; }
    static Gate rz(int q, double theta) { return {GateKind::RZ, {q, -1}, theta, false}; }
    static Gate rzz(int a, int b, double theta) { return {GateKind::RZZ, {a, b}, theta, false}; }
    static Gate x(int q) { return {GateKind::PAULI_X, {q, -1}, 0.0, false}; }
    static Gate y(int q) { return {GateKind::PAULI_Y, {q, -1}, 0.0, false}; }
    static Gate z(int q) { return {GateKind::PAULI_Z, {q, -1}, 0.0, false}; }
    static Gate basis_change(Basis b, int q) {
        if (b == Basis::Z) throw InvalidArgument("no basis-change gate for the Z basis");
        return {b == Basis::X ? GateKind::BASIS_CHANGE_X : GateKind::BASIS_CHANGE_Y, {q, -1}, 0.0, false};
    }

    int num_targets() const { return kind == GateKind::RZZ ? 2 : 1; }

    Gate inverse() const {
        Gate g = *this;
        switch (kind) {
            case GateKind::RX: case GateKind::RZ: case GateKind::RZZ: g.angle = -angle; break;
            case GateKind::BASIS_CHANGE_Y: g.adjoint = !adjoint; break;
            default: break;
        }
        return g;
    }
};

/// 2x2 unitary of a single-target gate.
inline Mat2 gate_matrix(const Gate& g) {
    const cplx I(0.0, 1.0);
    const double c = std::cos(g.angle / 2.0), s = std::sin(g.angle / 2.0);
    const double h = std::numbers::sqrt2 / 2.0;
    Mat2 m;
    switch (g.kind) {
        case GateKind::RX: m << c, -I * s, -I * s, c; break;
        case GateKind::RZ: m << std::exp(-I * (g.angle / 2.0)), 0.0, 0.0, std::exp(I * (g.angle / 2.0)); break;
        case GateKind::PAULI_X: m << 0.0, 1.0, 1.0, 0.0; break;
        case GateKind::PAULI_Y: m << 0.0, -I, I, 0.0; break;
        case GateKind::PAULI_Z: m << 1.0, 0.0, 0.0, -1.0; break;
        case GateKind::BASIS_CHANGE_X: m << h, h, h, -h; break;
        case GateKind::BASIS_CHANGE_Y: m << h, -I * h, h, I * h; break;
        case GateKind::RZZ: throw InvalidArgument("RZZ has no 2x2 matrix");
    }
    return g.adjoint ? Mat2(m.adjoint()) : m;
}

/// 4x4 unitary of any gate; single-target gates act on local bit 0.
inline Mat4 gate_matrix4(const Gate& g) {
    if (g.kind != GateKind::RZZ) {
        Mat4 m = Mat4::Zero();
        const Mat2 u = gate_matrix(g);
        m.block<2, 2>(0, 0) = u;
        m(2, 2) = u(0, 0); m(2, 3) = u(0, 1); m(3, 2) = u(1, 0); m(3, 3) = u(1, 1);
        return m;
    }
    const cplx I(0.0, 1.0);
    const cplx same = std::exp(-I * (g.angle / 2.0)), diff = std::exp(I * (g.angle / 2.0));
    return Eigen::Vector4cd(same, diff, diff, same).asDiagonal();
}

class Circuit {
public:
    explicit Circuit(int num_qubits = 1) : num_qubits_(num_qubits) {
        if (num_qubits < 1) throw InvalidArgument("circuit needs at least one qubit");
    }

    int num_qubits() const { return num_qubits_; }
    const std::vector<Gate>& gates() const { return gates_; }
    std::size_t size() const { return gates_.size(); }
    int entangling_count() const { return entangling_; }

    Circuit& append(const Gate& g) {
        detail::require_qubit(g.targets[0], num_qubits_);
        if (g.num_targets() == 2) {
            detail::require_qubit(g.targets[1], num_qubits_);
            if (g.targets[0] == g.targets[1]) throw InvalidArgument("RZZ needs two distinct targets");
            ++entangling_;
        }
        gates_.push_back(g);
        return *this;
    }

    Circuit& append(const Circuit& other) {
        if (other.num_qubits_ != num_qubits_) throw InvalidArgument("circuit qubit counts differ");
        for (const auto& g : other.gates_) append(g);
        return *this;
    }

    Circuit repeated(int times) const {
        Circuit out(num_qubits_);
        for (int k = 0; k < times; ++k) out.append(*this);
        return out;
    }

    Circuit inverse() const {
        Circuit out(num_qubits_);
        for (auto it = gates_.rbegin(); it != gates_.rend(); ++it) out.append(it->inverse());
        return out;
    }

private:
    int num_qubits_;
    std::vector<Gate> gates_;
    int entangling_ = 0;
};

// ---- gate application ------------------------------------------------------------

namespace detail {

inline void check_targets(const Gate& g, int num_qubits) {
    require_qubit(g.targets[0], num_qubits);
    if (g.num_targets() == 2) {
        require_qubit(g.targets[1], num_qubits);
        if (g.targets[0] == g.targets[1]) throw InvalidArgument("RZZ needs two distinct targets");
    }
}

/// Applies g (or its complex conjugate) on a raw vector with the given qubit offset.
inline void apply_raw(cplx* v, int nq, const Gate& g, int offset, bool conjugate) {
    const cplx I(0.0, 1.0);
    const int a = g.targets[0] + offset;
    switch (g.kind) {
        case GateKind::RZZ: {
            const double th = conjugate ? -g.angle : g.angle;
            kernel::apply_diag_zz(v, nq, a, g.targets[1] + offset, std::exp(-I * (th / 2.0)), std::exp(I * (th / 2.0)));
            return;
        }
        case GateKind::RZ: {
            const double th = conjugate ? -g.angle : g.angle;
            kernel::apply_diag_1q(v, nq, a, std::exp(-I * (th / 2.0)), std::exp(I * (th / 2.0)));
            return;
        }
        case GateKind::PAULI_Z:
            kernel::apply_diag_1q(v, nq, a, 1.0, -1.0);
            return;
        default: {
            const Mat2 m = gate_matrix(g);
            kernel::apply_1q(v, nq, a, conjugate ? Mat2(m.conjugate()) : m);
        }
    }
}

}  // namespace detail

inline void apply_gate_inplace(StateVector& psi, const Gate& g) {
    detail::check_targets(g, psi.num_qubits());
    detail::apply_raw(psi.data(), psi.num_qubits(), g, 0, false);
}

inline void apply_gate_inplace(DensityMatrix& rho, const Gate& g) {
    const int L = rho.num_qubits();
    detail::check_targets(g, L);
    detail::apply_raw(rho.data(), 2 * L, g, 0, false);
    detail::apply_raw(rho.data(), 2 * L, g, L, true);
}

template <class State>
State apply_gate(State s, const Gate& g) {
    apply_gate_inplace(s, g);
    return s;
}

/// Called after every two-target gate with that gate; used to install noise.
template <class State>
using NoiseHook = std::function<void(State&, const Gate&)>;

template <class State>
void run_circuit_inplace(State& s, const Circuit& c, const NoiseHook<State>& hook = {}) {
    if (c.num_qubits() != s.num_qubits()) throw InvalidArgument("circuit and state qubit counts differ");
    for (const auto& g : c.gates()) {
        apply_gate_inplace(s, g);
        if (hook && g.num_targets() == 2) hook(s, g);
    }
}

template <class State>
State run_circuit(State s, const Circuit& c, const NoiseHook<State>& hook = {}) {
    run_circuit_inplace(s, c, hook);
    return s;
}

// ---- observables -----------------------------------------------------------------

inline void check_support(const PauliString& p, int num_qubits) {
    if (num_qubits < 64 && (p.support() >> num_qubits) != 0)
        throw OutOfRange("Pauli string acts outside the register");
}

inline cplx expectation_complex(const StateVector& psi, const PauliString& p) {
    check_support(p, psi.num_qubits());
    return matrix_element(psi.amplitudes(), p, psi.amplitudes());
}

inline double expectation(const StateVector& psi, const PauliString& p) {
    return expectation_complex(psi, p).real();
}

/// tr(rho P), coefficient included.
inline cplx expectation_complex(const DensityMatrix& rho, const PauliString& p) {
    check_support(p, rho.num_qubits());
    const auto& m = rho.matrix();
    const Mask d = static_cast<Mask>(rho.dim());
    cplx acc{};
    for (Mask b = 0; b < d; ++b) {
        const cplx v = m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b ^ p.x_mask));
        acc += detail::parity(b & p.z_mask) ? -v : v;
    }
    return acc * detail::i_pow(p.y_count()) * p.coefficient;
}

inline double expectation(const DensityMatrix& rho, const PauliString& p) {
    return expectation_complex(rho, p).real();
}

// ---- measurement sampling --------------------------------------------------------

/// Outcome histogram keyed by the measured computational index (bit q = qubit q).
using Histogram = std::map<Mask, std::uint64_t>;

inline std::string to_bitstring(Mask m, int num_qubits) {
    std::string s(static_cast<std::size_t>(num_qubits), '0');
    for (int q = 0; q < num_qubits; ++q)
        if ((m >> q) & 1U) s[static_cast<std::size_t>(q)] = '1';
    return s;
}

inline Mask from_bitstring(const std::string& s) {
    if (s.size() > 64) throw InvalidArgument("bitstring longer than 64 sites");
    Mask m = 0;
    for (std::size_t q = 0; q < s.size(); ++q) {
        if (s[q] == '1') m |= Mask{1} << q;
        else if (s[q] != '0') throw InvalidArgument("bitstring characters must be '0' or '1'");
    }
    return m;
}

/// Draws `shots` outcomes from a probability vector by inverse-CDF sampling.
inline Histogram sample_from_probabilities(const Eigen::VectorXd& probs, std::uint64_t shots, Rng& rng) {
    if (shots == 0) throw InvalidArgument("shots must be at least 1");
    std::vector<double> cdf(static_cast<std::size_t>(probs.size()));
    double acc = 0.0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
        acc += probs[k];
        cdf[static_cast<std::size_t>(k)] = acc;
    }
    Histogram h;
    for (std::uint64_t s = 0; s < shots; ++s) {
        const double u = uniform01(rng) * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        ++h[static_cast<Mask>(it - cdf.begin())];
    }
    return h;
}

/// Born-rule sampling after rotating each qubit into its measurement basis.
/// meas_basis[k] labels qubit k ('X', 'Y' or 'Z').
inline Histogram sample_counts(const StateVector& psi, const std::string& meas_basis, std::uint64_t shots, Rng& rng) {
    if (static_cast<int>(meas_basis.size()) != psi.num_qubits())
        throw InvalidArgument("measurement basis needs one label per qubit");
    if (shots == 0) throw InvalidArgument("shots must be at least 1");
    StateVector rotated = psi;
    for (int q = 0; q < psi.num_qubits(); ++q) {
        const Basis b = basis_from_char(meas_basis[static_cast<std::size_t>(q)]);
        if (b != Basis::Z) apply_gate_inplace(rotated, Gate::basis_change(b, q));
    }
    return sample_from_probabilities(rotated.amplitudes().cwiseAbs2(), shots, rng);
}

/// Empirical mean of prod_{q in mask} (-1)^{bit q} over a histogram.
inline double parity_mean(const Histogram& h, Mask mask) {
    double acc = 0.0;
    std::uint64_t total = 0;
    for (const auto& [m, c] : h) {
        acc += (detail::parity(m & mask) ? -1.0 : 1.0) * static_cast<double>(c);
        total += c;
    }
    if (total == 0) throw InvalidArgument("empty histogram");
    return acc / static_cast<double>(total);
}

}  // namespace mfim
