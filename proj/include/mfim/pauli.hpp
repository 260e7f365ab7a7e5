#pragma once

// Bit-mask Pauli algebra.
//
// A string is stored as a pair of L-bit masks (x, z). Per qubit the pair of
// bits selects I (0,0), X (1,0), Z (0,1) or Y (1,1); Y is the Hermitian Pauli,
// so the operator is i^{#Y} X^x Z^z and its action on a basis state is
//
//     P |b> = i^{#Y} (-1)^{popcount(b & z)} |b ^ x>.
//
// Qubit k is bit k of the mask; chain site i (1-based) is qubit i-1.

#include <bit>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "mfim/error.hpp"

namespace mfim {

using Mask = std::uint64_t;
using cplx = std::complex<double>;

enum class Pauli : std::uint8_t { I = 0, X = 1, Z = 2, Y = 3 };

namespace detail {

inline cplx i_pow(int k) {
    switch (k & 3) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
    }
}

inline int parity(Mask m) { return std::popcount(m) & 1; }

}  // namespace detail

/// Hermitian Pauli string with a real coefficient.
struct PauliString {
    Mask x_mask = 0;
    Mask z_mask = 0;
    double coefficient = 1.0;

    static PauliString identity(double coef = 1.0) { return {0, 0, coef}; }

    static PauliString single(Pauli p, int qubit, double coef = 1.0) {
        PauliString s{0, 0, coef};
        s.set(qubit, p);
        return s;
    }

    static PauliString from_ops(std::initializer_list<std::pair<int, Pauli>> ops,
                                double coef = 1.0) {
        PauliString s{0, 0, coef};
        for (auto [q, p] : ops) s.set(q, p);
        return s;
    }

    /// Parses a label such as "XIZY"; character k acts on qubit k.
    static PauliString from_label(const std::string& label, double coef = 1.0) {
        PauliString s{0, 0, coef};
        for (std::size_t k = 0; k < label.size(); ++k) {
            switch (label[k]) {
                case 'I': break;
                case 'X': s.set(static_cast<int>(k), Pauli::X); break;
                case 'Y': s.set(static_cast<int>(k), Pauli::Y); break;
                case 'Z': s.set(static_cast<int>(k), Pauli::Z); break;
                default: throw InvalidArgument("bad Pauli label character '" + std::string(1, label[k]) + "'");
            }
        }
        return s;
    }

    void set(int qubit, Pauli p) {
        detail::require(qubit >= 0 && qubit < 64, "Pauli qubit index out of mask range");
        const Mask bit = Mask{1} << qubit;
        x_mask &= ~bit;
        z_mask &= ~bit;
        if (p == Pauli::X || p == Pauli::Y) x_mask |= bit;
        if (p == Pauli::Z || p == Pauli::Y) z_mask |= bit;
    }

    Pauli at(int qubit) const {
        const bool x = (x_mask >> qubit) & 1U;
        const bool z = (z_mask >> qubit) & 1U;
        if (x && z) return Pauli::Y;
        if (x) return Pauli::X;
        if (z) return Pauli::Z;
        return Pauli::I;
    }

    Mask support() const { return x_mask | z_mask; }
    int weight() const { return std::popcount(support()); }
    int y_count() const { return std::popcount(x_mask & z_mask); }
    bool is_identity() const { return support() == 0; }
    /// True when the matrix in the computational basis is real.
    bool is_real() const { return (y_count() & 1) == 0; }

    bool same_operator(const PauliString& o) const {
        return x_mask == o.x_mask && z_mask == o.z_mask;
    }

    std::string label(int num_qubits) const {
        std::string out(static_cast<std::size_t>(num_qubits), 'I');
        for (int q = 0; q < num_qubits; ++q) out[static_cast<std::size_t>(q)] = "IXZY"[static_cast<int>(at(q))];
        return out;
    }

    /// Phase picked up on basis state b: P|b> = phase(b) |b ^ x_mask> (coefficient excluded).
    cplx phase(Mask b) const {
        const int k = y_count() + 2 * detail::parity(b & z_mask);
        return detail::i_pow(k);
    }
};

/// Product of two unit Pauli strings: returns (phase, string) with P1 P2 = phase * P.
inline std::pair<cplx, PauliString> multiply(const PauliString& a, const PauliString& b) {
    // P = i^{ny} X^x Z^z, and Z^z1 X^x2 = (-1)^{|z1 & x2|} X^x2 Z^z1.
    PauliString out{a.x_mask ^ b.x_mask, a.z_mask ^ b.z_mask, 1.0};
    const int k = a.y_count() + b.y_count() - out.y_count() +
                  2 * detail::parity(a.z_mask & b.x_mask);
    return {detail::i_pow(k) * (a.coefficient * b.coefficient), out};
}

/// True when the two strings commute.
inline bool commutes(const PauliString& a, const PauliString& b) {
    return detail::parity((a.x_mask & b.z_mask) ^ (a.z_mask & b.x_mask)) == 0;
}

/// Linear combination of Pauli strings with complex coefficients.
class PauliOp {
public:
    using Key = std::pair<Mask, Mask>;

    PauliOp() = default;

    void add(const PauliString& s) { add(s.x_mask, s.z_mask, cplx(s.coefficient, 0.0)); }

    void add(Mask x, Mask z, cplx c) {
        auto& slot = terms_[{x, z}];
        slot += c;
    }

    template <class Range>
    static PauliOp from_strings(const Range& strings) {
        PauliOp op;
        for (const auto& s : strings) op.add(s);
        return op;
    }

    const std::map<Key, cplx>& terms() const { return terms_; }

    cplx coefficient(Mask x, Mask z) const {
        auto it = terms_.find({x, z});
        return it == terms_.end() ? cplx{} : it->second;
    }

    /// Infinite-temperature average tr(A)/d, i.e. the identity coefficient.
    cplx normalized_trace() const { return coefficient(0, 0); }

    PauliOp& operator+=(const PauliOp& o) {
        for (const auto& [k, c] : o.terms_) terms_[k] += c;
        return *this;
    }

    PauliOp& operator*=(cplx s) {
        for (auto& [k, c] : terms_) c *= s;
        return *this;
    }

    friend PauliOp operator*(const PauliOp& a, const PauliOp& b) {
        PauliOp out;
        for (const auto& [ka, ca] : a.terms_) {
            for (const auto& [kb, cb] : b.terms_) {
                auto [ph, s] = multiply({ka.first, ka.second, 1.0}, {kb.first, kb.second, 1.0});
                out.add(s.x_mask, s.z_mask, ph * ca * cb);
            }
        }
        return out;
    }

    friend PauliOp operator+(PauliOp a, const PauliOp& b) { return a += b; }
    friend PauliOp operator-(PauliOp a, PauliOp b) { return a += (b *= -1.0); }

    PauliOp adjoint() const {
        PauliOp out;
        for (const auto& [k, c] : terms_) out.terms_[k] = std::conj(c);
        return out;
    }

    /// Drops coefficients below tol in magnitude.
    void prune(double tol = 1e-14) {
        std::erase_if(terms_, [tol](const auto& kv) { return std::abs(kv.second) <= tol; });
    }

    /// Largest coefficient magnitude; zero for the empty operator.
    double max_abs() const {
        double m = 0.0;
        for (const auto& [k, c] : terms_) m = std::max(m, std::abs(c));
        return m;
    }

private:
    std::map<Key, cplx> terms_;
};

/// <A^dagger B>_inf for Pauli sums, by orthogonality of Pauli strings.
inline cplx trace_inner(const PauliOp& a, const PauliOp& b) {
    cplx acc{};
    for (const auto& [k, ca] : a.terms()) acc += std::conj(ca) * b.coefficient(k.first, k.second);
    return acc;
}

// ---- action on dense vectors ---------------------------------------------------

/// out += scale * P |in>, coefficient of P included.
inline void apply_add(const PauliString& p, const Eigen::VectorXcd& in, Eigen::VectorXcd& out,
                      cplx scale = 1.0) {
    const Mask d = static_cast<Mask>(in.size());
    const cplx base = scale * p.coefficient * detail::i_pow(p.y_count());
    for (Mask b = 0; b < d; ++b) {
        const double sign = detail::parity(b & p.z_mask) ? -1.0 : 1.0;
        out[static_cast<Eigen::Index>(b ^ p.x_mask)] += base * sign * in[static_cast<Eigen::Index>(b)];
    }
}

inline Eigen::VectorXcd apply_pauli(const PauliString& p, const Eigen::VectorXcd& in) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(in.size());
    apply_add(p, in, out);
    return out;
}

/// <a| P |b>, coefficient included.
inline cplx matrix_element(const Eigen::VectorXcd& a, const PauliString& p, const Eigen::VectorXcd& b) {
    const Mask d = static_cast<Mask>(b.size());
    cplx acc{};
    for (Mask s = 0; s < d; ++s) {
        const cplx v = std::conj(a[static_cast<Eigen::Index>(s ^ p.x_mask)]) * b[static_cast<Eigen::Index>(s)];
        acc += detail::parity(s & p.z_mask) ? -v : v;
    }
    return acc * detail::i_pow(p.y_count()) * p.coefficient;
}

/// Dense 2^L x 2^L matrix of a Pauli sum (brute-force oracle; small L only).
inline Eigen::MatrixXcd to_dense(const PauliOp& op, int num_qubits) {
    if (num_qubits > 14) throw SizeRefused("dense Pauli matrix refused above 14 qubits");
    const Mask d = Mask{1} << num_qubits;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& [k, c] : op.terms()) {
        const PauliString p{k.first, k.second, 1.0};
        for (Mask b = 0; b < d; ++b)
            m(static_cast<Eigen::Index>(b ^ p.x_mask), static_cast<Eigen::Index>(b)) += c * p.phase(b);
    }
    return m;
}

/// Dense real matrix; valid only for sums of real strings with real coefficients.
inline Eigen::MatrixXd to_dense_real(const PauliOp& op, int num_qubits) {
    if (num_qubits > 14) throw SizeRefused("dense Pauli matrix refused above 14 qubits");
    const Mask d = Mask{1} << num_qubits;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& [k, c] : op.terms()) {
        const PauliString p{k.first, k.second, 1.0};
        if (!p.is_real() || std::abs(c.imag()) > 1e-14)
            throw InvalidArgument("operator is not real in the computational basis");
        for (Mask b = 0; b < d; ++b) {
            const double sign = (detail::parity(b & p.z_mask) ? -1.0 : 1.0) * ((p.y_count() & 2) ? -1.0 : 1.0);
            m(static_cast<Eigen::Index>(b ^ p.x_mask), static_cast<Eigen::Index>(b)) += c.real() * sign;
        }
    }
    return m;
}

}  // namespace mfim
