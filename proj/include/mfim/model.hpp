#pragma once

// Mixed-field Ising chain, its normalized energy densities and Trotter step.
//
// Two parameterizations are supported:
//   MAIN_TEXT  H = 4V sum n_i n_{i+1} + Omega sum X_i, with n = (I + Z)/2,
//              N = sqrt(Omega^2 + 9V^2/2);
//   APPENDIX   H = sum h_x^j X_j + h_z sum Z_j + V sum Z_j Z_{j+1},
//              N = sqrt(V^2/2 + h_x^2 + h_z^2), h_x^j = h_x + r_j.
// In both cases H = N sum_i h_i + identity_offset.
//
// Per-site local operators P^mu_i, mu = 1..4: X_i, Z_i, Z_i Z_{i+1}, Z_{i-1} Z_i.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/pauli.hpp"
#include "mfim/rng.hpp"
#include "mfim/state.hpp"

namespace mfim {

enum class Variant : std::uint8_t { MAIN_TEXT, APPENDIX };

inline std::string variant_name(Variant v) { return v == Variant::MAIN_TEXT ? "main_text" : "appendix"; }

struct ModelParams {
    int L = 12;
    Variant variant = Variant::MAIN_TEXT;
    double V = 1.0;
    double omega = 2.0;
    /// Unperturbed transverse field (APPENDIX); N is built from this value.
    double h_x = 0.0;
    double h_z = 0.0;
    /// Per-site perturbations r_j (APPENDIX), index j-1; empty means none.
    std::vector<double> r;
    double dt = 0.1;
    std::uint64_t rng_seed = 0;

    static ModelParams main_text(int L, double V, double omega, double dt = 0.1) {
        ModelParams p;
        p.L = L;
        p.variant = Variant::MAIN_TEXT;
        p.V = V;
        p.omega = omega;
        p.dt = dt;
        p.validate();
        return p;
    }

    /// APPENDIX parameters; perturbations r_j ~ U[-r_amplitude, r_amplitude] when r_amplitude > 0.
    static ModelParams appendix(int L, double V, double h_x, double h_z, double r_amplitude = 0.0,
                                std::uint64_t seed = 0, double dt = 0.1) {
        ModelParams p;
        p.L = L;
        p.variant = Variant::APPENDIX;
        p.V = V;
        p.h_x = h_x;
        p.h_z = h_z;
        p.dt = dt;
        p.rng_seed = seed;
        if (r_amplitude > 0.0) {
            Rng rng(seed);
            std::uniform_real_distribution<double> u(-r_amplitude, r_amplitude);
            p.r.resize(static_cast<std::size_t>(L));
            for (auto& x : p.r) x = u(rng);
        }
        p.validate();
        return p;
    }

    /// (V, h_x, h_z) = (1, -1.05 + r_j, 0.5), r_j ~ U[-0.01, 0.01].
    static ModelParams strongly_chaotic(int L, std::uint64_t seed = 7) {
        return appendix(L, 1.0, -1.05, 0.5, 0.01, seed);
    }

    /// (V, h_x, h_z) = (1, 2, 2), no perturbations.
    static ModelParams qpu_experiment(int L) { return appendix(L, 1.0, 2.0, 2.0); }

    void validate() const {
        if (L < 4 || L % 2 != 0) throw InvalidArgument("L must be even and at least 4");
        if (L > 30) throw InvalidArgument("L above 30 is not supported");
        if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
        if (variant == Variant::APPENDIX && !r.empty() && static_cast<int>(r.size()) != L)
            throw InvalidArgument("perturbation vector must have one entry per site");
        if (!(normalization() > 0.0)) throw InvalidArgument("normalization N must be positive");
    }

    double normalization() const {
        if (variant == Variant::MAIN_TEXT) return std::sqrt(omega * omega + 4.5 * V * V);
        return std::sqrt(0.5 * V * V + h_x * h_x + h_z * h_z);
    }

    /// h_x^j including the perturbation (APPENDIX) or Omega (MAIN_TEXT).
    double transverse_field(int site) const {
        detail::require_site(site, L);
        if (variant == Variant::MAIN_TEXT) return omega;
        return h_x + (r.empty() ? 0.0 : r[static_cast<std::size_t>(site - 1)]);
    }

    int center() const { return L / 2; }
};

/// Unit Pauli string P^mu_site, or nothing where the operator would leave the chain.
inline std::optional<PauliString> site_pauli(int mu, int site, int L) {
    detail::require_site(site, L);
    const int q = site - 1;
    switch (mu) {
        case 1: return PauliString::single(Pauli::X, q);
        case 2: return PauliString::single(Pauli::Z, q);
        case 3:
            if (site == L) return std::nullopt;
            return PauliString::from_ops({{q, Pauli::Z}, {q + 1, Pauli::Z}});
        case 4:
            if (site == 1) return std::nullopt;
            return PauliString::from_ops({{q - 1, Pauli::Z}, {q, Pauli::Z}});
        default: throw InvalidArgument("operator label mu must be in 1..4");
    }
}

struct EnergyDensity {
    int site = 1;
    double normalization = 1.0;
    /// Coefficients c_mu of P^mu_site, N included; zero where P^mu is absent.
    std::array<double, 4> coefficients{};
    /// Nonzero terms with their coefficients folded in.
    std::vector<PauliString> terms;

    PauliOp op() const { return PauliOp::from_strings(terms); }
};

inline EnergyDensity energy_density(const ModelParams& p, int site) {
    detail::require_site(site, p.L);
    const double N = p.normalization();
    const bool left = site == 1, right = site == p.L;
    std::array<double, 4> c{};
    if (p.variant == Variant::MAIN_TEXT) {
        c[0] = p.omega;
        c[1] = (left || right) ? p.V : 2.0 * p.V;
    } else {
        c[0] = p.transverse_field(site);
        c[1] = (left || right) ? 0.5 * p.h_z : p.h_z;
    }
    c[2] = right ? 0.0 : 0.5 * p.V;
    c[3] = left ? 0.0 : 0.5 * p.V;
    EnergyDensity h;
    h.site = site;
    h.normalization = N;
    for (int mu = 1; mu <= 4; ++mu) {
        const double coef = c[static_cast<std::size_t>(mu - 1)] / N;
        h.coefficients[static_cast<std::size_t>(mu - 1)] = coef;
        if (auto s = site_pauli(mu, site, p.L); s && coef != 0.0) {
            s->coefficient = coef;
            h.terms.push_back(*s);
        }
    }
    return h;
}

struct Hamiltonian {
    int L = 0;
    /// Combined Pauli terms of N sum_i h_i (identity excluded).
    std::vector<PauliString> terms;
    /// Scalar shift so that the full H equals the un-normalized model definition.
    double identity_offset = 0.0;

    PauliOp op(bool with_offset = true) const {
        PauliOp o = PauliOp::from_strings(terms);
        if (with_offset && identity_offset != 0.0) o.add(PauliString::identity(identity_offset));
        return o;
    }

    Eigen::MatrixXd dense(bool with_offset = true) const {
        if (L > 14) throw SizeRefused("dense Hamiltonian refused above L = 14");
        return to_dense_real(op(with_offset), L);
    }
};

inline Hamiltonian hamiltonian(const ModelParams& p) {
    p.validate();
    const double N = p.normalization();
    PauliOp sum;
    for (int i = 1; i <= p.L; ++i) {
        PauliOp hi = energy_density(p, i).op();
        hi *= N;
        sum += hi;
    }
    sum.prune(1e-15);
    Hamiltonian H;
    H.L = p.L;
    for (const auto& [k, c] : sum.terms()) H.terms.push_back({k.first, k.second, c.real()});
    H.identity_offset = p.variant == Variant::MAIN_TEXT ? (p.L - 1) * p.V : 0.0;
    return H;
}

/// Sum-rule constant C = (Omega^2 + 5V^2) / (Omega^2 + 9V^2/2); MAIN_TEXT only.
inline double sum_rule_constant(const ModelParams& p) {
    if (p.variant != Variant::MAIN_TEXT)
        throw Unsupported("no closed-form sum rule for the appendix parameterization; use sum_rule_numeric");
    const double o2 = p.omega * p.omega, v2 = p.V * p.V;
    return (o2 + 5.0 * v2) / (o2 + 4.5 * v2);
}

/// Infinite-temperature equal-time correlator <h_i h_j>_inf by Pauli orthogonality.
inline double equal_time_correlator(const ModelParams& p, int i, int j) {
    return trace_inner(energy_density(p, i).op(), energy_density(p, j).op()).real();
}

/// sum_r C_r(0) around the center site, by Pauli trace; valid for both variants.
inline double sum_rule_numeric(const ModelParams& p) {
    double s = 0.0;
    for (int i = 1; i <= p.L; ++i) s += equal_time_correlator(p, i, p.center());
    return s;
}

/// <H^2>_inf of the traceless part N sum h_i, by Pauli trace.
inline double h2_infinite_temperature(const ModelParams& p) {
    double s = 0.0;
    for (const auto& t : hamiltonian(p).terms) s += t.coefficient * t.coefficient;
    return s;
}

/// Closed form of <H^2>_inf for unperturbed APPENDIX parameters:
/// L h_x^2 + (L - 3/2) h_z^2 + (L - 1) V^2.
inline double appendix_h2_closed_form(const ModelParams& p) {
    if (p.variant != Variant::APPENDIX) throw Unsupported("closed form is for the appendix parameterization");
    const double L = p.L;
    return L * p.h_x * p.h_x + (L - 1.5) * p.h_z * p.h_z + (L - 1.0) * p.V * p.V;
}

/// alpha_{mu nu} = c_mu(i) c_nu(j), so that h_i h_j = sum alpha_{mu nu} P^mu_i P^nu_j.
inline Eigen::Matrix4d pauli_decomposition(const ModelParams& p, int i, int j) {
    const auto ci = energy_density(p, i).coefficients;
    const auto cj = energy_density(p, j).coefficients;
    Eigen::Matrix4d a;
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) a(m, n) = ci[static_cast<std::size_t>(m)] * cj[static_cast<std::size_t>(n)];
    return a;
}

/// One first-order step: RZZ on every bond, then RZ on every site, then RX on every site.
inline Circuit trotter_step_circuit(const ModelParams& p) {
    const Hamiltonian H = hamiltonian(p);
    Circuit zz(p.L), z(p.L), x(p.L);
    for (const auto& t : H.terms) {
        const double theta = 2.0 * t.coefficient * p.dt;
        if (t.x_mask == 0 && std::popcount(t.z_mask) == 2) {
            const int a = std::countr_zero(t.z_mask);
            const int b = 63 - std::countl_zero(t.z_mask);
            zz.append(Gate::rzz(a, b, theta));
        } else if (t.x_mask == 0 && std::popcount(t.z_mask) == 1) {
            z.append(Gate::rz(std::countr_zero(t.z_mask), theta));
        } else if (t.z_mask == 0 && std::popcount(t.x_mask) == 1) {
            x.append(Gate::rx(std::countr_zero(t.x_mask), theta));
        } else {
            throw Unsupported("Hamiltonian term outside the ZZ/Z/X Trotter layers");
        }
    }
    return zz.append(z).append(x);
}

inline Circuit trotter_circuit(const ModelParams& p, int n_steps) {
    if (n_steps < 0) throw InvalidArgument("step count must be non-negative");
    return trotter_step_circuit(p).repeated(n_steps);
}

}  // namespace mfim
