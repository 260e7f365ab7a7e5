#pragma once

// Single-qubit thermal relaxation after every two-qubit gate:
//     V0 = diag(1, e^{-i dw t} e^{-t/T2})
//     V1 = diag(0, sqrt(e^{-t/T1} - e^{-2t/T2}))
//     V2 = sqrt(1 - e^{-t/T1}) |0><1|
// applied to both qubits of each RZZ. Backends: density matrix (L <= 10) and
// quantum trajectories.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/model.hpp"
#include "mfim/protocol.hpp"
#include "mfim/rng.hpp"
#include "mfim/sampling.hpp"
#include "mfim/state.hpp"

namespace mfim {

struct NoiseParams {
    /// microseconds
    double T1 = std::numeric_limits<double>::infinity();
    double T2 = std::numeric_limits<double>::infinity();
    double gate_time = 0.6;
    /// rad / microsecond
    double delta_omega = 0.0;
    std::string name = "identity";

    void validate() const {
        if (!(T1 > 0.0)) throw InvalidArgument("T1 must be positive");
        if (!(T2 > 0.0)) throw InvalidArgument("T2 must be positive");
        if (!(gate_time > 0.0)) throw InvalidArgument("gate_time must be positive");
        if (!(T2 <= 2.0 * T1)) throw InvalidArgument("infeasible relaxation times: T2 <= 2 T1 is violated");
        if (!std::isfinite(delta_omega)) throw InvalidArgument("delta_omega must be finite");
    }

    bool is_identity() const { return std::isinf(T1) && std::isinf(T2) && delta_omega == 0.0; }

    static NoiseParams make(double T1, double T2, double gate_time, std::string name, double dw = 0.0) {
        NoiseParams n{T1, T2, gate_time, dw, std::move(name)};
        n.validate();
        return n;
    }
    static NoiseParams identity() { return NoiseParams{}; }
    static NoiseParams paper_base() { return make(120.73, 107.29, 0.6, "paper_base"); }
    static NoiseParams paper_minus50() { return make(70.73, 57.29, 0.6, "paper_minus50"); }
    static NoiseParams paper_plus60() { return make(180.73, 167.29, 0.6, "paper_plus60"); }

    static NoiseParams preset(const std::string& name) {
        if (name == "identity" || name == "none") return identity();
        if (name == "paper_base") return paper_base();
        if (name == "paper_minus50") return paper_minus50();
        if (name == "paper_plus60") return paper_plus60();
        throw InvalidArgument("unknown noise preset '" + name + "' (paper_base, paper_minus50, paper_plus60, identity)");
    }
};

struct KrausChannel {
    std::vector<Mat2> operators;

    /// max |sum V^dagger V - I|
    double completeness_error() const {
        Mat2 s = Mat2::Zero();
        for (const auto& v : operators) s += v.adjoint() * v;
        return (s - Mat2::Identity()).cwiseAbs().maxCoeff();
    }

    /// S[(r' + 2c'), (r + 2c)] = sum_k V_k[r', r] conj(V_k[c', c]), acting on (row bit, column bit).
    Mat4 superoperator() const {
        Mat4 s = Mat4::Zero();
        for (const auto& v : operators)
            for (int rp = 0; rp < 2; ++rp)
                for (int cp = 0; cp < 2; ++cp)
                    for (int r = 0; r < 2; ++r)
                        for (int c = 0; c < 2; ++c) s(rp + 2 * cp, r + 2 * c) += v(rp, r) * std::conj(v(cp, c));
        return s;
    }
};

inline KrausChannel kraus_operators(const NoiseParams& n) {
    n.validate();
    const double t = n.gate_time;
    const double e1 = std::exp(-t / n.T1), e2 = std::exp(-t / n.T2);
    KrausChannel k;
    Mat2 v0 = Mat2::Zero(), v1 = Mat2::Zero(), v2 = Mat2::Zero();
    v0(0, 0) = 1.0;
    v0(1, 1) = std::polar(e2, -n.delta_omega * t);
    v1(1, 1) = std::sqrt(std::max(0.0, e1 - e2 * e2));
    v2(0, 1) = std::sqrt(std::max(0.0, 1.0 - e1));
    k.operators = {v0, v1, v2};
    return k;
}

inline void apply_channel(DensityMatrix& rho, int qubit, const KrausChannel& ch) {
    const int L = rho.num_qubits();
    detail::require_qubit(qubit, L);
    kernel::apply_2q(rho.data(), 2 * L, qubit, L + qubit, ch.superoperator());
}

/// Picks V_k with probability ||V_k psi||^2 and renormalizes.
inline void trajectory_step(StateVector& psi, int qubit, const KrausChannel& ch, Rng& rng) {
    detail::require_qubit(qubit, psi.num_qubits());
    std::vector<StateVector> branches;
    std::vector<double> weights;
    double total = 0.0;
    for (const auto& v : ch.operators) {
        branches.push_back(psi);
        kernel::apply_1q(branches.back().data(), psi.num_qubits(), qubit, v);
        weights.push_back(branches.back().norm_squared());
        total += weights.back();
    }
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t pick = 0;
    for (; pick + 1 < weights.size(); ++pick) {
        acc += weights[pick];
        if (u < acc && weights[pick] > 0.0) break;
    }
    while (weights[pick] <= 0.0 && pick > 0) --pick;
    psi = std::move(branches[pick]);
    psi.normalize();
}

inline NoiseHook<DensityMatrix> density_noise_hook(const NoiseParams& n) {
    const KrausChannel ch = kraus_operators(n);
    return [ch](DensityMatrix& rho, const Gate& g) {
        apply_channel(rho, g.targets[0], ch);
        apply_channel(rho, g.targets[1], ch);
    };
}

inline NoiseHook<StateVector> trajectory_noise_hook(const NoiseParams& n, Rng& rng) {
    const KrausChannel ch = kraus_operators(n);
    return [ch, &rng](StateVector& psi, const Gate& g) {
        trajectory_step(psi, g.targets[0], ch, rng);
        trajectory_step(psi, g.targets[1], ch, rng);
    };
}

enum class NoiseBackend : std::uint8_t { DENSITY_MATRIX, TRAJECTORY };

/// n_steps noisy Trotter steps on a density matrix.
inline DensityMatrix noisy_trotter_dm(DensityMatrix rho, const ModelParams& p, const NoiseParams& n, int n_steps) {
    const Circuit step = trotter_step_circuit(p);
    const auto hook = density_noise_hook(n);
    for (int s = 0; s < n_steps; ++s) run_circuit_inplace(rho, step, hook);
    return rho;
}

/// One trajectory of n_steps noisy Trotter steps.
inline StateVector noisy_trotter_trajectory(StateVector psi, const ModelParams& p, const NoiseParams& n, int n_steps,
                                            Rng& rng) {
    const Circuit step = trotter_step_circuit(p);
    const auto hook = trajectory_noise_hook(n, rng);
    for (int s = 0; s < n_steps; ++s) run_circuit_inplace(psi, step, hook);
    return psi;
}

inline MeasurementProbabilities measurement_probabilities(const DensityMatrix& rho) {
    MeasurementProbabilities m;
    m.z = rho.matrix().diagonal().real();
    DensityMatrix rotated = rho;
    for (int q = 0; q < rho.num_qubits(); ++q) apply_gate_inplace(rotated, Gate::basis_change(Basis::X, q));
    m.x = rotated.matrix().diagonal().real();
    return m;
}

inline Propagator density_matrix_propagator(const ModelParams& p, const NoiseParams& n) {
    if (p.L > DensityMatrix::kMaxQubits) throw SizeRefused("density-matrix backend refused above L = 10; use trajectories");
    const Circuit step = trotter_step_circuit(p);
    const auto hook = density_noise_hook(n);
    return [step, hook](const StateVector& psi0, const std::vector<int>& steps, Rng&) {
        std::vector<MeasurementProbabilities> out;
        DensityMatrix rho = DensityMatrix::pure(psi0);
        int done = 0;
        for (int s : steps) {
            for (; done < s; ++done) run_circuit_inplace(rho, step, hook);
            out.push_back(measurement_probabilities(rho));
        }
        return out;
    };
}

/// Averages outcome distributions over `trajectories` unravelings.
inline Propagator trajectory_propagator(const ModelParams& p, const NoiseParams& n, int trajectories) {
    if (p.L > 14) throw SizeRefused("trajectory backend refused above L = 14");
    if (trajectories < 1) throw InvalidArgument("need at least one trajectory");
    const Circuit step = trotter_step_circuit(p);
    const KrausChannel ch = kraus_operators(n);
    return [step, ch, trajectories](const StateVector& psi0, const std::vector<int>& steps, Rng& rng) {
        std::vector<MeasurementProbabilities> out(steps.size());
        for (auto& m : out) {
            m.z = Eigen::VectorXd::Zero(psi0.dim());
            m.x = Eigen::VectorXd::Zero(psi0.dim());
        }
        const NoiseHook<StateVector> hook = [&](StateVector& psi, const Gate& g) {
            trajectory_step(psi, g.targets[0], ch, rng);
            trajectory_step(psi, g.targets[1], ch, rng);
        };
        for (int k = 0; k < trajectories; ++k) {
            StateVector psi = psi0;
            int done = 0;
            for (std::size_t ci = 0; ci < steps.size(); ++ci) {
                for (; done < steps[ci]; ++done) run_circuit_inplace(psi, step, hook);
                const auto m = measurement_probabilities(psi);
                out[ci].z += m.z;
                out[ci].x += m.x;
            }
        }
        for (auto& m : out) {
            m.z /= trajectories;
            m.x /= trajectories;
        }
        return out;
    };
}

/// Sample-averaged correlators under noise through the linear route
///     C^S_r(t) = tr(h_{L/2+r} N_t(X0)),  X0 = {h_{L/2}, rho_S}/2,  rho_S = (1/S) sum_k |y_k><y_k|,
/// which equals the half-difference protocol with Bell-pair states in the infinite-shot limit.
inline CorrelatorGrid noisy_ensemble_correlators(const ModelParams& p, const NoiseParams& n, const Ensemble& e,
                                                 const std::vector<int>& steps) {
    if (p.L > DensityMatrix::kMaxQubits) throw SizeRefused("density-matrix backend refused above L = 10; use trajectories");
    if (e.L != p.L) throw InvalidArgument("ensemble L does not match the model");
    const Eigen::MatrixXcd states = member_matrix(e);
    const Eigen::MatrixXcd rho = states * states.adjoint() / static_cast<double>(e.S());
    const Eigen::MatrixXcd h_rho = apply_terms(energy_density(p, p.center()).terms, rho);
    DensityMatrix X(p.L, 0.5 * (h_rho + h_rho.adjoint()));
    const Circuit step = trotter_step_circuit(p);
    const NoiseHook<DensityMatrix> hook = n.is_identity() ? NoiseHook<DensityMatrix>{} : density_noise_hook(n);
    std::vector<std::vector<PauliString>> hs;
    for (int i = 1; i <= p.L; ++i) hs.push_back(energy_density(p, i).terms);

    CorrelatorGrid g;
    g.L = p.L;
    g.r = r_offsets(p.L);
    g.values = Eigen::MatrixXd::Zero(p.L, static_cast<Eigen::Index>(steps.size()));
    int done = 0;
    for (std::size_t ci = 0; ci < steps.size(); ++ci) {
        if (steps[ci] < done) throw InvalidArgument("checkpoint steps must be ascending");
        for (; done < steps[ci]; ++done) run_circuit_inplace(X, step, hook);
        g.times.push_back(steps[ci] * p.dt);
        for (int i = 0; i < p.L; ++i) {
            double acc = 0.0;
            for (const auto& t : hs[static_cast<std::size_t>(i)]) acc += expectation_complex(X, t).real();
            g.values(i, static_cast<Eigen::Index>(ci)) = acc;
        }
    }
    g.ensemble = e.name + ":" + ensemble_kind_name(e.kind);
    g.backend = n.is_identity() ? CorrelatorBackend::TROTTER_IDEAL : CorrelatorBackend::TROTTER_NOISY;
    return g;
}

}  // namespace mfim
