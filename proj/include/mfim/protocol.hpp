#pragma once

// Ancilla-free measurement of Re<y| P^mu_{L/2+r}(t) P^nu_{L/2} |y> from the two
// prepared states |+-,nu,y> = (I +- P^nu_{L/2})|y>/sqrt2:
//     Re<y|P^mu(t) P^nu|y> = 1/2 <+|P^mu(t)|+> - 1/2 <-|P^mu(t)|->.
// nu = 1, 2 are X and Z at L/2; nu = 3 is Z_{L/2} Z_{L/2+1} and nu = 4 is
// Z_{L/2-1} Z_{L/2}. Two whole-register settings (all X, all Z) read every mu
// at every site from the same shots.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/model.hpp"
#include "mfim/parallel.hpp"
#include "mfim/rng.hpp"
#include "mfim/sampling.hpp"
#include "mfim/state.hpp"

namespace mfim {

enum class MeasurementSetting : std::uint8_t { X, Z };

inline char setting_char(MeasurementSetting s) { return s == MeasurementSetting::X ? 'X' : 'Z'; }

/// Sites of the pair touched by P^nu, nu in {3, 4}.
inline std::array<int, 2> prepared_pair(int nu, int L) {
    const int c = L / 2;
    if (nu == 3) return {c, c + 1};
    if (nu == 4) return {c - 1, c};
    throw InvalidArgument("only nu = 3 and nu = 4 act on a pair");
}

struct PreparedStateSpec {
    std::string y;
    int nu = 1;
    int sign = +1;
    /// Computational bits on prepared_pair(nu) replacing the Bell-like pair (nu in {3, 4}).
    std::optional<std::array<int, 2>> cb;
};

/// Identifies a prepared state within one y: cb = -1 for none, else bit0 + 2 bit1.
struct StateKey {
    int nu = 1;
    int sign = 1;
    int cb = -1;
    auto operator<=>(const StateKey&) const = default;

    std::string str() const {
        return "nu" + std::to_string(nu) + (sign > 0 ? "+" : "-") + (cb >= 0 ? "cb" + std::to_string(cb) : "");
    }
};

inline StateKey key_of(const PreparedStateSpec& s) {
    return {s.nu, s.sign, s.cb ? (*s.cb)[0] + 2 * (*s.cb)[1] : -1};
}

inline void validate_spec(const PreparedStateSpec& s) {
    const int L = static_cast<int>(s.y.size());
    if (L < 4 || L % 2 != 0) throw InvalidArgument("prepared states need an even L >= 4");
    if (s.nu < 1 || s.nu > 4) throw InvalidArgument("nu must be in 1..4");
    if (s.sign != 1 && s.sign != -1) throw InvalidArgument("sign must be +1 or -1");
    if (s.cb) {
        if (s.nu < 3) throw InvalidArgument("computational-basis replacement only applies to nu = 3, 4");
        for (int b : *s.cb)
            if (b != 0 && b != 1) throw InvalidArgument("computational bits must be 0 or 1");
        const int parity = ((*s.cb)[0] + (*s.cb)[1]) & 1;
        if ((parity == 0) != (s.sign > 0)) throw InvalidArgument("computational assignment parity does not match sign");
    }
    for (char ch : s.y)
        if (ch != '0' && ch != '1') throw InvalidArgument("bitstring characters must be '0' or '1'");
}

inline PauliString nu_operator(int nu, int L) {
    const auto s = site_pauli(nu, L / 2, L);
    if (!s) throw InvalidArgument("P^nu is not defined at the center site");
    return *s;
}

inline StateVector prepare_state(const PreparedStateSpec& spec) {
    validate_spec(spec);
    const int L = static_cast<int>(spec.y.size());
    const int c = L / 2;
    ProductStateSpec prod = ProductStateSpec::uniform(spec.y, Basis::Y);
    if (spec.nu == 1 || spec.nu == 2) {
        // (I +- X)|y_c> ~ |+> or |->, (I +- Z)|y_c> ~ |0> or |1>
        prod.bases[static_cast<std::size_t>(c - 1)] = spec.nu == 1 ? 'X' : 'Z';
        prod.bits[static_cast<std::size_t>(c - 1)] = spec.sign > 0 ? '0' : '1';
        return prepare_product_state(prod);
    }
    if (spec.cb) {
        const auto pair = prepared_pair(spec.nu, L);
        for (int k = 0; k < 2; ++k) {
            prod.bases[static_cast<std::size_t>(pair[k] - 1)] = 'Z';
            prod.bits[static_cast<std::size_t>(pair[k] - 1)] = (*spec.cb)[k] ? '1' : '0';
        }
        return prepare_product_state(prod);
    }
    const StateVector y = prepare_product_state(prod);
    Eigen::VectorXcd out = y.amplitudes();
    apply_add(nu_operator(spec.nu, L), y.amplitudes(), out, static_cast<double>(spec.sign));
    out *= std::numbers::sqrt2 / 2.0;
    return StateVector(L, std::move(out));
}

struct ProtocolOptions {
    bool use_cb = false;
    bool use_rs = false;
};

inline std::string pipeline_name(const ProtocolOptions& o) {
    if (o.use_cb && o.use_rs) return "cb+rs";
    if (o.use_cb) return "cb";
    if (o.use_rs) return "rs";
    return "none";
}

struct PlanEntry {
    PreparedStateSpec state;
    MeasurementSetting setting = MeasurementSetting::Z;
};

struct CircuitPlan {
    std::string y;
    ProtocolOptions options;
    std::vector<PlanEntry> entries;

    std::size_t size() const { return entries.size(); }

    std::vector<PreparedStateSpec> distinct_states() const {
        std::vector<PreparedStateSpec> out;
        std::vector<StateKey> seen;
        for (const auto& e : entries) {
            const auto k = key_of(e.state);
            if (std::find(seen.begin(), seen.end(), k) == seen.end()) {
                seen.push_back(k);
                out.push_back(e.state);
            }
        }
        return out;
    }
};

inline CircuitPlan build_plan(const std::string& y, const ModelParams& p, const ProtocolOptions& options) {
    if (static_cast<int>(y.size()) != p.L) throw InvalidArgument("bitstring length does not match L");
    CircuitPlan plan;
    plan.y = y;
    plan.options = options;
    std::vector<PreparedStateSpec> states;
    for (int nu = 1; nu <= 4; ++nu) {
        if (nu == 4 && options.use_rs) continue;
        if (nu >= 3 && options.use_cb) {
            for (int b1 = 0; b1 < 2; ++b1)
                for (int b0 = 0; b0 < 2; ++b0)
                    states.push_back({y, nu, ((b0 + b1) & 1) ? -1 : 1, std::array<int, 2>{b0, b1}});
        } else {
            states.push_back({y, nu, +1, std::nullopt});
            states.push_back({y, nu, -1, std::nullopt});
        }
    }
    for (const auto& s : states) {
        validate_spec(s);
        plan.entries.push_back({s, MeasurementSetting::X});
        plan.entries.push_back({s, MeasurementSetting::Z});
    }
    return plan;
}

// ---- measurement --------------------------------------------------------------------

/// Outcome distributions of the whole-register Z and X settings.
struct MeasurementProbabilities {
    Eigen::VectorXd z;
    Eigen::VectorXd x;
};

inline MeasurementProbabilities measurement_probabilities(const StateVector& psi) {
    MeasurementProbabilities m;
    m.z = psi.amplitudes().cwiseAbs2();
    StateVector rotated = psi;
    for (int q = 0; q < psi.num_qubits(); ++q) apply_gate_inplace(rotated, Gate::basis_change(Basis::X, q));
    m.x = rotated.amplitudes().cwiseAbs2();
    return m;
}

/// Produces the measurement distributions of an evolved prepared state at each checkpoint step.
using Propagator =
    std::function<std::vector<MeasurementProbabilities>(const StateVector&, const std::vector<int>& steps, Rng&)>;

inline Propagator ideal_propagator(const ModelParams& p) {
    const Circuit step = trotter_step_circuit(p);
    return [step](const StateVector& psi0, const std::vector<int>& steps, Rng&) {
        std::vector<MeasurementProbabilities> out;
        StateVector psi = psi0;
        int done = 0;
        for (int s : steps) {
            if (s < done) throw InvalidArgument("checkpoint steps must be ascending");
            for (; done < s; ++done) run_circuit_inplace(psi, step);
            out.push_back(measurement_probabilities(psi));
        }
        return out;
    };
}

/// Parity mask read for P^mu at `site`; nullopt where the operator is absent.
inline std::optional<Mask> observable_mask(int mu, int site, int L) {
    const auto s = site_pauli(mu, site, L);
    if (!s) return std::nullopt;
    return s->x_mask | s->z_mask;
}

/// <P^mu_site> for one prepared state; row mu-1, column site-1; absent operators are 0.
using PauliTable = Eigen::Matrix<double, 4, Eigen::Dynamic>;

inline PauliTable pauli_table_from_probabilities(const MeasurementProbabilities& m, int L) {
    PauliTable t = PauliTable::Zero(4, L);
    const Mask d = static_cast<Mask>(m.z.size());
    for (int mu = 1; mu <= 4; ++mu) {
        const Eigen::VectorXd& pr = mu == 1 ? m.x : m.z;
        for (int site = 1; site <= L; ++site) {
            const auto mask = observable_mask(mu, site, L);
            if (!mask) continue;
            double acc = 0.0;
            for (Mask b = 0; b < d; ++b) acc += detail::parity(b & *mask) ? -pr[static_cast<Eigen::Index>(b)] : pr[static_cast<Eigen::Index>(b)];
            t(mu - 1, site - 1) = acc;
        }
    }
    return t;
}

inline PauliTable pauli_table_from_counts(const Histogram& x, const Histogram& z, int L) {
    PauliTable t = PauliTable::Zero(4, L);
    for (int mu = 1; mu <= 4; ++mu)
        for (int site = 1; site <= L; ++site)
            if (const auto mask = observable_mask(mu, site, L)) t(mu - 1, site - 1) = parity_mean(mu == 1 ? x : z, *mask);
    return t;
}

using CheckpointData = std::map<StateKey, PauliTable>;

/// Re<y|P^mu_{L/2+r}(t) P^nu_{L/2}|y> by the half-difference rule. With computational
/// replacements for nu in {3, 4}: <+> -> (<00> + <11>)/2 and <-> -> (<01> + <10>)/2.
inline double mitarai_fuji_estimate(const CheckpointData& data, int L, int mu, int nu, int r) {
    const int site = L / 2 + r;
    detail::require_site(site, L);
    if (mu < 1 || mu > 4) throw InvalidArgument("mu must be in 1..4");
    auto get = [&](StateKey k) -> double {
        const auto it = data.find(k);
        if (it == data.end()) throw IncompletePlan("missing prepared state " + k.str());
        return it->second(mu - 1, site - 1);
    };
    const bool cb = nu >= 3 && data.count({nu, 1, 0});
    if (cb) {
        const double plus = 0.5 * (get({nu, 1, 0}) + get({nu, 1, 3}));
        const double minus = 0.5 * (get({nu, -1, 1}) + get({nu, -1, 2}));
        return 0.5 * (plus - minus);
    }
    return 0.5 * (get({nu, 1, -1}) - get({nu, -1, -1}));
}

/// corr[nu-1](mu-1, site-1) = Re<y|P^mu_site(t) P^nu_{L/2}|y>.
struct PauliCorrelators {
    int L = 0;
    std::array<PauliTable, 4> corr;
    std::array<bool, 4> present{};
};

inline PauliCorrelators pauli_correlators(const CheckpointData& data, int L) {
    PauliCorrelators out;
    out.L = L;
    for (int nu = 1; nu <= 4; ++nu) {
        bool have = false;
        for (const auto& [k, v] : data) have = have || k.nu == nu;
        out.present[static_cast<std::size_t>(nu - 1)] = have;
        out.corr[static_cast<std::size_t>(nu - 1)] = PauliTable::Zero(4, L);
        if (!have) continue;
        for (int mu = 1; mu <= 4; ++mu)
            for (int site = 1; site <= L; ++site)
                if (site_pauli(mu, site, L))
                    out.corr[static_cast<std::size_t>(nu - 1)](mu - 1, site - 1) =
                        mitarai_fuji_estimate(data, L, mu, nu, site - L / 2);
    }
    return out;
}

/// Mirror about the center site, i -> L - i, which exchanges P^3 and P^4:
///   Re<y|P^mu_{L/2+r}(t) P^4_{L/2}|y> <- Re<y|P^mu'_{L/2-r}(t) P^3_{L/2}|y>, mu' = mu with 3 <-> 4.
/// Entries whose mirror site falls off the chain (site 0) are set to 0.
inline void apply_reflection_symmetry(PauliCorrelators& pc) {
    if (!pc.present[2]) throw IncompletePlan("reflection needs the nu = 3 correlators");
    const int L = pc.L;
    PauliTable filled = PauliTable::Zero(4, L);
    for (int mu = 1; mu <= 4; ++mu) {
        const int mirror_mu = mu == 3 ? 4 : (mu == 4 ? 3 : mu);
        for (int site = 1; site <= L; ++site) {
            const int m = L - site;
            if (m < 1 || !site_pauli(mu, site, L) || !site_pauli(mirror_mu, m, L)) continue;
            filled(mu - 1, site - 1) = pc.corr[2](mirror_mu - 1, m - 1);
        }
    }
    pc.corr[3] = filled;
    pc.present[3] = true;
}

/// C^y_r(t) = sum_{mu nu} alpha_{mu nu}(r) Re<y|P^mu_{L/2+r}(t) P^nu_{L/2}|y>, for sites 1..L.
inline Eigen::VectorXd assemble_correlator(const PauliCorrelators& pc, const ModelParams& p) {
    const int L = p.L, c = p.center();
    if (pc.L != L) throw InvalidArgument("correlator table size does not match L");
    const auto cj = energy_density(p, c).coefficients;
    for (int nu = 1; nu <= 4; ++nu)
        if (cj[static_cast<std::size_t>(nu - 1)] != 0.0 && !pc.present[static_cast<std::size_t>(nu - 1)])
            throw IncompletePlan("missing correlators for nu = " + std::to_string(nu));
    Eigen::VectorXd out = Eigen::VectorXd::Zero(L);
    for (int site = 1; site <= L; ++site) {
        const Eigen::Matrix4d a = pauli_decomposition(p, site, c);
        double acc = 0.0;
        for (int mu = 0; mu < 4; ++mu)
            for (int nu = 0; nu < 4; ++nu)
                if (a(mu, nu) != 0.0) acc += a(mu, nu) * pc.corr[static_cast<std::size_t>(nu)](mu, site - 1);
        out[site - 1] = acc;
    }
    return out;
}

// ---- the CB off-diagonal term -------------------------------------------------------

/// Bell-pair value minus computational surrogate of Re<y|P^mu_{L/2+r}(t) P^nu_{L/2}|y>
/// (nu in {3, 4}), from the four cross matrix elements between pair assignments,
/// under ideal Trotter evolution at each checkpoint step.
inline std::vector<double> off_diagonal_term(const ModelParams& p, const std::string& y, int mu, int r,
                                             const std::vector<int>& steps, int nu = 3) {
    const int L = p.L;
    const int site = L / 2 + r;
    detail::require_site(site, L);
    const auto P = site_pauli(mu, site, L);
    if (!P) return std::vector<double>(steps.size(), 0.0);
    const auto pair = prepared_pair(nu, L);
    // amplitude of computational bit q in the Y eigenstate with bit yb
    auto phi = [](char yb, int q) { return q == 0 ? cplx(1.0, 0.0) : cplx(0.0, yb == '1' ? 1.0 : -1.0); };
    std::array<StateVector, 4> states{StateVector(L), StateVector(L), StateVector(L), StateVector(L)};
    std::array<cplx, 4> coef{};
    for (int q = 0; q < 4; ++q) {
        const int b0 = q & 1, b1 = (q >> 1) & 1;
        PreparedStateSpec s{y, nu, ((b0 + b1) & 1) ? -1 : 1, std::array<int, 2>{b0, b1}};
        states[static_cast<std::size_t>(q)] = prepare_state(s);
        coef[static_cast<std::size_t>(q)] =
            0.5 * phi(y[static_cast<std::size_t>(pair[0] - 1)], b0) * phi(y[static_cast<std::size_t>(pair[1] - 1)], b1);
    }
    const Circuit step = trotter_step_circuit(p);
    std::vector<double> out;
    int done = 0;
    for (int s : steps) {
        for (; done < s; ++done)
            for (auto& st : states) run_circuit_inplace(st, step);
        auto cross = [&](int a, int b) {
            return matrix_element(states[static_cast<std::size_t>(a)].amplitudes(), *P,
                                  states[static_cast<std::size_t>(b)].amplitudes());
        };
        // <+|A|+> off-diagonal: 4 Re(c00* c11 <00|A|11>); <-|A|-> likewise with 01, 10
        const double plus = 4.0 * (std::conj(coef[0]) * coef[3] * cross(0, 3)).real();
        const double minus = 4.0 * (std::conj(coef[1]) * coef[2] * cross(1, 2)).real();
        out.push_back(0.5 * (plus - minus));
    }
    return out;
}

// ---- running the protocol over an ensemble ----------------------------------------

struct RawCountRecord {
    std::string y;
    int t_step = 0;
    int nu = 1;
    int sign = 1;
    int cb = -1;
    char basis = 'Z';
    Histogram counts;
    std::uint64_t seed = 0;
};

struct ProtocolConfig {
    ProtocolOptions options;
    /// 0 means exact expectations from the outcome distributions.
    std::uint64_t shots = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Called for every executed circuit when shots > 0, with the ensemble member index.
    /// Calls from different members may interleave; calls for one member arrive in order.
    std::function<void(std::size_t, const RawCountRecord&)> on_counts;
};

struct ProtocolRun {
    CorrelatorGrid grid;
    std::vector<int> steps;
    std::size_t circuits_per_checkpoint = 0;
};

/// Correlators C^y_r at each checkpoint for one bitstring.
inline std::vector<Eigen::VectorXd> protocol_member(const ModelParams& p, const std::string& y,
                                                    const std::vector<int>& steps, const ProtocolConfig& cfg,
                                                    const Propagator& propagate, std::size_t member,
                                                    std::mutex* callback_mutex = nullptr) {
    const CircuitPlan plan = build_plan(y, p, cfg.options);
    std::vector<CheckpointData> data(steps.size());
    for (const auto& spec : plan.distinct_states()) {
        const StateKey key = key_of(spec);
        Rng prop_rng = make_rng(cfg.seed, "propagate/" + y + "/" + key.str());
        const auto probs = propagate(prepare_state(spec), steps, prop_rng);
        for (std::size_t ci = 0; ci < steps.size(); ++ci) {
            if (cfg.shots == 0) {
                data[ci][key] = pauli_table_from_probabilities(probs[ci], p.L);
                continue;
            }
            std::array<Histogram, 2> h;
            for (int s = 0; s < 2; ++s) {
                const char basis = s == 0 ? 'X' : 'Z';
                const std::uint64_t seed =
                    derive_seed(cfg.seed, "shots/" + y + "/" + std::to_string(steps[ci]) + "/" + key.str() + "/" + basis);
                Rng rng(seed);
                h[static_cast<std::size_t>(s)] =
                    sample_from_probabilities(s == 0 ? probs[ci].x : probs[ci].z, cfg.shots, rng);
                if (cfg.on_counts) {
                    RawCountRecord rec{y, steps[ci], key.nu, key.sign, key.cb, basis, h[static_cast<std::size_t>(s)], seed};
                    if (callback_mutex) {
                        std::lock_guard<std::mutex> lock(*callback_mutex);
                        cfg.on_counts(member, rec);
                    } else {
                        cfg.on_counts(member, rec);
                    }
                }
            }
            data[ci][key] = pauli_table_from_counts(h[0], h[1], p.L);
        }
    }
    std::vector<Eigen::VectorXd> out;
    for (const auto& d : data) {
        PauliCorrelators pc = pauli_correlators(d, p.L);
        if (cfg.options.use_rs) apply_reflection_symmetry(pc);
        out.push_back(assemble_correlator(pc, p));
    }
    return out;
}

inline ProtocolRun run_protocol(const ModelParams& p, const Ensemble& e, const std::vector<int>& steps,
                                const ProtocolConfig& cfg, const Propagator& propagate) {
    if (e.kind != EnsembleKind::Y_PRODUCT) throw InvalidArgument("the measurement protocol uses y-basis ensembles");
    if (e.L != p.L) throw InvalidArgument("ensemble L does not match the model");
    if (steps.empty()) throw InvalidArgument("no checkpoints requested");
    std::vector<std::vector<Eigen::VectorXd>> per(e.S());
    std::mutex callback_mutex;
    parallel_for(e.S(), cfg.threads, [&](std::size_t k) {
        per[k] = protocol_member(p, to_bitstring(e.members[k], p.L), steps, cfg, propagate, k, &callback_mutex);
    });
    ProtocolRun run;
    run.steps = steps;
    run.circuits_per_checkpoint = build_plan(std::string(static_cast<std::size_t>(p.L), '0'), p, cfg.options).size();
    CorrelatorGrid& g = run.grid;
    g.L = p.L;
    g.r = r_offsets(p.L);
    for (int s : steps) g.times.push_back(s * p.dt);
    const auto T = static_cast<Eigen::Index>(steps.size());
    g.values = Eigen::MatrixXd::Zero(p.L, T);
    g.samples.assign(e.S(), Eigen::MatrixXd(p.L, T));
    for (std::size_t k = 0; k < e.S(); ++k)
        for (Eigen::Index t = 0; t < T; ++t) {
            g.samples[k].col(t) = per[k][static_cast<std::size_t>(t)];
            g.values.col(t) += per[k][static_cast<std::size_t>(t)];
        }
    g.values /= static_cast<double>(e.S());
    g.ensemble = e.name + ":" + ensemble_kind_name(e.kind);
    g.backend = cfg.shots > 0 ? CorrelatorBackend::TROTTER_SHOTS : CorrelatorBackend::TROTTER_IDEAL;
    g.shots = cfg.shots;
    g.seed = cfg.seed;
    return run;
}

/// Checkpoints 0, k, 2k, ... up to n_steps.
inline std::vector<int> checkpoint_steps(int n_steps, int every = 1) {
    if (n_steps < 0 || every < 1) throw InvalidArgument("bad checkpoint specification");
    std::vector<int> s;
    for (int k = 0; k <= n_steps; k += every) s.push_back(k);
    return s;
}

}  // namespace mfim
