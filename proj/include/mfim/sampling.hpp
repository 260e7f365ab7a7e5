#pragma once

// Random ensembles and the sample-averaged correlator estimators
//     C^S_r(t) = (1/S) sum_k Re<p_k| h_{L/2+r}(t) h_{L/2} |p_k>,
// the spatial variance built from them, and convergence errors against the
// exact infinite-temperature correlators.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/exact.hpp"
#include "mfim/model.hpp"
#include "mfim/rng.hpp"
#include "mfim/state.hpp"
#include "mfim/stats.hpp"

namespace mfim {

enum class EnsembleKind : std::uint8_t { Y_PRODUCT, Z_PRODUCT, HAAR };

inline std::string ensemble_kind_name(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::Y_PRODUCT: return "y_product";
        case EnsembleKind::Z_PRODUCT: return "z_product";
        case EnsembleKind::HAAR: return "haar";
    }
    return "?";
}

struct Ensemble {
    EnsembleKind kind = EnsembleKind::Y_PRODUCT;
    int L = 0;
    /// Bitstrings (bit q = character q) for product kinds, per-member seeds for HAAR.
    std::vector<Mask> members;
    std::string name;

    std::size_t S() const { return members.size(); }
};

/// The fixed 12-member y-basis ensemble used for the L = 12 circuit runs.
inline const std::array<const char*, 12>& fixed_ensemble_strings() {
    static const std::array<const char*, 12> s{
        "100010111110", "010001100101", "110101111101", "010001111011", "011101101100", "011101000001",
        "100011011010", "111010110010", "000011010110", "111110001111", "001011001110", "011011101000"};
    return s;
}

inline Ensemble fixed_ensemble() {
    Ensemble e;
    e.kind = EnsembleKind::Y_PRODUCT;
    e.L = 12;
    e.name = "fixed12";
    for (const char* s : fixed_ensemble_strings()) e.members.push_back(from_bitstring(s));
    return e;
}

inline Ensemble ensemble_from_strings(const std::vector<std::string>& bits, EnsembleKind kind = EnsembleKind::Y_PRODUCT) {
    if (bits.empty()) throw InvalidArgument("ensemble needs at least one member");
    if (kind == EnsembleKind::HAAR) throw InvalidArgument("bitstring ensembles must be product kinds");
    Ensemble e;
    e.kind = kind;
    e.L = static_cast<int>(bits.front().size());
    e.name = "custom";
    for (const auto& b : bits) {
        if (static_cast<int>(b.size()) != e.L) throw InvalidArgument("ensemble bitstrings differ in length");
        e.members.push_back(from_bitstring(b));
    }
    return e;
}

/// i.i.d. draw with replacement.
inline Ensemble draw_ensemble(EnsembleKind kind, int L, std::size_t S, Rng& rng) {
    if (S < 1) throw InvalidArgument("ensemble size must be at least 1");
    if (L < 1 || L > 30) throw InvalidArgument("L out of range for ensembles");
    Ensemble e;
    e.kind = kind;
    e.L = L;
    e.name = "drawn";
    const Mask d = Mask{1} << L;
    if (kind != EnsembleKind::HAAR && S > d) throw InvalidArgument("product ensemble size exceeds 2^L");
    std::uniform_int_distribution<Mask> pick(0, d - 1);
    for (std::size_t k = 0; k < S; ++k) e.members.push_back(kind == EnsembleKind::HAAR ? rng() : pick(rng));
    return e;
}

/// Haar-random state: i.i.d. complex Gaussian amplitudes, normalized.
inline StateVector haar_state(int L, Rng& rng) {
    std::normal_distribution<double> g;
    Eigen::VectorXcd v(Eigen::Index{1} << L);
    for (auto& x : v) x = {g(rng), g(rng)};
    v.normalize();
    return StateVector(L, std::move(v));
}

inline StateVector member_state(const Ensemble& e, std::size_t k) {
    const Mask m = e.members.at(k);
    switch (e.kind) {
        case EnsembleKind::Y_PRODUCT: return y_state(to_bitstring(m, e.L));
        case EnsembleKind::Z_PRODUCT: return prepare_product_state(ProductStateSpec::uniform(to_bitstring(m, e.L), Basis::Z));
        case EnsembleKind::HAAR: {
            Rng rng(m);
            return haar_state(e.L, rng);
        }
    }
    throw InvalidArgument("unknown ensemble kind");
}

inline Eigen::MatrixXcd member_matrix(const Ensemble& e) {
    Eigen::MatrixXcd out(Eigen::Index{1} << e.L, static_cast<Eigen::Index>(e.S()));
    for (std::size_t k = 0; k < e.S(); ++k) out.col(static_cast<Eigen::Index>(k)) = member_state(e, k).amplitudes();
    return out;
}

enum class CorrelatorBackend : std::uint8_t { EXACT, TROTTER_IDEAL, TROTTER_SHOTS, TROTTER_NOISY };

inline std::string backend_name(CorrelatorBackend b) {
    switch (b) {
        case CorrelatorBackend::EXACT: return "exact";
        case CorrelatorBackend::TROTTER_IDEAL: return "trotter_ideal";
        case CorrelatorBackend::TROTTER_SHOTS: return "trotter_shots";
        case CorrelatorBackend::TROTTER_NOISY: return "trotter_noisy";
    }
    return "?";
}

inline std::vector<int> r_offsets(int L) {
    std::vector<int> r;
    for (int k = -L / 2 + 1; k <= L / 2; ++k) r.push_back(k);
    return r;
}

/// C^S_r(t); row k of `values` is offset r_offsets[k] = k - L/2 + 1 (site k + 1).
struct CorrelatorGrid {
    int L = 0;
    std::vector<double> times;
    std::vector<int> r;
    Eigen::MatrixXd values;
    /// Per-sample C^{p_k}_r(t), same layout; may be empty for pipelines that only keep the mean.
    std::vector<Eigen::MatrixXd> samples;
    std::string ensemble;
    CorrelatorBackend backend = CorrelatorBackend::EXACT;
    std::uint64_t shots = 0;
    std::uint64_t seed = 0;

    Eigen::Index row_of(int offset) const {
        if (offset < r.front() || offset > r.back()) throw OutOfRange("offset r outside -L/2+1 .. L/2");
        return offset - r.front();
    }
    std::vector<double> series(int offset) const { return row_vector(values, row_of(offset)); }
    static std::vector<double> row_vector(const Eigen::MatrixXd& m, Eigen::Index k) {
        std::vector<double> v(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index t = 0; t < m.cols(); ++t) v[static_cast<std::size_t>(t)] = m(k, t);
        return v;
    }
};

/// Per-state two-branch correlators under the first-order Trotter circuit.
/// `steps` are checkpoint step counts (ascending). Layout as StateCorrelatorTable.
inline StateCorrelatorTable trotter_state_correlators(const ModelParams& p, const Eigen::MatrixXcd& states, int j,
                                                      const std::vector<int>& steps) {
    detail::require_site(j, p.L);
    StateCorrelatorTable out;
    for (int i = 1; i <= p.L; ++i) out.sites.push_back(i);
    for (int s : steps) out.times.push_back(s * p.dt);
    for (std::size_t k = 1; k < steps.size(); ++k)
        if (steps[k] < steps[k - 1]) throw InvalidArgument("checkpoint steps must be ascending");
    if (!steps.empty() && steps.front() < 0) throw InvalidArgument("checkpoint steps must be non-negative");
    out.values.assign(steps.size(), Eigen::MatrixXd::Zero(p.L, states.cols()));
    out.imag.assign(steps.size(), Eigen::MatrixXd::Zero(p.L, states.cols()));
    const Circuit step = trotter_step_circuit(p);
    const auto hj = energy_density(p, j).terms;
    std::vector<std::vector<PauliString>> hs;
    for (int i = 1; i <= p.L; ++i) hs.push_back(energy_density(p, i).terms);
    for (Eigen::Index k = 0; k < states.cols(); ++k) {
        StateVector a(p.L, states.col(k));
        StateVector b(p.L, Eigen::VectorXcd::Zero(states.rows()));
        for (const auto& t : hj) apply_add(t, a.amplitudes(), b.amplitudes());
        int done = 0;
        for (std::size_t ci = 0; ci < steps.size(); ++ci) {
            for (; done < steps[ci]; ++done) {
                run_circuit_inplace(a, step);
                run_circuit_inplace(b, step);
            }
            for (int i = 0; i < p.L; ++i) {
                cplx acc{};
                for (const auto& t : hs[static_cast<std::size_t>(i)]) acc += matrix_element(a.amplitudes(), t, b.amplitudes());
                out.values[ci](i, k) = acc.real();
                out.imag[ci](i, k) = acc.imag();
            }
        }
    }
    return out;
}

/// Converts times on the dt grid to step counts.
inline std::vector<int> steps_for_times(const ModelParams& p, const std::vector<double>& times) {
    std::vector<int> steps;
    for (double t : times) {
        const double f = t / p.dt;
        const long n = std::lround(f);
        if (std::abs(f - static_cast<double>(n)) > 1e-9 || n < 0)
            throw InvalidArgument("time " + std::to_string(t) + " is not a non-negative multiple of dt");
        steps.push_back(static_cast<int>(n));
    }
    return steps;
}

inline CorrelatorGrid grid_from_table(const ModelParams& p, const StateCorrelatorTable& table, bool keep_samples) {
    CorrelatorGrid g;
    g.L = p.L;
    g.times = table.times;
    g.r = r_offsets(p.L);
    const auto T = static_cast<Eigen::Index>(table.times.size());
    const Eigen::Index n = table.values.empty() ? 0 : table.values.front().cols();
    if (n == 0) throw InvalidArgument("no samples to average");
    g.values = Eigen::MatrixXd::Zero(p.L, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        // fixed summation order
        for (Eigen::Index k = 0; k < n; ++k) g.values.col(t) += table.values[static_cast<std::size_t>(t)].col(k);
        g.values.col(t) /= static_cast<double>(n);
    }
    if (keep_samples) {
        g.samples.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(p.L, T));
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index k = 0; k < n; ++k)
                g.samples[static_cast<std::size_t>(k)].col(t) = table.values[static_cast<std::size_t>(t)].col(k);
    }
    return g;
}

/// C^S_r(t) for the EXACT or TROTTER_IDEAL backends. Shot-based and noisy
/// values are produced by the measurement protocol.
inline CorrelatorGrid estimate_correlators(const Ensemble& e, const ModelParams& p, const std::vector<double>& times,
                                           CorrelatorBackend backend, const ExactOracle* oracle = nullptr,
                                           bool keep_samples = true) {
    if (e.L != p.L) throw InvalidArgument("ensemble L does not match the model");
    const Eigen::MatrixXcd states = member_matrix(e);
    StateCorrelatorTable table;
    if (backend == CorrelatorBackend::EXACT) {
        if (oracle) {
            table = oracle->state_correlators(states, p.center(), times);
        } else {
            table = ExactOracle(p).state_correlators(states, p.center(), times);
        }
    } else if (backend == CorrelatorBackend::TROTTER_IDEAL) {
        table = trotter_state_correlators(p, states, p.center(), steps_for_times(p, times));
    } else {
        throw Unsupported("shot and noisy backends are evaluated by the measurement protocol");
    }
    CorrelatorGrid g = grid_from_table(p, table, keep_samples);
    g.ensemble = e.name + ":" + ensemble_kind_name(e.kind);
    g.backend = backend;
    return g;
}

// ---- spatial variance -------------------------------------------------------------

/// sum r^2 w_r / sum w_r - (sum r w_r / sum w_r)^2; nullopt when |sum w_r| < floor.
inline std::optional<double> profile_variance(const std::vector<int>& r, const Eigen::VectorXd& w, double floor = 0.05) {
    double s0 = 0, s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double v = w[static_cast<Eigen::Index>(k)];
        s0 += v;
        s1 += r[k] * v;
        s2 += static_cast<double>(r[k]) * r[k] * v;
    }
    if (std::abs(s0) < floor) return std::nullopt;
    const double m = s1 / s0;
    return s2 / s0 - m * m;
}

struct VarianceSeries {
    std::vector<double> times;
    std::vector<double> values;
    /// True where the denominator fell under the floor; the value is then 0 and must not be used.
    std::vector<bool> flagged;

    std::pair<std::vector<double>, std::vector<double>> unflagged() const {
        std::pair<std::vector<double>, std::vector<double>> out;
        for (std::size_t k = 0; k < times.size(); ++k)
            if (!flagged[k]) {
                out.first.push_back(times[k]);
                out.second.push_back(values[k]);
            }
        return out;
    }
};

inline VarianceSeries variance_of_columns(const std::vector<double>& times, const std::vector<int>& r,
                                          const Eigen::MatrixXd& values, double floor) {
    VarianceSeries v;
    v.times = times;
    for (Eigen::Index t = 0; t < values.cols(); ++t) {
        const auto s = profile_variance(r, values.col(t), floor);
        v.flagged.push_back(!s.has_value());
        v.values.push_back(s.value_or(0.0));
    }
    return v;
}

/// Sigma~^2_S(t) from the sample-averaged grid.
inline VarianceSeries spatial_variance_estimator(const CorrelatorGrid& g, double floor = 0.05) {
    return variance_of_columns(g.times, g.r, g.values, floor);
}

/// Sigma~^2_{p_k}(t) for one retained sample.
inline VarianceSeries spatial_variance_sample(const CorrelatorGrid& g, std::size_t k, double floor = 0.05) {
    if (k >= g.samples.size()) throw OutOfRange("sample index out of range");
    return variance_of_columns(g.times, g.r, g.samples[k], floor);
}

// ---- convergence with sample size ------------------------------------------------

struct ConvergenceResult {
    std::vector<std::size_t> sizes;
    std::size_t trials = 0;
    /// [size index][trial]
    std::vector<std::vector<double>> e2_c;
    std::vector<std::vector<double>> e2_sigma;
    std::vector<double> e2_c_mean;
    std::vector<double> e2_sigma_mean;
    LineFit c_fit;
    LineFit sigma_fit;
};

/// E^2_C(S) = time average of |C^S_0 - C_0|^2, E^2_Sigma(S) likewise for the spatial
/// variance; trapezoidal weights on `times`, averaged over independent trials.
inline ConvergenceResult convergence_errors(const ExactOracle& oracle, const std::vector<std::size_t>& sizes,
                                            std::size_t trials, std::uint64_t seed, const std::vector<double>& times,
                                            EnsembleKind kind = EnsembleKind::Y_PRODUCT) {
    const auto& p = oracle.params();
    if (sizes.empty() || trials < 1) throw InvalidArgument("need at least one size and one trial");
    const Eigen::MatrixXd exact = oracle.correlators_all_sites(p.center(), times);
    const auto r = r_offsets(p.L);
    const VarianceSeries exact_sigma = variance_of_columns(times, r, exact, 0.0);

    // draw every ensemble up front, then evaluate all members in one batch
    std::vector<Ensemble> draws;
    std::size_t total = 0;
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        for (std::size_t tr = 0; tr < trials; ++tr) {
            Rng rng = make_rng(seed, "convergence/S" + std::to_string(sizes[si]) + "/trial" + std::to_string(tr));
            draws.push_back(draw_ensemble(kind, p.L, sizes[si], rng));
            total += sizes[si];
        }
    }
    Eigen::MatrixXcd states(oracle.dim(), static_cast<Eigen::Index>(total));
    Eigen::Index col = 0;
    for (const auto& e : draws)
        for (std::size_t k = 0; k < e.S(); ++k) states.col(col++) = member_state(e, k).amplitudes();
    const auto table = oracle.state_correlators(states, p.center(), times);

    ConvergenceResult res;
    res.sizes = sizes;
    res.trials = trials;
    res.e2_c.assign(sizes.size(), {});
    res.e2_sigma.assign(sizes.size(), {});
    const Eigen::Index c0 = p.center() - 1;
    col = 0;
    std::size_t di = 0;
    for (std::size_t si = 0; si < sizes.size(); ++si) {
        for (std::size_t tr = 0; tr < trials; ++tr, ++di) {
            const auto n = static_cast<Eigen::Index>(draws[di].S());
            std::vector<double> dc, ds;
            for (std::size_t t = 0; t < times.size(); ++t) {
                const Eigen::VectorXd mean = table.values[t].middleCols(col, n).rowwise().mean();
                const double e = mean[c0] - exact(c0, static_cast<Eigen::Index>(t));
                dc.push_back(e * e);
                const auto s = profile_variance(r, mean, 0.0);
                const double es = s.value_or(0.0) - exact_sigma.values[t];
                ds.push_back(es * es);
            }
            res.e2_c[si].push_back(time_average(times, dc));
            res.e2_sigma[si].push_back(time_average(times, ds));
            col += n;
        }
        res.e2_c_mean.push_back(mean_of(res.e2_c[si]));
        res.e2_sigma_mean.push_back(mean_of(res.e2_sigma[si]));
    }
    if (sizes.size() >= 2) {
        std::vector<double> x(sizes.begin(), sizes.end());
        res.c_fit = fit_loglog(x, res.e2_c_mean);
        res.sigma_fit = fit_loglog(x, res.e2_sigma_mean);
    }
    return res;
}

// ---- ensemble spread -------------------------------------------------------------

struct EnsembleSpread {
    std::vector<double> times;
    /// population std over members of C^{p}_0(t)
    std::vector<double> c0_std;
    /// population std over members of the per-sample spatial variance
    std::vector<double> sigma_std;
    std::size_t members = 0;
};

/// Member-to-member standard deviation of C^p_0(t) and Sigma~^2_p(t) under exact evolution.
inline EnsembleSpread ensemble_spread(const ExactOracle& oracle, const Ensemble& e, const std::vector<double>& times) {
    const auto& p = oracle.params();
    const auto table = oracle.state_correlators(member_matrix(e), p.center(), times);
    const auto r = r_offsets(p.L);
    EnsembleSpread out;
    out.times = times;
    out.members = e.S();
    for (std::size_t t = 0; t < times.size(); ++t) {
        std::vector<double> c0, sig;
        for (Eigen::Index k = 0; k < table.values[t].cols(); ++k) {
            c0.push_back(table.values[t](p.center() - 1, k));
            sig.push_back(profile_variance(r, table.values[t].col(k), 0.0).value_or(0.0));
        }
        out.c0_std.push_back(std_of(c0));
        out.sigma_std.push_back(std_of(sig));
    }
    return out;
}

}  // namespace mfim
