#pragma once

// Exact-diagonalization reference for correlators, per-state fluctuations and
// eigenstate-thermalization diagnostics.
//
// H (without its identity offset) is real symmetric, H = V diag(E) V^T. With
// A = V^T h_i V and B = V^T h_j V,
//     C_ij(t) = tr(h_i(t) h_j)/d = (1/d) sum_nm A_nm B_nm cos((E_n - E_m) t),
// evaluated as c^T W c + s^T W s with W = A o B, c = cos(E t), s = sin(E t).
// Per-state values <psi| h_i(t) h_j |psi> use two branches a = U|psi>,
// b = U h_j |psi>, propagated in the eigenbasis for many states at once.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfim/error.hpp"
#include "mfim/linalg.hpp"
#include "mfim/model.hpp"
#include "mfim/state.hpp"

namespace mfim {

struct SpectralData {
    ModelParams params;
    Eigen::VectorXd energies;
    Eigen::MatrixXd vectors;

    int L() const { return params.L; }
    Eigen::Index dim() const { return energies.size(); }
};

inline SpectralData diagonalize(const ModelParams& p) {
    if (p.L > 14) throw SizeRefused("exact diagonalization refused above L = 14");
    SpectralData s;
    s.params = p;
    s.vectors = hamiltonian(p).dense(false);
    symmetric_eigensolve(s.vectors, s.energies);
    return s;
}

/// Applies a sum of Pauli strings to every column of a complex matrix.
inline Eigen::MatrixXcd apply_terms(const std::vector<PauliString>& terms, const Eigen::MatrixXcd& in) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(in.rows(), in.cols());
    for (Eigen::Index k = 0; k < in.cols(); ++k) {
        Eigen::VectorXcd col = in.col(k);
        Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(in.rows());
        for (const auto& t : terms) apply_add(t, col, acc);
        out.col(k) = acc;
    }
    return out;
}

/// Real version for real strings (no Y factors) acting on real matrices.
inline Eigen::MatrixXd apply_terms_real(const std::vector<PauliString>& terms, const Eigen::MatrixXd& in) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(in.rows(), in.cols());
    const Mask d = static_cast<Mask>(in.rows());
    for (const auto& t : terms) {
        if (!t.is_real()) throw InvalidArgument("real application needs real Pauli strings");
        const double base = t.coefficient * ((t.y_count() & 2) ? -1.0 : 1.0);
        for (Mask b = 0; b < d; ++b) {
            const double s = detail::parity(b & t.z_mask) ? -base : base;
            out.row(static_cast<Eigen::Index>(b ^ t.x_mask)) += s * in.row(static_cast<Eigen::Index>(b));
        }
    }
    return out;
}

/// Per-state correlator values: values[t](site - 1, k) = Re <psi_k| h_site(t) h_j |psi_k>.
struct StateCorrelatorTable {
    std::vector<double> times;
    std::vector<int> sites;
    std::vector<Eigen::MatrixXd> values;
    /// Imaginary parts, same layout; kept as a diagnostic.
    std::vector<Eigen::MatrixXd> imag;
};

class ExactOracle {
public:
    explicit ExactOracle(const ModelParams& p) : spec_(diagonalize(p)) {}
    explicit ExactOracle(SpectralData s) : spec_(std::move(s)) {}

    const SpectralData& spectrum() const { return spec_; }
    const ModelParams& params() const { return spec_.params; }
    int L() const { return spec_.params.L; }
    Eigen::Index dim() const { return spec_.dim(); }

    /// V^T h_site V.
    Eigen::MatrixXd site_operator(int site) const {
        const auto h = energy_density(params(), site);
        Eigen::MatrixXd hv = apply_terms_real(h.terms, spec_.vectors);
        Eigen::MatrixXd out(dim(), dim());
        out.noalias() = spec_.vectors.transpose() * hv;
        return out;
    }

    /// C_ij(t) = Re tr(h_i(t) h_j)/d on the given time grid.
    Eigen::VectorXd correlator(int i, int j, const std::vector<double>& times) const {
        const Eigen::MatrixXd A = site_operator(i);
        if (i == j) return correlator_from(A, A, times);
        return correlator_from(A, site_operator(j), times);
    }

    /// Rows are sites 1..L, columns are times: C_{site, j}(t).
    Eigen::MatrixXd correlators_all_sites(int j, const std::vector<double>& times) const {
        const Eigen::MatrixXd B = site_operator(j);
        Eigen::MatrixXd out(L(), static_cast<Eigen::Index>(times.size()));
        for (int i = 1; i <= L(); ++i) {
            if (i == j) {
                out.row(i - 1) = correlator_from(B, B, times).transpose();
            } else {
                out.row(i - 1) = correlator_from(site_operator(i), B, times).transpose();
            }
        }
        return out;
    }

    /// U(t)|psi> = V e^{-iEt} V^T |psi>.
    Eigen::VectorXcd evolve(const Eigen::VectorXcd& psi, double t) const {
        const Eigen::VectorXd re = spec_.vectors.transpose() * psi.real();
        const Eigen::VectorXd im = spec_.vectors.transpose() * psi.imag();
        Eigen::VectorXcd c(dim());
        for (Eigen::Index n = 0; n < dim(); ++n) c[n] = std::polar(1.0, -spec_.energies[n] * t) * cplx(re[n], im[n]);
        return spec_.vectors.cast<cplx>() * c;
    }

    /// <psi| h_i(t) h_j |psi> by the two-branch method with exact propagation.
    cplx state_correlator(const Eigen::VectorXcd& psi, int i, int j, double t) const {
        const auto hj = energy_density(params(), j).terms;
        Eigen::VectorXcd b = Eigen::VectorXcd::Zero(psi.size());
        for (const auto& term : hj) apply_add(term, psi, b);
        const Eigen::VectorXcd at = evolve(psi, t), bt = evolve(b, t);
        cplx acc{};
        for (const auto& term : energy_density(params(), i).terms) acc += matrix_element(at, term, bt);
        return acc;
    }

    /// Batched two-branch evaluation for many states. With `only_site` set,
    /// a single row is produced using the eigenbasis operator (cheaper).
    StateCorrelatorTable state_correlators(const Eigen::MatrixXcd& states, int j, const std::vector<double>& times,
                                           std::optional<int> only_site = std::nullopt,
                                           Eigen::Index chunk = 256) const {
        detail::require_site(j, L());
        if (states.rows() != dim()) throw InvalidArgument("state dimension does not match the oracle");
        StateCorrelatorTable out;
        out.times = times;
        if (only_site) {
            detail::require_site(*only_site, L());
            out.sites = {*only_site};
        } else {
            for (int i = 1; i <= L(); ++i) out.sites.push_back(i);
        }
        const auto nsites = static_cast<Eigen::Index>(out.sites.size());
        const Eigen::Index n = states.cols();
        out.values.assign(times.size(), Eigen::MatrixXd::Zero(nsites, n));
        out.imag.assign(times.size(), Eigen::MatrixXd::Zero(nsites, n));
        std::optional<Eigen::MatrixXd> A;
        if (only_site) A = site_operator(*only_site);
        std::vector<std::vector<PauliString>> site_terms;
        for (int i : out.sites) site_terms.push_back(energy_density(params(), i).terms);
        const auto hj = energy_density(params(), j).terms;
        const Eigen::MatrixXd& V = spec_.vectors;
        const Eigen::Index d = dim();

        for (Eigen::Index start = 0; start < n; start += chunk) {
            const Eigen::Index m = std::min(chunk, n - start);
            const Eigen::MatrixXcd psi = states.middleCols(start, m);
            const Eigen::MatrixXcd hpsi = apply_terms(hj, psi);
            // eigenbasis coefficients: [Re a, Im a, Re b, Im b]
            Eigen::MatrixXd in(d, 4 * m);
            in << psi.real(), psi.imag(), hpsi.real(), hpsi.imag();
            Eigen::MatrixXd coef(d, 4 * m);
            coef.noalias() = V.transpose() * in;
            Eigen::MatrixXd rot(d, 4 * m), site_basis(d, 4 * m);
            for (std::size_t ti = 0; ti < times.size(); ++ti) {
                const Eigen::ArrayXd phase = spec_.energies.array() * times[ti];
                const Eigen::ArrayXd c = phase.cos(), s = phase.sin();
                // e^{-iEt}(x + iy) = (c x + s y) + i(c y - s x)
                for (Eigen::Index k = 0; k < 4 * m; k += 2 * m) {
                    for (Eigen::Index q = 0; q < m; ++q) {
                        const auto x = coef.col(k + q).array(), y = coef.col(k + m + q).array();
                        rot.col(k + q).array() = c * x + s * y;
                        rot.col(k + m + q).array() = c * y - s * x;
                    }
                }
                if (A) {
                    // Re/Im of (e^{-iEt} a)^dagger A (e^{-iEt} b)
                    Eigen::MatrixXd ab(d, 2 * m);
                    ab.noalias() = (*A) * rot.rightCols(2 * m);
                    for (Eigen::Index q = 0; q < m; ++q) {
                        const auto ar = rot.col(q), ai = rot.col(m + q);
                        const auto br = ab.col(q), bi = ab.col(m + q);
                        out.values[ti](0, start + q) = ar.dot(br) + ai.dot(bi);
                        out.imag[ti](0, start + q) = ar.dot(bi) - ai.dot(br);
                    }
                    continue;
                }
                site_basis.noalias() = V * rot;
                for (Eigen::Index q = 0; q < m; ++q) {
                    Eigen::VectorXcd a(d), b(d);
                    a.real() = site_basis.col(q);
                    a.imag() = site_basis.col(m + q);
                    b.real() = site_basis.col(2 * m + q);
                    b.imag() = site_basis.col(3 * m + q);
                    for (Eigen::Index si = 0; si < nsites; ++si) {
                        cplx acc{};
                        for (const auto& term : site_terms[static_cast<std::size_t>(si)]) acc += matrix_element(a, term, b);
                        out.values[ti](si, start + q) = acc.real();
                        out.imag[ti](si, start + q) = acc.imag();
                    }
                }
            }
        }
        return out;
    }

private:
    Eigen::VectorXd correlator_from(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                    const std::vector<double>& times) const {
        const Eigen::Index d = dim();
        const auto T = static_cast<Eigen::Index>(times.size());
        Eigen::MatrixXd cs(d, 2 * T);
        for (Eigen::Index k = 0; k < T; ++k) {
            for (Eigen::Index n = 0; n < d; ++n) {
                cs(n, k) = std::cos(spec_.energies[n] * times[static_cast<std::size_t>(k)]);
                cs(n, T + k) = std::sin(spec_.energies[n] * times[static_cast<std::size_t>(k)]);
            }
        }
        const Eigen::MatrixXd W = A.cwiseProduct(B);
        Eigen::MatrixXd Wcs(d, 2 * T);
        Wcs.noalias() = W * cs;
        Eigen::VectorXd out(T);
        for (Eigen::Index k = 0; k < T; ++k)
            out[k] = (cs.col(k).dot(Wcs.col(k)) + cs.col(T + k).dot(Wcs.col(T + k))) / static_cast<double>(d);
        return out;
    }

    SpectralData spec_;
};

// ---- free-function interface -----------------------------------------------------

inline Eigen::VectorXd exact_correlator(const ModelParams& p, int i, int j, const std::vector<double>& times) {
    return ExactOracle(p).correlator(i, j, times);
}

enum class PropagationBackend : std::uint8_t { EXACT, TROTTER };

/// <psi| h_i(t) h_j(0) |psi>. The Trotter backend takes round(t/dt) steps and
/// requires t to sit on the step grid.
inline cplx state_correlator(const ModelParams& p, const StateVector& psi, int i, int j, double t,
                             PropagationBackend backend, const ExactOracle* oracle = nullptr) {
    if (t < 0.0) throw InvalidArgument("time must be non-negative");
    detail::require_site(i, p.L);
    detail::require_site(j, p.L);
    if (psi.num_qubits() != p.L) throw InvalidArgument("state size does not match L");
    if (backend == PropagationBackend::EXACT) {
        if (oracle) return oracle->state_correlator(psi.amplitudes(), i, j, t);
        return ExactOracle(p).state_correlator(psi.amplitudes(), i, j, t);
    }
    const double steps_f = t / p.dt;
    const int steps = static_cast<int>(std::lround(steps_f));
    if (std::abs(steps_f - steps) > 1e-9) throw InvalidArgument("time is not a multiple of dt for the Trotter backend");
    StateVector b(p.L, Eigen::VectorXcd::Zero(psi.dim()));
    for (const auto& term : energy_density(p, j).terms) apply_add(term, psi.amplitudes(), b.amplitudes());
    const Circuit c = trotter_circuit(p, steps);
    const StateVector at = run_circuit(psi, c);
    const StateVector bt = run_circuit(b, c);
    cplx acc{};
    for (const auto& term : energy_density(p, i).terms) acc += matrix_element(at.amplitudes(), term, bt.amplitudes());
    return acc;
}

// ---- product bases ---------------------------------------------------------------

/// Columns are the product states with the given bitstrings in a uniform basis.
inline Eigen::MatrixXcd product_states(int L, Basis basis, const std::vector<Mask>& members) {
    Eigen::MatrixXcd out(Eigen::Index{1} << L, static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k)
        out.col(static_cast<Eigen::Index>(k)) =
            prepare_product_state(ProductStateSpec::uniform(to_bitstring(members[k], L), basis)).amplitudes();
    return out;
}

inline std::vector<Mask> full_basis(int L) {
    std::vector<Mask> v(std::size_t{1} << L);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = k;
    return v;
}

struct FluctuationProfile {
    int L = 0;
    int r = 0;
    Basis basis = Basis::Y;
    std::vector<double> times;
    /// Sample mean of Re<p| h_{L/2+r}(t) h_{L/2} |p>.
    std::vector<double> mean;
    /// Population standard deviation over the basis states (or the supplied sample).
    std::vector<double> std;
    std::size_t num_states = 0;
    bool full_basis = true;
};

/// Mean and spread of Re<p| h_{L/2+r}(t) h_{L/2} |p> over product states p.
/// Without `sample` the whole basis is used (L <= 12).
inline FluctuationProfile fluctuation_profile(const ExactOracle& oracle, int r, const std::vector<double>& times,
                                              Basis basis, const std::vector<Mask>* sample = nullptr) {
    const auto& p = oracle.params();
    const int c = p.center(), site = c + r;
    detail::require_site(site, p.L);
    if (!sample && p.L > 12) throw SizeRefused("full-basis fluctuation profile refused above L = 12");
    if (basis == Basis::X) throw InvalidArgument("fluctuation profiles are defined for the Y and Z bases");
    const std::vector<Mask> members = sample ? *sample : full_basis(p.L);
    const auto table = oracle.state_correlators(product_states(p.L, basis, members), c, times, site);
    FluctuationProfile f;
    f.L = p.L;
    f.r = r;
    f.basis = basis;
    f.times = times;
    f.num_states = members.size();
    f.full_basis = sample == nullptr;
    for (const auto& v : table.values) {
        const Eigen::RowVectorXd row = v.row(0);
        const double mean = row.mean();
        f.mean.push_back(mean);
        f.std.push_back(std::sqrt(std::max(0.0, (row.array() - mean).square().mean())));
    }
    return f;
}

struct RelativeError {
    std::vector<double> times;
    std::vector<double> epsilon;
    /// True where |C_0(t)| < 1e-6 and the ratio is not meaningful.
    std::vector<bool> flagged;
};

/// epsilon_p(t) = F_0(L,t) / C_0(t).
inline RelativeError relative_error(const ExactOracle& oracle, Basis basis, const std::vector<double>& times,
                                    const std::vector<Mask>* sample = nullptr) {
    const auto& p = oracle.params();
    const Eigen::VectorXd C0 = oracle.correlator(p.center(), p.center(), times);
    const auto prof = fluctuation_profile(oracle, 0, times, basis, sample);
    RelativeError e;
    e.times = times;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double c = C0[static_cast<Eigen::Index>(k)];
        const bool flag = std::abs(c) < 1e-6;
        e.flagged.push_back(flag);
        e.epsilon.push_back(flag ? 0.0 : prof.std[k] / c);
    }
    return e;
}

// ---- eigenstate thermalization diagnostics -------------------------------------

struct EthDiagonalStats {
    int site = 0;
    /// E_n / L for every eigenstate.
    std::vector<double> energy_density;
    /// <n| h_site |n>.
    std::vector<double> diagonal;
    /// sum_n (<n|h_site|n> - E_n/(N L))^2.
    double delta_h2 = 0.0;
};

inline EthDiagonalStats eth_diagonal_stats(const ExactOracle& oracle, int site) {
    const auto& p = oracle.params();
    const auto& s = oracle.spectrum();
    const auto h = energy_density(p, site);
    const Eigen::MatrixXd hv = apply_terms_real(h.terms, s.vectors);
    const double NL = p.normalization() * p.L;
    EthDiagonalStats out;
    out.site = site;
    for (Eigen::Index n = 0; n < s.dim(); ++n) {
        const double diag = s.vectors.col(n).dot(hv.col(n));
        const double E = s.energies[n];
        out.energy_density.push_back(E / p.L);
        out.diagonal.push_back(diag);
        out.delta_h2 += (diag - E / NL) * (diag - E / NL);
    }
    return out;
}

/// <y|psi> for all y, as a fast per-site transform (y index: bit q = 1 means Y = +1 on qubit q).
inline Eigen::MatrixXcd to_y_basis(const Eigen::MatrixXcd& states, int L) {
    const double h = std::numbers::sqrt2 / 2.0;
    Mat2 w;
    // rows: <y=0| = (<0| + i<1|)/sqrt2, <y=1| = (<0| - i<1|)/sqrt2
    w << h, cplx(0, h), h, cplx(0, -h);
    Eigen::MatrixXcd out = states;
    for (Eigen::Index k = 0; k < out.cols(); ++k)
        for (int q = 0; q < L; ++q) kernel::apply_1q(out.col(k).data(), L, q, w);
    return out;
}

/// Unnormalized IPR sum_y |<y|psi>|^4.
inline double ipr_y(const Eigen::VectorXcd& psi, int L) {
    const Eigen::MatrixXcd y = to_y_basis(psi, L);
    return y.col(0).cwiseAbs2().array().square().sum();
}

struct IprStats {
    std::vector<double> energy_density;
    std::vector<double> ipr;
    /// (1/d) sum_n I_y(|n>).
    double mean = 0.0;
    /// d <I_y>_inf.
    double scaled_mean = 0.0;
};

inline IprStats ipr_stats(const ExactOracle& oracle, Eigen::Index chunk = 512) {
    const auto& s = oracle.spectrum();
    const int L = oracle.L();
    const Eigen::Index d = s.dim();
    IprStats out;
    out.ipr.resize(static_cast<std::size_t>(d));
    for (Eigen::Index start = 0; start < d; start += chunk) {
        const Eigen::Index m = std::min(chunk, d - start);
        const Eigen::MatrixXcd y = to_y_basis(s.vectors.middleCols(start, m).cast<cplx>(), L);
        for (Eigen::Index k = 0; k < m; ++k)
            out.ipr[static_cast<std::size_t>(start + k)] = y.col(k).cwiseAbs2().array().square().sum();
    }
    for (Eigen::Index n = 0; n < d; ++n) out.energy_density.push_back(s.energies[n] / L);
    for (double v : out.ipr) out.mean += v;
    out.mean /= static_cast<double>(d);
    out.scaled_mean = out.mean * static_cast<double>(d);
    return out;
}

/// Trapezoidal time average of samples on a uniform or non-uniform grid.
inline double time_average(const std::vector<double>& t, const std::vector<double>& f) {
    if (t.size() != f.size() || t.size() < 2) throw InvalidArgument("time average needs matching grids of length >= 2");
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < t.size(); ++k) acc += 0.5 * (f[k] + f[k + 1]) * (t[k + 1] - t[k]);
    return acc / (t.back() - t.front());
}

inline std::vector<double> uniform_grid(double t0, double t1, double step) {
    if (!(step > 0.0) || t1 < t0) throw InvalidArgument("bad time grid");
    std::vector<double> g;
    const auto n = static_cast<long>(std::floor((t1 - t0) / step + 1e-9));
    for (long k = 0; k <= n; ++k) g.push_back(t0 + static_cast<double>(k) * step);
    return g;
}

struct LongTimeStats {
    double window_begin = 12.0;
    double window_end = 75.0;
    double step = 0.25;
    /// time average of C_0 over the window
    double c0_average = 0.0;
    /// <H^2>_inf / (N L)^2
    double semiclassical = 0.0;
    /// E_L = c0_average - semiclassical
    double E_L = 0.0;
    /// F_L = time average of F_0(L,t)^2
    double F_L = 0.0;
    std::size_t fluctuation_states = 0;
    bool fluctuation_full_basis = true;
};

/// Long-time averages over (12, 75). With `sample` the y-basis variance is
/// estimated from the given members instead of the full basis.
inline LongTimeStats long_time_stats(const ExactOracle& oracle, const std::vector<Mask>* sample = nullptr,
                                     double t0 = 12.0, double t1 = 75.0, double step = 0.25) {
    const auto& p = oracle.params();
    const auto grid = uniform_grid(t0, t1, step);
    const Eigen::VectorXd C0 = oracle.correlator(p.center(), p.center(), grid);
    LongTimeStats s;
    s.window_begin = t0;
    s.window_end = t1;
    s.step = step;
    s.c0_average = time_average(grid, std::vector<double>(C0.data(), C0.data() + C0.size()));
    const double NL = p.normalization() * p.L;
    s.semiclassical = h2_infinite_temperature(p) / (NL * NL);
    s.E_L = s.c0_average - s.semiclassical;
    const auto prof = fluctuation_profile(oracle, 0, grid, Basis::Y, sample);
    std::vector<double> f2;
    for (double v : prof.std) f2.push_back(v * v);
    s.F_L = time_average(grid, f2);
    s.fluctuation_states = prof.num_states;
    s.fluctuation_full_basis = prof.full_basis;
    return s;
}

struct OverlapCurve {
    /// raw d |<y|n>|^2 against E_n / L
    std::vector<double> energy_density;
    std::vector<double> scaled_overlap;
    /// windowed means over consecutive blocks of `window` eigenstates
    std::vector<double> coarse_energy_density;
    std::vector<double> coarse_overlap;
    double total_weight = 0.0;
};

inline OverlapCurve overlap_flatness(const ExactOracle& oracle, const std::string& y_bits, int window = 64) {
    const auto& s = oracle.spectrum();
    const int L = oracle.L();
    if (window < 1) throw InvalidArgument("window must be positive");
    const Eigen::VectorXcd y = y_state(y_bits).amplitudes();
    if (y.size() != s.dim()) throw InvalidArgument("bitstring length does not match L");
    const Eigen::VectorXd re = s.vectors.transpose() * y.real();
    const Eigen::VectorXd im = s.vectors.transpose() * y.imag();
    const double d = static_cast<double>(s.dim());
    OverlapCurve out;
    for (Eigen::Index n = 0; n < s.dim(); ++n) {
        const double w = re[n] * re[n] + im[n] * im[n];
        out.total_weight += w;
        out.energy_density.push_back(s.energies[n] / L);
        out.scaled_overlap.push_back(d * w);
    }
    for (std::size_t start = 0; start < out.scaled_overlap.size(); start += static_cast<std::size_t>(window)) {
        const std::size_t end = std::min(out.scaled_overlap.size(), start + static_cast<std::size_t>(window));
        double e = 0.0, o = 0.0;
        for (std::size_t k = start; k < end; ++k) {
            e += out.energy_density[k];
            o += out.scaled_overlap[k];
        }
        out.coarse_energy_density.push_back(e / static_cast<double>(end - start));
        out.coarse_overlap.push_back(o / static_cast<double>(end - start));
    }
    return out;
}

}  // namespace mfim
