#pragma once

// Named workflows: each reads an ExperimentConfig, runs the modules and writes
// CSV tables, JSON sidecars and JSON-lines raw counts into cfg.out_dir.

#include <cmath>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "mfim/analysis.hpp"
#include "mfim/config.hpp"
#include "mfim/exact.hpp"
#include "mfim/io.hpp"
#include "mfim/noise.hpp"
#include "mfim/protocol.hpp"
#include "mfim/sampling.hpp"

namespace mfim {

struct WorkflowResult {
    std::filesystem::path dir;
    json summary;
    std::vector<std::string> files;
};

namespace detail {

class Output {
public:
    Output(const ExperimentConfig& c, WorkflowResult& res) : res_(res) {
        prov_.config_hash = config_hash(c);
        prov_.workflow = c.workflow;
        prov_.seed = c.seed;
        res_.dir = c.out_dir;
        std::filesystem::create_directories(res_.dir);
    }

    const Provenance& provenance() const { return prov_; }

    void csv(const std::string& name, const CsvTable& t) { text(name, t.str(prov_)); }
    void json_file(const std::string& name, json body) {
        write_json(res_.dir / name, std::move(body), prov_);
        res_.files.push_back(name);
    }
    void text(const std::string& name, const std::string& s) {
        write_text(res_.dir / name, s);
        res_.files.push_back(name);
    }

private:
    WorkflowResult& res_;
    Provenance prov_;
};

inline FitWindow window_of(const std::vector<double>& w) { return {w[0], w[1]}; }

inline json fit_json(const std::vector<double>& t, const std::vector<double>& v, FitWindow w, FitKind kind,
                     const std::vector<bool>* flagged) {
    json j = {{"kind", kind == FitKind::DECAY ? "decay" : "growth"}, {"window", {w.t_min, w.t_max}}};
    try {
        const auto f = fit_power_law(t, v, w, kind, flagged);
        j["z"] = f.z;
        j["exponent"] = f.exponent;
        j["amplitude"] = f.amplitude;
        j["residual_rms"] = f.residual_rms;
        j["points"] = f.points;
    } catch (const FitRefused& e) {
        j["refused"] = e.what();
    }
    return j;
}

inline CsvTable sum_rule_table(const SumRuleSeries& s) {
    CsvTable t({"t", "sum", "constant"});
    for (std::size_t k = 0; k < s.times.size(); ++k)
        t.add_row({s.times[k], s.values[k], s.constant.value_or(std::nan(""))});
    return t;
}

/// Correlators, sum rule, renormalized heatmap, spatial variance and both fits.
inline json transport_outputs(Output& out, const ModelParams& p, const CorrelatorGrid& g, const ExperimentConfig& c,
                              const std::string& prefix = "") {
    out.csv(prefix + "correlators.csv", correlator_table(g));
    json meta = grid_metadata(g);
    meta["model"] = to_json(c)["model"];
    meta["dt"] = p.dt;
    out.json_file(prefix + "correlators.json", meta);

    const MitigatedGrid m = renormalize(g, c.fit.floor, &p);
    out.csv(prefix + "sum_rule.csv", sum_rule_table(m.sum));

    CsvTable heat({"t", "r", "renormalized", "flagged"});
    for (const auto& row : export_heatmap(m))
        heat.add_row({row.t, static_cast<double>(row.r), row.value, row.flagged ? 1.0 : 0.0});
    out.csv(prefix + "heatmap.csv", heat);

    const VarianceSeries v = spatial_variance(m);
    CsvTable var({"t", "variance", "flagged"});
    for (std::size_t k = 0; k < v.times.size(); ++k) var.add_row({v.times[k], v.values[k], v.flagged[k] ? 1.0 : 0.0});
    out.csv(prefix + "variance.csv", var);

    json fits = {{"decay", fit_json(m.raw.times, m.series(0), window_of(c.fit.decay_window), FitKind::DECAY, &m.flagged)},
                 {"growth", fit_json(v.times, v.values, window_of(c.fit.growth_window), FitKind::GROWTH, &v.flagged)},
                 {"floor", c.fit.floor},
                 {"flagged_times", std::count(m.flagged.begin(), m.flagged.end(), true)},
                 {"window_note", "fit windows are calibrated defaults unless set in the config"}};
    out.json_file(prefix + "fits.json", fits);
    return fits;
}

inline std::vector<int> config_steps(const ExperimentConfig& c) { return checkpoint_steps(c.time.n_steps, c.time.every); }

/// Runs the measurement protocol, streaming raw counts to raw_counts.jsonl in member order.
inline ProtocolRun protocol_with_counts(Output& out, const ModelParams& p, const Ensemble& e, const ExperimentConfig& c,
                                        const Propagator& prop, const std::string& counts_name) {
    ProtocolConfig pc;
    pc.options = {c.protocol.cb, c.protocol.rs};
    pc.shots = c.protocol.shots;
    pc.seed = c.seed;
    pc.threads = c.threads;
    std::vector<std::string> lines(e.S());
    if (pc.shots > 0)
        pc.on_counts = [&](std::size_t member, const RawCountRecord& r) {
            lines[member] += raw_count_json(member, r, out.provenance()).dump() + "\n";
        };
    ProtocolRun run = run_protocol(p, e, config_steps(c), pc, prop);
    if (pc.shots > 0) {
        std::string all;
        for (const auto& l : lines) all += l;
        out.text(counts_name, all);
    }
    return run;
}

inline CorrelatorGrid noisy_grid(Output& out, const ModelParams& p, const Ensemble& e, const ExperimentConfig& c,
                                 const NoiseParams& n, const std::string& counts_name) {
    if (n.is_identity()) return protocol_with_counts(out, p, e, c, ideal_propagator(p), counts_name).grid;
    if (c.noise.backend == "density_matrix") {
        if (p.L > DensityMatrix::kMaxQubits)
            throw SizeRefused("density-matrix backend refused above L = 10; set noise.backend = \"trajectory\"");
        if (c.protocol.shots == 0) return noisy_ensemble_correlators(p, n, e, config_steps(c));
        return protocol_with_counts(out, p, e, c, density_matrix_propagator(p, n), counts_name).grid;
    }
    return protocol_with_counts(out, p, e, c, trajectory_propagator(p, n, c.noise.trajectories), counts_name).grid;
}

inline std::size_t nearest_index(const std::vector<double>& t, double target) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < t.size(); ++k)
        if (std::abs(t[k] - target) < std::abs(t[best] - target)) best = k;
    return best;
}

inline CsvTable long_table(const std::vector<double>& times, const Eigen::MatrixXd& values, const std::vector<int>& r) {
    CsvTable t({"t", "r", "value"});
    for (std::size_t ti = 0; ti < times.size(); ++ti)
        for (std::size_t ri = 0; ri < r.size(); ++ri)
            t.add_row({times[ti], static_cast<double>(r[ri]),
                       values(static_cast<Eigen::Index>(ri), static_cast<Eigen::Index>(ti))});
    return t;
}

inline ModelParams param_set(const std::string& name, const ExperimentConfig& c) {
    if (name == "main_text") return ModelParams::main_text(c.model.L, c.model.V, c.model.omega, c.model.dt);
    if (name == "strongly_chaotic") return ModelParams::strongly_chaotic(c.model.L, c.model.model_seed);
    if (name == "qpu_experiment") return ModelParams::qpu_experiment(c.model.L);
    throw ConfigError("config: exact.param_sets: unknown parameter set '" + name + "'");
}

}  // namespace detail

inline WorkflowResult run_ideal(const ExperimentConfig& c) {
    WorkflowResult res;
    detail::Output out(c, res);
    const ModelParams p = c.model.build();
    const Ensemble e = c.ensemble.build(p.L, c.seed);
    const ProtocolRun run = detail::protocol_with_counts(out, p, e, c, ideal_propagator(p), "raw_counts.jsonl");
    res.summary = {{"pipeline", pipeline_name({c.protocol.cb, c.protocol.rs})},
                   {"circuits_per_checkpoint", run.circuits_per_checkpoint},
                   {"fits", detail::transport_outputs(out, p, run.grid, c)}};
    return res;
}

inline WorkflowResult run_noisy(const ExperimentConfig& c) {
    WorkflowResult res;
    detail::Output out(c, res);
    const ModelParams p = c.model.build();
    const Ensemble e = c.ensemble.build(p.L, c.seed);
    const NoiseParams n = c.noise.build(c.noise.preset);
    const CorrelatorGrid g = detail::noisy_grid(out, p, e, c, n, "raw_counts.jsonl");
    res.summary["noise"] = n.name;
    res.summary["fits"] = detail::transport_outputs(out, p, g, c);

    if (!c.noise.sweep.empty()) {
        std::vector<std::string> cols{"t"};
        std::vector<SumRuleSeries> sums;
        json sweep = json::array();
        for (const auto& name : c.noise.sweep) {
            const NoiseParams ns = c.noise.build(name);
            const auto gs = detail::noisy_grid(out, p, e, c, ns, "raw_counts_" + name + ".jsonl");
            sums.push_back(sum_rule(gs, &p));
            cols.push_back(name);
            std::vector<double> t, logs;
            for (std::size_t k = 0; k < sums.back().times.size(); ++k)
                if (sums.back().values[k] > 0.0) {
                    t.push_back(sums.back().times[k]);
                    logs.push_back(std::log(sums.back().values[k]));
                }
            const double rate = t.size() >= 2 ? -fit_line(t, logs).slope : std::nan("");
            const std::size_t k5 = detail::nearest_index(sums.back().times, 5.0);
            sweep.push_back({{"preset", name},
                             {"T1", ns.T1},
                             {"T2", ns.T2},
                             {"decay_rate", rate},
                             {"t_probe", sums.back().times[k5]},
                             {"sum_at_probe", sums.back().values[k5]}});
        }
        CsvTable t(cols);
        for (std::size_t k = 0; k < sums.front().times.size(); ++k) {
            std::vector<double> row{sums.front().times[k]};
            for (const auto& s : sums) row.push_back(s.values[k]);
            t.add_row(row);
        }
        out.csv("sum_rule_sweep.csv", t);
        res.summary["sweep"] = sweep;
    }

    if (c.noise.compare_ideal) {
        const CorrelatorGrid ideal =
            c.protocol.shots == 0 && p.L <= DensityMatrix::kMaxQubits
                ? noisy_ensemble_correlators(p, NoiseParams::identity(), e, detail::config_steps(c))
                : detail::protocol_with_counts(out, p, e, c, ideal_propagator(p), "raw_counts_ideal.jsonl").grid;
        const MitigatedGrid mn = renormalize(g, c.fit.floor, &p), mi = renormalize(ideal, c.fit.floor, &p);
        const auto cross = crossing_time(mn.sum, 0.2);
        const double t_end = cross ? *cross : g.times.back();
        const double raw = mean_squared_difference(g.times, g.series(0), ideal.series(0), 0.0, t_end);
        const double ren = mean_squared_difference(g.times, mn.series(0), mi.series(0), 0.0, t_end);
        json mit = {{"raw_squared_error", raw},
                    {"renormalized_squared_error", ren},
                    {"improvement_factor", raw / ren},
                    {"window_end", t_end},
                    {"sum_crosses_0.2", cross.has_value()}};
        out.json_file("mitigation.json", mit);
        res.summary["mitigation"] = mit;
    }
    return res;
}

inline WorkflowResult run_exact(const ExperimentConfig& c) {
    WorkflowResult res;
    detail::Output out(c, res);
    const ModelParams p = c.model.build();
    const ExactOracle oracle(p);
    const auto times = uniform_grid(0.0, c.time.t_max, c.time.t_step);
    const auto r = r_offsets(p.L);
    const Eigen::MatrixXd C = oracle.correlators_all_sites(p.center(), times);
    out.csv("exact_correlators.csv", detail::long_table(times, C, r));
    CorrelatorGrid eg;
    eg.L = p.L;
    eg.r = r;
    eg.times = times;
    eg.values = C;
    const auto sums = sum_rule(eg, &p);
    out.csv("sum_rule.csv", detail::sum_rule_table(sums));
    double dev = 0.0;
    if (sums.constant)
        for (double v : sums.values) dev = std::max(dev, std::abs(v - *sums.constant));
    res.summary["sum_rule_max_deviation"] = dev;

    if (!c.exact.fluctuation_offsets.empty()) {
        CsvTable f({"basis", "r", "t", "mean", "std"});
        for (Basis b : {Basis::Y, Basis::Z})
            for (int off : c.exact.fluctuation_offsets) {
                const auto prof = fluctuation_profile(oracle, off, times, b);
                for (std::size_t k = 0; k < times.size(); ++k)
                    f.add_row({std::string(1, basis_char(b)), std::to_string(off), format_number(times[k]),
                               format_number(prof.mean[k]), format_number(prof.std[k])});
            }
        out.csv("fluctuation.csv", f);
        const Ensemble e = c.ensemble.build(p.L, c.seed);
        const auto g = estimate_correlators(e, p, times, CorrelatorBackend::EXACT, &oracle, true);
        out.csv("correlators.csv", correlator_table(g));
        out.json_file("correlators.json", grid_metadata(g));
    }

    if (c.exact.relative_error) {
        CsvTable t({"param_set", "basis", "t", "epsilon", "flagged"});
        json summary = json::object();
        for (const auto& name : c.exact.param_sets) {
            const ModelParams q = detail::param_set(name, c);
            const ExactOracle o(q);
            for (Basis b : {Basis::Y, Basis::Z}) {
                const auto re = relative_error(o, b, times);
                std::vector<double> eps;
                for (std::size_t k = 0; k < times.size(); ++k) {
                    t.add_row({name, std::string(1, basis_char(b)), format_number(times[k]), format_number(re.epsilon[k]),
                               re.flagged[k] ? "1" : "0"});
                    if (!re.flagged[k]) eps.push_back(std::abs(re.epsilon[k]));
                }
                summary[name][std::string(1, basis_char(b))] = {{"mean_abs_epsilon", eps.empty() ? 0.0 : mean_of(eps)}};
            }
        }
        out.csv("relative_error.csv", t);
        res.summary["relative_error"] = summary;
    }
    out.json_file("summary.json", res.summary);
    return res;
}

inline WorkflowResult eth_report(const ExperimentConfig& c) {
    WorkflowResult res;
    detail::Output out(c, res);
    std::vector<std::string> cols{"L", "d"};
    for (int s : c.eth.sites) cols.push_back("delta_h2_site_c" + std::string(s >= 0 ? "+" : "") + std::to_string(s));
    for (const char* k : {"ipr_scaled_mean", "c0_average", "semiclassical", "E_L", "F_L", "fluctuation_states"})
        cols.push_back(k);
    CsvTable scaling(cols);
    std::vector<double> Ls, logE, logF;
    std::vector<std::vector<double>> dh(c.eth.sites.size());
    json per_L = json::array();

    for (int L : c.eth.sizes) {
        const ModelParams p = c.model.build(L);
        const ExactOracle oracle(p);
        std::vector<double> row{static_cast<double>(L), std::ldexp(1.0, L)};
        json jl = {{"L", L}};
        for (std::size_t si = 0; si < c.eth.sites.size(); ++si) {
            const int site = p.center() + c.eth.sites[si];
            const auto st = eth_diagonal_stats(oracle, site);
            CsvTable sc({"energy_density", "diagonal"});
            for (std::size_t n = 0; n < st.diagonal.size(); ++n) sc.add_row({st.energy_density[n], st.diagonal[n]});
            out.csv("eth_scatter_L" + std::to_string(L) + "_site" + std::to_string(site) + ".csv", sc);
            row.push_back(st.delta_h2);
            dh[si].push_back(st.delta_h2);
            jl["delta_h2"].push_back({{"site", site}, {"value", st.delta_h2}});
        }
        const auto ipr = ipr_stats(oracle);
        CsvTable it({"energy_density", "ipr"});
        for (std::size_t n = 0; n < ipr.ipr.size(); ++n) it.add_row({ipr.energy_density[n], ipr.ipr[n]});
        out.csv("ipr_L" + std::to_string(L) + ".csv", it);
        row.push_back(ipr.scaled_mean);
        jl["ipr_scaled_mean"] = ipr.scaled_mean;

        if (c.eth.long_time) {
            std::vector<Mask> sample;
            const bool sampled = L > c.eth.full_basis_max_L;
            if (sampled) {
                Rng rng = make_rng(c.seed, "eth/fluctuation/L" + std::to_string(L));
                sample = draw_ensemble(EnsembleKind::Y_PRODUCT, L, c.eth.fluctuation_samples, rng).members;
            }
            const auto lt = long_time_stats(oracle, sampled ? &sample : nullptr, c.eth.window[0], c.eth.window[1], c.eth.step);
            for (double v : {lt.c0_average, lt.semiclassical, lt.E_L, lt.F_L, static_cast<double>(lt.fluctuation_states)})
                row.push_back(v);
            jl["E_L"] = lt.E_L;
            jl["F_L"] = lt.F_L;
            jl["fluctuation_full_basis"] = lt.fluctuation_full_basis;
            Ls.push_back(L);
            logE.push_back(std::log2(std::abs(lt.E_L)));
            logF.push_back(std::log2(lt.F_L));
        } else {
            for (int k = 0; k < 5; ++k) row.push_back(std::nan(""));
        }
        scaling.add_row(row);

        for (const auto& y : c.eth.overlaps) {
            if (static_cast<int>(y.size()) != L) continue;
            const auto oc = overlap_flatness(oracle, y, c.eth.overlap_window);
            CsvTable ot({"energy_density", "scaled_overlap"});
            for (std::size_t n = 0; n < oc.scaled_overlap.size(); ++n) ot.add_row({oc.energy_density[n], oc.scaled_overlap[n]});
            out.csv("overlap_L" + std::to_string(L) + "_" + y + ".csv", ot);
            CsvTable co({"energy_density", "scaled_overlap"});
            for (std::size_t n = 0; n < oc.coarse_overlap.size(); ++n)
                co.add_row({oc.coarse_energy_density[n], oc.coarse_overlap[n]});
            out.csv("overlap_coarse_L" + std::to_string(L) + "_" + y + ".csv", co);
            jl["overlap_total_weight"][y] = oc.total_weight;
        }
        per_L.push_back(jl);
    }
    out.csv("eth_scaling.csv", scaling);

    json fits = json::object();
    if (c.eth.sizes.size() >= 2) {
        std::vector<double> sizes(c.eth.sizes.begin(), c.eth.sizes.end());
        for (std::size_t si = 0; si < c.eth.sites.size(); ++si)
            fits["alpha"].push_back({{"site_offset", c.eth.sites[si]}, {"value", fit_loglog(sizes, dh[si]).slope}});
        if (Ls.size() >= 2) {
            fits["log2_E_slope"] = fit_line(Ls, logE).slope;
            fits["log2_F_slope"] = fit_line(Ls, logF).slope;
        }
    }
    res.summary = {{"sizes", per_L}, {"fits", fits}, {"window", c.eth.window}};
    out.json_file("eth_summary.json", res.summary);
    return res;
}

inline WorkflowResult sampling_report(const ExperimentConfig& c) {
    WorkflowResult res;
    detail::Output out(c, res);
    const ModelParams p = c.model.build();
    const ExactOracle oracle(p);
    const auto times = uniform_grid(0.0, c.sampling.t_max, c.sampling.t_step);

    const auto conv = convergence_errors(oracle, c.sampling.sizes, c.sampling.trials, derive_seed(c.seed, "convergence"), times);
    CsvTable ct({"S", "trial", "e2_c", "e2_sigma"});
    for (std::size_t si = 0; si < conv.sizes.size(); ++si)
        for (std::size_t tr = 0; tr < conv.trials; ++tr)
            ct.add_row({static_cast<double>(conv.sizes[si]), static_cast<double>(tr), conv.e2_c[si][tr], conv.e2_sigma[si][tr]});
    out.csv("convergence.csv", ct);
    res.summary["convergence"] = {{"c_slope", conv.c_fit.slope},
                                  {"sigma_slope", conv.sigma_fit.slope},
                                  {"sizes", conv.sizes},
                                  {"trials", conv.trials}};

    if (c.sampling.typicality) {
        Rng ry = make_rng(c.seed, "typicality/y"), rh = make_rng(c.seed, "typicality/haar");
        const auto ey = draw_ensemble(EnsembleKind::Y_PRODUCT, p.L, c.sampling.y_samples, ry);
        const auto eh = draw_ensemble(EnsembleKind::HAAR, p.L, c.sampling.haar_samples, rh);
        const auto sy = ensemble_spread(oracle, ey, times), sh = ensemble_spread(oracle, eh, times);
        CsvTable tt({"t", "y_c0_std", "haar_c0_std", "y_sigma_std", "haar_sigma_std"});
        std::vector<double> tw, a, b, cc, d;
        for (std::size_t k = 0; k < times.size(); ++k) {
            tt.add_row({times[k], sy.c0_std[k], sh.c0_std[k], sy.sigma_std[k], sh.sigma_std[k]});
            if (times[k] >= 1.0 - 1e-12) {
                tw.push_back(times[k]);
                a.push_back(sy.c0_std[k]);
                b.push_back(sh.c0_std[k]);
                cc.push_back(sy.sigma_std[k]);
                d.push_back(sh.sigma_std[k]);
            }
        }
        out.csv("typicality.csv", tt);
        if (tw.size() >= 2)
            res.summary["typicality"] = {{"c0_ratio", time_average(tw, a) / time_average(tw, b)},
                                         {"sigma_ratio", time_average(tw, cc) / time_average(tw, d)},
                                         {"y_samples", ey.S()},
                                         {"haar_samples", eh.S()},
                                         {"average_from", 1.0}};
    }
    out.json_file("sampling_summary.json", res.summary);
    return res;
}

inline WorkflowResult fit_workflow(const ExperimentConfig& c) {
    if (c.fit.input.empty()) throw ConfigError("config: fit.input: path to a correlators.csv is required");
    WorkflowResult res;
    detail::Output out(c, res);
    const CorrelatorGrid g = grid_from_csv(read_csv(c.fit.input));
    const MitigatedGrid m = renormalize(g, c.fit.floor);
    const VarianceSeries v = spatial_variance(m);
    json fits = {{"decay", detail::fit_json(g.times, m.series(0), detail::window_of(c.fit.decay_window), FitKind::DECAY, &m.flagged)},
                 {"growth", detail::fit_json(v.times, v.values, detail::window_of(c.fit.growth_window), FitKind::GROWTH, &v.flagged)},
                 {"input", c.fit.input}};
    out.json_file("fits.json", fits);
    res.summary["fits"] = fits;
    return res;
}

inline WorkflowResult run_workflow(const ExperimentConfig& c) {
    c.validate();
    if (c.workflow == "run-ideal") return run_ideal(c);
    if (c.workflow == "run-noisy") return run_noisy(c);
    if (c.workflow == "run-exact") return run_exact(c);
    if (c.workflow == "eth-report") return eth_report(c);
    if (c.workflow == "sampling-report") return sampling_report(c);
    return fit_workflow(c);
}

}  // namespace mfim
