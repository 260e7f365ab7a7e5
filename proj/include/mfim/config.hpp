#pragma once

// Experiment configuration: a JSON document with fixed sections. Unknown keys
// are errors. Named presets freeze the standard experiments.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfim/error.hpp"
#include "mfim/model.hpp"
#include "mfim/noise.hpp"
#include "mfim/rng.hpp"
#include "mfim/sampling.hpp"

namespace mfim {

class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct ModelSection {
    /// main_text | strongly_chaotic | qpu_experiment | appendix
    std::string variant = "main_text";
    int L = 12;
    double V = 1.0;
    double omega = 2.0;
    double h_x = -1.05;
    double h_z = 0.5;
    double r_amplitude = 0.0;
    std::uint64_t model_seed = 7;
    double dt = 0.1;

    ModelParams build(int L_override = 0) const {
        const int n = L_override > 0 ? L_override : L;
        if (variant == "main_text") return ModelParams::main_text(n, V, omega, dt);
        ModelParams p;
        if (variant == "strongly_chaotic") p = ModelParams::strongly_chaotic(n, model_seed);
        else if (variant == "qpu_experiment") p = ModelParams::qpu_experiment(n);
        else if (variant == "appendix") p = ModelParams::appendix(n, V, h_x, h_z, r_amplitude, model_seed, dt);
        else throw ConfigError("config: model.variant: unknown variant '" + variant + "'");
        p.dt = dt;
        p.validate();
        return p;
    }
};

struct EnsembleSection {
    /// fixed12 | y | z | haar | list
    std::string kind = "fixed12";
    std::size_t size = 12;
    std::vector<std::string> strings;

    Ensemble build(int L, std::uint64_t seed) const {
        if (kind == "fixed12") {
            if (L != 12) throw ConfigError("config: ensemble.kind: fixed12 needs model.L = 12");
            return fixed_ensemble();
        }
        if (kind == "list") {
            if (strings.empty()) throw ConfigError("config: ensemble.strings: empty list");
            for (const auto& s : strings)
                if (static_cast<int>(s.size()) != L) throw ConfigError("config: ensemble.strings: '" + s + "' does not have length L");
            return ensemble_from_strings(strings);
        }
        EnsembleKind k;
        if (kind == "y") k = EnsembleKind::Y_PRODUCT;
        else if (kind == "z") k = EnsembleKind::Z_PRODUCT;
        else if (kind == "haar") k = EnsembleKind::HAAR;
        else throw ConfigError("config: ensemble.kind: unknown kind '" + kind + "'");
        if (size < 1) throw ConfigError("config: ensemble.size: must be positive");
        Rng rng = make_rng(seed, "ensemble");
        return draw_ensemble(k, L, size, rng);
    }
};

struct ProtocolSection {
    bool cb = true;
    bool rs = true;
    std::uint64_t shots = 8192;
};

struct TimeSection {
    int n_steps = 90;
    int every = 2;
    double t_max = 15.0;
    double t_step = 0.1;
};

struct NoiseSection {
    std::string preset = "paper_base";
    /// density_matrix | trajectory
    std::string backend = "density_matrix";
    int trajectories = 2000;
    std::vector<std::string> sweep;
    bool compare_ideal = false;
    double delta_omega = 0.0;

    NoiseParams build(const std::string& name) const {
        NoiseParams n = NoiseParams::preset(name);
        n.delta_omega = delta_omega;
        n.validate();
        return n;
    }
};

struct FitSection {
    std::vector<double> decay_window{2.0, 9.0};
    std::vector<double> growth_window{2.0, 9.0};
    double floor = 0.05;
    std::string input;
};

struct EthSection {
    std::vector<int> sizes{8, 10, 12};
    std::vector<int> sites{0, 2};
    std::vector<double> window{12.0, 75.0};
    double step = 0.25;
    bool long_time = true;
    int full_basis_max_L = 10;
    std::size_t fluctuation_samples = 128;
    std::vector<std::string> overlaps;
    int overlap_window = 64;
};

struct SamplingSection {
    std::vector<std::size_t> sizes{1, 2, 4, 8, 16, 32};
    std::size_t trials = 5;
    double t_max = 15.0;
    double t_step = 0.2;
    std::size_t y_samples = 512;
    std::size_t haar_samples = 200;
    bool typicality = true;
};

struct ExactSection {
    std::vector<int> fluctuation_offsets{0};
    bool relative_error = false;
    std::vector<std::string> param_sets{"strongly_chaotic", "qpu_experiment"};
};

inline const std::vector<std::string>& workflow_names() {
    static const std::vector<std::string> w{"run-ideal",      "run-noisy",       "run-exact",
                                            "eth-report",     "sampling-report", "fit"};
    return w;
}

struct ExperimentConfig {
    std::string workflow = "run-ideal";
    std::string preset;
    std::uint64_t seed = 2024;
    int threads = 1;
    std::string out_dir = "out";
    ModelSection model;
    EnsembleSection ensemble;
    ProtocolSection protocol;
    TimeSection time;
    NoiseSection noise;
    FitSection fit;
    EthSection eth;
    SamplingSection sampling;
    ExactSection exact;

    void validate() const;
};

namespace detail {

using json = nlohmann::json;

/// Reads fields from one JSON object and rejects keys that were never asked for.
class SectionReader {
public:
    SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(name("") + "expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name(key) + "wrong type (" + std::string(e.what()) + ")");
        }
    }

    const json* sub(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(name(it.key()) + "unknown key");
    }

    std::string name(const std::string& key) const {
        std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
        return "config: " + (p.empty() ? std::string("<root>") : p) + ": ";
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void require_window(const std::vector<double>& w, const std::string& field) {
    if (w.size() != 2 || !(w[1] > w[0])) throw ConfigError("config: " + field + ": expected [t_min, t_max] with t_max > t_min");
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError("config: " + field + ": " + msg); };
    if (std::find(workflow_names().begin(), workflow_names().end(), workflow) == workflow_names().end())
        fail("workflow", "unknown workflow '" + workflow + "'");
    if (threads < 1) fail("threads", "must be at least 1");
    if (model.L < 4 || model.L % 2) fail("model.L", "must be even and at least 4");
    if (!(model.dt > 0.0)) fail("model.dt", "must be positive");
    if (time.n_steps < 0) fail("time.n_steps", "must be non-negative");
    if (time.every < 1) fail("time.every", "must be at least 1");
    if (!(time.t_step > 0.0) || time.t_max < 0.0) fail("time.t_step", "needs t_step > 0 and t_max >= 0");
    if (noise.backend != "density_matrix" && noise.backend != "trajectory")
        fail("noise.backend", "expected density_matrix or trajectory");
    if (noise.trajectories < 1) fail("noise.trajectories", "must be at least 1");
    detail::require_window(fit.decay_window, "fit.decay_window");
    detail::require_window(fit.growth_window, "fit.growth_window");
    detail::require_window(eth.window, "eth.window");
    if (!(fit.floor >= 0.0)) fail("fit.floor", "must be non-negative");
    if (sampling.trials < 1) fail("sampling.trials", "must be at least 1");
    if (!(sampling.t_step > 0.0)) fail("sampling.t_step", "must be positive");
    for (int L : eth.sizes)
        if (L < 4 || L % 2 || L > 14) fail("eth.sizes", "sizes must be even and within [4, 14]");
    if (!(eth.step > 0.0)) fail("eth.step", "must be positive");
    for (const auto& s : exact.param_sets)
        if (s != "main_text" && s != "strongly_chaotic" && s != "qpu_experiment")
            fail("exact.param_sets", "unknown parameter set '" + s + "'");
    try {
        (void)NoiseParams::preset(noise.preset);
        for (const auto& s : noise.sweep) (void)NoiseParams::preset(s);
    } catch (const InvalidArgument& e) {
        fail("noise.preset", e.what());
    }
    try {
        (void)model.build();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        fail("model", e.what());
    }
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    return {{"workflow", c.workflow},
            {"preset", c.preset},
            {"seed", c.seed},
            {"threads", c.threads},
            {"out_dir", c.out_dir},
            {"model",
             {{"variant", c.model.variant},
              {"L", c.model.L},
              {"V", c.model.V},
              {"omega", c.model.omega},
              {"h_x", c.model.h_x},
              {"h_z", c.model.h_z},
              {"r_amplitude", c.model.r_amplitude},
              {"model_seed", c.model.model_seed},
              {"dt", c.model.dt}}},
            {"ensemble", {{"kind", c.ensemble.kind}, {"size", c.ensemble.size}, {"strings", c.ensemble.strings}}},
            {"protocol", {{"cb", c.protocol.cb}, {"rs", c.protocol.rs}, {"shots", c.protocol.shots}}},
            {"time",
             {{"n_steps", c.time.n_steps}, {"every", c.time.every}, {"t_max", c.time.t_max}, {"t_step", c.time.t_step}}},
            {"noise",
             {{"preset", c.noise.preset},
              {"backend", c.noise.backend},
              {"trajectories", c.noise.trajectories},
              {"sweep", c.noise.sweep},
              {"compare_ideal", c.noise.compare_ideal},
              {"delta_omega", c.noise.delta_omega}}},
            {"fit",
             {{"decay_window", c.fit.decay_window},
              {"growth_window", c.fit.growth_window},
              {"floor", c.fit.floor},
              {"input", c.fit.input}}},
            {"eth",
             {{"sizes", c.eth.sizes},
              {"sites", c.eth.sites},
              {"window", c.eth.window},
              {"step", c.eth.step},
              {"long_time", c.eth.long_time},
              {"full_basis_max_L", c.eth.full_basis_max_L},
              {"fluctuation_samples", c.eth.fluctuation_samples},
              {"overlaps", c.eth.overlaps},
              {"overlap_window", c.eth.overlap_window}}},
            {"sampling",
             {{"sizes", c.sampling.sizes},
              {"trials", c.sampling.trials},
              {"t_max", c.sampling.t_max},
              {"t_step", c.sampling.t_step},
              {"y_samples", c.sampling.y_samples},
              {"haar_samples", c.sampling.haar_samples},
              {"typicality", c.sampling.typicality}}},
            {"exact",
             {{"fluctuation_offsets", c.exact.fluctuation_offsets},
              {"relative_error", c.exact.relative_error},
              {"param_sets", c.exact.param_sets}}}};
}

/// Overlays the keys present in `j` onto `c`.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
    detail::SectionReader root(j, "");
    root.get("workflow", c.workflow);
    root.get("preset", c.preset);
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    root.get("out_dir", c.out_dir);
    if (const auto* s = root.sub("model")) {
        detail::SectionReader r(*s, "model");
        r.get("variant", c.model.variant);
        r.get("L", c.model.L);
        r.get("V", c.model.V);
        r.get("omega", c.model.omega);
        r.get("h_x", c.model.h_x);
        r.get("h_z", c.model.h_z);
        r.get("r_amplitude", c.model.r_amplitude);
        r.get("model_seed", c.model.model_seed);
        r.get("dt", c.model.dt);
        r.finish();
    }
    if (const auto* s = root.sub("ensemble")) {
        detail::SectionReader r(*s, "ensemble");
        r.get("kind", c.ensemble.kind);
        r.get("size", c.ensemble.size);
        r.get("strings", c.ensemble.strings);
        r.finish();
    }
    if (const auto* s = root.sub("protocol")) {
        detail::SectionReader r(*s, "protocol");
        r.get("cb", c.protocol.cb);
        r.get("rs", c.protocol.rs);
        r.get("shots", c.protocol.shots);
        r.finish();
    }
    if (const auto* s = root.sub("time")) {
        detail::SectionReader r(*s, "time");
        r.get("n_steps", c.time.n_steps);
        r.get("every", c.time.every);
        r.get("t_max", c.time.t_max);
        r.get("t_step", c.time.t_step);
        r.finish();
    }
    if (const auto* s = root.sub("noise")) {
        detail::SectionReader r(*s, "noise");
        r.get("preset", c.noise.preset);
        r.get("backend", c.noise.backend);
        r.get("trajectories", c.noise.trajectories);
        r.get("sweep", c.noise.sweep);
        r.get("compare_ideal", c.noise.compare_ideal);
        r.get("delta_omega", c.noise.delta_omega);
        r.finish();
    }
    if (const auto* s = root.sub("fit")) {
        detail::SectionReader r(*s, "fit");
        r.get("decay_window", c.fit.decay_window);
        r.get("growth_window", c.fit.growth_window);
        r.get("floor", c.fit.floor);
        r.get("input", c.fit.input);
        r.finish();
    }
    if (const auto* s = root.sub("eth")) {
        detail::SectionReader r(*s, "eth");
        r.get("sizes", c.eth.sizes);
        r.get("sites", c.eth.sites);
        r.get("window", c.eth.window);
        r.get("step", c.eth.step);
        r.get("long_time", c.eth.long_time);
        r.get("full_basis_max_L", c.eth.full_basis_max_L);
        r.get("fluctuation_samples", c.eth.fluctuation_samples);
        r.get("overlaps", c.eth.overlaps);
        r.get("overlap_window", c.eth.overlap_window);
        r.finish();
    }
    if (const auto* s = root.sub("sampling")) {
        detail::SectionReader r(*s, "sampling");
        r.get("sizes", c.sampling.sizes);
        r.get("trials", c.sampling.trials);
        r.get("t_max", c.sampling.t_max);
        r.get("t_step", c.sampling.t_step);
        r.get("y_samples", c.sampling.y_samples);
        r.get("haar_samples", c.sampling.haar_samples);
        r.get("typicality", c.sampling.typicality);
        r.finish();
    }
    if (const auto* s = root.sub("exact")) {
        detail::SectionReader r(*s, "exact");
        r.get("fluctuation_offsets", c.exact.fluctuation_offsets);
        r.get("relative_error", c.exact.relative_error);
        r.get("param_sets", c.exact.param_sets);
        r.finish();
    }
    root.finish();
}

inline std::vector<std::string> preset_names() {
    return {"fig1", "fig1-insets", "fig2", "fig3-om3", "fig3-om6", "fig5", "eth", "overlaps", "rel-err"};
}

inline ExperimentConfig preset_config(std::string name) {
    if (name.rfind("paper-", 0) == 0) name = name.substr(6);
    ExperimentConfig c;
    c.preset = name;
    c.out_dir = "out/" + name;
    if (name == "fig1") {
        c.workflow = "run-exact";
        c.exact.fluctuation_offsets = {0, 1, 2};
        c.time.t_max = 15.0;
        c.time.t_step = 0.1;
    } else if (name == "fig1-insets") {
        c.workflow = "sampling-report";
    } else if (name == "fig2") {
        c.workflow = "run-ideal";
    } else if (name == "fig3-om3" || name == "fig3-om6") {
        c.workflow = "run-ideal";
        c.model.omega = name == "fig3-om3" ? 3.0 : 6.0;
        c.fit.decay_window = {1.0, 5.0};
        c.fit.growth_window = {1.0, 5.0};
    } else if (name == "fig5") {
        c.workflow = "run-noisy";
        c.model.L = 10;
        c.ensemble.kind = "y";
        c.ensemble.size = 12;
        c.protocol.shots = 0;
        c.noise.sweep = {"paper_minus50", "paper_base", "paper_plus60"};
        c.noise.compare_ideal = true;
    } else if (name == "eth") {
        c.workflow = "eth-report";
        c.model.variant = "strongly_chaotic";
    } else if (name == "overlaps") {
        c.workflow = "eth-report";
        c.model.variant = "strongly_chaotic";
        c.eth.sizes = {12};
        c.eth.long_time = false;
        const auto& s = fixed_ensemble_strings();
        c.eth.overlaps.assign(s.begin(), s.end());
    } else if (name == "rel-err") {
        c.workflow = "run-exact";
        c.exact.relative_error = true;
        c.exact.fluctuation_offsets = {};
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

inline ExperimentConfig load_config(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.is_object() && j.contains("preset") && j["preset"].is_string() && !j["preset"].get<std::string>().empty())
        c = preset_config(j["preset"].get<std::string>());
    apply_json(c, j);
    c.validate();
    return c;
}

inline ExperimentConfig load_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    return load_config(j);
}

/// FNV-1a over the canonical JSON, leaving out fields that do not change results.
inline std::string config_hash(const ExperimentConfig& c) {
    auto j = to_json(c);
    j.erase("out_dir");
    j.erase("threads");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

}  // namespace mfim
