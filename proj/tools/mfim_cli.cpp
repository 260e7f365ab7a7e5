#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mfim/config.hpp"
#include "mfim/workflows.hpp"

namespace {

struct Flags {
    std::string config;
    std::string preset;
    std::string out;
    std::string input;
    std::uint64_t seed = 0;
    int threads = 0;
    bool dump = false;
};

mfim::ExperimentConfig resolve(const std::string& workflow, const Flags& f, const CLI::App& sub) {
    using mfim::ExperimentConfig;
    ExperimentConfig c;
    if (!f.preset.empty()) c = mfim::preset_config(f.preset);
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) throw mfim::ConfigError("config: cannot open " + f.config);
        std::stringstream ss;
        ss << in.rdbuf();
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(ss.str());
        } catch (const nlohmann::json::parse_error& e) {
            throw mfim::ConfigError("config: " + f.config + " is not valid JSON: " + e.what());
        }
        if (f.preset.empty() && j.is_object() && j.contains("preset") && j["preset"].is_string() &&
            !j["preset"].get<std::string>().empty())
            c = mfim::preset_config(j["preset"].get<std::string>());
        mfim::apply_json(c, j);
    }
    c.workflow = workflow;
    if (sub.count("--seed")) c.seed = f.seed;
    if (sub.count("--threads")) c.threads = f.threads;
    if (sub.count("--out")) c.out_dir = f.out;
    if (!f.input.empty()) c.fit.input = f.input;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy transport in the mixed-field Ising chain: simulation and analysis workflows"};
    app.require_subcommand(0, 1);
    bool list = false;
    app.add_flag("--list-presets", list, "Print the named presets and exit");

    Flags f;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"run-ideal", "Measurement protocol on ideal Trotter dynamics with shots"},
        {"run-noisy", "Measurement protocol with thermal-relaxation noise"},
        {"run-exact", "Exact correlators, fluctuation bands and relative errors"},
        {"eth-report", "Eigenstate diagnostics and finite-size scaling"},
        {"sampling-report", "Convergence with ensemble size and typicality spread"},
        {"fit", "Renormalize a correlator table and fit power laws"}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
        s->add_option("--preset", f.preset, "Named preset");
        s->add_option("--seed", f.seed, "Master seed");
        s->add_option("--out", f.out, "Output directory");
        s->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
        s->add_flag("--dump-config", f.dump, "Print the resolved config and exit");
        if (name == "fit") s->add_option("--input", f.input, "correlators.csv to fit");
        subs.push_back(s);
    }
    CLI11_PARSE(app, argc, argv);

    if (list) {
        for (const auto& p : mfim::preset_names())
            std::cout << p << "  (" << mfim::preset_config(p).workflow << ")\n";
        return 0;
    }
    for (auto* s : subs) {
        if (!s->parsed()) continue;
        try {
            const auto cfg = resolve(s->get_name(), f, *s);
            if (f.dump) {
                std::cout << mfim::to_json(cfg).dump(2) << "\n";
                return 0;
            }
            const auto res = mfim::run_workflow(cfg);
            nlohmann::json j = res.summary;
            j["out_dir"] = res.dir.string();
            j["files"] = res.files;
            j["config_hash"] = mfim::config_hash(cfg);
            std::cout << j.dump(2) << "\n";
            return 0;
        } catch (const mfim::ConfigError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        } catch (const mfim::SizeRefused& e) {
            std::cerr << "refused: " << e.what() << "\n";
            return 3;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    std::cout << app.help() << "\n";
    return 0;
}
