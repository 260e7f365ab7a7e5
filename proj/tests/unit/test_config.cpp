#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "mfim/workflows.hpp"

using namespace mfim;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mfim_test_config_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Everything after the provenance line.
std::string body(const std::filesystem::path& p) {
    const std::string s = slurp(p);
    return s.substr(s.find('\n') + 1);
}

ExperimentConfig small(const std::string& dir) {
    ExperimentConfig c;
    c.model.L = 6;
    c.ensemble.kind = "y";
    c.ensemble.size = 3;
    c.protocol.shots = 128;
    c.time.n_steps = 8;
    c.time.every = 2;
    c.out_dir = scratch(dir).string();
    return c;
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys with field paths") {
    CHECK_NOTHROW(load_config_text("{}"));
    CHECK_THROWS_WITH(load_config_text(R"({"modle": {}})"), ContainsSubstring("modle: unknown key"));
    CHECK_THROWS_WITH(load_config_text(R"({"model": {"Omega": 2}})"), ContainsSubstring("model.Omega: unknown key"));
    CHECK_THROWS_WITH(load_config_text(R"({"model": {"L": "twelve"}})"), ContainsSubstring("model.L: wrong type"));
    CHECK_THROWS_WITH(load_config_text(R"({"model": {"L": 7}})"), ContainsSubstring("model.L"));
    CHECK_THROWS_WITH(load_config_text(R"({"fit": {"decay_window": [5, 1]}})"), ContainsSubstring("fit.decay_window"));
    CHECK_THROWS_WITH(load_config_text(R"({"noise": {"preset": "loud"}})"), ContainsSubstring("noise.preset"));
    CHECK_THROWS_WITH(load_config_text(R"({"workflow": "plot"})"), ContainsSubstring("workflow"));
    CHECK_THROWS_AS(load_config_text("{not json"), ConfigError);
    CHECK_THROWS_AS(preset_config("fig9"), ConfigError);
}

TEST_CASE("presets") {
    for (const auto& name : preset_names()) CHECK_NOTHROW(preset_config(name).validate());
    const auto f2 = preset_config("paper-fig2");
    CHECK(f2.workflow == "run-ideal");
    CHECK(f2.model.L == 12);
    CHECK(f2.model.omega == 2.0);
    CHECK(f2.model.dt == 0.1);
    CHECK(f2.time.n_steps == 90);
    CHECK(f2.time.every == 2);
    CHECK(f2.protocol.shots == 8192);
    CHECK(f2.protocol.cb);
    CHECK(f2.protocol.rs);
    CHECK(f2.ensemble.build(12, 0).S() == 12);
    CHECK(preset_config("fig3-om6").model.omega == 6.0);
    CHECK(preset_config("fig3-om3").fit.decay_window == std::vector<double>{1.0, 5.0});
    CHECK(preset_config("eth").eth.window == std::vector<double>{12.0, 75.0});
    // a preset named in the file is the base that the file overrides
    const auto c = load_config_text(R"({"preset": "fig3-om6", "seed": 5})");
    CHECK(c.model.omega == 6.0);
    CHECK(c.seed == 5);
}

TEST_CASE("round trip and hashing") {
    ExperimentConfig a = preset_config("fig5");
    a.seed = 99;
    ExperimentConfig b;
    apply_json(b, to_json(a));
    CHECK(to_json(a) == to_json(b));
    CHECK(config_hash(a) == config_hash(b));
    b.out_dir = "elsewhere";
    b.threads = 4;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 100;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("csv tables round trip") {
    CorrelatorGrid g;
    g.L = 4;
    g.r = r_offsets(4);
    g.times = {0.0, 0.2, 0.4};
    g.values = Eigen::MatrixXd::Random(4, 3);
    const auto dir = scratch("csv");
    Provenance prov{"abc", "fit", 3};
    write_text(dir / "c.csv", correlator_table(g).str(prov));
    CHECK_THAT(slurp(dir / "c.csv"), ContainsSubstring("config_hash=abc"));
    CHECK_THAT(slurp(dir / "c.csv"), ContainsSubstring("code_version=" + code_version()));
    const auto back = grid_from_csv(read_csv(dir / "c.csv"));
    CHECK(back.times == g.times);
    CHECK((back.values - g.values).cwiseAbs().maxCoeff() < 1e-14);
    CsvTable bad({"a", "b"});
    CHECK_THROWS_AS(bad.add_row(std::vector<double>{1.0}), InvalidArgument);
}

TEST_CASE("run-ideal outputs, determinism and zero-step run") {
    auto c = small("ideal_a");
    const auto a = run_workflow(c);
    for (const char* f : {"correlators.csv", "correlators.json", "sum_rule.csv", "heatmap.csv", "variance.csv", "fits.json",
                          "raw_counts.jsonl"}) {
        REQUIRE(std::filesystem::exists(a.dir / f));
        CHECK_THAT(slurp(a.dir / f), ContainsSubstring(config_hash(c)));
    }
    const auto heat = read_csv(a.dir / "heatmap.csv");
    CHECK(heat.rows.size() == 5 * 6);
    // 3 members x 5 checkpoints x 16 circuits
    std::ifstream counts(a.dir / "raw_counts.jsonl");
    std::size_t lines = 0;
    for (std::string l; std::getline(counts, l);) ++lines;
    CHECK(lines == 3 * 5 * 16);

    auto c2 = c;
    c2.out_dir = scratch("ideal_b").string();
    c2.threads = 3;
    const auto b = run_workflow(c2);
    for (const char* f : {"correlators.csv", "heatmap.csv", "variance.csv", "sum_rule.csv", "raw_counts.jsonl"})
        CHECK(slurp(a.dir / f) == slurp(b.dir / f));

    auto z = small("zero");
    z.time.n_steps = 0;
    z.protocol.shots = 0;
    const auto r = run_workflow(z);
    const auto p = z.model.build();
    const auto h = read_csv(r.dir / "heatmap.csv");
    for (const auto& row : h.rows)
        if (row[1] == 0.0) CHECK_THAT(row[2], WithinAbs(equal_time_correlator(p, p.center(), p.center()) / sum_rule_constant(p), 1e-9));
    CHECK(r.summary["fits"]["decay"].contains("refused"));
}

TEST_CASE("run-noisy: identity noise, sweep ordering, refusals") {
    auto ideal = small("noisy_ideal");
    const auto a = run_workflow(ideal);
    auto noisy = small("noisy_id");
    noisy.workflow = "run-noisy";
    noisy.noise.preset = "identity";
    const auto b = run_workflow(noisy);
    for (const char* f : {"correlators.csv", "heatmap.csv", "variance.csv", "sum_rule.csv"})
        CHECK(body(a.dir / f) == body(b.dir / f));

    auto sweep = small("noisy_sweep");
    sweep.workflow = "run-noisy";
    sweep.protocol.shots = 0;
    sweep.time.n_steps = 20;
    sweep.noise.sweep = {"paper_minus50", "paper_base", "paper_plus60"};
    sweep.noise.compare_ideal = true;
    const auto s = run_workflow(sweep);
    const auto& sw = s.summary["sweep"];
    REQUIRE(sw.size() == 3);
    CHECK(sw[0]["sum_at_probe"].get<double>() < sw[1]["sum_at_probe"].get<double>());
    CHECK(sw[1]["sum_at_probe"].get<double>() < sw[2]["sum_at_probe"].get<double>());
    CHECK(sw[0]["decay_rate"].get<double>() > sw[2]["decay_rate"].get<double>());
    CHECK(std::filesystem::exists(s.dir / "sum_rule_sweep.csv"));
    CHECK(s.summary["mitigation"]["improvement_factor"].get<double>() > 1.0);

    auto big = small("noisy_big");
    big.workflow = "run-noisy";
    big.model.L = 12;
    big.ensemble.kind = "fixed12";
    CHECK_THROWS_AS(run_workflow(big), SizeRefused);
}

TEST_CASE("exact, eth, sampling and fit workflows") {
    auto e = small("exact");
    e.workflow = "run-exact";
    e.time.t_max = 3.0;
    e.time.t_step = 0.5;
    e.exact.relative_error = true;
    const auto re = run_workflow(e);
    CHECK(re.summary["sum_rule_max_deviation"].get<double>() < 1e-8);
    CHECK(std::filesystem::exists(re.dir / "fluctuation.csv"));
    CHECK(read_csv(re.dir / "exact_correlators.csv").rows.size() == 7 * 6);
    // basis and parameter-set columns are text, so read the raw file
    CHECK_THAT(slurp(re.dir / "relative_error.csv"), ContainsSubstring("qpu_experiment,Z,"));

    auto eth = small("eth");
    eth.workflow = "eth-report";
    eth.model.variant = "strongly_chaotic";
    eth.eth.sizes = {6, 8};
    eth.eth.window = {2.0, 6.0};
    eth.eth.full_basis_max_L = 6;
    eth.eth.fluctuation_samples = 32;
    eth.eth.overlaps = {"010110"};
    const auto er = run_workflow(eth);
    CHECK(er.summary["fits"]["alpha"].size() == 2);
    CHECK(er.summary["sizes"][1]["F_L"].get<double>() > 0.0);
    CHECK(std::filesystem::exists(er.dir / "overlap_L6_010110.csv"));
    CHECK(read_csv(er.dir / "ipr_L8.csv").rows.size() == 256);

    auto smp = small("sampling");
    smp.workflow = "sampling-report";
    smp.sampling.sizes = {1, 4};
    smp.sampling.trials = 2;
    smp.sampling.t_max = 2.0;
    smp.sampling.y_samples = 16;
    smp.sampling.haar_samples = 8;
    const auto sr = run_workflow(smp);
    CHECK(sr.summary["typicality"]["c0_ratio"].get<double>() > 0.0);
    CHECK(read_csv(sr.dir / "convergence.csv").rows.size() == 4);

    auto fit = small("fit");
    fit.workflow = "fit";
    CHECK_THROWS_AS(run_workflow(fit), ConfigError);
    fit.fit.input = (re.dir / "correlators.csv").string();
    fit.fit.decay_window = {0.5, 3.0};
    const auto fr = run_workflow(fit);
    CHECK(fr.summary["fits"]["decay"].contains("z"));
}
