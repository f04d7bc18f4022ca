#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "nmsim/labcli/commands.hpp"

using namespace nmsim;
using namespace nmsim::labcli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nmsim_labcli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig atom(Run r, double t_final = 1.0) {
    ExperimentConfig c = defaults_for(Model::AtomCavity);
    c.run = r;
    c.numerics.t_final = t_final;
    return c;
}

std::string config_error_field(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

int simulate(const std::string& args) {
    const std::string cmd = std::string(NMSIM_SIMULATE) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalAtomConfigEchoesEveryDefault) {
    const ExperimentConfig c = parse_config_text(R"({"model": "atom_cavity"})");
    const auto j = to_json(c);
    EXPECT_EQ(j["seed"], 42);
    EXPECT_EQ(j["physics"]["omega_q"], 1.0);
    EXPECT_EQ(j["physics"]["detuning"], 1.0);
    EXPECT_EQ(j["physics"]["gamma"], 2.0);
    EXPECT_EQ(j["physics"]["g"], 1.0);
    EXPECT_EQ(j["numerics"]["dt"], 1e-3);
    EXPECT_EQ(j["numerics"]["t_final"], 10.0);
    EXPECT_EQ(j["numerics"]["n_cavity"], 16);
    EXPECT_EQ(j["numerics"]["sample_stride"], 100);
    EXPECT_EQ(j["plant_state"]["kind"], "plus_x");
    for (const char* key : {"model", "run", "seed", "threads", "physics", "numerics", "plant_state", "ensemble", "converge"})
        EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Config, FieldLevelErrors) {
    EXPECT_EQ(config_error_field(R"({"numerics": {"dt": 0}})"), "numerics.dt");
    EXPECT_EQ(config_error_field(R"({"numerics": {"dt": -1e-3}})"), "numerics.dt");
    EXPECT_EQ(config_error_field(R"({"numerics": {"step": 1e-3}})"), "numerics.step");
    EXPECT_EQ(config_error_field(R"({"colour": "red"})"), "colour");
    EXPECT_EQ(config_error_field(R"({"physics": {"g": "one"}})"), "physics.g");
    EXPECT_EQ(config_error_field(R"({"numerics": {"n_cavity": 1}})"), "numerics.n_cavity");
    EXPECT_EQ(config_error_field(R"({"numerics": {"t_final": 1e-4}})"), "numerics.t_final");
    EXPECT_EQ(config_error_field(R"({"model": "spin_chain"})"), "model");
    EXPECT_EQ(config_error_field(R"({"seed": -3})"), "seed");
    EXPECT_EQ(config_error_field("{not json"), "<file>");
}

TEST(Config, EchoRoundTrips) {
    for (Model m : {Model::AtomCavity, Model::LinearOptomech, Model::QuadraticOptomech}) {
        ExperimentConfig c = defaults_for(m);
        c.seed = 7;
        c.physics.g = 0.123456789012345;
        c.numerics.dt = 1.0 / 3.0 * 1e-3;
        c.n_cavity_list = {3, 5};
        const ExperimentConfig back = parse_config(to_json(c));
        EXPECT_TRUE(back == c) << to_string(m);
        EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
    }
}

TEST(Config, ModelDefaults) {
    const ExperimentConfig lin = defaults_for(Model::LinearOptomech);
    EXPECT_EQ(lin.physics.g, 0.05);
    EXPECT_EQ(lin.plant_state.kind, "coherent");
    const ExperimentConfig quad = defaults_for(Model::QuadraticOptomech);
    EXPECT_LT(quad.physics.g, quad.physics.gamma);
    EXPECT_LT(quad.physics.gamma, quad.physics.omega_m);
}

TEST(Output, ShortestRoundTripDoubles) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(v)), v);
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(Output, CsvHeaderCarriesVersionAndConfig) {
    const fs::path dir = scratch("header");
    const RunReport rep = run_command(atom(Run::Sme, 0.2), dir);
    std::istringstream in(slurp(rep.outputs.front()));
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    EXPECT_EQ(l1, std::string("# nmsim ") + kVersion);
    ASSERT_EQ(l2.rfind("# config ", 0), 0u);
    const ExperimentConfig echoed = parse_config_text(l2.substr(9));
    EXPECT_TRUE(echoed == atom(Run::Sme, 0.2));
    EXPECT_TRUE(fs::exists(dir / "sme_report.json"));
}

TEST(Compare, ZeroCouplingRoutesAgree) {
    ExperimentConfig c = atom(Run::Compare, 10.0);
    c.physics.g = 0.0;
    const CompareResult r = compare_routes(c, 16, config_path(c), 100);
    EXPECT_LT(r.max_distance, 1e-10);
    // records are opposite quadratures of the same realization
    EXPECT_LT(r.max_record_mismatch, 1e-9);
}

TEST(Compare, RecordsAreOppositeQuadratures) {
    const ExperimentConfig c = atom(Run::Compare, 2.0);
    const CompareResult r = compare_routes(c, 8, config_path(c), 100);
    for (std::size_t j = 1; j < r.times.size(); ++j) EXPECT_NEAR(r.y_sse[j], -r.y_sme[j], 0.05);
}

TEST(Compare, SameSeedByteIdenticalCsv) {
    const ExperimentConfig c = atom(Run::Compare, 2.0);
    const RunReport a = run_command(c, scratch("cmp_a"));
    const RunReport b = run_command(c, scratch("cmp_b"));
    EXPECT_EQ(slurp(a.outputs.front()), slurp(b.outputs.front()));
    EXPECT_GT(slurp(a.outputs.front()).size(), 100u);
}

TEST(Converge, SingleEntryListIsOneRow) {
    ExperimentConfig c = atom(Run::Converge, 1.0);
    c.n_cavity_list = {4};
    const auto rows = converge_table(c, config_path(c));
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].n_cavity, 4);
    EXPECT_TRUE(non_increasing_within(rows, 0.0));
}

TEST(Converge, ZeroCouplingVanishes) {
    ExperimentConfig c = atom(Run::Converge, 5.0);
    c.physics.g = 0.0;
    for (const ConvergeRow& r : converge_table(c, config_path(c))) EXPECT_LT(r.accumulated, 1e-9) << r.n_cavity;
}

TEST(Converge, JitterRule) {
    std::vector<ConvergeRow> rows{{2, 1.0, 0, 0}, {4, 1.05, 0, 0}, {8, 0.5, 0, 0}};
    EXPECT_TRUE(non_increasing_within(rows, 0.10));
    rows[1].accumulated = 1.2;
    EXPECT_FALSE(non_increasing_within(rows, 0.10));
}

TEST(Ensemble, SingleTrajectoryReportIsThatTrajectory) {
    const ExperimentConfig c = atom(Run::Ensemble, 1.0);
    const EnsembleComparison e = atom_ensemble(c, 1, 1);
    const SmeTrajectory t = run_atom_sme(projector(plus_x_state()), atom_params(c),
                                         generate_wiener(c.n_steps(), c.numerics.dt, derive_trajectory_seed(c.seed, 0)),
                                         static_cast<std::size_t>(c.numerics.sample_stride));
    ASSERT_EQ(e.ensemble.mean.size(), t.rho.size());
    for (std::size_t j = 0; j < t.rho.size(); ++j) EXPECT_EQ((e.ensemble.mean[j] - t.rho[j]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ensemble, CsvIndependentOfThreadCount) {
    ExperimentConfig c = atom(Run::Ensemble, 1.0);
    c.n_traj = 40;
    c.threads = 1;
    const RunReport a = run_command(c, scratch("ens_1"));
    c.threads = 3;
    const RunReport b = run_command(c, scratch("ens_3"));
    EXPECT_EQ(slurp(a.outputs.front()), slurp(b.outputs.front()));
}

TEST(Ensemble, OnlyAtomModel) {
    ExperimentConfig c = defaults_for(Model::LinearOptomech);
    c.run = Run::Ensemble;
    EXPECT_THROW(run_command(c, scratch("ens_bad")), ConfigError);
}

TEST(Markovian, FigureRegimeRefused) {
    try {
        markovian_limit(atom(Run::Markovian));
        FAIL() << "gamma = 2 accepted";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "physics.gamma");
    }
}

TEST(Markovian, ZeroCouplingKeepsPopulation) {
    ExperimentConfig c = atom(Run::Markovian, 5.0);
    c.physics.gamma = 50.0;
    c.physics.g = 0.0;
    c.physics.omega_q = c.physics.detuning = 0.1;
    const MarkovianResult r = markovian_limit(c);
    EXPECT_LT(std::abs(r.fitted_rate), 1e-6);
    for (const Operator& rho : r.memory.rho) EXPECT_EQ(rho(1, 1).real(), 1.0);
}

TEST(Markovian, FitRecoversExponential) {
    std::vector<double> t, p;
    for (int i = 0; i <= 100; ++i) {
        t.push_back(0.1 * i);
        p.push_back(0.7 * std::exp(-0.37 * t.back()));
    }
    EXPECT_NEAR(fit_decay_rate(t, p, 0.0), 0.37, 1e-12);
    EXPECT_THROW(fit_decay_rate(t, p, 100.0), NumericalFailure);
}

TEST(Phonon, EffectiveCouplingEcho) {
    ExperimentConfig c = defaults_for(Model::QuadraticOptomech);
    c.run = Run::PhononFixture;
    c.physics.g = 0.1;
    c.physics.gamma = 1.0;
    c.numerics.t_final = 0.5;
    const RunReport rep = run_command(c, scratch("phonon"));
    EXPECT_DOUBLE_EQ(rep.summary["g_eff"].get<double>(), 0.01);
}

TEST(Phonon, RegimeGuard) {
    ExperimentConfig c = defaults_for(Model::QuadraticOptomech);
    c.physics.g = 2.0;
    EXPECT_THROW(phonon_fixture(c), ConfigError);
    c = defaults_for(Model::QuadraticOptomech);
    c.physics.omega_m = 0.5;
    EXPECT_THROW(phonon_fixture(c), ConfigError);
}

TEST(Phonon, OracleMatchesLibraryStep) {
    const int n = 8;
    const PhononPlant plant = make_phonon_plant(3.0, n);
    const Operator rho = projector((basis_state(n, 1) + Complex(0.0, 1.0) * basis_state(n, 3)) / std::sqrt(2.0));
    const Operator lib = phonon_sme_step(rho, plant, 0.02, 0.03, 1e-3).rho;
    EXPECT_LT((lib - phonon_bruteforce_step(rho, 3.0, 0.02, 0.03, 1e-3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    const fs::path good = dir / "good.json", bad = dir / "bad.json", unstable = dir / "unstable.json";
    std::ofstream(good) << R"({"model": "atom_cavity", "numerics": {"t_final": 0.1}})";
    std::ofstream(bad) << R"({"model": "atom_cavity", "numerics": {"dt": 0}})";
    // strong phonon measurement at a coarse step blows up the explicit update
    std::ofstream(unstable) << R"({"model": "quadratic_optomech", "physics": {"g": 10}, "numerics": {"dt": 0.01}})";
    const std::string out = " --out " + (dir / "out").string();
    EXPECT_EQ(simulate("--version"), 0);
    EXPECT_EQ(simulate("--list-models"), 0);
    EXPECT_EQ(simulate("sse --config " + good.string() + out), 0);
    EXPECT_EQ(simulate("sse --config " + bad.string() + out), 2);
    EXPECT_EQ(simulate("sse --config " + (dir / "missing.json").string() + out), 2);
    EXPECT_EQ(simulate("teleport --config " + good.string() + out), 2);
    EXPECT_EQ(simulate("markovian --config " + good.string() + out), 2);
    EXPECT_EQ(simulate("sse --bogus-flag"), 2);
    EXPECT_EQ(simulate("sme --config " + unstable.string() + out), 3);
    const auto report = nlohmann::json::parse(slurp(dir / "out" / "sme_report.json"));
    EXPECT_EQ(report["exit_status"], 3);
    EXPECT_TRUE(report.contains("error"));
}

TEST(Cli, SeedOverrideChangesOutput) {
    const fs::path dir = scratch("cli_seed");
    const fs::path cfg = dir / "c.json";
    std::ofstream(cfg) << R"({"model": "atom_cavity", "numerics": {"t_final": 0.5}})";
    ASSERT_EQ(simulate("sme --config " + cfg.string() + " --out " + (dir / "a").string()), 0);
    ASSERT_EQ(simulate("sme --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
    ASSERT_EQ(simulate("sme --config " + cfg.string() + " --seed 7 --out " + (dir / "c").string()), 0);
    const std::string a = slurp(dir / "a" / "sme.csv");
    EXPECT_EQ(a, slurp(dir / "b" / "sme.csv"));
    EXPECT_NE(a, slurp(dir / "c" / "sme.csv"));
}
