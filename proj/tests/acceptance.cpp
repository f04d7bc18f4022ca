// Acceptance suite. `acceptance` runs every criterion, `acceptance N...` the listed
// ones. One line per criterion: "criterion N: PASS|FAIL <metrics>". Exit status is
// the number of failing criteria, capped at 125.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "nmsim/labcli/commands.hpp"

using namespace nmsim;
using namespace nmsim::labcli;

namespace {

// pinned tolerances
constexpr double kC1MaxDistance = 0.05;
constexpr double kC1HalvingRatio = 1.3;
constexpr double kC2Jitter = 0.10;
constexpr double kC2Reduction = 5.0;
constexpr double kC3RelativeError = 1e-8;
constexpr double kC3SteadyState = 1e-6;
constexpr double kC4RateError = 0.05;
constexpr double kC4Deviation = 0.01;
constexpr double kC5Sigmas = 4.0;
constexpr double kC5RatioLo = 1.6;
constexpr double kC5RatioHi = 2.6;
constexpr double kC6Trace = 1e-12;
constexpr double kC6Hermiticity = 1e-12;
constexpr double kC6Positivity = 10.0;  // × dt
constexpr double kC7Fock = 1e-10;
constexpr double kC7Oracle = 1e-6;
constexpr double kC8Relative = 0.05;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ExperimentConfig config(Model m, Run r) {
    ExperimentConfig c = defaults_for(m);
    c.run = r;
    return c;
}

// Closed form of df/dt = g + b f + g f², f(0) = 0, from the linear second-order
// equation for u with f = −u̇/(g u).
Complex riccati_exact(const AtomRiccatiParams& p, double t) {
    const Complex b = kI * Complex(p.omega_q - p.detuning, p.gamma);
    const double g = p.g;
    const Complex disc = std::sqrt(b * b - 4.0 * g * g);
    if (std::abs(disc) < 1e-14) {
        const Complex r = b / 2.0;
        return r * r * t / (g * (1.0 - r * t));
    }
    const Complex rp = (b + disc) / 2.0, rm = (b - disc) / 2.0;
    const Complex u = (rp * std::exp(rm * t) - rm * std::exp(rp * t)) / (rp - rm);
    const Complex du = rp * rm * (std::exp(rm * t) - std::exp(rp * t)) / (rp - rm);
    return -du / (g * u);
}

Outcome criterion_1() {
    const ExperimentConfig c = config(Model::AtomCavity, Run::Compare);
    const WienerPath coarse = config_path(c);
    const WienerPath fine = refine_brownian_bridge(coarse, derive_trajectory_seed(c.seed, 0));
    const CompareResult a = compare_routes(c, c.numerics.n_cavity, coarse, 100);
    const CompareResult b = compare_routes(c, c.numerics.n_cavity, fine, 200);
    const double ratio = a.integrated_distance / b.integrated_distance;
    return {a.max_distance <= kC1MaxDistance && ratio >= kC1HalvingRatio,
            "max_distance=" + fmt("%.4g", a.max_distance) + " integrated(dt)=" + fmt("%.4g", a.integrated_distance) +
                " integrated(dt/2)=" + fmt("%.4g", b.integrated_distance) + " ratio=" + fmt("%.3f", ratio)};
}

Outcome criterion_2() {
    ExperimentConfig c = config(Model::AtomCavity, Run::Converge);
    c.n_cavity_list = {2, 4, 8, 16};
    const auto rows = converge_table(c, config_path(c));
    std::string d;
    for (const ConvergeRow& r : rows) d += "D(" + std::to_string(r.n_cavity) + ")=" + fmt("%.6g", r.accumulated) + " ";
    const bool monotone = non_increasing_within(rows, kC2Jitter);
    const bool reduced = rows.back().accumulated <= rows.front().accumulated / kC2Reduction;
    d += std::string("non_increasing=") + (monotone ? "yes" : "no") + " D(16)<=D(2)/5=" + (reduced ? "yes" : "no");
    return {monotone && reduced, d};
}

Outcome criterion_3() {
    const AtomRiccatiParams p = atom_params(config(Model::AtomCavity, Run::Sme));
    const double dt = 1e-3;
    const std::vector<Complex> f = atom_riccati_evolve(p, dt, 10000);
    double worst = 0.0;
    for (std::size_t k = 1; k < f.size(); ++k) {
        const Complex e = riccati_exact(p, static_cast<double>(k) * dt);
        worst = std::max(worst, std::abs(f[k] - e) / std::abs(e));
    }
    // roots of g f² + i(ω_q − Δ + iγ) f + g = 0
    const Complex b = kI * Complex(p.omega_q - p.detuning, p.gamma);
    const Complex disc = std::sqrt(b * b - 4.0 * p.g * p.g);
    const Complex r1 = (-b + disc) / (2.0 * p.g), r2 = (-b - disc) / (2.0 * p.g);
    const SteadyState s = atom_riccati_steady_state(p);
    const double ss_err = std::max({std::abs(s.selected - 1.0), std::abs(r1 - 1.0), std::abs(r2 - 1.0)});
    return {worst < kC3RelativeError && ss_err < kC3SteadyState,
            "max_relative_error=" + fmt("%.3g", worst) + " steady_state=" + fmt("%.12g", s.selected.real()) +
                " steady_state_error=" + fmt("%.3g", ss_err)};
}

Outcome criterion_4() {
    ExperimentConfig c = config(Model::AtomCavity, Run::Markovian);
    c.physics.gamma = 50.0;
    c.physics.g = 1.0;
    c.physics.omega_q = c.physics.detuning = 0.1;
    c.numerics.t_final = 50.0;
    c.numerics.sample_stride = 100;
    const MarkovianResult r = markovian_limit(c);
    const double rel = std::abs(r.fitted_rate - r.expected_rate) / r.expected_rate;
    return {rel < kC4RateError && r.max_deviation_after_transient < kC4Deviation,
            "fitted_rate=" + fmt("%.6g", r.fitted_rate) + " expected=" + fmt("%.6g", r.expected_rate) +
                " relative_error=" + fmt("%.3g", rel) +
                " max_deviation_after_transient=" + fmt("%.3g", r.max_deviation_after_transient)};
}

Outcome criterion_5() {
    ExperimentConfig c = config(Model::AtomCavity, Run::Ensemble);
    const EnsembleComparison a = atom_ensemble(c, 2000, 0);
    const EnsembleComparison b = atom_ensemble(c, 8000, 0);
    const double ratio = a.max_abs_deviation / b.max_abs_deviation;
    return {a.within_4_se && a.max_z <= kC5Sigmas && ratio >= kC5RatioLo && ratio <= kC5RatioHi,
            "M=2000 max_dev=" + fmt("%.4g", a.max_abs_deviation) + " max_z=" + fmt("%.3f", a.max_z) +
                " M=8000 max_dev=" + fmt("%.4g", b.max_abs_deviation) + " ratio=" + fmt("%.3f", ratio) +
                " below_guard(M=2000)=" + std::to_string(a.positivity_violations)};
}

Outcome criterion_6() {
    const std::size_t n = 10000;
    struct Row {
        std::string name;
        double trace, herm, min_eig, dt;
    };
    std::vector<Row> rows;
    auto add = [&](const std::string& name, const SmeTrajectory& t, double dt) {
        rows.push_back({name, t.max_trace_increment, t.max_hermiticity_defect, t.min_eigenvalue, dt});
    };

    {
        const ExperimentConfig c = config(Model::AtomCavity, Run::Sme);
        const double dt = c.numerics.dt;
        add("atom_sme", run_atom_sme(projector(plus_x_state()), atom_params(c), generate_wiener(n, dt, c.seed), 1), dt);
        // master step: the dW-free limit of the same stepper
        SmeState s{projector(plus_x_state()), AtomRiccatiState{}, 0.0};
        const AtomRiccatiParams p = atom_params(c);
        WienerPath zero;
        zero.dt = dt;
        zero.increments.assign(n, 0.0);
        add("atom_master", run_sme(s, zero, 1, [&](const SmeState& st, double, double h) {
                return atom_sme_step(st, p, 0.0, h);
            }), dt);
    }
    {
        const ExperimentConfig c = config(Model::LinearOptomech, Run::Sme);
        const double dt = c.numerics.dt;
        const OptomechPlant plant = make_optomech_plant(optomech_params(c), c.numerics.n_mech);
        add("optomech_sme",
            run_optomech_sme(projector(initial_plant_state(c)), plant, generate_wiener(n, dt, c.seed), 1), dt);
    }
    {
        const ExperimentConfig c = config(Model::QuadraticOptomech, Run::Sme);
        const double dt = c.numerics.dt;
        const PhononPlant plant = make_phonon_plant(c.physics.omega_m, c.numerics.n_mech);
        add("phonon_sme", run_phonon_sme(projector(initial_plant_state(c)), plant, phonon_g_eff(c),
                                         generate_wiener(n, dt, c.seed), 1),
            dt);

        // general first-order weak-coupling SME with the converged kernel for L = X²
        const Quadratures q = quadratures(c.numerics.n_mech);
        const Operator L = q.X * q.X;
        const Operator H = c.physics.omega_m * q.N;
        const WeakCouplingKernel k =
            weak_coupling_varrho(L, H, {BathMode{c.physics.detuning, c.physics.g, c.physics.gamma, 2}}, 40.0);
        const UnitaryPropagator U(H);
        const double g = c.physics.g, rate = c.physics.gamma;
        add("weak_coupling_sme",
            run_sme(SmeState{projector(initial_plant_state(c)), std::monostate{}, 0.0}, generate_wiener(n, dt, c.seed),
                    1,
                    [&](const SmeState& st, double dW, double h) {
                        const EvaluatedMode m{g, rate, k.kernels[0] * st.rho};
                        SmeStepResult r = general_sme_step(st.rho, std::span<const EvaluatedMode>(&m, 1), L, U, dW, h, st.t);
                        return SmeStateStep{SmeState{std::move(r.rho), std::monostate{}, st.t + h}, r.y, r.diag};
                    }),
            dt);
    }

    bool pass = true;
    std::string d;
    for (const Row& r : rows) {
        pass = pass && r.trace < kC6Trace && r.herm < kC6Hermiticity && r.min_eig >= -kC6Positivity * r.dt;
        d += r.name + "{trace=" + fmt("%.2g", r.trace) + " herm=" + fmt("%.2g", r.herm) +
             " min_eig=" + fmt("%.3g", r.min_eig) + "} ";
    }
    return {pass, d};
}

Outcome criterion_7() {
    ExperimentConfig c = config(Model::QuadraticOptomech, Run::PhononFixture);
    c.numerics.t_final = 10.0;  // 10^4 steps at dt = 1e-3
    const PhononFixtureResult r = phonon_fixture(c);
    return {r.fock_max_deviation < kC7Fock && r.max_oracle_error < kC7Oracle && r.max_generated_coherence > 0.0,
            "g_eff=" + fmt("%.6g", r.g_eff) + " fock_max_deviation=" + fmt("%.3g", r.fock_max_deviation) +
                " max_oracle_error=" + fmt("%.3g", r.max_oracle_error) +
                " max_|rho_04|=" + fmt("%.3g", r.max_generated_coherence)};
}

Outcome criterion_8() {
    const ExperimentConfig c = config(Model::LinearOptomech, Run::Compare);
    CompareResult r;
    try {
        r = compare_routes(c, c.numerics.n_cavity, config_path(c), 1);
    } catch (const NumericalFailure& e) {
        return {false, std::string("numerical failure: ") + e.what()};
    }
    bool pass = true;
    std::string d;
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        double amp = 0.0, dev = 0.0;
        for (std::size_t j = 0; j < r.times.size(); ++j) {
            amp = std::max(amp, std::abs(r.sse[j][i]));
            dev = std::max(dev, std::abs(r.sse[j][i] - r.sme[j][i]));
        }
        pass = pass && dev <= kC8Relative * amp;
        d += r.names[i] + "{amplitude=" + fmt("%.4g", amp) + " max_dev=" + fmt("%.4g", dev) +
             " relative=" + fmt("%.4g", dev / amp) + "} ";
    }
    d += "leakage=" + fmt("%.3g", r.max_leakage) + " f1_guard=not_triggered";
    return {pass, d};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion_9() {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / ("nmsim_acceptance_" + std::to_string(::getpid()));
    std::vector<ExperimentConfig> runs;
    for (Run r : {Run::Sse, Run::Sme, Run::Compare, Run::Converge}) {
        for (Model m : {Model::AtomCavity, Model::LinearOptomech, Model::QuadraticOptomech}) {
            ExperimentConfig c = config(m, r);
            c.numerics.t_final = 2.0;
            runs.push_back(c);
        }
    }
    {
        ExperimentConfig c = config(Model::AtomCavity, Run::Ensemble);
        c.numerics.t_final = 2.0;
        c.n_traj = 200;
        runs.push_back(c);
        c = config(Model::AtomCavity, Run::Markovian);
        c.physics.gamma = 50.0;
        c.physics.omega_q = c.physics.detuning = 0.1;
        runs.push_back(c);
        c = config(Model::QuadraticOptomech, Run::PhononFixture);
        c.numerics.t_final = 2.0;
        runs.push_back(c);
    }
    bool pass = true;
    std::size_t compared = 0;
    std::string d;
    int idx = 0;
    for (ExperimentConfig c : runs) {
        std::string first;
        for (unsigned threads : {1u, 1u, 4u}) {
            c.threads = threads;
            const fs::path dir = root / std::to_string(idx++);
            const RunReport rep = run_command(c, dir);
            const std::string bytes = slurp(rep.outputs.front());
            if (bytes.empty()) {
                pass = false;
                d += "empty:" + to_string(c.run) + "/" + to_string(c.model) + " ";
            } else if (first.empty()) {
                first = bytes;
            } else if (bytes != first) {
                pass = false;
                d += "mismatch:" + to_string(c.run) + "/" + to_string(c.model) + " ";
            }
            ++compared;
        }
    }
    fs::remove_all(root);
    d += "runs=" + std::to_string(compared) + " (3 per command/model, threads 1,1,4)";
    return {pass && compared > 0, d};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3,
                                                         criterion_4, criterion_5, criterion_6,
                                                         criterion_7, criterion_8, criterion_9};
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) which.push_back(i);

    int failures = 0;
    for (int n : which) {
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::cerr << "unknown criterion " << n << '\n';
            return 125;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(n - 1)]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << " ["
                  << fmt("%.1f", secs) << " s]" << std::endl;
        if (!o.pass) ++failures;
    }
    return std::min(failures, 125);
}
