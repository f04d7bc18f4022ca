#pragma once

/// Experiment commands. Each returns a RunReport and writes its CSV into `out_dir`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "nmsim/error.hpp"
#include "nmsim/jointsse.hpp"
#include "nmsim/labcli/config.hpp"
#include "nmsim/labcli/output.hpp"
#include "nmsim/nmsme.hpp"
#include "nmsim/qspace.hpp"
#include "nmsim/riccati.hpp"
#include "nmsim/stochproc.hpp"

namespace nmsim::labcli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Model plumbing

inline AtomRiccatiParams atom_params(const ExperimentConfig& c) {
    return {c.physics.omega_q, c.physics.detuning, c.physics.gamma, c.physics.g};
}

inline OptomechParams optomech_params(const ExperimentConfig& c) {
    return {c.physics.omega_m, c.physics.detuning, c.physics.gamma, c.physics.g, c.physics.mass};
}

inline double phonon_g_eff(const ExperimentConfig& c) {
    if (!(c.physics.gamma > 0.0)) throw ConfigError("physics.gamma", "must be > 0 for the phonon equation");
    return c.physics.g * c.physics.g / c.physics.gamma;
}

inline StateVector initial_plant_state(const ExperimentConfig& c) {
    const PlantState& s = c.plant_state;
    if (c.model == Model::AtomCavity) {
        if (s.kind == "excited") return basis_state(2, 1);
        if (s.kind == "ground") return basis_state(2, 0);
        return plus_x_state();
    }
    const int n = c.numerics.n_mech;
    if (s.kind == "fock") return basis_state(n, s.n);
    if (s.kind == "coherent") return coherent_state(n, Complex(s.alpha, 0.0));
    if (s.n == 0) throw ConfigError("plant_state.n", "fock_superposition needs n > 0");
    return (basis_state(n, 0) + basis_state(n, s.n)) / std::sqrt(2.0);
}

/// Both routes for one model: the joint SSE and the reduced SME.
struct Routes {
    SseModel sse;
    JointState psi0;
    std::vector<std::string> names;
    std::vector<Operator> plant_ops;
    std::vector<Operator> joint_ops;
    SmeState sme0;
    std::function<SmeStateStep(const SmeState&, double, double)> sme_step;
};

inline Routes make_routes(const ExperimentConfig& c, int n_cavity) {
    Routes r;
    const Physics& p = c.physics;
    const StateVector plant = initial_plant_state(c);
    switch (c.model) {
        case Model::AtomCavity: {
            r.sse = build_atom_cavity(p.omega_q, p.detuning, p.g, p.gamma, n_cavity);
            r.names = {"sx", "sy", "sz"};
            r.plant_ops = {sigma_x(), sigma_y(), sigma_z()};
            r.sme0 = SmeState{projector(plant), AtomRiccatiState{}, 0.0};
            const AtomRiccatiParams ap = atom_params(c);
            r.sme_step = [ap](const SmeState& s, double dW, double dt) { return atom_sme_step(s, ap, dW, dt); };
            break;
        }
        case Model::LinearOptomech: {
            r.sse = build_linear_optomech(p.omega_m, p.detuning, p.g, p.gamma, p.mass, c.numerics.n_mech, n_cavity);
            auto plant_model = std::make_shared<OptomechPlant>(make_optomech_plant(optomech_params(c), c.numerics.n_mech));
            r.names = {"x", "p"};
            r.plant_ops = {plant_model->x, plant_model->p};
            r.sme0 = SmeState{projector(plant), OptomechRiccatiState{}, 0.0};
            r.sme_step = [plant_model](const SmeState& s, double dW, double dt) {
                return optomech_sme_step(s, *plant_model, dW, dt);
            };
            break;
        }
        case Model::QuadraticOptomech: {
            r.sse = build_quadratic_optomech(p.omega_m, p.detuning, p.g, p.gamma, c.numerics.n_mech, n_cavity);
            auto plant_model = std::make_shared<PhononPlant>(make_phonon_plant(p.omega_m, c.numerics.n_mech));
            const double g_eff = phonon_g_eff(c);
            r.names = {"N"};
            r.plant_ops = {plant_model->N};
            r.sme0 = SmeState{projector(plant), std::monostate{}, 0.0};
            r.sme_step = [plant_model, g_eff](const SmeState& s, double dW, double dt) {
                SmeStepResult res = phonon_sme_step(s.rho, *plant_model, g_eff, dW, dt, s.t);
                return SmeStateStep{SmeState{std::move(res.rho), std::monostate{}, s.t + dt}, res.y, res.diag};
            };
            break;
        }
    }
    r.psi0 = product_with_vacuum(r.sse, plant);
    for (const Operator& op : r.plant_ops) r.joint_ops.push_back(r.sse.plant_operator(op));
    return r;
}

inline std::vector<double> sse_moments(const Routes& r, const JointState& psi) {
    std::vector<double> m;
    for (const Operator& op : r.joint_ops) m.push_back(expectation(op, psi).real());
    return m;
}

inline std::vector<double> sme_moments(const Routes& r, const Operator& rho) {
    std::vector<double> m;
    for (const Operator& op : r.plant_ops) m.push_back(expectation(op, rho).real());
    return m;
}

inline double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline WienerPath config_path(const ExperimentConfig& c) {
    return generate_wiener(c.n_steps(), c.numerics.dt, c.seed);
}

// ---------------------------------------------------------------------------
// Shared-path comparison

struct CompareResult {
    std::vector<std::string> names;
    std::vector<double> times;
    std::vector<std::vector<double>> sse;  ///< sse[sample][observable]
    std::vector<std::vector<double>> sme;
    std::vector<double> distance;          ///< moment distance at each sample
    std::vector<double> y_sse;             ///< record mean over the preceding sample interval
    std::vector<double> y_sme;
    double max_distance = 0.0;             ///< over every step
    double integrated_distance = 0.0;      ///< Σ_k d(t_k)·dt over every step
    double max_record_mismatch = 0.0;      ///< max_k |y_sse + y_sme| (opposite quadratures)
    double max_leakage = 0.0;
};

/// Runs the joint SSE on `sse_path` and the SME on the same realization (−dW).
inline CompareResult compare_routes(const ExperimentConfig& c, int n_cavity, const WienerPath& sse_path,
                                    std::size_t stride) {
    if (stride < 1) throw InvalidParameter("compare_routes: stride must be >= 1");
    const Routes r = make_routes(c, n_cavity);
    CompareResult out;
    out.names = r.names;
    JointState psi = r.psi0;
    SmeState s = r.sme0;
    const double dt = sse_path.dt;

    auto sample = [&](double t, const std::vector<double>& a, const std::vector<double>& b, double d, double ya,
                      double yb) {
        out.times.push_back(t);
        out.sse.push_back(a);
        out.sme.push_back(b);
        out.distance.push_back(d);
        out.y_sse.push_back(ya);
        out.y_sme.push_back(yb);
    };
    {
        const auto a = sse_moments(r, psi);
        const auto b = sme_moments(r, s.rho);
        const double d = euclidean_distance(a, b);
        out.max_distance = d;
        sample(0.0, a, b, d, std::nan(""), std::nan(""));
    }
    out.max_leakage = model_leakage(r.sse, psi);
    double ya_sum = 0.0, yb_sum = 0.0;
    for (std::size_t k = 0; k < sse_path.size(); ++k) {
        const double t = static_cast<double>(k) * dt;
        const double dw = sse_path.increments[k];
        SseStepResult a = sse_step(r.sse, psi, dw, dt, t);
        s.t = t;
        SmeStateStep b = r.sme_step(s, sme_increment(dw), dt);
        psi = std::move(a.state);
        s = std::move(b.state);
        const auto ma = sse_moments(r, psi);
        const auto mb = sme_moments(r, s.rho);
        const double d = euclidean_distance(ma, mb);
        out.max_distance = std::max(out.max_distance, d);
        out.integrated_distance += d * dt;
        out.max_record_mismatch = std::max(out.max_record_mismatch, std::abs(a.y + b.y));
        ya_sum += a.y;
        yb_sum += b.y;
        if ((k + 1) % stride == 0) {
            out.max_leakage = std::max(out.max_leakage, model_leakage(r.sse, psi));
            const double n = static_cast<double>(stride);
            sample(static_cast<double>(k + 1) * dt, ma, mb, d, ya_sum / n, yb_sum / n);
            ya_sum = yb_sum = 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline Cell maybe(double v) { return std::isnan(v) ? Cell() : Cell(v); }

inline std::string out_file(const fs::path& dir, const ExperimentConfig& c, const std::string& suffix = "") {
    return (dir / (to_string(c.run) + suffix + ".csv")).string();
}

inline void require_model(const ExperimentConfig& c, std::initializer_list<Model> allowed) {
    for (Model m : allowed)
        if (c.model == m) return;
    throw ConfigError("model", "run '" + to_string(c.run) + "' does not support model '" + to_string(c.model) + "'");
}

}  // namespace detail

inline RunReport cmd_sse(const ExperimentConfig& c, const fs::path& out_dir) {
    RunReport rep;
    rep.config = c;
    const Routes r = make_routes(c, c.numerics.n_cavity);
    const WienerPath path = config_path(c);
    std::vector<Observable> obs;
    for (std::size_t i = 0; i < r.names.size(); ++i) obs.push_back({r.names[i], r.joint_ops[i]});
    const auto stride = static_cast<std::size_t>(c.numerics.sample_stride);
    const Trajectory traj = run_sse(r.sse, r.psi0, path, obs, stride);

    std::vector<std::string> cols{"t", "y_mean"};
    for (const auto& n : r.names) cols.push_back(n);
    cols.insert(cols.end(), {"norm_drift", "leakage"});
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"joint plant-bath SSE, conditional plant moments", "y_mean: record averaged over the preceding sample interval"},
                  cols);
    double max_leak = 0.0, max_drift = 0.0;
    for (std::size_t j = 0; j < traj.samples(); ++j) {
        std::vector<Cell> row{traj.times[j]};
        if (j == 0) {
            row.emplace_back();
        } else {
            double sum = 0.0;
            for (std::size_t k = (j - 1) * stride; k < j * stride; ++k) sum += traj.record.y[k];
            row.emplace_back(sum / static_cast<double>(stride));
        }
        for (const auto& series : traj.series) row.emplace_back(series[j].real());
        row.emplace_back(traj.norm_drift[j]);
        row.emplace_back(traj.leakage[j]);
        max_leak = std::max(max_leak, traj.leakage[j]);
        max_drift = std::max(max_drift, traj.norm_drift[j]);
        csv.row(row);
    }
    rep.outputs.push_back(csv.path().string());
    rep.summary["n_steps"] = path.size();
    rep.summary["max_leakage"] = max_leak;
    rep.summary["max_norm_drift"] = max_drift;
    return rep;
}

inline RunReport cmd_sme(const ExperimentConfig& c, const fs::path& out_dir) {
    RunReport rep;
    rep.config = c;
    const Routes r = make_routes(c, c.numerics.n_cavity);
    const WienerPath path = as_sme_path(config_path(c));
    const auto stride = static_cast<std::size_t>(c.numerics.sample_stride);
    const SmeTrajectory traj = run_sme(r.sme0, path, stride, r.sme_step);

    std::vector<std::string> cols{"t", "y_mean"};
    for (const auto& n : r.names) cols.push_back(n);
    cols.push_back("purity");
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"reduced plant SME driven by -dW of the seeded path (the realization the SSE sees as +dW)",
                   "y_mean: record averaged over the preceding sample interval"},
                  cols);
    for (std::size_t j = 0; j < traj.times.size(); ++j) {
        std::vector<Cell> row{traj.times[j]};
        if (j == 0) {
            row.emplace_back();
        } else {
            double sum = 0.0;
            for (std::size_t k = (j - 1) * stride; k < j * stride; ++k) sum += traj.record.y[k];
            row.emplace_back(sum / static_cast<double>(stride));
        }
        for (double m : sme_moments(r, traj.rho[j])) row.emplace_back(m);
        row.emplace_back(purity(traj.rho[j]));
        csv.row(row);
    }
    rep.outputs.push_back(csv.path().string());
    rep.summary["n_steps"] = path.size();
    rep.summary["max_trace_increment"] = traj.max_trace_increment;
    rep.summary["max_hermiticity_defect"] = traj.max_hermiticity_defect;
    rep.summary["min_eigenvalue"] = traj.min_eigenvalue;
    return rep;
}

inline RunReport cmd_compare(const ExperimentConfig& c, const fs::path& out_dir) {
    RunReport rep;
    rep.config = c;
    const WienerPath path = config_path(c);
    const CompareResult res =
        compare_routes(c, c.numerics.n_cavity, path, static_cast<std::size_t>(c.numerics.sample_stride));

    std::vector<std::string> cols{"t", "y_sse", "y_sme"};
    for (const auto& n : res.names) cols.push_back(n + "_sse");
    for (const auto& n : res.names) cols.push_back(n + "_sme");
    for (const auto& n : res.names) cols.push_back(n + "_diff");
    cols.push_back("distance");
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"shared Wiener realization: SSE driven by +dW, SME by -dW; the records satisfy y_sme = -y_sse",
                   "y_*: record averaged over the preceding sample interval",
                   "distance: Euclidean norm of the moment difference (Bloch vector for the atom)"},
                  cols);
    for (std::size_t j = 0; j < res.times.size(); ++j) {
        std::vector<Cell> row{res.times[j], detail::maybe(res.y_sse[j]), detail::maybe(res.y_sme[j])};
        for (double v : res.sse[j]) row.emplace_back(v);
        for (double v : res.sme[j]) row.emplace_back(v);
        for (std::size_t i = 0; i < res.names.size(); ++i) row.emplace_back(res.sse[j][i] - res.sme[j][i]);
        row.emplace_back(res.distance[j]);
        csv.row(row);
    }
    rep.outputs.push_back(csv.path().string());
    rep.summary["n_steps"] = path.size();
    rep.summary["max_distance"] = res.max_distance;
    rep.summary["integrated_distance"] = res.integrated_distance;
    rep.summary["max_record_mismatch"] = res.max_record_mismatch;
    rep.summary["max_leakage"] = res.max_leakage;
    return rep;
}

struct ConvergeRow {
    int n_cavity = 0;
    double accumulated = 0.0;
    double max_distance = 0.0;
    double max_leakage = 0.0;
};

/// D(n) = Σ_t ‖m_SSE(t) − m_SME(t)‖₂·dt for each truncation, all on the same path.
inline std::vector<ConvergeRow> converge_table(const ExperimentConfig& c, const WienerPath& path) {
    std::vector<ConvergeRow> rows;
    for (int n : c.n_cavity_list) {
        const CompareResult res = compare_routes(c, n, path, path.size());
        rows.push_back({n, res.integrated_distance, res.max_distance, res.max_leakage});
    }
    return rows;
}

/// True when D never grows by more than `jitter` relative to its predecessor.
inline bool non_increasing_within(const std::vector<ConvergeRow>& rows, double jitter) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].accumulated > (1.0 + jitter) * rows[i - 1].accumulated) return false;
    return true;
}

inline RunReport cmd_converge(const ExperimentConfig& c, const fs::path& out_dir) {
    RunReport rep;
    rep.config = c;
    const WienerPath path = config_path(c);
    const auto rows = converge_table(c, path);
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"accumulated difference D = sum over steps of |m_SSE - m_SME|_2 * dt, same path for every row",
                   "n_cavity: Fock truncation of the cavity mode"},
                  {"n_cavity", "accumulated_difference", "max_distance", "max_leakage"});
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const ConvergeRow& r : rows) {
        csv.row({r.n_cavity, r.accumulated, r.max_distance, r.max_leakage});
        table.push_back({{"n_cavity", r.n_cavity}, {"accumulated_difference", r.accumulated}});
    }
    rep.outputs.push_back(csv.path().string());
    rep.summary["table"] = table;
    rep.summary["non_increasing_within_10pct"] = non_increasing_within(rows, 0.10);
    return rep;
}

struct EnsembleComparison {
    std::vector<double> times;
    EnsembleResult ensemble;
    std::vector<Operator> master;
    double max_abs_deviation = 0.0;
    double max_z = 0.0;              ///< max deviation in units of the standard error
    bool within_4_se = true;
    double min_eigenvalue = 1.0;     ///< over every trajectory and sample
    std::size_t positivity_violations = 0;  ///< trajectories dipping below −10·dt
};

/// Tolerance added to the standard-error test for elements with zero spread.
inline constexpr double kEnsembleFloor = 1e-12;

inline EnsembleComparison atom_ensemble(const ExperimentConfig& c, std::size_t n_traj, unsigned threads) {
    const AtomRiccatiParams p = atom_params(c);
    const Operator rho0 = projector(initial_plant_state(c));
    const std::size_t n_steps = c.n_steps();
    const double dt = c.numerics.dt;
    const auto stride = static_cast<std::size_t>(c.numerics.sample_stride);

    EnsembleComparison out;
    std::mutex mu;
    // Rare deep noise excursions push single Euler-Maruyama trajectories below the
    // positivity guard; the ensemble records them instead of aborting.
    out.ensemble = ensemble_average(
        [&](std::uint64_t seed) {
            SmeTrajectory tr = run_atom_sme(rho0, p, generate_wiener(n_steps, dt, seed), stride, false);
            std::lock_guard<std::mutex> lock(mu);
            out.min_eigenvalue = std::min(out.min_eigenvalue, tr.min_eigenvalue);
            if (tr.min_eigenvalue < -kPositivityFactor * dt) ++out.positivity_violations;
            return std::move(tr.rho);
        },
        n_traj, c.seed, threads);
    const MasterSolution ms = atom_master_evolve(rho0, p, dt, n_steps, stride);
    out.times = ms.times;
    out.master = ms.rho;
    for (std::size_t j = 0; j < ms.rho.size(); ++j) {
        const Operator& m = out.ensemble.mean[j];
        const Operator& se = out.ensemble.stderr_[j];
        for (Eigen::Index a = 0; a < m.size(); ++a) {
            const std::array<std::pair<double, double>, 2> parts{
                std::pair{std::abs(m(a).real() - ms.rho[j](a).real()), se(a).real()},
                std::pair{std::abs(m(a).imag() - ms.rho[j](a).imag()), se(a).imag()}};
            for (auto [dev, s] : parts) {
                out.max_abs_deviation = std::max(out.max_abs_deviation, dev);
                if (dev > 4.0 * s + kEnsembleFloor) out.within_4_se = false;
                if (s > 0.0) out.max_z = std::max(out.max_z, dev / s);
            }
        }
    }
    return out;
}

inline RunReport cmd_ensemble(const ExperimentConfig& c, const fs::path& out_dir) {
    detail::require_model(c, {Model::AtomCavity});
    RunReport rep;
    rep.config = c;
    const auto res = atom_ensemble(c, static_cast<std::size_t>(c.n_traj), c.threads);
    std::vector<std::string> cols{"t"};
    for (const char* e : {"00", "01", "10", "11"})
        for (const char* kind : {"mean", "master", "stderr"})
            for (const char* part : {"re", "im"}) cols.push_back(std::string("rho") + e + "_" + kind + "_" + part);
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"ensemble mean of conditional atom SME trajectories vs the averaged master equation",
                   "trajectory i uses seed splitmix64(seed + (i+1)*0x9e3779b97f4a7c15)"},
                  cols);
    for (std::size_t j = 0; j < res.times.size(); ++j) {
        std::vector<Cell> row{res.times[j]};
        for (auto [r, col] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}}) {
            for (const Operator* m : {&res.ensemble.mean[j], &res.master[j], &res.ensemble.stderr_[j]}) {
                row.emplace_back((*m)(r, col).real());
                row.emplace_back((*m)(r, col).imag());
            }
        }
        csv.row(row);
    }
    rep.outputs.push_back(csv.path().string());
    rep.summary["n_traj"] = c.n_traj;
    rep.summary["max_abs_deviation"] = res.max_abs_deviation;
    rep.summary["max_deviation_in_stderr"] = res.max_z;
    rep.summary["within_4_stderr"] = res.within_4_se;
    rep.summary["min_eigenvalue"] = res.min_eigenvalue;
    rep.summary["trajectories_below_positivity_guard"] = res.positivity_violations;
    return rep;
}

struct MarkovianResult {
    MasterSolution memory;
    MasterSolution fixed;
    double fitted_rate = 0.0;
    double expected_rate = 0.0;
    double max_deviation_after_transient = 0.0;
};

inline void require_markovian_regime(const ExperimentConfig& c) {
    const Physics& p = c.physics;
    if (!(p.gamma > 0.0)) throw ConfigError("physics.gamma", "must be > 0");
    if (p.gamma < 20.0 * std::abs(p.g)) throw ConfigError("physics.gamma", "Markovian regime needs gamma/g >= 20");
    if (p.gamma < 20.0 * std::abs(p.omega_q))
        throw ConfigError("physics.gamma", "Markovian regime needs gamma/omega_q >= 20");
}

/// Least-squares slope of ln ρ_ee against t over the samples after t_min.
inline double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& pop, double t_min) {
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] <= t_min || !(pop[i] > 0.0)) continue;
        const double y = std::log(pop[i]);
        n += 1;
        sx += t[i];
        sy += y;
        sxx += t[i] * t[i];
        sxy += t[i] * y;
    }
    if (n < 2) throw NumericalFailure("fit_decay_rate: fewer than two usable samples");
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw NumericalFailure("fit_decay_rate: degenerate time grid");
    return -(n * sxy - sx * sy) / denom;
}

inline MarkovianResult markovian_limit(const ExperimentConfig& c) {
    require_markovian_regime(c);
    const AtomRiccatiParams p = atom_params(c);
    const Operator rho0 = projector(basis_state(2, 1));
    const auto stride = static_cast<std::size_t>(c.numerics.sample_stride);
    MarkovianResult out;
    out.memory = atom_master_evolve(rho0, p, c.numerics.dt, c.n_steps(), stride);
    out.fixed = atom_master_evolve(rho0, p, c.numerics.dt, c.n_steps(), stride, markovian_limit_f(p));
    const double t_min = 5.0 / p.gamma;
    std::vector<double> pop;
    for (const Operator& r : out.memory.rho) pop.push_back(r(1, 1).real());
    out.fitted_rate = fit_decay_rate(out.memory.times, pop, t_min);
    out.expected_rate = 2.0 * p.g * p.g / p.gamma;
    for (std::size_t j = 0; j < out.memory.times.size(); ++j)
        if (out.memory.times[j] > t_min)
            out.max_deviation_after_transient = std::max(out.max_deviation_after_transient,
                                                         (out.memory.rho[j] - out.fixed.rho[j]).cwiseAbs().maxCoeff());
    return out;
}

inline RunReport cmd_markovian(const ExperimentConfig& c, const fs::path& out_dir) {
    detail::require_model(c, {Model::AtomCavity});
    RunReport rep;
    rep.config = c;
    const MarkovianResult res = markovian_limit(c);
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"excited-state start; memory: f from the Riccati equation; fixed: f = g/gamma",
                   "fitted_rate: least-squares slope of -ln(rho_ee) for t > 5/gamma"},
                  {"t", "rho_ee_memory", "rho_ee_fixed", "re_f", "im_f"});
    for (std::size_t j = 0; j < res.memory.times.size(); ++j)
        csv.row({res.memory.times[j], res.memory.rho[j](1, 1).real(), res.fixed.rho[j](1, 1).real(),
                 res.memory.f[j].real(), res.memory.f[j].imag()});
    rep.outputs.push_back(csv.path().string());
    rep.summary["fitted_rate"] = res.fitted_rate;
    rep.summary["expected_rate"] = res.expected_rate;
    rep.summary["relative_rate_error"] =
        res.expected_rate > 0.0 ? std::abs(res.fitted_rate - res.expected_rate) / res.expected_rate : 0.0;
    rep.summary["max_deviation_after_transient"] = res.max_deviation_after_transient;
    return rep;
}

// ---------------------------------------------------------------------------
// Phonon fixtures

/// One phonon step (increment, then e^{−iω_m N dt} phases) assembled entry by entry from
/// N_mn = n δ_mn and X²_mn = ½[√(n(n−1)) δ_{m,n−2} + √((n+1)(n+2)) δ_{m,n+2} + (2n+1) δ_mn].
inline Operator phonon_bruteforce_step(const Operator& rho, double omega_m, double g_eff, double dW, double dt) {
    const Eigen::Index d = rho.rows();
    auto x2 = [](Eigen::Index m, Eigen::Index n) -> double {
        const auto nn = static_cast<double>(n);
        if (m == n) return 0.5 * (2.0 * nn + 1.0);
        if (m == n - 2) return 0.5 * std::sqrt(nn * (nn - 1.0));
        if (m == n + 2) return 0.5 * std::sqrt((nn + 1.0) * (nn + 2.0));
        return 0.0;
    };
    Operator nc(d, d);  // [N, ρ]
    for (Eigen::Index m = 0; m < d; ++m)
        for (Eigen::Index n = 0; n < d; ++n) nc(m, n) = static_cast<double>(m - n) * rho(m, n);
    double mean_n = 0.0;
    for (Eigen::Index m = 0; m < d; ++m) mean_n += static_cast<double>(m) * rho(m, m).real();
    Operator out(d, d);
    for (Eigen::Index m = 0; m < d; ++m)
        for (Eigen::Index n = 0; n < d; ++n) {
            Complex dc(0.0);  // [X², [N, ρ]]_mn
            for (Eigen::Index k = std::max<Eigen::Index>(0, m - 2); k <= std::min<Eigen::Index>(d - 1, m + 2); ++k)
                dc += x2(m, k) * nc(k, n);
            for (Eigen::Index k = std::max<Eigen::Index>(0, n - 2); k <= std::min<Eigen::Index>(d - 1, n + 2); ++k)
                dc -= nc(m, k) * x2(k, n);
            const Complex anti = static_cast<double>(m + n) * rho(m, n) - 2.0 * mean_n * rho(m, n);
            const Complex next = rho(m, n) - g_eff * dt * dc + std::sqrt(2.0 * g_eff) * dW * anti;
            out(m, n) = next * std::exp(-kI * (omega_m * dt * static_cast<double>(m - n)));
        }
    out = hermitize(out);
    return out / out.trace().real();
}

struct PhononFixtureResult {
    double g_eff = 0.0;
    double fock_max_deviation = 0.0;  ///< over every Fock level and step
    double max_oracle_error = 0.0;    ///< per step, library vs entry-wise oracle
    double max_generated_coherence = 0.0;  ///< max |ρ_04|, absent from the initial state
    std::vector<double> times;
    std::vector<Operator> rho;
    std::vector<double> oracle_error;  ///< max over the preceding sample interval
};

inline void require_phonon_regime(const ExperimentConfig& c) {
    const Physics& p = c.physics;
    if (!(p.gamma > 0.0)) throw ConfigError("physics.gamma", "must be > 0");
    if (!(std::abs(p.g) < p.gamma)) throw ConfigError("physics.g", "phonon equation needs g < gamma");
    if (!(p.gamma < p.omega_m)) throw ConfigError("physics.gamma", "phonon equation needs gamma < omega_m");
    if (c.numerics.n_mech < 5) throw ConfigError("numerics.n_mech", "phonon fixture needs n_mech >= 5");
}

inline PhononFixtureResult phonon_fixture(const ExperimentConfig& c) {
    require_phonon_regime(c);
    PhononFixtureResult out;
    out.g_eff = phonon_g_eff(c);
    const int n = c.numerics.n_mech;
    const PhononPlant plant = make_phonon_plant(c.physics.omega_m, n);
    const WienerPath path = config_path(c);
    const double dt = path.dt;

    for (int level = 0; level < n; ++level) {
        const Operator rho0 = projector(basis_state(n, level));
        Operator rho = rho0;
        for (std::size_t k = 0; k < path.size(); ++k) {
            rho = phonon_sme_step(rho, plant, out.g_eff, path.increments[k], dt).rho;
            out.fock_max_deviation = std::max(out.fock_max_deviation, (rho - rho0).cwiseAbs().maxCoeff());
        }
    }

    const auto stride = static_cast<std::size_t>(c.numerics.sample_stride);
    Operator rho = projector(initial_plant_state(c));
    out.times.push_back(0.0);
    out.rho.push_back(rho);
    out.oracle_error.push_back(0.0);
    double interval_err = 0.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double dw = path.increments[k];
        const Operator lib = phonon_sme_step(rho, plant, out.g_eff, dw, dt).rho;
        const Operator ref = phonon_bruteforce_step(rho, c.physics.omega_m, out.g_eff, dw, dt);
        const double err = (lib - ref).cwiseAbs().maxCoeff();
        out.max_oracle_error = std::max(out.max_oracle_error, err);
        interval_err = std::max(interval_err, err);
        rho = lib;
        out.max_generated_coherence = std::max(out.max_generated_coherence, std::abs(rho(0, 4)));
        if ((k + 1) % stride == 0) {
            out.times.push_back(static_cast<double>(k + 1) * dt);
            out.rho.push_back(rho);
            out.oracle_error.push_back(interval_err);
            interval_err = 0.0;
        }
    }
    return out;
}

inline RunReport cmd_phonon_fixture(const ExperimentConfig& c, const fs::path& out_dir) {
    detail::require_model(c, {Model::QuadraticOptomech});
    RunReport rep;
    rep.config = c;
    const PhononFixtureResult res = phonon_fixture(c);
    CsvWriter csv(detail::out_file(out_dir, c), c,
                  {"phonon-counting SME from the configured plant state; g_eff = g^2/gamma = " + format_double(res.g_eff),
                   "oracle_error: max entry difference to the entry-wise oracle over the preceding sample interval"},
                  {"t", "mean_N", "rho_00", "rho_22", "rho_44", "abs_rho_02", "abs_rho_04", "abs_rho_24",
                   "oracle_error"});
    const Operator N = number(c.numerics.n_mech);
    for (std::size_t j = 0; j < res.times.size(); ++j) {
        const Operator& r = res.rho[j];
        csv.row({res.times[j], expectation(N, r).real(), r(0, 0).real(), r(2, 2).real(), r(4, 4).real(),
                 std::abs(r(0, 2)), std::abs(r(0, 4)), std::abs(r(2, 4)), res.oracle_error[j]});
    }
    rep.outputs.push_back(csv.path().string());
    rep.summary["g_eff"] = res.g_eff;
    rep.summary["fock_max_deviation"] = res.fock_max_deviation;
    rep.summary["max_oracle_error"] = res.max_oracle_error;
    rep.summary["max_generated_coherence_04"] = res.max_generated_coherence;
    return rep;
}

// ---------------------------------------------------------------------------

/// Runs the configured command, fills wall time and writes `<run>_report.json`.
inline RunReport run_command(const ExperimentConfig& c, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const auto start = std::chrono::steady_clock::now();
    RunReport rep;
    switch (c.run) {
        case Run::Sse: rep = cmd_sse(c, out_dir); break;
        case Run::Sme: rep = cmd_sme(c, out_dir); break;
        case Run::Compare: rep = cmd_compare(c, out_dir); break;
        case Run::Converge: rep = cmd_converge(c, out_dir); break;
        case Run::Ensemble: rep = cmd_ensemble(c, out_dir); break;
        case Run::Markovian: rep = cmd_markovian(c, out_dir); break;
        case Run::PhononFixture: rep = cmd_phonon_fixture(c, out_dir); break;
    }
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const fs::path report = out_dir / (to_string(c.run) + "_report.json");
    write_report(report, rep);
    return rep;
}

}  // namespace nmsim::labcli
