#pragma once

/// Exact reference route: the nonlinear Markovian stochastic Schrödinger
/// equation for the joint plant ⊗ bath pure state under homodyne detection of
/// the probe field. Each step applies Euler–Maruyama to the measurement terms,
/// then the exact joint unitary e^{−iH dt}, then renormalizes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nmsim/error.hpp"
#include "nmsim/qspace.hpp"
#include "nmsim/stochproc.hpp"

namespace nmsim {

/// One bosonic bath mode: rotating-frame frequency, plant coupling g_k and
/// probe (readout) rate gamma_k.
struct BathMode {
    double detuning = 0.0;
    double coupling = 0.0;
    double rate = 0.0;
    int levels = 2;
};

/// Plant + bath model. Subsystem 0 is the plant, subsystem k+1 is bath mode k.
struct SseModel {
    std::string name;
    HilbertDims dims;
    Operator plant_hamiltonian;  ///< H_p, plant space
    Operator coupling_operator;  ///< L, plant space
    std::vector<BathMode> modes;
    bool plant_is_oscillator = false;

    // Joint-space operators, built once.
    Operator hamiltonian;                 ///< H_p + H_b + H_int
    std::vector<Operator> annihilators;   ///< a_k
    Operator collective;                  ///< sum_k sqrt(gamma_k) a_k
    Operator collective_hop;              ///< collective^dag collective
    UnitaryPropagator propagator;         ///< e^{−iHt} of the joint Hamiltonian

    int plant_dim() const { return dims[0]; }

    /// Embeds a plant-space operator into the joint space.
    Operator plant_operator(const Operator& op) const { return embed(op, dims, 0); }
};

/// Builds the joint operators for H_p + sum_k Δ_k a_k^† a_k + sum_k g_k (L a_k^† + L^† a_k).
inline SseModel make_sse_model(std::string name, const Operator& plant_hamiltonian,
                               const Operator& coupling_operator, std::vector<BathMode> modes,
                               bool plant_is_oscillator = false) {
    require_square(plant_hamiltonian, "make_sse_model");
    if (coupling_operator.rows() != plant_hamiltonian.rows() || coupling_operator.cols() != plant_hamiltonian.cols())
        throw InvalidDimension("make_sse_model: L and H_p dimensions differ");
    if (modes.empty()) throw InvalidParameter("make_sse_model: at least one bath mode is required");

    std::vector<int> dims{static_cast<int>(plant_hamiltonian.rows())};
    for (const BathMode& m : modes) {
        if (m.levels < 2) throw InvalidDimension("make_sse_model: bath mode needs >= 2 levels");
        if (m.rate < 0.0) throw InvalidParameter("make_sse_model: probe rate must be >= 0");
        dims.push_back(m.levels);
    }

    SseModel model;
    model.name = std::move(name);
    model.dims = HilbertDims(dims);
    model.plant_hamiltonian = plant_hamiltonian;
    model.coupling_operator = coupling_operator;
    model.modes = std::move(modes);
    model.plant_is_oscillator = plant_is_oscillator;

    const int n = model.dims.total();
    const Operator L = embed(coupling_operator, model.dims, 0);
    model.hamiltonian = embed(plant_hamiltonian, model.dims, 0);
    model.collective = Operator::Zero(n, n);
    for (std::size_t k = 0; k < model.modes.size(); ++k) {
        const BathMode& m = model.modes[k];
        Operator a = embed(annihilation(m.levels), model.dims, k + 1);
        model.hamiltonian += m.detuning * (a.adjoint() * a);
        model.hamiltonian += m.coupling * (L * a.adjoint() + L.adjoint() * a);
        model.collective += std::sqrt(m.rate) * a;
        model.annihilators.push_back(std::move(a));
    }
    model.collective_hop = model.collective.adjoint() * model.collective;
    model.propagator = UnitaryPropagator(model.hamiltonian);
    return model;
}

/// Two-level atom in a cavity, rotating frame: H_p = (ω_q/2)σ_z, L = σ₋.
inline SseModel build_atom_cavity(double omega_q, double detuning, double g, double gamma, int n_cavity) {
    if (n_cavity < 2) throw InvalidDimension("build_atom_cavity: n_cavity must be >= 2");
    return make_sse_model("atom_cavity", 0.5 * omega_q * sigma_z(), sigma_minus(),
                          {BathMode{detuning, g, gamma, n_cavity}});
}

/// Linearized optomechanics: H_p = p²/2m + mω_m²x²/2, coupling g' x (a + a^†).
inline SseModel build_linear_optomech(double omega_m, double detuning, double g_prime, double gamma,
                                      double mass, int n_mech, int n_cavity) {
    if (n_mech < 2 || n_cavity < 2) throw InvalidDimension("build_linear_optomech: dimensions must be >= 2");
    if (!(mass > 0.0) || !(omega_m > 0.0)) throw InvalidParameter("build_linear_optomech: mass and omega_m must be > 0");
    const Quadratures q = quadratures(n_mech, mass, omega_m);
    const Operator hp = q.p * q.p / (2.0 * mass) + 0.5 * mass * omega_m * omega_m * (q.x * q.x);
    return make_sse_model("linear_optomech", hp, q.x, {BathMode{detuning, g_prime, gamma, n_cavity}}, true);
}

/// Quadratic (phonon-counting) optomechanics: H_p = ω_m(N + 1/2), L = X̂².
inline SseModel build_quadratic_optomech(double omega_m, double detuning, double g, double gamma, int n_mech,
                                         int n_cavity) {
    if (n_mech < 2 || n_cavity < 2) throw InvalidDimension("build_quadratic_optomech: dimensions must be >= 2");
    const Quadratures q = quadratures(n_mech, 1.0, 1.0);
    const Operator hp = omega_m * (q.N + 0.5 * identity(n_mech));
    return make_sse_model("quadratic_optomech", hp, q.X * q.X, {BathMode{detuning, g, gamma, n_cavity}}, true);
}

/// Plant state ⊗ vacuum on every bath mode.
inline JointState product_with_vacuum(const SseModel& model, const StateVector& plant_state) {
    if (plant_state.size() != model.plant_dim())
        throw InvalidDimension("product_with_vacuum: plant state dimension mismatch");
    StateVector psi = plant_state / plant_state.norm();
    for (const BathMode& m : model.modes) psi = kron(psi, basis_state(m.levels, 0));
    return JointState(model.dims, std::move(psi));
}

struct SseStepResult {
    JointState state;
    double y = 0.0;               ///< record value for this step (y·dt = mean·dt + dW/√2)
    double norm_deviation = 0.0;  ///< | ‖ψ + dψ‖ − 1 | before renormalization
};

/// One step of the nonlinear SSE. With C = Σ_k √γ_k a_k and s = ⟨C − C^†⟩ the
/// double sums collapse to
///   dψ = −iHψ dt − [C^†C + s C − s²/4] ψ dt − i(√2 C − s/√2) ψ dW,
///   y dt = −i s dt + dW/√2.
/// The measurement terms take an Euler–Maruyama step from ψ, the result is
/// propagated exactly under H and renormalized.
inline SseStepResult sse_step(const SseModel& model, const JointState& psi, double dW, double dt, double t = 0.0) {
    if (!std::isfinite(dW)) throw NumericalFailure("sse_step: non-finite dW", t);
    const StateVector& v = psi.amplitudes;
    const StateVector cv = model.collective * v;
    const Complex s = v.dot(cv) - std::conj(v.dot(cv));  // ⟨C⟩ − ⟨C^†⟩, purely imaginary
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

    StateVector dpsi = -dt * (model.collective_hop * v + s * cv - (0.25 * s * s) * v);
    dpsi -= (kI * dW) * (std::sqrt(2.0) * cv - (s * inv_sqrt2) * v);

    StateVector next = v + dpsi;
    if (!next.allFinite()) throw NumericalFailure("sse_step: non-finite amplitudes", t);
    const double norm = next.norm();
    if (norm < 0.5 || norm > 1.5) throw StepSizeFailure("sse_step: norm left [0.5, 1.5]; reduce dt", t);
    next = model.propagator.apply(next / norm, dt);

    SseStepResult out;
    out.state = JointState(psi.dims, std::move(next));
    out.y = (-kI * s).real() + dW * inv_sqrt2 / dt;
    out.norm_deviation = std::abs(norm - 1.0);
    return out;
}

/// Named observable on the joint space.
struct Observable {
    std::string name;
    Operator op;
};

/// Sampled conditional means plus the full-resolution record.
struct Trajectory {
    std::vector<double> times;
    std::vector<std::string> names;
    std::vector<std::vector<Complex>> series;  ///< series[i][sample]
    MeasurementRecord record;                  ///< one entry per step
    std::vector<double> norm_drift;            ///< max pre-normalization deviation since last sample
    std::vector<double> leakage;               ///< max top-Fock-level population over truncated subsystems
    JointState final_state;

    std::size_t samples() const noexcept { return times.size(); }
};

/// Largest top-level population over every truncated bosonic subsystem.
inline double model_leakage(const SseModel& model, const JointState& psi) {
    double leak = 0.0;
    const std::size_t first = model.plant_is_oscillator ? 0 : 1;
    for (std::size_t k = first; k < model.dims.size(); ++k) leak = std::max(leak, truncation_leakage(psi, k));
    return leak;
}

inline Trajectory run_sse(const SseModel& model, const JointState& psi0, const WienerPath& path,
                          const std::vector<Observable>& observables, std::size_t sample_stride = 1) {
    if (sample_stride < 1) throw InvalidParameter("run_sse: sample_stride must be >= 1");
    if (std::abs(psi0.norm() - 1.0) > tol::kAlgebraic) throw InvalidParameter("run_sse: initial state not normalized");
    for (const Observable& o : observables)
        if (o.op.rows() != model.dims.total()) throw InvalidDimension("run_sse: observable '" + o.name + "' is not a joint-space operator");

    Trajectory traj;
    for (const Observable& o : observables) traj.names.push_back(o.name);
    traj.series.resize(observables.size());

    auto sample = [&](double t, const JointState& psi, double drift) {
        traj.times.push_back(t);
        for (std::size_t i = 0; i < observables.size(); ++i)
            traj.series[i].push_back(expectation(observables[i].op, psi));
        traj.norm_drift.push_back(drift);
        traj.leakage.push_back(model_leakage(model, psi));
    };

    JointState psi = psi0;
    sample(0.0, psi, 0.0);
    traj.record.times.reserve(path.size());
    traj.record.y.reserve(path.size());
    double drift = 0.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double t = static_cast<double>(k) * path.dt;
        SseStepResult r = sse_step(model, psi, path.increments[k], path.dt, t);
        psi = std::move(r.state);
        drift = std::max(drift, r.norm_deviation);
        const double t_next = static_cast<double>(k + 1) * path.dt;
        traj.record.times.push_back(t_next);
        traj.record.y.push_back(r.y);
        if ((k + 1) % sample_stride == 0) {
            sample(t_next, psi, drift);
            drift = 0.0;
        }
    }
    traj.final_state = std::move(psi);
    return traj;
}

}  // namespace nmsim
