#pragma once

/// Non-Markovian stochastic master equations for the plant density matrix.
///
/// General form, for bath modes k with coupling g_k, readout rate γ_k and memory
/// operator varrho_k:
///   dρ = −i[H_p, ρ]dt − Σ_k g_k([L^†, ϱ_k] − [L, ϱ_k^†])dt
///        + Σ_k √(2γ_k)(ϱ_k + ϱ_k^† − Tr{ϱ_k + ϱ_k^†}ρ)dW
///   y dt = Σ_k √γ_k Tr{ϱ_k + ϱ_k^†}dt + dW/√2
///
/// The SME monitors the opposite probe quadrature to the joint SSE. One noise
/// realization therefore enters here as −dW (see sme_increment()) and the two
/// records differ by an overall sign.
///
/// Steps are Lie split: an Euler–Maruyama increment of the memory and
/// measurement terms from the pre-step state, then the exact plant rotation
/// e^{−iH_p dt}, matching sse_step.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "nmsim/error.hpp"
#include "nmsim/jointsse.hpp"
#include "nmsim/parallel.hpp"
#include "nmsim/qspace.hpp"
#include "nmsim/riccati.hpp"
#include "nmsim/stochproc.hpp"

namespace nmsim {

/// Wiener increment of the SME for the realization that drives the SSE with `sse_dw`.
constexpr double sme_increment(double sse_dw) noexcept { return -sse_dw; }

inline WienerPath as_sme_path(const WienerPath& sse_path) {
    WienerPath out = sse_path;
    for (double& dw : out.increments) dw = sme_increment(dw);
    return out;
}

// ---------------------------------------------------------------------------
// Memory operators

/// One contribution weight · pre · ρ · post to a memory operator.
struct VarrhoTerm {
    Operator pre;
    Operator post;
    Complex weight{1.0, 0.0};
};

using Varrho = std::vector<VarrhoTerm>;

inline Operator evaluate_varrho(const Varrho& terms, const Operator& rho) {
    Operator out = Operator::Zero(rho.rows(), rho.cols());
    for (const VarrhoTerm& t : terms) {
        if (t.pre.rows() != rho.rows() || t.post.rows() != rho.rows())
            throw InvalidDimension("evaluate_varrho: term dimension does not match rho");
        out += t.weight * (t.pre * rho * t.post);
    }
    return out;
}

/// A bath mode as seen by the SME: couplings plus its memory operator.
struct SmeMode {
    double coupling = 0.0;
    double rate = 0.0;
    Varrho varrho;
};

/// Same as SmeMode with ϱ_k already evaluated at the current ρ.
struct EvaluatedMode {
    double coupling = 0.0;
    double rate = 0.0;
    Operator varrho;
};

// ---------------------------------------------------------------------------
// Stepping

struct StepDiagnostics {
    double trace_increment = 0.0;     ///< |Tr dρ| before renormalization
    double hermiticity_defect = 0.0;  ///< max |(ρ+dρ) − (ρ+dρ)^†| before re-Hermitization
};

struct SmeStepResult {
    Operator rho;
    double y = 0.0;
    StepDiagnostics diag;
};

inline constexpr double kTraceStepFailure = 1e-3;

namespace detail {
struct NoRotation {
    Operator operator()(const Operator& rho) const { return rho; }
};

/// ρ + dρ → diagnostics, failure checks, plant rotation, re-Hermitization and
/// trace renormalization.
template <class Rotate = NoRotation>
SmeStepResult finish_step(const Operator& rho, const Operator& drho, double y, double t, const Rotate& rotate = {}) {
    SmeStepResult out;
    out.rho = rho + drho;
    if (!out.rho.allFinite()) throw NumericalFailure("sme step: non-finite density matrix", t);
    const Complex tr = out.rho.trace();
    out.diag.trace_increment = std::abs(drho.trace());
    out.diag.hermiticity_defect = hermitian_defect(out.rho);
    if (std::abs(tr - Complex(1.0)) > kTraceStepFailure)
        throw StepSizeFailure("sme step: trace drifted by more than 1e-3; reduce dt", t);
    out.rho = hermitize(rotate(out.rho));
    out.rho /= out.rho.trace().real();
    out.y = y;
    return out;
}

/// e^{−iω_q σ_z dt/2} ρ e^{iω_q σ_z dt/2} for a qubit in the (g, e) basis.
inline Operator rotate_qubit(const Operator& rho, double omega_q, double dt) {
    Operator out = rho;
    const Complex ph = std::exp(kI * (omega_q * dt));
    out(0, 1) *= ph;
    out(1, 0) *= std::conj(ph);
    return out;
}
}  // namespace detail

/// General SME step with the memory operators already evaluated.
inline SmeStepResult general_sme_step(const Operator& rho, std::span<const EvaluatedMode> modes, const Operator& L,
                                      const UnitaryPropagator& U_p, double dW, double dt, double t = 0.0) {
    if (rho.rows() != U_p.dim() || rho.rows() != L.rows())
        throw InvalidDimension("general_sme_step: rho, L and H_p dimensions differ");
    if (!std::isfinite(dW)) throw NumericalFailure("general_sme_step: non-finite dW", t);
    Operator drho = Operator::Zero(rho.rows(), rho.cols());
    const Operator Ld = L.adjoint();
    double mean = 0.0;
    for (const EvaluatedMode& m : modes) {
        if (m.varrho.rows() != rho.rows()) throw InvalidDimension("general_sme_step: varrho dimension mismatch");
        const Operator vd = m.varrho.adjoint();
        if (m.coupling != 0.0) drho -= (m.coupling * dt) * (commutator(Ld, m.varrho) - commutator(L, vd));
        if (m.rate > 0.0) {
            const Operator herm = m.varrho + vd;
            const double tr = herm.trace().real();
            drho += (std::sqrt(2.0 * m.rate) * dW) * (herm - tr * rho);
            mean += std::sqrt(m.rate) * tr;
        }
    }
    return detail::finish_step(rho, drho, mean + dW / (std::sqrt(2.0) * dt), t,
                               [&](const Operator& r) { return U_p.conjugate(r, dt); });
}

inline SmeStepResult general_sme_step(const Operator& rho, std::span<const EvaluatedMode> modes, const Operator& L,
                                      const Operator& H_p, double dW, double dt, double t = 0.0) {
    require_square(H_p, "general_sme_step");
    return general_sme_step(rho, modes, L, UnitaryPropagator(H_p), dW, dt, t);
}

/// General SME step from super-operator memory terms.
inline SmeStepResult general_sme_step(const Operator& rho, const std::vector<SmeMode>& modes, const Operator& L,
                                      const Operator& H_p, double dW, double dt, double t = 0.0) {
    std::vector<EvaluatedMode> ev;
    ev.reserve(modes.size());
    for (const SmeMode& m : modes) ev.push_back({m.coupling, m.rate, evaluate_varrho(m.varrho, rho)});
    return general_sme_step(rho, std::span<const EvaluatedMode>(ev), L, H_p, dW, dt, t);
}

// ---------------------------------------------------------------------------
// States

using AuxState = std::variant<std::monostate, AtomRiccatiState, OptomechRiccatiState>;

struct SmeState {
    Operator rho;
    AuxState aux;
    double t = 0.0;
};

struct SmeStateStep {
    SmeState state;
    double y = 0.0;
    StepDiagnostics diag;
};

// ---------------------------------------------------------------------------
// Atom-cavity

/// Atom SME: ϱ = fσ₋ρ, then f advances by one RK4 step.
inline SmeStateStep atom_sme_step(const SmeState& state, const AtomRiccatiParams& p, double dW, double dt) {
    const auto* aux = std::get_if<AtomRiccatiState>(&state.aux);
    if (aux == nullptr) throw InvalidParameter("atom_sme_step: state carries no atom Riccati function");
    if (state.rho.rows() != 2 || state.rho.cols() != 2) throw InvalidDimension("atom_sme_step: rho must be 2x2");
    if (!std::isfinite(dW)) throw NumericalFailure("atom_sme_step: non-finite dW", state.t);
    const Complex f = aux->f;

    const Eigen::Matrix2cd rho = state.rho;
    Eigen::Matrix2cd sm = Eigen::Matrix2cd::Zero();
    sm(0, 1) = 1.0;
    const Eigen::Matrix2cd sp = sm.adjoint();
    const Eigen::Matrix2cd pe = sp * sm;  // |e><e|
    Eigen::Matrix2cd sz = Eigen::Matrix2cd::Zero();
    sz(0, 0) = -1.0;
    sz(1, 1) = 1.0;

    const Eigen::Matrix2cd H = p.g * f.imag() * pe;
    Eigen::Matrix2cd drho = (-kI * dt) * (H * rho - rho * H);
    drho -= (p.g * f.real() * dt) * (pe * rho + rho * pe - 2.0 * sm * rho * sp);
    const Eigen::Matrix2cd v = f * sm * rho;
    const Eigen::Matrix2cd herm = v + v.adjoint();
    const double tr = herm.trace().real();
    drho += (std::sqrt(2.0 * p.gamma) * dW) * (herm - tr * rho);
    const double y = std::sqrt(p.gamma) * tr + dW / (std::sqrt(2.0) * dt);

    SmeStepResult r = detail::finish_step(state.rho, Operator(drho), y, state.t, [&](const Operator& m) {
        return detail::rotate_qubit(m, p.omega_q, dt);
    });
    SmeStateStep out;
    out.state.rho = std::move(r.rho);
    out.state.aux = AtomRiccatiState{atom_riccati_rk4(f, p, dt)};
    out.state.t = state.t + dt;
    out.y = r.y;
    out.diag = r.diag;
    return out;
}

/// atom_sme_step with dW = 0 at fixed f; this is the exact expectation of
/// atom_sme_step over dW.
inline Operator atom_master_step(const Operator& rho, Complex f, const AtomRiccatiParams& p, double dt) {
    if (rho.rows() != 2 || rho.cols() != 2) throw InvalidDimension("atom_master_step: rho must be 2x2");
    const Operator sm = sigma_minus();
    const Operator sp = sigma_plus();
    const Operator pe = sp * sm;
    const Operator H = p.g * f.imag() * pe;
    Operator drho = (-kI * dt) * commutator(H, rho);
    drho -= (p.g * f.real() * dt) * (pe * rho + rho * pe - 2.0 * sm * rho * sp);
    return detail::finish_step(rho, drho, 0.0, 0.0, [&](const Operator& m) {
        return detail::rotate_qubit(m, p.omega_q, dt);
    }).rho;
}

struct MasterSolution {
    std::vector<double> times;
    std::vector<Operator> rho;
    std::vector<Complex> f;
};

/// Master equation from t = 0; f follows the Riccati equation unless `fixed_f` is given.
inline MasterSolution atom_master_evolve(const Operator& rho0, const AtomRiccatiParams& p, double dt,
                                         std::size_t n_steps, std::size_t stride,
                                         std::optional<Complex> fixed_f = std::nullopt) {
    if (stride < 1) throw InvalidParameter("atom_master_evolve: stride must be >= 1");
    MasterSolution sol;
    Operator rho = rho0;
    Complex f = fixed_f.value_or(Complex(0.0));
    sol.times.push_back(0.0);
    sol.rho.push_back(rho);
    sol.f.push_back(f);
    for (std::size_t k = 0; k < n_steps; ++k) {
        rho = atom_master_step(rho, f, p, dt);
        if (!fixed_f) f = atom_riccati_rk4(f, p, dt);
        if ((k + 1) % stride == 0) {
            sol.times.push_back(static_cast<double>(k + 1) * dt);
            sol.rho.push_back(rho);
            sol.f.push_back(f);
        }
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Linear optomechanics

struct OptomechPlant {
    OptomechParams params;
    Operator x;
    Operator p;
    Operator H;  ///< p²/2m + mω_m²x²/2 on the truncated space
    UnitaryPropagator propagator;
};

inline OptomechPlant make_optomech_plant(const OptomechParams& params, int n_mech) {
    const Quadratures q = quadratures(n_mech, params.mass, params.omega_m);
    OptomechPlant plant;
    plant.params = params;
    plant.x = q.x;
    plant.p = q.p;
    plant.H = q.p * q.p / (2.0 * params.mass) + 0.5 * params.mass * params.omega_m * params.omega_m * (q.x * q.x);
    plant.propagator = UnitaryPropagator(plant.H);
    return plant;
}

/// ϱ = (Âρ + f1 ρ Â^†)/(1 − |f1|²).
inline Operator optomech_varrho(const Operator& rho, const OptomechRiccatiState& s, const OptomechPlant& plant) {
    check_f1_singularity(s);
    const Operator A = optomech_a_operator(s, plant.x, plant.p);
    return (A * rho + s.f1 * (rho * A.adjoint())) / (1.0 - std::norm(s.f1));
}

inline SmeStateStep optomech_sme_step(const SmeState& state, const OptomechPlant& plant, double dW, double dt) {
    const auto* aux = std::get_if<OptomechRiccatiState>(&state.aux);
    if (aux == nullptr) throw InvalidParameter("optomech_sme_step: state carries no optomech Riccati functions");
    const Operator varrho = optomech_varrho(state.rho, *aux, plant);
    const double trace_term = (varrho.trace() + std::conj(varrho.trace())).real();
    const EvaluatedMode mode{plant.params.g, plant.params.gamma, varrho};
    SmeStepResult r =
        general_sme_step(state.rho, std::span<const EvaluatedMode>(&mode, 1), plant.x, plant.propagator, dW, dt, state.t);
    SmeStateStep out;
    out.state.rho = std::move(r.rho);
    out.state.aux = optomech_riccati_step(*aux, plant.params, trace_term, dW, dt);
    out.state.t = state.t + dt;
    out.y = r.y;
    out.diag = r.diag;
    return out;
}

// ---------------------------------------------------------------------------
// Weak coupling

/// First-order memory kernels K_k with ϱ_k = K_k ρ.
struct WeakCouplingKernel {
    std::vector<Operator> kernels;
    double error_estimate = 0.0;  ///< Richardson estimate of the Simpson error (max abs entry)
    std::size_t panels = 0;

    std::vector<Varrho> varrho() const {
        std::vector<Varrho> out;
        for (const Operator& k : kernels)
            out.push_back({VarrhoTerm{k, identity(static_cast<int>(k.rows())), Complex(1.0)}});
        return out;
    }
};

/// K_k = Σ_k' ∫₀ᵗ dτ [e^{−iMτ}]_{kk'} g_k' L(−τ), L(−τ) = e^{−iH_pτ} L e^{iH_pτ},
/// M_{kk'} = Δ_k δ_{kk'} − i√(γ_k γ_k'), by composite Simpson with panel doubling
/// until the Richardson estimate drops below `tolerance`.
inline WeakCouplingKernel weak_coupling_varrho(const Operator& L, const Operator& H_p, const std::vector<BathMode>& modes,
                                               double t, std::size_t quadrature_steps = 64,
                                               double tolerance = 1e-10, std::size_t max_panels = std::size_t{1} << 22) {
    require_square(L, "weak_coupling_varrho");
    if (H_p.rows() != L.rows()) throw InvalidDimension("weak_coupling_varrho: L and H_p dimensions differ");
    if (quadrature_steps < 16) throw InvalidParameter("weak_coupling_varrho: quadrature_steps must be >= 16");
    if (t < 0.0) throw InvalidParameter("weak_coupling_varrho: t must be >= 0");
    if (modes.empty()) throw InvalidParameter("weak_coupling_varrho: no bath modes");

    const auto nk = static_cast<Eigen::Index>(modes.size());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(nk, nk);
    Eigen::VectorXcd gvec(nk);
    for (Eigen::Index k = 0; k < nk; ++k) {
        gvec(k) = modes[k].coupling;
        for (Eigen::Index j = 0; j < nk; ++j)
            M(k, j) = (k == j ? modes[k].detuning : 0.0) - kI * std::sqrt(modes[k].rate * modes[j].rate);
    }

    Eigen::SelfAdjointEigenSolver<Operator> es(hermitize(H_p));
    const Eigen::VectorXd E = es.eigenvalues();
    const Operator V = es.eigenvectors();
    const Operator Lt = V.adjoint() * L * V;
    const Eigen::Index n = L.rows();

    // integrand in the H_p eigenbasis: w_k(τ) · L̃_ij e^{−i(E_i − E_j)τ}
    auto weights = [&](double tau) -> Eigen::VectorXcd {
        if (nk == 1) return std::exp(-kI * M(0, 0) * tau) * gvec;
        const Eigen::MatrixXcd U = (-kI * tau * M).exp();
        return U * gvec;
    };
    auto simpson = [&](std::size_t panels) {
        std::vector<Operator> acc(static_cast<std::size_t>(nk), Operator::Zero(n, n));
        const double h = t / static_cast<double>(panels);
        for (std::size_t i = 0; i <= panels; ++i) {
            const double tau = h * static_cast<double>(i);
            const double c = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            const Eigen::VectorXcd w = weights(tau);
            Operator phase(n, n);
            for (Eigen::Index a = 0; a < n; ++a)
                for (Eigen::Index b = 0; b < n; ++b) phase(a, b) = std::exp(-kI * (E(a) - E(b)) * tau);
            for (Eigen::Index k = 0; k < nk; ++k) acc[k] += (c * w(k)) * phase;
        }
        for (Operator& a : acc) a = (h / 3.0) * a.cwiseProduct(Lt);
        return acc;
    };

    WeakCouplingKernel out;
    std::size_t panels = quadrature_steps + quadrature_steps % 2;
    std::vector<Operator> coarse = simpson(panels);
    while (true) {
        const std::size_t fine_panels = 2 * panels;
        std::vector<Operator> fine = simpson(fine_panels);
        double err = 0.0;
        for (Eigen::Index k = 0; k < nk; ++k) err = std::max(err, (fine[k] - coarse[k]).cwiseAbs().maxCoeff() / 15.0);
        if (err <= tolerance || t == 0.0) {
            for (Operator& k : fine) out.kernels.push_back(V * k * V.adjoint());
            out.error_estimate = err;
            out.panels = fine_panels;
            return out;
        }
        if (fine_panels >= max_panels)
            throw NumericalFailure("weak_coupling_varrho: quadrature did not converge", t);
        coarse = std::move(fine);
        panels = fine_panels;
    }
}

// ---------------------------------------------------------------------------
// Phonon counting (quadratic optomechanics, weak coupling, ϱ ≈ (g/γ) N ρ)

struct PhononPlant {
    double omega_m = 1.0;
    Operator N;
    Operator X2;

    /// e^{−iω_m N dt} ρ e^{iω_m N dt}
    Operator rotate(const Operator& rho, double dt) const {
        Operator out = rho;
        for (Eigen::Index m = 0; m < rho.rows(); ++m)
            for (Eigen::Index n = 0; n < rho.cols(); ++n)
                out(m, n) *= std::exp(-kI * (omega_m * dt * static_cast<double>(m - n)));
        return out;
    }
};

inline PhononPlant make_phonon_plant(double omega_m, int n_mech) {
    const Quadratures q = quadratures(n_mech, 1.0, 1.0);
    return PhononPlant{omega_m, q.N, q.X * q.X};
}

///   dρ = −i[ω_m N, ρ]dt − g_eff[X², [N, ρ]]dt + √(2 g_eff)({N, ρ} − 2⟨N⟩ρ)dW
///   y dt = 2√g_eff ⟨N⟩ dt + dW/√2
inline SmeStepResult phonon_sme_step(const Operator& rho, const PhononPlant& plant, double g_eff, double dW, double dt,
                                     double t = 0.0) {
    if (g_eff < 0.0) throw InvalidParameter("phonon_sme_step: g_eff must be >= 0");
    if (rho.rows() != plant.N.rows()) throw InvalidDimension("phonon_sme_step: rho dimension mismatch");
    const Operator nc = commutator(plant.N, rho);
    Operator drho = (-g_eff * dt) * commutator(plant.X2, nc);
    const double mean_n = expectation(plant.N, rho).real();
    drho += (std::sqrt(2.0 * g_eff) * dW) * (anticommutator(plant.N, rho) - (2.0 * mean_n) * rho);
    const double y = 2.0 * std::sqrt(g_eff) * mean_n + dW / (std::sqrt(2.0) * dt);
    return detail::finish_step(rho, drho, y, t, [&](const Operator& r) { return plant.rotate(r, dt); });
}

inline SmeStepResult phonon_sme_step(const Operator& rho, double omega_m, double g_eff, double dW, double dt,
                                     int n_mech) {
    return phonon_sme_step(rho, make_phonon_plant(omega_m, n_mech), g_eff, dW, dt);
}

// ---------------------------------------------------------------------------
// Trajectories

struct SmeTrajectory {
    std::vector<double> times;
    std::vector<Operator> rho;
    std::vector<AuxState> aux;
    MeasurementRecord record;
    double max_trace_increment = 0.0;
    double max_hermiticity_defect = 0.0;
    double min_eigenvalue = 1.0;
};

/// Samples whose smallest eigenvalue is below −positivity_factor·dt fail the run.
inline constexpr double kPositivityFactor = 10.0;

/// Drives `step(state, dW, dt) -> SmeStateStep` over a path.
template <class Stepper>
SmeTrajectory run_sme(SmeState state, const WienerPath& path, std::size_t sample_stride, Stepper&& step,
                      bool check_positivity = true) {
    if (sample_stride < 1) throw InvalidParameter("run_sme: sample_stride must be >= 1");
    SmeTrajectory traj;
    auto sample = [&](const SmeState& s) {
        traj.times.push_back(s.t);
        traj.rho.push_back(s.rho);
        traj.aux.push_back(s.aux);
        const double lo = min_eigenvalue(s.rho);
        traj.min_eigenvalue = std::min(traj.min_eigenvalue, lo);
        if (check_positivity && lo < -kPositivityFactor * path.dt)
            throw NumericalFailure("run_sme: density matrix lost positivity beyond -10 dt", s.t);
    };
    sample(state);
    traj.record.times.reserve(path.size());
    traj.record.y.reserve(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
        state.t = static_cast<double>(k) * path.dt;
        SmeStateStep r = step(state, path.increments[k], path.dt);
        state = std::move(r.state);
        state.t = static_cast<double>(k + 1) * path.dt;
        traj.record.times.push_back(state.t);
        traj.record.y.push_back(r.y);
        traj.max_trace_increment = std::max(traj.max_trace_increment, r.diag.trace_increment);
        traj.max_hermiticity_defect = std::max(traj.max_hermiticity_defect, r.diag.hermiticity_defect);
        if ((k + 1) % sample_stride == 0) sample(state);
    }
    return traj;
}

inline SmeTrajectory run_atom_sme(const Operator& rho0, const AtomRiccatiParams& p, const WienerPath& path,
                                  std::size_t sample_stride, bool check_positivity = true) {
    SmeState s{rho0, AtomRiccatiState{}, 0.0};
    return run_sme(std::move(s), path, sample_stride,
                   [&](const SmeState& st, double dW, double dt) { return atom_sme_step(st, p, dW, dt); },
                   check_positivity);
}

inline SmeTrajectory run_optomech_sme(const Operator& rho0, const OptomechPlant& plant, const WienerPath& path,
                                      std::size_t sample_stride, bool check_positivity = true) {
    SmeState s{rho0, OptomechRiccatiState{}, 0.0};
    return run_sme(std::move(s), path, sample_stride,
                   [&](const SmeState& st, double dW, double dt) { return optomech_sme_step(st, plant, dW, dt); },
                   check_positivity);
}

inline SmeTrajectory run_phonon_sme(const Operator& rho0, const PhononPlant& plant, double g_eff,
                                    const WienerPath& path, std::size_t sample_stride, bool check_positivity = true) {
    SmeState s{rho0, std::monostate{}, 0.0};
    return run_sme(std::move(s), path, sample_stride,
                   [&](const SmeState& st, double dW, double dt) {
                       SmeStepResult r = phonon_sme_step(st.rho, plant, g_eff, dW, dt, st.t);
                       return SmeStateStep{SmeState{std::move(r.rho), std::monostate{}, st.t + dt}, r.y, r.diag};
                   },
                   check_positivity);
}

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleResult {
    std::size_t n_traj = 0;
    std::vector<Operator> mean;
    /// Standard error of the mean, real and imaginary parts estimated separately
    /// and stored as the real/imag components.
    std::vector<Operator> stderr_;
};

namespace detail {
/// Pairwise (cascade) sum of slots[lo, hi) for a fixed summation tree.
template <class T, class Get>
T pairwise_sum(std::size_t lo, std::size_t hi, const Get& get) {
    if (hi - lo == 1) return get(lo);
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum<T>(lo, mid, get) + pairwise_sum<T>(mid, hi, get);
}
}  // namespace detail

/// Mean of per-trajectory sample series. `trajectory(seed)` returns the sampled
/// density matrices of one trajectory; trajectory i uses
/// derive_trajectory_seed(base_seed, i). Results do not depend on `threads`.
template <class TrajectoryFn>
EnsembleResult ensemble_average(TrajectoryFn&& trajectory, std::size_t n_traj, std::uint64_t base_seed,
                                unsigned threads = 1) {
    if (n_traj < 1) throw InvalidParameter("ensemble_average: n_traj must be >= 1");
    std::vector<std::vector<Operator>> slots(n_traj);
    parallel_for(n_traj, threads,
                 [&](std::size_t i) { slots[i] = trajectory(derive_trajectory_seed(base_seed, i)); });
    const std::size_t n_samples = slots.front().size();
    for (const auto& s : slots)
        if (s.size() != n_samples) throw InvalidDimension("ensemble_average: trajectories have different lengths");

    EnsembleResult out;
    out.n_traj = n_traj;
    const double inv_m = 1.0 / static_cast<double>(n_traj);
    for (std::size_t j = 0; j < n_samples; ++j) {
        const Operator mean =
            inv_m * detail::pairwise_sum<Operator>(0, n_traj, [&](std::size_t i) -> Operator { return slots[i][j]; });
        out.mean.push_back(mean);
        Operator se = Operator::Zero(mean.rows(), mean.cols());
        if (n_traj > 1) {
            auto sq = [&](std::size_t i) -> Operator {
                const Operator d = slots[i][j] - mean;
                Operator s(d.rows(), d.cols());
                for (Eigen::Index a = 0; a < d.size(); ++a)
                    s(a) = Complex(d(a).real() * d(a).real(), d(a).imag() * d(a).imag());
                return s;
            };
            const Operator var = detail::pairwise_sum<Operator>(0, n_traj, sq) / static_cast<double>(n_traj - 1);
            for (Eigen::Index a = 0; a < var.size(); ++a)
                se(a) = Complex(std::sqrt(var(a).real() * inv_m), std::sqrt(var(a).imag() * inv_m));
        }
        out.stderr_.push_back(se);
    }
    return out;
}

}  // namespace nmsim
