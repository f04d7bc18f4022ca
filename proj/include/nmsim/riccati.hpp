#pragma once

/// Memory functions that close the reduced plant equation.
///
/// Atom-cavity: varrho = f(t) σ₋ ρ with the noise-free Riccati equation
///     df/dt = g + i(ω_q − Δ + iγ) f + g f²,   f(0) = 0.
///
/// Linear optomechanics: varrho = (Â ρ + f1 ρ Â^†) / (1 − |f1|²) with
/// Â = f0 + fx x̂ + fp p̂. With λ = Δ − iγ, T = Tr{varrho + varrho^†} and the
/// SME-orientation Wiener increment dW, the coefficients obey (Itô)
///     df0 = [(−iλ − i g' fp − 2γ f1) f0 + 2γ T f1] dt + √(2γ) f1 dW
///     dfx = [−iλ fx + g'(1 − f1) + m ω_m² fp − i g' fp fx − 2γ f1 fx] dt
///     dfp = [−iλ fp − fx/m − i g' fp² − 2γ f1 fp] dt
///     df1 = [−2iλ f1 + i g' fp (1 − f1) − 2γ f1²] dt
/// all starting from zero (cavity in vacuum). The coefficients are expressed in
/// the frame where they stay bounded, so no e^{+γt} factor is ever formed.

#include <array>
#include <cmath>
#include <complex>
#include <ostream>
#include <vector>

#include "nmsim/error.hpp"
#include "nmsim/qspace.hpp"

namespace nmsim {

// ---------------------------------------------------------------------------
// Atom-cavity

struct AtomRiccatiParams {
    double omega_q = 1.0;
    double detuning = 1.0;
    double gamma = 2.0;
    double g = 1.0;
};

struct AtomRiccatiState {
    Complex f{0.0, 0.0};
};

inline Complex atom_riccati_rhs(Complex f, const AtomRiccatiParams& p) {
    const Complex b = kI * Complex(p.omega_q - p.detuning, p.gamma);  // i(ω_q − Δ + iγ)
    return p.g + b * f + p.g * f * f;
}

inline Complex atom_riccati_rk4(Complex f, const AtomRiccatiParams& p, double dt) {
    const Complex k1 = atom_riccati_rhs(f, p);
    const Complex k2 = atom_riccati_rhs(f + 0.5 * dt * k1, p);
    const Complex k3 = atom_riccati_rhs(f + 0.5 * dt * k2, p);
    const Complex k4 = atom_riccati_rhs(f + dt * k3, p);
    return f + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline constexpr double kRiccatiBlowUp = 1e6;

/// f sampled at t = k·dt for k = 0..n_steps (n_steps + 1 values).
inline std::vector<Complex> atom_riccati_evolve(const AtomRiccatiParams& p, double dt, std::size_t n_steps) {
    if (!(dt > 0.0)) throw InvalidParameter("atom_riccati_evolve: dt must be > 0");
    std::vector<Complex> out;
    out.reserve(n_steps + 1);
    Complex f{0.0, 0.0};
    out.push_back(f);
    for (std::size_t k = 0; k < n_steps; ++k) {
        f = atom_riccati_rk4(f, p, dt);
        if (!std::isfinite(f.real()) || !std::isfinite(f.imag()) || std::abs(f) > kRiccatiBlowUp)
            throw NumericalFailure("atom_riccati_evolve: f diverged", static_cast<double>(k + 1) * dt);
        out.push_back(f);
    }
    return out;
}

inline Complex markovian_limit_f(const AtomRiccatiParams& p) {
    if (!(p.gamma > 0.0)) throw InvalidParameter("markovian_limit_f: gamma must be > 0");
    return Complex(p.g / p.gamma, 0.0);
}

/// Both roots of g f² + i(ω_q − Δ + iγ) f + g = 0 and the one reached from f(0) = 0.
struct SteadyState {
    std::array<Complex, 2> roots;
    Complex selected;
    Complex integrated;  ///< f at the end of the forward integration used for selection
};

inline SteadyState atom_riccati_steady_state(const AtomRiccatiParams& p, double t_max = 200.0, double dt = 1e-2) {
    SteadyState s;
    const Complex b = kI * Complex(p.omega_q - p.detuning, p.gamma);
    if (p.g == 0.0) {
        s.roots = {Complex(0.0), Complex(0.0)};
    } else {
        const Complex disc = std::sqrt(b * b - 4.0 * p.g * p.g);
        s.roots = {(-b + disc) / (2.0 * p.g), (-b - disc) / (2.0 * p.g)};
    }
    Complex f{0.0, 0.0};
    const auto n = static_cast<std::size_t>(std::ceil(t_max / dt));
    for (std::size_t k = 0; k < n; ++k) {
        f = atom_riccati_rk4(f, p, dt);
        if (!std::isfinite(f.real()) || std::abs(f) > kRiccatiBlowUp)
            throw NumericalFailure("atom_riccati_steady_state: f diverged", static_cast<double>(k + 1) * dt);
        if (std::abs(atom_riccati_rhs(f, p)) < 1e-14) break;
    }
    s.integrated = f;
    s.selected = std::abs(f - s.roots[0]) <= std::abs(f - s.roots[1]) ? s.roots[0] : s.roots[1];
    return s;
}

// ---------------------------------------------------------------------------
// Linear optomechanics

struct OptomechParams {
    double omega_m = 1.0;
    double detuning = 1.0;
    double gamma = 2.0;
    double g = 0.05;  ///< linearized coupling g'
    double mass = 1.0;
};

struct OptomechRiccatiState {
    Complex f0{0.0, 0.0};
    Complex fx{0.0, 0.0};
    Complex fp{0.0, 0.0};
    Complex f1{0.0, 0.0};
    double t = 0.0;
};

inline constexpr double kSingularityEpsilon = 1e-6;

/// Deterministic part of the coefficient equations; `trace_term` is held fixed.
inline OptomechRiccatiState optomech_riccati_drift(const OptomechRiccatiState& s, const OptomechParams& p,
                                                   double trace_term) {
    const Complex lam(p.detuning, -p.gamma);
    const double g = p.g;
    const double two_gamma = 2.0 * p.gamma;
    OptomechRiccatiState d;
    d.f0 = (-kI * lam - kI * g * s.fp - two_gamma * s.f1) * s.f0 + two_gamma * trace_term * s.f1;
    d.fx = -kI * lam * s.fx + g * (1.0 - s.f1) + p.mass * p.omega_m * p.omega_m * s.fp - kI * g * s.fp * s.fx -
           two_gamma * s.f1 * s.fx;
    d.fp = -kI * lam * s.fp - s.fx / p.mass - kI * g * s.fp * s.fp - two_gamma * s.f1 * s.fp;
    d.f1 = -2.0 * kI * lam * s.f1 + kI * g * s.fp * (1.0 - s.f1) - two_gamma * s.f1 * s.f1;
    return d;
}

namespace detail {
inline OptomechRiccatiState axpy(const OptomechRiccatiState& s, double h, const OptomechRiccatiState& d) {
    OptomechRiccatiState r = s;
    r.f0 += h * d.f0;
    r.fx += h * d.fx;
    r.fp += h * d.fp;
    r.f1 += h * d.f1;
    return r;
}

inline bool finite(const OptomechRiccatiState& s) {
    for (Complex c : {s.f0, s.fx, s.fp, s.f1})
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    return true;
}
}  // namespace detail

/// Throws NumericalFailure when 1 − |f1|² is too close to zero for varrho.
inline void check_f1_singularity(const OptomechRiccatiState& s, double eps = kSingularityEpsilon) {
    if (std::abs(1.0 - std::norm(s.f1)) <= eps)
        throw NumericalFailure("optomech riccati: |f1| reached 1 (singular varrho denominator)", s.t);
}

/// RK4 on the drift with `trace_term` frozen, then the Itô noise term of f0
/// from the pre-step f1.
inline OptomechRiccatiState optomech_riccati_step(const OptomechRiccatiState& s, const OptomechParams& p,
                                                  double trace_term, double dW, double dt,
                                                  double eps = kSingularityEpsilon) {
    check_f1_singularity(s, eps);
    using detail::axpy;
    const OptomechRiccatiState k1 = optomech_riccati_drift(s, p, trace_term);
    const OptomechRiccatiState k2 = optomech_riccati_drift(axpy(s, 0.5 * dt, k1), p, trace_term);
    const OptomechRiccatiState k3 = optomech_riccati_drift(axpy(s, 0.5 * dt, k2), p, trace_term);
    const OptomechRiccatiState k4 = optomech_riccati_drift(axpy(s, dt, k3), p, trace_term);
    OptomechRiccatiState next = s;
    next.f0 += (dt / 6.0) * (k1.f0 + 2.0 * k2.f0 + 2.0 * k3.f0 + k4.f0);
    next.fx += (dt / 6.0) * (k1.fx + 2.0 * k2.fx + 2.0 * k3.fx + k4.fx);
    next.fp += (dt / 6.0) * (k1.fp + 2.0 * k2.fp + 2.0 * k3.fp + k4.fp);
    next.f1 += (dt / 6.0) * (k1.f1 + 2.0 * k2.f1 + 2.0 * k3.f1 + k4.f1);
    next.f0 += std::sqrt(2.0 * p.gamma) * s.f1 * dW;
    next.t = s.t + dt;
    if (!detail::finite(next)) throw NumericalFailure("optomech riccati: non-finite coefficients", next.t);
    check_f1_singularity(next, eps);
    return next;
}

/// Â = f0 + fx x̂ + fp p̂.
inline Operator optomech_a_operator(const OptomechRiccatiState& s, const Operator& x, const Operator& p) {
    return s.f0 * identity(static_cast<int>(x.rows())) + s.fx * x + s.fp * p;
}

// ---------------------------------------------------------------------------
// CSV dumps

inline void write_atom_f_csv(std::ostream& os, const std::vector<Complex>& f, double dt) {
    os << "t,re_f,im_f\n";
    os.precision(17);
    for (std::size_t k = 0; k < f.size(); ++k)
        os << static_cast<double>(k) * dt << ',' << f[k].real() << ',' << f[k].imag() << '\n';
}

inline void write_optomech_csv_header(std::ostream& os) {
    os << "t,re_f0,im_f0,re_fx,im_fx,re_fp,im_fp,re_f1,im_f1\n";
}

inline void write_optomech_csv_row(std::ostream& os, const OptomechRiccatiState& s) {
    os.precision(17);
    os << s.t;
    for (Complex c : {s.f0, s.fx, s.fp, s.f1}) os << ',' << c.real() << ',' << c.imag();
    os << '\n';
}

}  // namespace nmsim
