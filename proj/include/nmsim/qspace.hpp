#pragma once

/// Dense finite-dimensional Hilbert-space algebra: operators on truncated
/// composite spaces, joint pure states, expectation values and partial traces.
///
/// Conventions used throughout the library:
///   - hbar = 1;
///   - composite spaces are ordered plant first, bath modes after, and kron(a, b)
///     puts `a` on the earlier (slower-varying) index;
///   - two-level systems use index 0 = |g> = |-z> and index 1 = |e> = |+z>, so
///     that sigma_minus() equals annihilation(2).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "nmsim/error.hpp"

namespace nmsim {

using Complex = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Default tolerances. Every check that uses one also accepts an override.
namespace tol {
/// Algebraic identities (commutators, Hermiticity of built operators, traces).
inline constexpr double kAlgebraic = 1e-9;
/// Per-step trace drift / Hermiticity bound for density matrices.
inline constexpr double kDensity = 1e-9;
}  // namespace tol

/// Ordered subsystem dimensions of a composite space (plant first).
class HilbertDims {
public:
    HilbertDims() = default;

    HilbertDims(std::initializer_list<int> dims) : HilbertDims(std::vector<int>(dims)) {}

    explicit HilbertDims(std::vector<int> dims) : dims_(std::move(dims)) {
        if (dims_.empty()) throw InvalidDimension("HilbertDims: no subsystems");
        for (int d : dims_) {
            if (d < 1) throw InvalidDimension("HilbertDims: subsystem dimension must be >= 1");
        }
    }

    std::size_t size() const noexcept { return dims_.size(); }
    int operator[](std::size_t i) const { return dims_.at(i); }
    const std::vector<int>& dims() const noexcept { return dims_; }

    int total() const noexcept {
        return std::accumulate(dims_.begin(), dims_.end(), 1, std::multiplies<>());
    }

    /// Product of the dimensions of subsystems strictly after `i`.
    int stride(std::size_t i) const {
        int s = 1;
        for (std::size_t k = i + 1; k < dims_.size(); ++k) s *= dims_[k];
        return s;
    }

    bool operator==(const HilbertDims&) const = default;

private:
    std::vector<int> dims_;
};

/// Normalized pure state on a composite space.
struct JointState {
    HilbertDims dims;
    StateVector amplitudes;

    JointState() = default;
    JointState(HilbertDims d, StateVector amps) : dims(std::move(d)), amplitudes(std::move(amps)) {
        if (amplitudes.size() != dims.total())
            throw InvalidDimension("JointState: amplitude length does not match dims");
    }

    double norm() const { return amplitudes.norm(); }
};

// ---------------------------------------------------------------------------
// Basic operators

inline Operator identity(int n) { return Operator::Identity(n, n); }

inline Operator dagger(const Operator& a) { return a.adjoint(); }

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

inline Operator anticommutator(const Operator& a, const Operator& b) { return a * b + b * a; }

inline Complex trace(const Operator& a) { return a.trace(); }

/// Largest entry of |A - A^dagger|.
inline double hermitian_defect(const Operator& a) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

inline Operator hermitize(const Operator& a) { return 0.5 * (a + a.adjoint()); }

inline bool all_finite(const Operator& a) { return a.allFinite(); }

inline void require_square(const Operator& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw InvalidDimension(std::string(who) + ": operator must be square and non-empty");
}

/// Kronecker product; `a` acts on the earlier subsystem.
inline Operator kron(const Operator& a, const Operator& b) {
    require_square(a, "kron");
    require_square(b, "kron");
    const Eigen::Index na = a.rows();
    const Eigen::Index nb = b.rows();
    Operator out(na * nb, na * nb);
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < na; ++j) out.block(i * nb, j * nb, nb, nb) = a(i, j) * b;
    return out;
}

inline StateVector kron(const StateVector& a, const StateVector& b) {
    StateVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

/// I ⊗ ... ⊗ op ⊗ ... ⊗ I with `op` in slot `index`.
inline Operator embed(const Operator& op, const HilbertDims& dims, std::size_t index) {
    if (index >= dims.size()) throw InvalidDimension("embed: subsystem index out of range");
    if (op.rows() != dims[index] || op.cols() != dims[index])
        throw InvalidDimension("embed: operator does not match subsystem dimension");
    Operator out = Operator::Identity(1, 1);
    for (std::size_t k = 0; k < dims.size(); ++k) out = kron(out, k == index ? op : identity(dims[k]));
    return out;
}

// ---------------------------------------------------------------------------
// Bosonic and two-level operators

/// Truncated ladder operator: entries (m, m+1) = sqrt(m+1).
inline Operator annihilation(int n) {
    if (n < 2) throw InvalidDimension("annihilation: dimension must be >= 2");
    Operator a = Operator::Zero(n, n);
    for (int m = 0; m + 1 < n; ++m) a(m, m + 1) = std::sqrt(static_cast<double>(m + 1));
    return a;
}

inline Operator creation(int n) { return annihilation(n).adjoint(); }

inline Operator number(int n) {
    if (n < 2) throw InvalidDimension("number: dimension must be >= 2");
    Operator out = Operator::Zero(n, n);
    for (int m = 0; m < n; ++m) out(m, m) = static_cast<double>(m);
    return out;
}

/// Oscillator quadratures for mass `mass` and frequency `omega` (hbar = 1).
struct Quadratures {
    Operator x;  ///< sqrt(1/(2 m w)) (a + a^dag)
    Operator p;  ///< i sqrt(m w / 2) (a^dag - a)
    Operator X;  ///< (a + a^dag)/sqrt(2), position in zero-point units
    Operator N;  ///< a^dag a
};

inline Quadratures quadratures(int n, double mass = 1.0, double omega = 1.0) {
    if (n < 2) throw InvalidDimension("quadratures: dimension must be >= 2");
    if (!(mass > 0.0) || !(omega > 0.0)) throw InvalidParameter("quadratures: mass and omega must be > 0");
    const Operator a = annihilation(n);
    const Operator ad = a.adjoint();
    Quadratures q;
    q.x = std::sqrt(1.0 / (2.0 * mass * omega)) * (a + ad);
    q.p = kI * std::sqrt(mass * omega / 2.0) * (ad - a);
    q.X = (a + ad) / std::sqrt(2.0);
    q.N = number(n);
    return q;
}

inline Operator sigma_minus() { return annihilation(2); }
inline Operator sigma_plus() { return creation(2); }

inline Operator sigma_x() {
    Operator s(2, 2);
    s << 0.0, 1.0, 1.0, 0.0;
    return s;
}

inline Operator sigma_y() {
    // -i (sigma_+ - sigma_-), so <e|sigma_y|g> = -i with index 1 = |e>.
    Operator s(2, 2);
    s << Complex(0.0), Complex(0.0, 1.0), Complex(0.0, -1.0), Complex(0.0);
    return s;
}

inline Operator sigma_z() {
    Operator s = Operator::Zero(2, 2);
    s(0, 0) = -1.0;
    s(1, 1) = 1.0;
    return s;
}

// ---------------------------------------------------------------------------
// States

inline StateVector basis_state(int n, int k) {
    if (k < 0 || k >= n) throw InvalidDimension("basis_state: index out of range");
    StateVector v = StateVector::Zero(n);
    v(k) = 1.0;
    return v;
}

/// Truncated coherent state, renormalized on the kept levels.
inline StateVector coherent_state(int n, Complex alpha) {
    if (n < 2) throw InvalidDimension("coherent_state: dimension must be >= 2");
    StateVector v(n);
    Complex c = std::exp(-0.5 * std::norm(alpha));
    for (int k = 0; k < n; ++k) {
        v(k) = c;
        c *= alpha / std::sqrt(static_cast<double>(k + 1));
    }
    return v / v.norm();
}

inline Operator projector(const StateVector& v) { return v * v.adjoint(); }

/// Plant (|+z> + |-z>)/sqrt(2) ⊗ bath vacuum, the atom-cavity benchmark start.
inline StateVector plus_x_state() {
    StateVector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    return v;
}

// ---------------------------------------------------------------------------
// Expectations and reductions

inline Complex expectation(const Operator& op, const StateVector& psi) {
    if (op.rows() != psi.size() || op.cols() != psi.size())
        throw InvalidDimension("expectation: operator/state dimension mismatch");
    return psi.dot(op * psi);  // conjugates the first argument
}

inline Complex expectation(const Operator& op, const JointState& state) {
    return expectation(op, state.amplitudes);
}

/// Tr(op rho) without forming the product.
inline Complex expectation(const Operator& op, const Operator& rho) {
    if (op.rows() != rho.rows() || op.cols() != rho.cols())
        throw InvalidDimension("expectation: operator/density dimension mismatch");
    return (op.transpose().cwiseProduct(rho)).sum();
}

/// Reduced operator of subsystem `keep` from an operator on the composite space.
inline Operator partial_trace(const Operator& rho_joint, const HilbertDims& dims, std::size_t keep) {
    if (keep >= dims.size()) throw InvalidDimension("partial_trace: subsystem index out of range");
    if (rho_joint.rows() != dims.total() || rho_joint.cols() != dims.total())
        throw InvalidDimension("partial_trace: operator dimension does not match dims");
    const int dk = dims[keep];
    const int inner = dims.stride(keep);
    const int outer = dims.total() / (dk * inner);
    Operator out = Operator::Zero(dk, dk);
    for (int o = 0; o < outer; ++o)
        for (int i = 0; i < dk; ++i)
            for (int j = 0; j < dk; ++j)
                for (int r = 0; r < inner; ++r) {
                    const int row = (o * dk + i) * inner + r;
                    const int col = (o * dk + j) * inner + r;
                    out(i, j) += rho_joint(row, col);
                }
    return out;
}

/// Reduced density matrix of subsystem `keep` of a pure joint state.
inline Operator partial_trace(const JointState& state, std::size_t keep) {
    const HilbertDims& dims = state.dims;
    if (keep >= dims.size()) throw InvalidDimension("partial_trace: subsystem index out of range");
    const int dk = dims[keep];
    const int inner = dims.stride(keep);
    const int outer = dims.total() / (dk * inner);
    Operator out = Operator::Zero(dk, dk);
    const StateVector& psi = state.amplitudes;
    for (int o = 0; o < outer; ++o)
        for (int r = 0; r < inner; ++r) {
            for (int i = 0; i < dk; ++i) {
                const Complex ai = psi((o * dk + i) * inner + r);
                if (ai == Complex(0.0)) continue;
                for (int j = 0; j < dk; ++j) out(i, j) += ai * std::conj(psi((o * dk + j) * inner + r));
            }
        }
    return out;
}

/// Population of the highest kept Fock level of subsystem `index`.
inline double truncation_leakage(const JointState& state, std::size_t index) {
    const Operator rho = partial_trace(state, index);
    return rho(rho.rows() - 1, rho.cols() - 1).real();
}

/// Throws InvalidParameter unless `rho` is a Hermitian, unit-trace, finite matrix.
inline void validate_density_matrix(const Operator& rho, double tolerance = tol::kDensity) {
    require_square(rho, "density matrix");
    if (!rho.allFinite()) throw InvalidParameter("density matrix has non-finite entries");
    if (hermitian_defect(rho) > tolerance) throw InvalidParameter("density matrix is not Hermitian");
    if (std::abs(rho.trace() - Complex(1.0)) > tolerance) throw InvalidParameter("density matrix trace != 1");
}

/// Smallest eigenvalue of a Hermitian matrix (Hermitian part is used).
inline double min_eigenvalue(const Operator& rho) {
    Eigen::SelfAdjointEigenSolver<Operator> es(hermitize(rho), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double purity(const Operator& rho) { return (rho * rho).trace().real(); }

// ---------------------------------------------------------------------------
// Exact evolution under a fixed Hamiltonian

/// e^{−iHt} for a fixed Hermitian H, from one eigendecomposition.
class UnitaryPropagator {
public:
    UnitaryPropagator() = default;

    explicit UnitaryPropagator(const Operator& H) {
        require_square(H, "UnitaryPropagator");
        if (!H.allFinite()) throw InvalidParameter("UnitaryPropagator: non-finite Hamiltonian");
        Eigen::SelfAdjointEigenSolver<Operator> es(hermitize(H));
        energies_ = es.eigenvalues();
        vectors_ = es.eigenvectors();
    }

    Eigen::Index dim() const noexcept { return energies_.size(); }

    Operator matrix(double t) const { return vectors_ * phases(t).asDiagonal() * vectors_.adjoint(); }

    StateVector apply(const StateVector& psi, double t) const {
        if (psi.size() != dim()) throw InvalidDimension("UnitaryPropagator::apply: dimension mismatch");
        return vectors_ * phases(t).cwiseProduct(vectors_.adjoint() * psi);
    }

    /// U ρ U^†.
    Operator conjugate(const Operator& rho, double t) const {
        if (rho.rows() != dim()) throw InvalidDimension("UnitaryPropagator::conjugate: dimension mismatch");
        const Eigen::VectorXcd ph = phases(t);
        Operator r = vectors_.adjoint() * rho * vectors_;
        for (Eigen::Index a = 0; a < r.rows(); ++a)
            for (Eigen::Index b = 0; b < r.cols(); ++b) r(a, b) *= ph(a) * std::conj(ph(b));
        return vectors_ * r * vectors_.adjoint();
    }

private:
    Eigen::VectorXcd phases(double t) const {
        Eigen::VectorXcd ph(energies_.size());
        for (Eigen::Index k = 0; k < ph.size(); ++k) ph(k) = std::exp(-kI * energies_(k) * t);
        return ph;
    }

    Eigen::VectorXd energies_;
    Operator vectors_;
};

}  // namespace nmsim
