#pragma once

/// Seeded Wiener increments and the homodyne measurement record.
///
/// The generator is std::mt19937_64 (its output sequence is fixed by the C++
/// standard) followed by a hand-written Box-Muller transform, so a
/// (seed, dt, length) triple always reproduces the same increments. Do not
/// replace either piece: every stored trajectory depends on them.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <random>
#include <vector>

#include "nmsim/error.hpp"

namespace nmsim {

struct WienerPath {
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> increments;

    std::size_t size() const noexcept { return increments.size(); }
    double duration() const noexcept { return dt * static_cast<double>(increments.size()); }
};

/// Time grid and record values y(t); y has units of 1/sqrt(time).
struct MeasurementRecord {
    std::vector<double> times;
    std::vector<double> y;
};

/// Standard-normal source: mt19937_64 → 53-bit uniforms → Box-Muller pairs.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1], u2 in [0, 1)
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// `n_steps` i.i.d. Normal(0, dt) increments.
inline WienerPath generate_wiener(std::size_t n_steps, double dt, std::uint64_t seed) {
    if (n_steps < 1) throw InvalidParameter("generate_wiener: n_steps must be >= 1");
    if (!(dt > 0.0)) throw InvalidParameter("generate_wiener: dt must be > 0");
    WienerPath path;
    path.dt = dt;
    path.seed = seed;
    path.increments.resize(n_steps);
    GaussianStream gauss(seed);
    const double scale = std::sqrt(dt);
    for (double& dw : path.increments) dw = scale * gauss.next();
    return path;
}

/// Halves the step by Brownian-bridge midpoint insertion. Each pair of fine
/// increments sums exactly to the coarse increment it replaces, so the result
/// is a finer sampling of the same Brownian realization.
inline WienerPath refine_brownian_bridge(const WienerPath& coarse, std::uint64_t seed) {
    WienerPath fine;
    fine.dt = 0.5 * coarse.dt;
    fine.seed = seed;
    fine.increments.reserve(2 * coarse.size());
    GaussianStream gauss(seed);
    const double sd = 0.5 * std::sqrt(coarse.dt);
    for (double dw : coarse.increments) {
        const double first = 0.5 * dw + sd * gauss.next();
        fine.increments.push_back(first);
        fine.increments.push_back(dw - first);
    }
    return fine;
}

/// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of trajectory `index` in an ensemble. Injective in `index` for a fixed
/// base (odd-multiplier Weyl step composed with a bijective mixer).
constexpr std::uint64_t derive_trajectory_seed(std::uint64_t base_seed, std::uint64_t index) noexcept {
    return splitmix64(base_seed + (index + 1) * 0x9e3779b97f4a7c15ULL);
}

/// Debug dump: `step,dW` rows.
inline void write_path_csv(std::ostream& os, const WienerPath& path) {
    os << "step,dW\n";
    os.precision(17);
    for (std::size_t k = 0; k < path.size(); ++k) os << k << ',' << path.increments[k] << '\n';
}

}  // namespace nmsim
