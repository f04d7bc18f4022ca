// Atom memory function f(t) approaching its steady state, for a few cavity decay rates.

#include <cstdio>

#include "nmsim/riccati.hpp"

int main() {
    using namespace nmsim;
    for (double gamma : {2.0, 10.0, 50.0}) {
        const AtomRiccatiParams p{1.0, 1.0, gamma, 1.0};
        const std::vector<Complex> f = atom_riccati_evolve(p, 1e-3, 20000);
        const SteadyState ss = atom_riccati_steady_state(p);
        std::printf("gamma = %g  steady f = %.6f%+.6fi  Markovian g/gamma = %.6f\n", gamma, ss.selected.real(),
                    ss.selected.imag(), p.g / gamma);
        for (std::size_t k = 0; k <= 20000; k += 4000)
            std::printf("  t = %4.1f  f = %.6f%+.6fi\n", 1e-3 * k, f[k].real(), f[k].imag());
    }
}
