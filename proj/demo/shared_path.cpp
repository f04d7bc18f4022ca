// Joint atom-cavity SSE and the reduced atom SME on one noise realization.
// Prints both Bloch vectors once per unit time.

#include <cstdio>

#include "nmsim/jointsse.hpp"
#include "nmsim/nmsme.hpp"

int main() {
    using namespace nmsim;
    const AtomRiccatiParams p{1.0, 1.0, 2.0, 1.0};
    const SseModel joint = build_atom_cavity(p.omega_q, p.detuning, p.g, p.gamma, 16);
    const WienerPath path = generate_wiener(10000, 1e-3, 42);

    JointState psi = product_with_vacuum(joint, plus_x_state());
    SmeState s{projector(plus_x_state()), AtomRiccatiState{}, 0.0};
    const Operator sx = joint.plant_operator(sigma_x()), sy = joint.plant_operator(sigma_y()),
                   sz = joint.plant_operator(sigma_z());

    std::printf("%4s  %9s %9s %9s   %9s %9s %9s\n", "t", "sx_sse", "sy_sse", "sz_sse", "sx_sme", "sy_sme", "sz_sme");
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double dw = path.increments[k];
        psi = sse_step(joint, psi, dw, path.dt).state;
        s = atom_sme_step(s, p, sme_increment(dw), path.dt).state;
        if ((k + 1) % 1000 == 0)
            std::printf("%4.1f  %9.5f %9.5f %9.5f   %9.5f %9.5f %9.5f\n", s.t, expectation(sx, psi).real(),
                        expectation(sy, psi).real(), expectation(sz, psi).real(),
                        expectation(sigma_x(), s.rho).real(), expectation(sigma_y(), s.rho).real(),
                        expectation(sigma_z(), s.rho).real());
    }
}
