#include "nsch/energy.hpp"

namespace nsch {

ScalarField map_field(const ScalarField& f, const std::function<double(double)>& fn) {
    ScalarField r(f.grid());
    for (std::size_t k = 0; k < f.size(); ++k) r[k] = fn(f[k]);
    return r;
}

ScalarField density_field(const ScalarField& phi, const ModelSpec& spec) {
    return map_field(phi, [&](double s) { return spec.rho(s); });
}

ScalarField viscosity_field(const ScalarField& phi, const ModelSpec& spec) {
    return map_field(phi, [&](double s) { return spec.nu(s); });
}

FaceField face_mobility(const ScalarField& f, const Mobility& m) {
    return face_average(map_field(f, [&](double s) { return m(s); }));
}

double weighted_face_square(const FaceField& w, const FaceField& a) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.x.size(); ++k) s += w.x[k] * a.x[k] * a.x[k];
    for (std::size_t k = 0; k < a.y.size(); ++k) s += w.y[k] * a.y[k] * a.y[k];
    return s * a.grid().cell_volume();
}

EnergyBreakdown total_energy(const StaggeredVelocity& u, const ScalarField& phi,
                             const ScalarField& psi, const ModelSpec& spec) {
    const double vol = phi.grid().cell_volume();
    EnergyBreakdown e;
    e.kinetic = 0.5 * weighted_face_square(face_average(density_field(phi, spec)), u);
    FaceField gp = grad_cc(phi), gs = grad_cc(psi);
    e.grad_phi = 0.5 * face_inner(gp, gp);
    e.grad_psi = 0.5 * spec.beta * face_inner(gs, gs);
    if (spec.sigma2 > 0.0) {
        double s = star_norm(phi, {1e-13, 0});
        e.nonlocal = 0.5 * spec.sigma2 * s * s;
    }
    double fp = 0.0, fs = 0.0, g = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) {
        fp += spec.potential_phi->value_closed(phi[k]);
        fs += spec.potential_psi->value_closed(psi[k]);
        g += spec.coupling.value(phi[k], psi[k]);
    }
    e.f_phi_int = fp * vol;
    e.f_psi_int = fs * vol;
    e.g_int = g * vol;
    e.total = e.kinetic + e.grad_phi + e.grad_psi + e.nonlocal + e.f_phi_int + e.f_psi_int +
              e.g_int;
    return e;
}

}  // namespace nsch
