#pragma once

#include "nsch/grid.hpp"
#include "nsch/material.hpp"
#include "nsch/operators.hpp"

namespace nsch {

struct EnergyBreakdown {
    double kinetic = 0.0;
    double grad_phi = 0.0;
    double grad_psi = 0.0;
    double nonlocal = 0.0;
    double f_phi_int = 0.0;
    double f_psi_int = 0.0;
    double g_int = 0.0;
    double total = 0.0;

    double free() const { return total - kinetic; }
    bool operator==(const EnergyBreakdown&) const = default;
};

// Midpoint quadrature on the scheme's grid: cells for F, G; faces for gradients and rho|u|^2.
EnergyBreakdown total_energy(const StaggeredVelocity& u, const ScalarField& phi,
                             const ScalarField& psi, const ModelSpec& spec);

// Cell-wise material fields.
ScalarField map_field(const ScalarField& f, const std::function<double(double)>& fn);
ScalarField density_field(const ScalarField& phi, const ModelSpec& spec);
ScalarField viscosity_field(const ScalarField& phi, const ModelSpec& spec);

// Face mobility: arithmetic mean of the adjacent cell mobilities.
FaceField face_mobility(const ScalarField& f, const Mobility& m);

// sum_f V w_f a_f^2
double weighted_face_square(const FaceField& w, const FaceField& a);

}  // namespace nsch
