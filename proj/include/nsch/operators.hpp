#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "nsch/grid.hpp"

namespace nsch {

// Iterative solver failure, carrying the last residual.
class SolverError : public std::runtime_error {
  public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

  private:
    double residual_;
};

struct CgOptions {
    double tol = 1e-10;
    int max_iter = 0;  // 0 selects 20 (nx + ny)
};

// 5-point Laplacian with homogeneous Neumann ghosts (returns Delta_h f).
ScalarField neumann_laplacian(const ScalarField& f);

// Centred differences on interior faces, zero on wall faces.
FaceField grad_cc(const ScalarField& f);

// Cell divergence of face-normal fluxes (wall faces included).
ScalarField div_face(const FaceField& q);

// Arithmetic mean of the two adjacent cells on interior faces, the adjacent cell on walls.
FaceField face_average(const ScalarField& f);

// Face-wise product.
FaceField face_product(const FaceField& a, const FaceField& b);

enum class AdvectionScheme { centered, upwind };

// div_h(u f_face); exact zero mean for any f when the wall-normal velocity vanishes.
ScalarField advect(const StaggeredVelocity& u, const ScalarField& f,
                   AdvectionScheme scheme = AdvectionScheme::centered);

struct CgResult {
    ScalarField solution;
    int iterations = 0;
    double residual = 0.0;
};

// Zero-mean g with -Delta_h g = f - mean(f), by conjugate gradients.
CgResult inverse_neumann_solve(const ScalarField& f, const CgOptions& opts = {});
ScalarField inverse_neumann(const ScalarField& f, const CgOptions& opts = {});

struct Projection {
    StaggeredVelocity u;
    ScalarField pressure;
    int iterations = 0;
};

// u = P u + grad_h p with div_h(P u) = 0 and mean(p) = 0.
Projection leray_project(const StaggeredVelocity& u, const CgOptions& opts = {1e-13, 0});

double l2_inner(const ScalarField& f, const ScalarField& g);
double l2_norm(const ScalarField& f);
// Sum over all faces weighted by the cell volume.
double face_inner(const FaceField& a, const FaceField& b);

double star_norm(const ScalarField& f, const CgOptions& opts = {});
double h_neg1_norm(const ScalarField& f, const CgOptions& opts = {});

enum class WallTreatment { no_slip, interior_only };

// One quadrature term of int nu |D_h u|^2: weight * nu * (sum coef_k u[idx_k])^2 where idx
// addresses the concatenation [x faces, y faces]. Node terms take nu as the mean of the
// adjacent cells.
struct StrainTerm {
    double weight = 0.0;
    bool at_node = false;
    int i = 0, j = 0;
    int n = 0;
    int idx[4] = {0, 0, 0, 0};
    double coef[4] = {0, 0, 0, 0};
};

std::vector<StrainTerm> strain_terms(const Grid2D& g, WallTreatment walls = WallTreatment::no_slip);

// nu of a strain term given cell viscosities.
double strain_viscosity(const StrainTerm& t, const ScalarField& nu);

double symmetric_gradient_norm(const StaggeredVelocity& u, const ScalarField& nu,
                               WallTreatment walls = WallTreatment::no_slip);
double symmetric_gradient_norm(const StaggeredVelocity& u,
                               WallTreatment walls = WallTreatment::no_slip);

// Raw field snapshot: "NSCH", u32 version 1, u32 nx, u32 ny, f64 lx, f64 ly, f64 payload,
// little-endian. Face arrays are stored with their own (columns, rows) shape.
void write_snapshot(const std::string& path, const ScalarField& f);
ScalarField read_snapshot(const std::string& path);

struct RawSnapshot {
    unsigned nx = 0, ny = 0;
    double lx = 0.0, ly = 0.0;
    std::vector<double> data;
};
void write_raw_snapshot(const std::string& path, const RawSnapshot& s);
RawSnapshot read_raw_snapshot(const std::string& path);

void write_velocity_snapshot(const std::string& path_x, const std::string& path_y,
                             const StaggeredVelocity& u);
StaggeredVelocity read_velocity_snapshot(const std::string& path_x, const std::string& path_y,
                                         const Grid2D& g);

}  // namespace nsch
