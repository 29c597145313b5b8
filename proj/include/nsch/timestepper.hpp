#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "nsch/energy.hpp"
#include "nsch/grid.hpp"
#include "nsch/material.hpp"
#include "nsch/operators.hpp"

namespace nsch {

struct SolverConfig {
    double h = 1e-3;
    double picard_tol = 1e-10;
    double newton_tol = 1e-10;
    int picard_max = 50;
    int newton_max = 60;
    double energy_audit_tol = 1e-8;
    double h_backoff = 0.5;
    double h_min = 1e-8;
    double cg_tol = 1e-10;
    int cg_max_iter = 0;
    AdvectionScheme advection = AdvectionScheme::centered;
    bool operator==(const SolverConfig&) const = default;
};

// Rejects non-positive tolerances and steps that break h sigma1* <= 1/2 or
// h sigma1* |gamma| <= min(rho1, rho2)/2. Throws ModelError.
void validate_solver(const SolverConfig& cfg, const ModelSpec& spec);

struct SimState {
    double time = 0.0;
    StaggeredVelocity u;
    ScalarField phi, psi;
    ScalarField mu_phi, mu_psi;
    ScalarField pressure;

    const Grid2D& grid() const { return phi.grid(); }
};

struct StepReport {
    double h = 0.0;
    int attempts = 1;
    int newton_iters_ch = 0;
    int picard_iters_outer = 0;
    int cg_iters_total = 0;
    double picard_update = 0.0;

    EnergyBreakdown before, after;
    double energy_before = 0.0;
    double energy_after = 0.0;
    double viscous = 0.0;
    double diss_phi = 0.0;
    double diss_psi = 0.0;
    double dissipation = 0.0;
    double oono_source = 0.0;
    double kinetic_defect = 0.0;
    double grad_phi_defect = 0.0;
    double grad_psi_defect = 0.0;
    double star_defect = 0.0;
    double extra_nonneg = 0.0;
    double inequality_residual = 0.0;
    double mean_phi = 0.0;
    double mean_psi = 0.0;
    double mean_sigma1 = 0.0;  // mean of sigma1(phi^k), for the product mass law

    // inequality_residual <= tol (|energy_before| + 1)
    bool audit_passes(double tol) const;
};

// A single attempt failed (Newton divergence, linear solver, bound or audit failure).
class StepFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// h fell below h_min; carries the report of the last attempt (if any).
class StepError : public std::runtime_error {
  public:
    StepError(const std::string& what, StepReport last)
        : std::runtime_error(what), last_(last) {}
    const StepReport& last_report() const { return last_; }

  private:
    StepReport last_;
};

struct ChemicalPotentials {
    ScalarField mu_phi, mu_psi;
};

// mu_phi = -Delta phi + sigma2 N(phi - mean) + F'(phi) + G_phi(phi, phi_old, psi),
// mu_psi = -beta Delta psi + F'(psi) + G_psi(phi_old, psi, psi_old).
ChemicalPotentials chemical_potential(const ScalarField& phi, const ScalarField& psi,
                                      const ScalarField& phi_old, const ScalarField& psi_old,
                                      const ModelSpec& spec);

// State at t with mu from (phi, psi) and zero pressure; u is projected to no-slip.
SimState initial_state(const StaggeredVelocity& u, const ScalarField& phi, const ScalarField& psi,
                       const ModelSpec& spec, double time = 0.0);

struct ChResult {
    ScalarField phi, psi, mu_phi, mu_psi;
    int newton_iters = 0;
};

struct MomentumResult {
    StaggeredVelocity u;
    ScalarField pressure;  // p + mu_phi phi^k + mu_psi psi^k, zero mean
    int iterations = 0;
};

struct StepResult {
    SimState state;
    StepReport report;
};

// Owns the sparse factorizations for one grid so their symbolic analysis is reused.
class Stepper {
  public:
    Stepper(ModelSpec spec, SolverConfig cfg, const Grid2D& grid);
    ~Stepper();
    Stepper(Stepper&&) noexcept;
    Stepper& operator=(Stepper&&) noexcept;

    const ModelSpec& spec() const;
    const SolverConfig& config() const;

    ChResult ch_subsolve(const StaggeredVelocity& u, const SimState& old, double h);
    MomentumResult momentum_subsolve(const SimState& old, const StaggeredVelocity& convecting,
                                     const ScalarField& phi_new, const ScalarField& mu_phi,
                                     const ScalarField& mu_psi, double h);
    // One attempt at step size h without backoff; throws StepFailure.
    StepResult attempt(const SimState& old, double h);
    // Attempts with config.h (or h_override > 0), halving on failure.
    StepResult step(const SimState& old, double h_override = 0.0);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

ChResult ch_subsolve(const StaggeredVelocity& u, const SimState& old, const ModelSpec& spec,
                     const SolverConfig& cfg);
MomentumResult momentum_subsolve(const SimState& old, const ScalarField& phi_new,
                                 const ScalarField& mu_phi, const ScalarField& mu_psi,
                                 const ModelSpec& spec, const SolverConfig& cfg);
StepResult step(const SimState& old, const ModelSpec& spec, const SolverConfig& cfg);

// Every term of the one-step energy inequality for the pair (old, next) at step size h.
StepReport energy_audit(const SimState& old, const SimState& next, const ModelSpec& spec,
                        double h);

}  // namespace nsch
