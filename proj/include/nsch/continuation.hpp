#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsch/diagnostics.hpp"
#include "nsch/timestepper.hpp"

namespace nsch {

class ContinuationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Non-degenerate model with mobilities m^eps, potentials F^eps and entropies W^eps.
// Throws ModelError if the base mobilities are not degenerate or epsilon lies outside I_M.
ModelSpec regularized_spec(const ModelSpec& spec, const RegularizedModel& reg);
ModelSpec regularized_spec(const ModelSpec& spec, double epsilon);

// n log-spaced values from 1e-1 to 1e-4, clipped to I_M, duplicates dropped.
std::vector<double> default_schedule(const ModelSpec& spec, int n = 4);

struct ContinuationPlan {
    std::vector<double> epsilons;
    double t_final = 0.05;
    SolverConfig solver;
    SimState initial;
    int flux_stride = 10;  // keep the face fluxes of every flux_stride-th step
};

// Schedule strictly decreasing inside I_M; initial data strictly inside the box with
// finite F and W cellwise. Throws ContinuationError.
void validate_plan(const ContinuationPlan& plan, const ModelSpec& spec);

struct FluxFields {
    FaceField m_phi, m_psi;        // face mobilities at the old state
    FaceField j_phi, j_psi;        // m grad mu
    FaceField jhat_phi, jhat_psi;  // sqrt(m) grad mu

    // max |j - sqrt(m) jhat| over all faces of both fields
    double factorization_error() const;
};

FluxFields compute_fluxes(const SimState& old, const SimState& next, const ModelSpec& spec);

struct EntropySample {
    double time = 0.0;
    double energy = 0.0;
    double entropy_phi = 0.0, entropy_psi = 0.0;
    // Running sums over steps of h times the spatial integral.
    double cum_lap_phi_sq = 0.0, cum_lap_psi_sq = 0.0;
    double cum_fpp_grad_phi = 0.0, cum_fpp_grad_psi = 0.0;  // (F^eps)'' |grad|^2
    double eps_ceps2_flnphi = 0.0, eps_ceps2_flnpsi = 0.0;   // eps c_eps^2 |F_ln'|^2
    double cum_jhat_phi_sq = 0.0, cum_jhat_psi_sq = 0.0;
};

// Eight smooth face fields with zero normal trace: sine-cosine modes along x and along y.
std::vector<FaceField> weak_test_fields(const Grid2D& g);

// Both sides of the time-integrated flux pairings <J, eta> for each test field.
struct WeakFluxCheck {
    std::vector<double> lhs_phi, rhs_phi, lhs_psi, rhs_psi;
    // max over fields and both identities of |lhs - rhs| / max(|lhs|, |rhs|)
    double max_relative() const;
};

struct EpsilonRun {
    double epsilon = 0.0;
    double c_eps = 0.0;
    int steps = 0;
    std::vector<EntropySample> series;  // series[0] is the initial state
    std::vector<std::pair<double, FluxFields>> flux_history;
    double max_factorization_error = 0.0;
    // max over steps of (E_after + viscous + h|jhat|^2 - E_before) / (|E_before| + 1)
    double max_reduced_residual = 0.0;
    double max_sigma1_entropy_excess = 0.0;  // max of sigma1 |W'| - alpha (base W), <= 0 expected
    WeakFluxCheck weak;
    SimState final_state;
};

using StepCallback = std::function<void(const SimState&, const StepReport&)>;

// Runs to plan.t_final; throws ContinuationError if a state leaves the open box.
EpsilonRun run_one_epsilon(const ContinuationPlan& plan, const ModelSpec& spec, double epsilon,
                           const StepCallback& on_step = {});

struct SummaryRow {
    double epsilon = 0.0, c_eps = 0.0, sup_energy = 0.0;
    double cum_jhat_phi_sq = 0.0, cum_jhat_psi_sq = 0.0;
    double cum_lap_phi_sq = 0.0, cum_lap_psi_sq = 0.0;
    double eps_ceps2_flnphi = 0.0, eps_ceps2_flnpsi = 0.0;
    double max_entropy_phi = 0.0, max_entropy_psi = 0.0;
};

struct ContinuationReport {
    std::vector<SummaryRow> rows;
    // Columns whose |value| at the smallest epsilon exceeds 10x the schedule median of |value|,
    // or that contain a non-finite value.
    std::vector<std::string> blowup;
    bool c_eps_nonincreasing = true;
};

ContinuationReport continuation_report(const std::vector<EpsilonRun>& runs);

void write_summary(const ContinuationReport& report, const std::string& path);

}  // namespace nsch
