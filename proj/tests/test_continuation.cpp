#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "nsch/continuation.hpp"

using namespace nsch;

namespace {

ModelSpec degenerate_model(int k, double sigma2 = 0.0) {
    ModelParameters p;
    p.mobility_phi = {MobilityKind::degenerate, 1.0, k};
    p.mobility_psi = {MobilityKind::degenerate, 1.0, k};
    p.sigma2 = sigma2;
    return build_model(p);
}

ContinuationPlan small_plan(const ModelSpec& spec, int n, double amp, unsigned seed) {
    Grid2D g(n, n, 8.0, 8.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    ScalarField phi(g), psi(g);
    for (double& v : phi.data()) v = amp * d(rng);
    for (double& v : psi.data()) v = 0.4 + 0.3 * amp * d(rng);
    ContinuationPlan plan;
    plan.epsilons = {1e-2, 1e-3};
    plan.t_final = 0.01;
    plan.solver.h = 2e-3;
    plan.flux_stride = 2;
    plan.initial = initial_state(StaggeredVelocity(g), phi, psi, spec);
    return plan;
}

}  // namespace

TEST_CASE("regularized model") {
    ModelSpec base = degenerate_model(1);
    RegularizedModel reg = build_regularization(base, 0.01);
    ModelSpec rs = regularized_spec(base, reg);
    CHECK_FALSE(rs.degenerate());
    double mmin = 1e300;
    for (double s : boundary_refined_samples(Phase::phi)) mmin = std::min(mmin, (*rs.mobility_phi)(s));
    mmin = std::min({mmin, (*rs.mobility_phi)(-1.0), (*rs.mobility_phi)(1.0)});
    CHECK(mmin == doctest::Approx(0.02).epsilon(1e-12));
    CHECK((*rs.mobility_phi)(1.0) == doctest::Approx(0.02).epsilon(1e-15));

    Derivs a = rs.potential_phi->eval(0.0);
    CHECK(std::abs(a.value) <= 1e-15);
    CHECK(std::abs(a.d1) <= 1e-15);
    Derivs b = rs.potential_psi->eval(0.5);
    CHECK(std::abs(b.value) <= 1e-15);
    CHECK(std::abs(b.d1) <= 1e-15);

    // (F^eps)'' m^eps = F'' m + c_eps F_ln'' m^eps; the second part is only bounded where m >= eps.
    double worst = 0.0, split_err = 0.0;
    for (double s : boundary_refined_samples(Phase::phi)) {
        double me = (*rs.mobility_phi)(s);
        double lhs = rs.potential_phi->eval(s).d2 * me;
        double rhs = base.potential_phi->second_times_mobility(*base.mobility_phi, s) +
                     reg.c_eps * reg.f_ln_phi->eval(s).d2 * me;
        split_err = std::max(split_err, std::abs(lhs - rhs) / rhs);
        CHECK(lhs <= reg.alpha + reg.c_eps * reg.f_ln_phi->eval(s).d2 * me + 1e-9 * rhs);
        if (std::abs(s) <= 1.0 - reg.delta_phi2) worst = std::max(worst, lhs);
    }
    CHECK(split_err <= 1e-9);
    CHECK(worst <= reg.alpha + 2.0);

    CHECK_THROWS_AS(regularized_spec(base, 0.2), ModelError);
    CHECK_THROWS_AS(regularized_spec(base, 0.0), ModelError);
    CHECK_THROWS_AS(regularized_spec(build_model(ModelParameters{}), 0.01), ModelError);
}

TEST_CASE("default schedule is clipped to the admissible interval") {
    std::vector<double> a = default_schedule(degenerate_model(1));
    REQUIRE(a.size() == 4);
    CHECK(a[0] == doctest::Approx(0.1));
    CHECK(a[3] == doctest::Approx(1e-4));
    std::vector<double> b = default_schedule(degenerate_model(2));
    REQUIRE(b.size() == 4);
    CHECK(b[0] == 1.0 / 32.0);
    CHECK(b[1] == doctest::Approx(1e-2));
    std::vector<double> c = default_schedule(degenerate_model(2), 2);
    CHECK(c.size() == 2);
}

TEST_CASE("plan validation") {
    ModelSpec spec = degenerate_model(2);
    ContinuationPlan plan = small_plan(spec, 8, 0.3, 1);
    CHECK_NOTHROW(validate_plan(plan, spec));
    ContinuationPlan p1 = plan;
    p1.epsilons = {1e-3, 1e-2};
    CHECK_THROWS_WITH_AS(validate_plan(p1, spec), doctest::Contains("decreasing"), ContinuationError);
    p1.epsilons = {0.1};
    CHECK_THROWS_WITH_AS(validate_plan(p1, spec), doctest::Contains("I_M"), ContinuationError);
    ContinuationPlan p2 = plan;
    p2.initial.phi[3] = 1.0;
    CHECK_THROWS_AS(validate_plan(p2, spec), ContinuationError);
    ContinuationPlan p3 = plan;
    p3.t_final = 0.0;
    CHECK_THROWS_AS(validate_plan(p3, spec), ContinuationError);
}

TEST_CASE("weak test fields") {
    Grid2D g(10, 8, 2.0, 1.0);
    std::vector<FaceField> eta = weak_test_fields(g);
    REQUIRE(eta.size() == 8);
    for (const FaceField& e : eta) {
        StaggeredVelocity v(g);
        v.x = e.x;
        v.y = e.y;
        CHECK(v.boundary_normal_max() == 0.0);
        CHECK(face_inner(e, e) > 0.0);
    }
    // distinct modes are orthogonal in the discrete face inner product
    for (std::size_t a = 0; a < eta.size(); ++a)
        for (std::size_t b = a + 1; b < eta.size(); ++b)
            CHECK(std::abs(face_inner(eta[a], eta[b])) <= 1e-12);
}

TEST_CASE("uniform data gives zero fluxes") {
    ModelSpec spec = degenerate_model(1);
    Grid2D g(8, 8, 4.0, 4.0);
    ContinuationPlan plan;
    plan.epsilons = {1e-2};
    plan.t_final = 0.01;
    plan.solver.h = 5e-3;
    plan.initial = initial_state(StaggeredVelocity(g), ScalarField(g, 0.2), ScalarField(g, 0.4), spec);
    EpsilonRun r = run_one_epsilon(plan, spec, 1e-2);
    CHECK(r.steps == 2);
    for (const auto& [t, f] : r.flux_history) {
        CHECK(f.j_phi.max_abs() <= 1e-12);
        CHECK(f.j_psi.max_abs() <= 1e-12);
    }
    CHECK(r.series.back().cum_jhat_phi_sq <= 1e-24);
}

TEST_CASE("continuation run estimates") {
    ModelSpec base = degenerate_model(2, 0.3);
    ContinuationPlan plan = small_plan(base, 16, 0.8, 2);
    validate_plan(plan, base);
    std::vector<EpsilonRun> runs;
    for (double e : plan.epsilons) {
        int calls = 0;
        EpsilonRun r = run_one_epsilon(plan, base, e, [&](const SimState&, const StepReport& rep) {
            ++calls;
            CHECK(rep.audit_passes(1e-8));
        });
        CHECK(calls == r.steps);
        CHECK(r.steps == 5);
        CHECK(r.flux_history.size() == 3);
        CHECK(std::abs(r.final_state.time - 0.01) <= 1e-15);
        CHECK(r.max_factorization_error <= 1e-14);
        CHECK(r.max_reduced_residual <= 1e-8);
        CHECK(r.weak.max_relative() <= 1e-6);
        CHECK(r.max_sigma1_entropy_excess <= 0.0);
        for (const EntropySample& s : r.series) {
            CHECK(std::isfinite(s.entropy_phi));
            CHECK(s.cum_lap_phi_sq >= 0.0);
            CHECK(s.cum_fpp_grad_phi >= 0.0);
            CHECK(s.eps_ceps2_flnpsi >= 0.0);
        }
        // W^eps <= W cellwise on the final state
        ModelSpec rs = regularized_spec(base, e);
        for (double v : r.final_state.phi.data()) {
            CHECK(rs.entropy_phi->eval(v).value <= base.entropy_phi->eval(v).value + 1e-12);
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
        runs.push_back(std::move(r));
    }
    ContinuationReport rep = continuation_report(runs);
    CHECK(rep.rows.size() == 2);
    CHECK(rep.c_eps_nonincreasing);
    CHECK(rep.blowup.empty());
    // energies of the two runs are close: the regularization only touches the near-pure region
    CHECK(std::abs(rep.rows[0].sup_energy - rep.rows[1].sup_energy) <=
          1e-2 * std::abs(rep.rows[0].sup_energy));
}

TEST_CASE("continuation report and summary file") {
    auto mk = [](double eps, double c, double jp) {
        EpsilonRun r;
        r.epsilon = eps;
        r.c_eps = c;
        EntropySample s0, s1;
        s0.energy = 2.0;
        s1.energy = 1.0;
        s1.cum_jhat_phi_sq = jp;
        s1.cum_jhat_psi_sq = 1.0;
        s1.cum_lap_phi_sq = 1.0;
        s1.cum_lap_psi_sq = 1.0;
        s1.eps_ceps2_flnphi = 1.0;
        s1.eps_ceps2_flnpsi = 1.0;
        s0.entropy_phi = s1.entropy_phi = 1.0;
        s0.entropy_psi = s1.entropy_psi = 1.0;
        r.series = {s0, s1};
        return r;
    };
    ContinuationReport ok = continuation_report({mk(0.1, 0.5, 1.0), mk(0.01, 0.2, 2.0), mk(1e-3, 0.1, 3.0)});
    CHECK(ok.blowup.empty());
    CHECK(ok.c_eps_nonincreasing);
    CHECK(ok.rows[1].sup_energy == 2.0);
    CHECK(ok.rows[2].cum_jhat_phi_sq == 3.0);

    ContinuationReport bad = continuation_report({mk(0.1, 0.5, 1.0), mk(0.01, 0.6, 2.0), mk(1e-3, 0.1, 50.0)});
    REQUIRE(bad.blowup.size() == 1);
    CHECK(bad.blowup[0] == "cum_jhat_phi_sq");
    CHECK_FALSE(bad.c_eps_nonincreasing);

    std::string path = (std::filesystem::temp_directory_path() / "nsch_test_summary.csv").string();
    write_summary(ok, path);
    std::ifstream in(path);
    std::string head, row;
    std::getline(in, head);
    CHECK(head == "epsilon,c_eps,sup_energy,cum_jhat_phi_sq,cum_jhat_psi_sq,cum_lap_phi_sq,"
                  "cum_lap_psi_sq,eps_ceps2_flnphi,eps_ceps2_flnpsi,max_entropy_phi,max_entropy_psi");
    int rows = 0;
    while (std::getline(in, row)) ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(path);
}
