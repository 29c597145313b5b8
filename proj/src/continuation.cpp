#include "nsch/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace nsch {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double max_sqrt_factor_gap(const FaceField& m, const FaceField& j, const FaceField& jh) {
    double e = 0.0;
    for (std::size_t k = 0; k < j.x.size(); ++k)
        e = std::max(e, std::abs(j.x[k] - std::sqrt(m.x[k]) * jh.x[k]));
    for (std::size_t k = 0; k < j.y.size(); ++k)
        e = std::max(e, std::abs(j.y[k] - std::sqrt(m.y[k]) * jh.y[k]));
    return e;
}

FaceField sqrt_times(const FaceField& m, const FaceField& g) {
    FaceField r(g.grid());
    for (std::size_t k = 0; k < g.x.size(); ++k) r.x[k] = std::sqrt(m.x[k]) * g.x[k];
    for (std::size_t k = 0; k < g.y.size(); ++k) r.y[k] = std::sqrt(m.y[k]) * g.y[k];
    return r;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// sum_f V F''_f |grad f|^2 with F'' averaged to faces
double fpp_grad(const ScalarField& f, const Potential& pot) {
    FaceField fpp = face_average(map_field(f, [&](double s) { return pot.eval(s).d2; }));
    return weighted_face_square(fpp, grad_cc(f));
}

double fln_sq(const ScalarField& f, const LogPotential& ln) {
    double s = 0.0;
    for (double v : f.data()) {
        double d = ln.eval(v).d1;
        s += d * d;
    }
    return s * f.grid().cell_volume();
}

}  // namespace

ModelSpec regularized_spec(const ModelSpec& spec, const RegularizedModel& reg) {
    ModelSpec s = spec;
    s.potential_phi = reg.f_eps_phi;
    s.potential_psi = reg.f_eps_psi;
    s.mobility_phi = reg.m_eps_phi;
    s.mobility_psi = reg.m_eps_psi;
    s.entropy_phi = reg.w_eps_phi;
    s.entropy_psi = reg.w_eps_psi;
    s.alpha = reg.alpha;
    validate_model(s);
    return s;
}

ModelSpec regularized_spec(const ModelSpec& spec, double epsilon) {
    return regularized_spec(spec, build_regularization(spec, epsilon));
}

std::vector<double> default_schedule(const ModelSpec& spec, int n) {
    double lim = regularization_limit(spec);
    std::vector<double> e;
    for (int k = 0; k < n; ++k) {
        double v = n == 1 ? 1e-1 : std::pow(10.0, -1.0 - 3.0 * k / (n - 1));
        v = std::min(v, lim);
        if (e.empty() || v < e.back()) e.push_back(v);
    }
    return e;
}

void validate_plan(const ContinuationPlan& plan, const ModelSpec& spec) {
    if (plan.epsilons.empty()) throw ContinuationError("continuation: empty epsilon schedule");
    double lim = regularization_limit(spec);
    for (std::size_t k = 0; k < plan.epsilons.size(); ++k) {
        double e = plan.epsilons[k];
        if (!(e > 0.0) || e > lim)
            throw ContinuationError("continuation: epsilon " + fmt(e) + " outside I_M = (0, " +
                                    fmt(lim) + "]");
        if (k > 0 && !(e < plan.epsilons[k - 1]))
            throw ContinuationError("continuation: epsilon schedule must be strictly decreasing");
    }
    if (!(plan.t_final > 0.0)) throw ContinuationError("continuation: t_final must be positive");
    if (plan.flux_stride < 1) throw ContinuationError("continuation: flux_stride must be >= 1");
    const SimState& s = plan.initial;
    double mp = s.phi.mean(), ms = s.psi.mean();
    if (!(mp > -1.0 && mp < 1.0) || !(ms > 0.0 && ms < 1.0))
        throw ContinuationError("continuation: initial means must lie in (-1,1) x (0,1)");
    for (std::size_t k = 0; k < s.phi.size(); ++k) {
        double a = s.phi[k], b = s.psi[k];
        // The regularized potentials keep c_eps F_ln, so the box has to be open here.
        if (!(a > -1.0 && a < 1.0) || !(b > 0.0 && b < 1.0))
            throw ContinuationError("continuation: initial data must lie strictly inside the box");
        double v = spec.potential_phi->value_closed(a) + spec.potential_psi->value_closed(b) +
                   spec.entropy_phi->value_closed(a) + spec.entropy_psi->value_closed(b);
        if (!std::isfinite(v))
            throw ContinuationError("continuation: F or W of the initial data is not finite at cell " +
                                    std::to_string(k));
    }
}

double FluxFields::factorization_error() const {
    return std::max(max_sqrt_factor_gap(m_phi, j_phi, jhat_phi),
                    max_sqrt_factor_gap(m_psi, j_psi, jhat_psi));
}

FluxFields compute_fluxes(const SimState& old, const SimState& next, const ModelSpec& spec) {
    FluxFields f;
    f.m_phi = face_mobility(old.phi, *spec.mobility_phi);
    f.m_psi = face_mobility(old.psi, *spec.mobility_psi);
    FaceField gp = grad_cc(next.mu_phi), gs = grad_cc(next.mu_psi);
    f.j_phi = face_product(f.m_phi, gp);
    f.j_psi = face_product(f.m_psi, gs);
    f.jhat_phi = sqrt_times(f.m_phi, gp);
    f.jhat_psi = sqrt_times(f.m_psi, gs);
    return f;
}

std::vector<FaceField> weak_test_fields(const Grid2D& g) {
    const double pi = std::numbers::pi;
    const int modes[4][2] = {{1, 0}, {2, 0}, {1, 1}, {2, 1}};
    std::vector<FaceField> out;
    for (const auto& m : modes) {
        FaceField e(g);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 1; i < g.nx; ++i)
                e.xf(i, j) = std::sin(m[0] * pi * i / g.nx) * std::cos(m[1] * pi * (j + 0.5) / g.ny);
        out.push_back(e);
    }
    for (const auto& m : modes) {
        FaceField e(g);
        for (int j = 1; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                e.yf(i, j) = std::cos(m[1] * pi * (i + 0.5) / g.nx) * std::sin(m[0] * pi * j / g.ny);
        out.push_back(e);
    }
    return out;
}

double WeakFluxCheck::max_relative() const {
    double r = 0.0;
    auto acc = [&](const std::vector<double>& l, const std::vector<double>& rr) {
        for (std::size_t k = 0; k < l.size(); ++k) {
            double den = std::max(std::abs(l[k]), std::abs(rr[k]));
            if (den > 0.0) r = std::max(r, std::abs(l[k] - rr[k]) / den);
        }
    };
    acc(lhs_phi, rhs_phi);
    acc(lhs_psi, rhs_psi);
    return r;
}

EpsilonRun run_one_epsilon(const ContinuationPlan& plan, const ModelSpec& spec, double epsilon,
                           const StepCallback& on_step) {
    RegularizedModel reg = build_regularization(spec, epsilon);
    ModelSpec rs = regularized_spec(spec, reg);
    const Grid2D& g = plan.initial.grid();
    const double w = epsilon * reg.c_eps * reg.c_eps;

    EpsilonRun run;
    run.epsilon = epsilon;
    run.c_eps = reg.c_eps;

    SimState s = initial_state(plan.initial.u, plan.initial.phi, plan.initial.psi, rs,
                               plan.initial.time);
    EntropySample cur;
    cur.time = s.time;
    cur.energy = total_energy(s.u, s.phi, s.psi, rs).total;
    cur.entropy_phi = entropy_integral(s.phi, *rs.entropy_phi);
    cur.entropy_psi = entropy_integral(s.psi, *rs.entropy_psi);
    run.series.push_back(cur);

    std::vector<FaceField> eta = weak_test_fields(g);
    const std::size_t ne = eta.size();
    run.weak.lhs_phi.assign(ne, 0.0);
    run.weak.rhs_phi.assign(ne, 0.0);
    run.weak.lhs_psi.assign(ne, 0.0);
    run.weak.rhs_psi.assign(ne, 0.0);

    auto check_sigma1 = [&](const ScalarField& phi) {
        for (double v : phi.data()) {
            double e = spec.sigma1(v) * std::abs(spec.entropy_phi->eval(v).d1) - spec.alpha;
            run.max_sigma1_entropy_excess = std::max(run.max_sigma1_entropy_excess, e);
        }
    };
    run.max_sigma1_entropy_excess = -spec.alpha;
    check_sigma1(s.phi);

    Stepper st(rs, plan.solver, g);
    const double t_end = plan.initial.time + plan.t_final;
    while (s.time < t_end - 1e-12 * plan.t_final) {
        double h = std::min(plan.solver.h, t_end - s.time);
        StepResult r = st.step(s, h);
        const SimState& n = r.state;
        const double hs = r.report.h;
        if (n.phi.min() <= -1.0 || n.phi.max() >= 1.0 || n.psi.min() <= 0.0 || n.psi.max() >= 1.0)
            throw ContinuationError("continuation: state left the open box at t=" + fmt(n.time) +
                                    " (epsilon " + fmt(epsilon) + ")");
        check_sigma1(n.phi);

        FluxFields fl = compute_fluxes(s, n, rs);
        run.max_factorization_error = std::max(run.max_factorization_error, fl.factorization_error());
        double jp = hs * face_inner(fl.jhat_phi, fl.jhat_phi);
        double js = hs * face_inner(fl.jhat_psi, fl.jhat_psi);
        double reduced = (r.report.energy_after + r.report.viscous + jp + js - r.report.energy_before) /
                         (std::abs(r.report.energy_before) + 1.0);
        run.max_reduced_residual = std::max(run.max_reduced_residual, reduced);

        // Flux pairings: <j, eta> against potential, Laplacian and nonlocal parts.
        ScalarField lap_phi = neumann_laplacian(n.phi), lap_psi = neumann_laplacian(n.psi);
        ScalarField pot_phi(g), pot_psi(g);
        for (std::size_t k = 0; k < n.phi.size(); ++k) {
            pot_phi[k] = rs.potential_phi->eval(n.phi[k]).d1 +
                         rs.coupling.secant_phi(n.phi[k], s.phi[k], n.psi[k]);
            pot_psi[k] = rs.potential_psi->eval(n.psi[k]).d1 +
                         rs.coupling.secant_psi(s.phi[k], n.psi[k], s.psi[k]);
        }
        FaceField gpot_phi = grad_cc(pot_phi), gpot_psi = grad_cc(pot_psi);
        FaceField gnl(g);
        if (rs.sigma2 > 0.0) {
            ScalarField z = n.phi;
            double m = z.mean();
            for (double& v : z.data()) v -= m;
            gnl = grad_cc(inverse_neumann(z, {1e-13, 0}));
        }
        for (std::size_t e = 0; e < ne; ++e) {
            FaceField me_phi = face_product(fl.m_phi, eta[e]);
            FaceField me_psi = face_product(fl.m_psi, eta[e]);
            run.weak.lhs_phi[e] += hs * face_inner(fl.j_phi, eta[e]);
            run.weak.lhs_psi[e] += hs * face_inner(fl.j_psi, eta[e]);
            double rp = face_inner(gpot_phi, me_phi) + l2_inner(lap_phi, div_face(me_phi));
            if (rs.sigma2 > 0.0) rp += rs.sigma2 * face_inner(gnl, me_phi);
            run.weak.rhs_phi[e] += hs * rp;
            run.weak.rhs_psi[e] +=
                hs * (face_inner(gpot_psi, me_psi) + rs.beta * l2_inner(lap_psi, div_face(me_psi)));
        }

        cur.time = n.time;
        cur.energy = r.report.energy_after;
        cur.entropy_phi = entropy_integral(n.phi, *rs.entropy_phi);
        cur.entropy_psi = entropy_integral(n.psi, *rs.entropy_psi);
        cur.cum_lap_phi_sq += hs * l2_inner(lap_phi, lap_phi);
        cur.cum_lap_psi_sq += hs * l2_inner(lap_psi, lap_psi);
        cur.cum_fpp_grad_phi += hs * fpp_grad(n.phi, *rs.potential_phi);
        cur.cum_fpp_grad_psi += hs * fpp_grad(n.psi, *rs.potential_psi);
        cur.eps_ceps2_flnphi += hs * w * fln_sq(n.phi, *reg.f_ln_phi);
        cur.eps_ceps2_flnpsi += hs * w * fln_sq(n.psi, *reg.f_ln_psi);
        cur.cum_jhat_phi_sq += jp;
        cur.cum_jhat_psi_sq += js;
        run.series.push_back(cur);

        if (run.steps % plan.flux_stride == 0) run.flux_history.emplace_back(n.time, std::move(fl));
        ++run.steps;
        if (on_step) on_step(n, r.report);
        s = n;
    }
    run.final_state = s;
    return run;
}

ContinuationReport continuation_report(const std::vector<EpsilonRun>& runs) {
    ContinuationReport rep;
    for (const EpsilonRun& r : runs) {
        SummaryRow row;
        row.epsilon = r.epsilon;
        row.c_eps = r.c_eps;
        row.sup_energy = -std::numeric_limits<double>::infinity();
        for (const EntropySample& e : r.series) {
            row.sup_energy = std::max(row.sup_energy, e.energy);
            row.max_entropy_phi = std::max(row.max_entropy_phi, e.entropy_phi);
            row.max_entropy_psi = std::max(row.max_entropy_psi, e.entropy_psi);
        }
        const EntropySample& last = r.series.back();
        row.cum_jhat_phi_sq = last.cum_jhat_phi_sq;
        row.cum_jhat_psi_sq = last.cum_jhat_psi_sq;
        row.cum_lap_phi_sq = last.cum_lap_phi_sq;
        row.cum_lap_psi_sq = last.cum_lap_psi_sq;
        row.eps_ceps2_flnphi = last.eps_ceps2_flnphi;
        row.eps_ceps2_flnpsi = last.eps_ceps2_flnpsi;
        rep.rows.push_back(row);
    }
    for (std::size_t k = 1; k < rep.rows.size(); ++k)
        if (rep.rows[k].c_eps > rep.rows[k - 1].c_eps) rep.c_eps_nonincreasing = false;

    const std::pair<const char*, double SummaryRow::*> cols[] = {
        {"sup_energy", &SummaryRow::sup_energy},
        {"cum_jhat_phi_sq", &SummaryRow::cum_jhat_phi_sq},
        {"cum_jhat_psi_sq", &SummaryRow::cum_jhat_psi_sq},
        {"cum_lap_phi_sq", &SummaryRow::cum_lap_phi_sq},
        {"cum_lap_psi_sq", &SummaryRow::cum_lap_psi_sq},
        {"eps_ceps2_flnphi", &SummaryRow::eps_ceps2_flnphi},
        {"eps_ceps2_flnpsi", &SummaryRow::eps_ceps2_flnpsi},
        {"max_entropy_phi", &SummaryRow::max_entropy_phi},
        {"max_entropy_psi", &SummaryRow::max_entropy_psi},
    };
    if (rep.rows.empty()) return rep;
    for (const auto& [name, field] : cols) {
        std::vector<double> v;
        for (const SummaryRow& r : rep.rows) v.push_back(std::abs(r.*field));
        double med = median(v);
        bool bad = false;
        for (double x : v)
            if (!std::isfinite(x)) bad = true;
        if (bad || v.back() > 10.0 * med) rep.blowup.emplace_back(name);
    }
    return rep;
}

void write_summary(const ContinuationReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ContinuationError("cannot open summary for writing: " + path);
    std::fprintf(f,
                 "epsilon,c_eps,sup_energy,cum_jhat_phi_sq,cum_jhat_psi_sq,cum_lap_phi_sq,"
                 "cum_lap_psi_sq,eps_ceps2_flnphi,eps_ceps2_flnpsi,max_entropy_phi,max_entropy_psi\n");
    for (const SummaryRow& r : report.rows)
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     r.epsilon, r.c_eps, r.sup_energy, r.cum_jhat_phi_sq, r.cum_jhat_psi_sq,
                     r.cum_lap_phi_sq, r.cum_lap_psi_sq, r.eps_ceps2_flnphi, r.eps_ceps2_flnpsi,
                     r.max_entropy_phi, r.max_entropy_psi);
    if (std::fclose(f) != 0) throw ContinuationError("write failed: " + path);
}

}  // namespace nsch
