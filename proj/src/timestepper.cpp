#include "nsch/timestepper.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace nsch {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;
using Vec = Eigen::VectorXd;

double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Factorization whose symbolic analysis is computed once per sparsity pattern. A stale
// numeric factorization is kept between calls and reused as a preconditioner.
struct LuCache {
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    bool factored = false;
    int factorizations = 0;

    void factor(const SpMat& a) {
        if (!analyzed) {
            lu.analyzePattern(a);
            analyzed = true;
        }
        lu.factorize(a);
        if (lu.info() != Eigen::Success) {
            factored = false;
            throw StepFailure("sparse LU factorization failed: " + lu.lastErrorMessage());
        }
        factored = true;
        ++factorizations;
    }

    // Solves a x = b by iterative refinement on the stored factors, refactoring once when
    // the refinement contracts poorly. Returns the number of back-substitutions.
    int solve(const SpMat& a, const Vec& b, Vec& x, double rtol) {
        if (!factored) factor(a);
        const double bn = std::max(max_abs(b), 1e-300);
        bool fresh = false;
        int subs = 0;
        while (true) {
            x = lu.solve(b);
            ++subs;
            Vec r = b - a * x;
            double rn = max_abs(r);
            bool ok = x.allFinite();
            for (int it = 0; ok && it < 20 && rn > rtol * bn; ++it) {
                x += lu.solve(r);
                ++subs;
                Vec r2 = b - a * x;
                double rn2 = max_abs(r2);
                if (!(rn2 <= 0.25 * rn)) {
                    ok = rn2 <= rtol * bn;
                    rn = rn2;
                    break;
                }
                r = std::move(r2);
                rn = rn2;
            }
            if (ok && x.allFinite() && rn <= rtol * bn) return subs;
            if (fresh) {
                // A fresh factorization at round-off accuracy is accepted as is.
                if (x.allFinite() && rn <= 1e3 * rtol * bn) return subs;
                throw StepFailure("linear solve did not reach its tolerance");
            }
            factor(a);
            fresh = true;
        }
    }
};

// Triplets of scale * div_h(c grad_h .) acting on the block at (row0, col0).
void add_flux_laplacian(std::vector<Trip>& t, const Grid2D& g, const FaceField& c, double scale,
                        int row0, int col0) {
    const int nx = g.nx, ny = g.ny;
    const double ax = scale / (g.dx() * g.dx()), ay = scale / (g.dy() * g.dy());
    auto pair = [&](int a, int b, double w) {
        t.emplace_back(row0 + a, col0 + b, w);
        t.emplace_back(row0 + a, col0 + a, -w);
        t.emplace_back(row0 + b, col0 + a, w);
        t.emplace_back(row0 + b, col0 + b, -w);
    };
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx; ++i) pair(j * nx + i - 1, j * nx + i, ax * c.xf(i, j));
    for (int j = 1; j < ny; ++j)
        for (int i = 0; i < nx; ++i) pair((j - 1) * nx + i, j * nx + i, ay * c.yf(i, j));
}

FaceField unit_faces(const Grid2D& g) {
    FaceField c(g);
    std::fill(c.x.begin(), c.x.end(), 1.0);
    std::fill(c.y.begin(), c.y.end(), 1.0);
    return c;
}

ScalarField flux_divergence(const ScalarField& mu, const FaceField& m) {
    return div_face(face_product(m, grad_cc(mu)));
}

// Largest step fraction keeping s + a ds at least 5% of the current distance from the bounds.
double fraction_to_boundary(const ScalarField& s, const Vec& ds, double lo, double hi) {
    double a = 1.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        double d = ds[static_cast<Eigen::Index>(k)];
        if (d > 0.0) a = std::min(a, 0.95 * (hi - s[k]) / d);
        if (d < 0.0) a = std::min(a, 0.95 * (lo - s[k]) / d);
    }
    return a;
}

// Inputs of one Cahn-Hilliard block: find (f, mu) with
//   f - f_old + h adv + src = h div(M grad mu),
//   mu = -kappa Delta f + sigma2 N(f - target) + F'(f) + coupling(f).
struct BlockProblem {
    const ScalarField* f_old = nullptr;
    const ScalarField* f_guess = nullptr;
    const ScalarField* mu_guess = nullptr;
    ScalarField adv;  // advective term, not multiplied by h
    ScalarField src;  // already multiplied by h
    FaceField mob;
    const Potential* pot = nullptr;
    double kappa = 1.0;
    double sigma2 = 0.0;
    double target_mean = 0.0;
    double lo = -1.0, hi = 1.0;
    std::function<Derivs(std::size_t, double)> coupling;  // value and d/ds at cell k
};

}  // namespace

bool StepReport::audit_passes(double tol) const {
    return std::isfinite(inequality_residual) &&
           inequality_residual <= tol * (std::abs(energy_before) + 1.0);
}

void validate_solver(const SolverConfig& c, const ModelSpec& spec) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ModelError(std::string("solver: ") + name + " must be positive");
        }
    };
    positive(c.h, "h");
    positive(c.picard_tol, "picard_tol");
    positive(c.newton_tol, "newton_tol");
    positive(c.energy_audit_tol, "energy_audit_tol");
    positive(c.h_min, "h_min");
    positive(c.cg_tol, "cg_tol");
    if (c.picard_max < 1 || c.newton_max < 1) {
        throw ModelError("solver: picard_max and newton_max must be at least 1");
    }
    if (c.cg_max_iter < 0) throw ModelError("solver: cg_max_iter must be >= 0");
    if (!(c.h_backoff > 0.0 && c.h_backoff < 1.0)) {
        throw ModelError("solver: h_backoff must lie in (0,1)");
    }
    if (c.h >= 1.0) throw ModelError("solver: h must lie in (0,1)");
    if (c.h_min > c.h) throw ModelError("solver: h_min exceeds h");
    const double s = spec.sigma1.sup();
    if (c.h * s > 0.5) {
        throw ModelError("solver: time step smallness violated, need h * sigma1* <= 1/2");
    }
    if (c.h * s * std::abs(spec.gamma()) > 0.5 * std::min(spec.rho1, spec.rho2)) {
        throw ModelError(
            "solver: time step smallness violated, need h * sigma1* * |gamma| <= min(rho1, rho2)/2");
    }
}

ChemicalPotentials chemical_potential(const ScalarField& phi, const ScalarField& psi,
                                      const ScalarField& phi_old, const ScalarField& psi_old,
                                      const ModelSpec& spec) {
    ChemicalPotentials r;
    r.mu_phi = neumann_laplacian(phi);
    r.mu_phi *= -1.0;
    r.mu_psi = neumann_laplacian(psi);
    r.mu_psi *= -spec.beta;
    if (spec.sigma2 > 0.0) {
        ScalarField z = phi;
        double m = z.mean();
        for (double& v : z.data()) v -= m;
        ScalarField n = inverse_neumann(z, {1e-13, 0});
        for (std::size_t k = 0; k < n.size(); ++k) r.mu_phi[k] += spec.sigma2 * n[k];
    }
    for (std::size_t k = 0; k < phi.size(); ++k) {
        r.mu_phi[k] += spec.potential_phi->eval(phi[k]).d1 +
                       spec.coupling.secant_phi(phi[k], phi_old[k], psi[k]);
        r.mu_psi[k] += spec.potential_psi->eval(psi[k]).d1 +
                       spec.coupling.secant_psi(phi_old[k], psi[k], psi_old[k]);
    }
    return r;
}

SimState initial_state(const StaggeredVelocity& u, const ScalarField& phi, const ScalarField& psi,
                       const ModelSpec& spec, double time) {
    SimState s;
    s.time = time;
    s.u = u;
    s.u.enforce_no_slip();
    s.phi = phi;
    s.psi = psi;
    ChemicalPotentials mu = chemical_potential(phi, psi, phi, psi, spec);
    s.mu_phi = std::move(mu.mu_phi);
    s.mu_psi = std::move(mu.mu_psi);
    s.pressure = ScalarField(phi.grid());
    return s;
}

StepReport energy_audit(const SimState& old, const SimState& next, const ModelSpec& spec,
                        double h) {
    StepReport r;
    r.h = h;
    r.before = total_energy(old.u, old.phi, old.psi, spec);
    r.after = total_energy(next.u, next.phi, next.psi, spec);
    r.energy_before = r.before.total;
    r.energy_after = r.after.total;

    r.viscous = h * symmetric_gradient_norm(next.u, viscosity_field(old.phi, spec));
    r.diss_phi = h * weighted_face_square(face_mobility(old.phi, *spec.mobility_phi),
                                          grad_cc(next.mu_phi));
    r.diss_psi = h * weighted_face_square(face_mobility(old.psi, *spec.mobility_psi),
                                          grad_cc(next.mu_psi));
    r.dissipation = r.viscous + r.diss_phi + r.diss_psi;

    const Grid2D& g = old.grid();
    const double vol = g.cell_volume();
    ScalarField sig = map_field(old.phi, [&](double s) { return spec.sigma1(s); });
    r.mean_sigma1 = sig.mean();
    const double drift = old.phi.mean() - spec.c;
    if (spec.sigma1.sup() > 0.0) {
        double cell = 0.0;
        for (std::size_t k = 0; k < sig.size(); ++k) cell += sig[k] * next.mu_phi[k];
        double face = weighted_face_square(face_average(sig), next.u);
        r.oono_source = h * drift * (cell * vol - 0.5 * spec.gamma() * face);
    }

    StaggeredVelocity du = next.u;
    du -= old.u;
    r.kinetic_defect =
        0.5 * weighted_face_square(face_average(density_field(old.phi, spec)), du);
    FaceField gp = grad_cc(next.phi - old.phi), gs = grad_cc(next.psi - old.psi);
    r.grad_phi_defect = 0.5 * face_inner(gp, gp);
    r.grad_psi_defect = 0.5 * spec.beta * face_inner(gs, gs);
    if (spec.sigma2 > 0.0) {
        double s = star_norm(next.phi - old.phi, {1e-13, 0});
        r.star_defect = 0.5 * spec.sigma2 * s * s;
    }
    r.extra_nonneg = r.kinetic_defect + r.grad_phi_defect + r.grad_psi_defect + r.star_defect;
    r.inequality_residual =
        r.energy_after + r.dissipation + r.oono_source + r.extra_nonneg - r.energy_before;
    r.mean_phi = next.phi.mean();
    r.mean_psi = next.psi.mean();
    return r;
}

// ---------------------------------------------------------------------------------------------

struct Stepper::Impl {
    ModelSpec spec;
    SolverConfig cfg;
    Grid2D grid;
    LuCache lu_phi, lu_psi, lu_mom;
    std::vector<StrainTerm> strain;
    std::vector<int> face_unknown;  // [x faces, y faces] -> momentum unknown or -1
    int n_vel = 0;

    Impl(ModelSpec s, SolverConfig c, const Grid2D& g)
        : spec(std::move(s)), cfg(c), grid(g), strain(strain_terms(g)) {
        const int nx = g.nx, ny = g.ny;
        face_unknown.assign(static_cast<std::size_t>(g.x_faces() + g.y_faces()), -1);
        for (int j = 0; j < ny; ++j)
            for (int i = 1; i < nx; ++i) face_unknown[j * (nx + 1) + i] = n_vel++;
        for (int j = 1; j < ny; ++j)
            for (int i = 0; i < nx; ++i) face_unknown[g.x_faces() + j * nx + i] = n_vel++;
    }

    int xu(int i, int j) const { return face_unknown[j * (grid.nx + 1) + i]; }
    int yu(int i, int j) const { return face_unknown[grid.x_faces() + j * grid.nx + i]; }

    struct BlockResult {
        ScalarField f, mu;
        int iters = 0;
    };

    BlockResult solve_block(const BlockProblem& bp, double h, LuCache& lu) {
        const Grid2D& g = grid;
        const int n = g.cells();
        const bool nonlocal = bp.sigma2 > 0.0;
        const int nb = nonlocal ? 3 : 2;
        const ScalarField& f_old = *bp.f_old;

        ScalarField f = *bp.f_guess, mu = *bp.mu_guess, w(g);
        if (nonlocal) {
            // Start from the nonlocal part consistent with mu_guess: mu holds it up to a constant.
            ScalarField z = f;
            for (double& v : z.data()) v -= bp.target_mean;
            w = inverse_neumann(z, {1e-12, 0});
        }
        const FaceField ones = unit_faces(g);

        Vec res(nb * n);
        std::vector<Derivs> fd(static_cast<std::size_t>(n)), cd(static_cast<std::size_t>(n));
        auto residual = [&]() {
            ScalarField lm = flux_divergence(mu, bp.mob);
            ScalarField lf = neumann_laplacian(f);
            for (int k = 0; k < n; ++k) {
                std::size_t q = static_cast<std::size_t>(k);
                fd[q] = bp.pot->eval(f[q]);
                cd[q] = bp.coupling(q, f[q]);
                res[k] = f[q] - f_old[q] + h * bp.adv[q] + bp.src[q] - h * lm[q];
                res[n + k] = mu[q] + bp.kappa * lf[q] - fd[q].d1 - cd[q].value;
                if (nonlocal) res[n + k] -= bp.sigma2 * w[q];
            }
            if (nonlocal) {
                ScalarField lw = neumann_laplacian(w);
                for (int k = 1; k < n; ++k) {
                    std::size_t q = static_cast<std::size_t>(k);
                    res[2 * n + k] = -lw[q] - (f[q] - bp.target_mean);
                }
                res[2 * n] = w[0];
            }
        };
        auto norms = [&](double& r1, double& r2) {
            r1 = max_abs(res.segment(0, n)) / h;
            r2 = max_abs(res.segment(n, n));
            if (nonlocal) r2 = std::max(r2, max_abs(res.segment(2 * n, n)));
        };

        // Constant part of the Jacobian.
        std::vector<Trip> base;
        for (int k = 0; k < n; ++k) {
            base.emplace_back(k, k, 1.0);
            base.emplace_back(n + k, n + k, 1.0);
        }
        add_flux_laplacian(base, g, bp.mob, -h, 0, n);
        add_flux_laplacian(base, g, ones, bp.kappa, n, 0);
        if (nonlocal) {
            for (int k = 0; k < n; ++k) base.emplace_back(n + k, 2 * n + k, -bp.sigma2);
            std::vector<Trip> lap;
            add_flux_laplacian(lap, g, ones, -1.0, 2 * n, 2 * n);
            for (const Trip& t : lap)
                if (t.row() != 2 * n) base.push_back(t);
            for (int k = 1; k < n; ++k) base.emplace_back(2 * n + k, k, -1.0);
            base.emplace_back(2 * n, 2 * n, 1.0);
        }

        residual();
        double r1 = 0.0, r2 = 0.0;
        norms(r1, r2);
        double merit = std::max(r1, r2);
        // Chord iterations on the stored factors; refactor when they stop contracting.
        bool reuse = lu.factored;
        int it = 0;
        SpMat jac(nb * n, nb * n);
        while (true) {
            if (it >= cfg.newton_max) {
                std::ostringstream os;
                os << "Newton did not converge in " << cfg.newton_max << " iterations (" << r1
                   << ", " << r2 << ")";
                throw StepFailure(os.str());
            }
            bool fresh = false;
            if (!reuse) {
                std::vector<Trip> t = base;
                for (int k = 0; k < n; ++k) {
                    std::size_t q = static_cast<std::size_t>(k);
                    t.emplace_back(n + k, k, -(fd[q].d2 + cd[q].d1));
                }
                jac.setFromTriplets(t.begin(), t.end());
                lu.factor(jac);
                fresh = true;
                reuse = true;
            }
            Vec dx = lu.lu.solve(-res);
            if (!dx.allFinite()) {
                if (fresh) throw StepFailure("Newton update is not finite");
                reuse = false;
                continue;
            }
            double a = fraction_to_boundary(f, dx.segment(0, n), bp.lo, bp.hi);
            if (!(a > 1e-10)) {
                if (fresh) throw StepFailure("Newton step damped to zero at the bounds");
                reuse = false;
                continue;
            }
            ScalarField f0 = f, mu0 = mu, w0 = w;
            Vec res0 = res;
            std::vector<Derivs> fd0 = fd, cd0 = cd;
            for (int k = 0; k < n; ++k) {
                std::size_t q = static_cast<std::size_t>(k);
                f[q] += a * dx[k];
                mu[q] += a * dx[n + k];
                if (nonlocal) w[q] += a * dx[2 * n + k];
            }
            ++it;
            residual();
            norms(r1, r2);
            double next = std::max(r1, r2);
            double tol = cfg.newton_tol * (1.0 + mu.max_abs());
            if (r1 <= tol && r2 <= tol) break;
            if (!fresh && !(next <= 0.25 * merit)) {
                reuse = false;
                if (!(next < merit)) {
                    f = std::move(f0);
                    mu = std::move(mu0);
                    w = std::move(w0);
                    res = std::move(res0);
                    fd = std::move(fd0);
                    cd = std::move(cd0);
                    norms(r1, r2);
                    continue;
                }
            }
            merit = next;
            // Round-off floor: a full step that no longer moves the iterate.
            if (a == 1.0 && max_abs(dx) <= 1e-14 * (1.0 + mu.max_abs()) && r1 <= 1e3 * tol &&
                r2 <= 1e3 * tol)
                break;
        }
        if (nonlocal) {
            double m = w.mean();
            for (double& v : mu.data()) v -= bp.sigma2 * m;
        }
        return {std::move(f), std::move(mu), it};
    }

    ChResult ch_subsolve(const StaggeredVelocity& u, const SimState& old, double h,
                         const ChResult* guess = nullptr) {
        const Grid2D& g = grid;
        ChResult r;
        const double drift = old.phi.mean() - spec.c;

        BlockProblem ps;
        ps.f_old = &old.psi;
        ps.f_guess = guess ? &guess->psi : &old.psi;
        ps.mu_guess = guess ? &guess->mu_psi : &old.mu_psi;
        ps.adv = advect(u, old.psi, cfg.advection);
        ps.src = ScalarField(g);
        ps.mob = face_mobility(old.psi, *spec.mobility_psi);
        ps.pot = spec.potential_psi.get();
        ps.kappa = spec.beta;
        ps.lo = 0.0;
        ps.hi = 1.0;
        ps.coupling = [&](std::size_t k, double s) {
            Derivs d;
            d.value = spec.coupling.secant_psi(old.phi[k], s, old.psi[k]);
            d.d1 = spec.coupling.secant_psi_da(old.phi[k], s, old.psi[k]);
            return d;
        };
        BlockResult bs = solve_block(ps, h, lu_psi);
        r.psi = std::move(bs.f);
        r.mu_psi = std::move(bs.mu);

        BlockProblem pp;
        pp.f_old = &old.phi;
        pp.f_guess = guess ? &guess->phi : &old.phi;
        pp.mu_guess = guess ? &guess->mu_phi : &old.mu_phi;
        pp.adv = advect(u, old.phi, cfg.advection);
        ScalarField sig = map_field(old.phi, [&](double s) { return spec.sigma1(s); });
        pp.src = sig;
        pp.src *= h * drift;
        pp.mob = face_mobility(old.phi, *spec.mobility_phi);
        pp.pot = spec.potential_phi.get();
        pp.kappa = 1.0;
        pp.sigma2 = spec.sigma2;
        pp.target_mean = old.phi.mean() - h * drift * sig.mean();
        pp.lo = -1.0;
        pp.hi = 1.0;
        const ScalarField& psi_new = r.psi;
        pp.coupling = [&](std::size_t k, double s) {
            Derivs d;
            d.value = spec.coupling.secant_phi(s, old.phi[k], psi_new[k]);
            d.d1 = spec.coupling.secant_phi_da(s, old.phi[k], psi_new[k]);
            return d;
        };
        BlockResult bp = solve_block(pp, h, lu_phi);
        r.phi = std::move(bp.f);
        r.mu_phi = std::move(bp.mu);
        r.newton_iters = bs.iters + bp.iters;
        return r;
    }

    MomentumResult momentum_subsolve(const SimState& old, const StaggeredVelocity& w,
                                     const ScalarField& phi_new, const ScalarField& mu_phi,
                                     const ScalarField& mu_psi, double h) {
        const Grid2D& g = grid;
        const int nx = g.nx, ny = g.ny, n = g.cells();
        const int np = n_vel + n;
        const double dx = g.dx(), dy = g.dy(), vol = g.cell_volume();
        const double drift = old.phi.mean() - spec.c;
        const double gam = spec.gamma();

        FaceField rho_new = face_average(density_field(phi_new, spec));
        FaceField rho_old = face_average(density_field(old.phi, spec));
        FaceField sig = face_average(map_field(old.phi, [&](double s) { return spec.sigma1(s); }));
        FaceField phi_f = face_average(old.phi), psi_f = face_average(old.psi);
        FaceField gmu_phi = grad_cc(mu_phi), gmu_psi = grad_cc(mu_psi);

        // Convecting mass flux M = rho^k w + J with J = -gamma m(phi^k) grad mu_phi.
        FaceField mflux = face_product(rho_old, w);
        if (gam != 0.0) {
            FaceField jf = face_product(face_mobility(old.phi, *spec.mobility_phi), gmu_phi);
            jf *= -gam;
            mflux += jf;
        }

        std::vector<Trip> t;
        t.reserve(static_cast<std::size_t>(20 * n_vel + 4 * n));
        Vec rhs = Vec::Zero(np);

        auto face_row = [&](int row, double rn, double ro, double s, double uo, double fp,
                            double fs, double gmp, double gms) {
            t.emplace_back(row, row, 0.5 * (rn + ro) / h - 0.5 * gam * s * drift);
            rhs[row] = ro * uo / h - fp * gmp - fs * gms;
        };
        // Skew convection: row gets F / (2V) times the neighbour, ghost neighbours reflect.
        auto conv = [&](int row, int nb, double flux) {
            if (nb >= 0) t.emplace_back(row, nb, 0.5 * flux / vol);
        };
        auto conv_ghost = [&](int row, double flux) {
            t.emplace_back(row, row, -0.5 * flux / vol);
        };

        for (int j = 0; j < ny; ++j)
            for (int i = 1; i < nx; ++i) {
                int row = xu(i, j);
                face_row(row, rho_new.xf(i, j), rho_old.xf(i, j), sig.xf(i, j), old.u.xf(i, j),
                         phi_f.xf(i, j), psi_f.xf(i, j), gmu_phi.xf(i, j), gmu_psi.xf(i, j));
                double fe = dy * 0.5 * (mflux.xf(i, j) + mflux.xf(i + 1, j));
                double fw = -dy * 0.5 * (mflux.xf(i - 1, j) + mflux.xf(i, j));
                double fn = dx * 0.5 * (mflux.yf(i - 1, j + 1) + mflux.yf(i, j + 1));
                double fs = -dx * 0.5 * (mflux.yf(i - 1, j) + mflux.yf(i, j));
                conv(row, xu(i + 1, j), fe);
                conv(row, xu(i - 1, j), fw);
                if (j + 1 < ny) conv(row, xu(i, j + 1), fn); else conv_ghost(row, fn);
                if (j > 0) conv(row, xu(i, j - 1), fs); else conv_ghost(row, fs);
                t.emplace_back(row, n_vel + j * nx + i, 1.0 / dx);
                t.emplace_back(row, n_vel + j * nx + i - 1, -1.0 / dx);
            }
        for (int j = 1; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                int row = yu(i, j);
                face_row(row, rho_new.yf(i, j), rho_old.yf(i, j), sig.yf(i, j), old.u.yf(i, j),
                         phi_f.yf(i, j), psi_f.yf(i, j), gmu_phi.yf(i, j), gmu_psi.yf(i, j));
                double fe = dy * 0.5 * (mflux.xf(i + 1, j - 1) + mflux.xf(i + 1, j));
                double fw = -dy * 0.5 * (mflux.xf(i, j - 1) + mflux.xf(i, j));
                double fn = dx * 0.5 * (mflux.yf(i, j) + mflux.yf(i, j + 1));
                double fs = -dx * 0.5 * (mflux.yf(i, j - 1) + mflux.yf(i, j));
                if (i + 1 < nx) conv(row, yu(i + 1, j), fe); else conv_ghost(row, fe);
                if (i > 0) conv(row, yu(i - 1, j), fw); else conv_ghost(row, fw);
                conv(row, yu(i, j + 1), fn);
                conv(row, yu(i, j - 1), fs);
                t.emplace_back(row, n_vel + j * nx + i, 1.0 / dy);
                t.emplace_back(row, n_vel + (j - 1) * nx + i, -1.0 / dy);
            }

        // Viscous operator V^-1 S^T W S with nu(phi^k).
        ScalarField nu = viscosity_field(old.phi, spec);
        for (const StrainTerm& st : strain) {
            double wgt = st.weight * strain_viscosity(st, nu) / vol;
            for (int a = 0; a < st.n; ++a) {
                int ra = face_unknown[st.idx[a]];
                if (ra < 0) continue;
                for (int b = 0; b < st.n; ++b) {
                    int cb = face_unknown[st.idx[b]];
                    if (cb < 0) continue;
                    t.emplace_back(ra, cb, wgt * st.coef[a] * st.coef[b]);
                }
            }
        }

        // Continuity rows -div_h u = 0; the first cell pins the pressure instead.
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                int row = n_vel + j * nx + i;
                if (row == n_vel) {
                    t.emplace_back(row, row, 1.0);
                    continue;
                }
                if (i + 1 < nx) t.emplace_back(row, xu(i + 1, j), -1.0 / dx);
                if (i > 0) t.emplace_back(row, xu(i, j), 1.0 / dx);
                if (j + 1 < ny) t.emplace_back(row, yu(i, j + 1), -1.0 / dy);
                if (j > 0) t.emplace_back(row, yu(i, j), 1.0 / dy);
            }

        SpMat a(np, np);
        a.setFromTriplets(t.begin(), t.end());
        Vec x;
        int subs = lu_mom.solve(a, rhs, x, 1e-13);

        MomentumResult r;
        r.u = StaggeredVelocity(g);
        for (int k = 0; k < g.x_faces() + g.y_faces(); ++k) {
            int id = face_unknown[k];
            if (id < 0) continue;
            if (k < g.x_faces()) r.u.x[k] = x[id];
            else r.u.y[k - g.x_faces()] = x[id];
        }
        r.pressure = ScalarField(g);
        for (int k = 0; k < n; ++k) {
            std::size_t q = static_cast<std::size_t>(k);
            r.pressure[q] = x[n_vel + k] + mu_phi[q] * old.phi[q] + mu_psi[q] * old.psi[q];
        }
        double pm = r.pressure.mean();
        for (double& v : r.pressure.data()) v -= pm;
        r.iterations = subs;

        double div = div_face(r.u).max_abs();
        if (div > 1e-9 * std::max(1.0, r.u.max_abs() / std::min(dx, dy))) {
            std::ostringstream os;
            os << "momentum solve left divergence " << div;
            throw StepFailure(os.str());
        }
        return r;
    }

    StepResult attempt(const SimState& old, double h) {
        StaggeredVelocity w = old.u;
        ChResult ch;
        MomentumResult mom;
        int newton = 0, solves = 0, it = 0;
        double upd = 0.0;
        bool converged = false;
        while (it < cfg.picard_max) {
            ++it;
            ch = ch_subsolve(w, old, h, it > 1 ? &ch : nullptr);
            newton += ch.newton_iters;
            mom = momentum_subsolve(old, w, ch.phi, ch.mu_phi, ch.mu_psi, h);
            solves += mom.iterations;
            StaggeredVelocity d = mom.u;
            d -= w;
            upd = d.max_abs();
            w = mom.u;
            if (upd <= cfg.picard_tol * (1.0 + mom.u.max_abs())) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            std::ostringstream os;
            os << "Picard iteration stalled after " << it << " sweeps, update " << upd;
            throw StepFailure(os.str());
        }

        SimState next;
        next.time = old.time + h;
        next.u = std::move(mom.u);
        next.phi = std::move(ch.phi);
        next.psi = std::move(ch.psi);
        next.mu_phi = std::move(ch.mu_phi);
        next.mu_psi = std::move(ch.mu_psi);
        next.pressure = std::move(mom.pressure);
        if (!(next.phi.min() > -1.0 && next.phi.max() < 1.0 && next.psi.min() > 0.0 &&
              next.psi.max() < 1.0)) {
            throw StepFailure("phase field left its physical interval");
        }

        StepReport rep = energy_audit(old, next, spec, h);
        rep.newton_iters_ch = newton;
        rep.picard_iters_outer = it;
        rep.cg_iters_total = solves;
        rep.picard_update = upd;
        if (!rep.audit_passes(cfg.energy_audit_tol)) {
            std::ostringstream os;
            os.precision(17);
            os << "energy audit failed: residual " << rep.inequality_residual << " at h " << h;
            throw StepFailure(os.str());
        }
        return {std::move(next), rep};
    }
};

Stepper::Stepper(ModelSpec spec, SolverConfig cfg, const Grid2D& grid)
    : impl_(std::make_unique<Impl>(std::move(spec), cfg, grid)) {}
Stepper::~Stepper() = default;
Stepper::Stepper(Stepper&&) noexcept = default;
Stepper& Stepper::operator=(Stepper&&) noexcept = default;

const ModelSpec& Stepper::spec() const { return impl_->spec; }
const SolverConfig& Stepper::config() const { return impl_->cfg; }

ChResult Stepper::ch_subsolve(const StaggeredVelocity& u, const SimState& old, double h) {
    return impl_->ch_subsolve(u, old, h);
}

MomentumResult Stepper::momentum_subsolve(const SimState& old, const StaggeredVelocity& w,
                                          const ScalarField& phi_new, const ScalarField& mu_phi,
                                          const ScalarField& mu_psi, double h) {
    return impl_->momentum_subsolve(old, w, phi_new, mu_phi, mu_psi, h);
}

StepResult Stepper::attempt(const SimState& old, double h) { return impl_->attempt(old, h); }

StepResult Stepper::step(const SimState& old, double h_override) {
    const SolverConfig& c = impl_->cfg;
    double h = h_override > 0.0 ? h_override : c.h;
    int attempts = 0;
    std::string last;
    while (true) {
        ++attempts;
        try {
            StepResult r = impl_->attempt(old, h);
            r.report.attempts = attempts;
            return r;
        } catch (const StepFailure& e) {
            last = e.what();
        } catch (const SolverError& e) {
            last = e.what();
        } catch (const SingularArgument& e) {
            last = e.what();
        }
        h *= c.h_backoff;
        if (h < c.h_min) {
            StepReport rep;
            rep.h = h / c.h_backoff;
            rep.attempts = attempts;
            throw StepError("time step fell below h_min at t = " + std::to_string(old.time) +
                                "; last failure: " + last,
                            rep);
        }
    }
}

ChResult ch_subsolve(const StaggeredVelocity& u, const SimState& old, const ModelSpec& spec,
                     const SolverConfig& cfg) {
    Stepper s(spec, cfg, old.grid());
    return s.ch_subsolve(u, old, cfg.h);
}

MomentumResult momentum_subsolve(const SimState& old, const ScalarField& phi_new,
                                 const ScalarField& mu_phi, const ScalarField& mu_psi,
                                 const ModelSpec& spec, const SolverConfig& cfg) {
    Stepper s(spec, cfg, old.grid());
    return s.momentum_subsolve(old, old.u, phi_new, mu_phi, mu_psi, cfg.h);
}

StepResult step(const SimState& old, const ModelSpec& spec, const SolverConfig& cfg) {
    Stepper s(spec, cfg, old.grid());
    return s.step(old);
}

}  // namespace nsch
