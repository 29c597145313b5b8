#include "nsch/simulation.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "nsch/continuation.hpp"
#include "nsch/diagnostics.hpp"

namespace nsch {

namespace fs = std::filesystem;

namespace {

constexpr double kClip = 0.999;

std::string step_tag(int step) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", step);
    return buf;
}

ScalarField checked_read(const std::string& path, const Grid2D& g, const char* what) {
    ScalarField f;
    try {
        f = read_snapshot(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("scenario.") + what + ": " + e.what());
    }
    const Grid2D& h = f.grid();
    if (h.nx != g.nx || h.ny != g.ny || h.lx != g.lx || h.ly != g.ly)
        throw ConfigError(std::string("scenario.") + what + ": snapshot is " + std::to_string(h.nx) +
                          "x" + std::to_string(h.ny) + ", grid is " + std::to_string(g.nx) + "x" +
                          std::to_string(g.ny) + " (or domain lengths differ)");
    return f;
}

class Artifacts {
  public:
    Artifacts(fs::path dir, RunOutcome& out) : dir_(std::move(dir)), out_(out) {}

    std::string path(const std::string& name) {
        out_.artifacts.push_back(name);
        return (dir_ / name).string();
    }

    void snapshot(const std::string& prefix, const SimState& s) {
        write_snapshot(path(prefix + "_phi.bin"), s.phi);
        write_snapshot(path(prefix + "_psi.bin"), s.psi);
        write_snapshot(path(prefix + "_mu_phi.bin"), s.mu_phi);
        write_snapshot(path(prefix + "_mu_psi.bin"), s.mu_psi);
        write_snapshot(path(prefix + "_p.bin"), s.pressure);
        std::string ux = path(prefix + "_ux.bin");
        write_velocity_snapshot(ux, path(prefix + "_uy.bin"), s.u);
    }

    void faces(const std::string& prefix, const FaceField& f) {
        std::string x = path(prefix + "_x.bin");
        write_velocity_snapshot(x, path(prefix + "_y.bin"), StaggeredVelocity(f));
    }

  private:
    fs::path dir_;
    RunOutcome& out_;
};

bool inside_box(const SimState& s) {
    return s.phi.min() > -1.0 && s.phi.max() < 1.0 && s.psi.min() > 0.0 && s.psi.max() < 1.0;
}

void fail(RunOutcome& out, const std::string& why) {
    if (out.ok) out.failure = why;
    out.ok = false;
}

void run_nondegenerate(const RunConfig& cfg, const ModelSpec& spec, const SimState& init,
                       Artifacts& art, RunOutcome& out, std::ostream* log) {
    LedgerWriter ledger(art.path(cfg.output.ledger));
    std::vector<LedgerRow> rows{ledger_row(init, spec)};
    ledger.append(rows.back());
    art.snapshot("snap_" + step_tag(0), init);

    Stepper st(spec, cfg.solver, init.grid());
    SimState s = init;
    const double t_end = init.time + cfg.t_final;
    int last_snap = 0;
    while (s.time < t_end - 1e-12 * cfg.t_final) {
        StepResult r;
        try {
            r = st.step(s, std::min(cfg.solver.h, t_end - s.time));
        } catch (const StepError& e) {
            fail(out, "step " + std::to_string(out.steps + 1) + " at t=" + std::to_string(s.time) +
                          ": " + e.what());
            break;
        }
        s = std::move(r.state);
        ++out.steps;
        rows.push_back(ledger_row(s, r.report, spec));
        ledger.append(rows.back());
        if (!inside_box(s)) {
            fail(out, "step " + std::to_string(out.steps) + ": phi or psi left the open box");
            break;
        }
        if (cfg.output.snapshot_stride > 0 && out.steps % cfg.output.snapshot_stride == 0) {
            art.snapshot("snap_" + step_tag(out.steps), s);
            last_snap = out.steps;
        }
        if (log && out.steps % 100 == 0)
            *log << "step " << out.steps << " t=" << s.time << " E=" << r.report.energy_after << "\n";
    }
    if (last_snap != out.steps) art.snapshot("snap_" + step_tag(out.steps), s);

    if (rows.size() >= 2) {
        MassLawReport m = mass_laws(rows, spec.c);
        if (m.psi_drift > 1e-10) fail(out, "mean psi drifted by " + std::to_string(m.psi_drift));
        if (m.phi_product_error > 1e-10)
            fail(out, "mean phi departs from the product law by " + std::to_string(m.phi_product_error));
    }
}

void run_continuation(const RunConfig& cfg, const ModelSpec& spec, const SimState& init,
                      Artifacts& art, RunOutcome& out, std::ostream* log) {
    ContinuationPlan plan;
    plan.epsilons = cfg.epsilons.empty() ? default_schedule(spec) : cfg.epsilons;
    plan.t_final = cfg.t_final;
    plan.solver = cfg.solver;
    plan.initial = init;
    plan.flux_stride = cfg.output.flux_stride;
    try {
        validate_plan(plan, spec);
    } catch (const ContinuationError& e) {
        throw ConfigError(e.what());
    }

    std::vector<EpsilonRun> runs;
    for (std::size_t k = 0; k < plan.epsilons.size(); ++k) {
        const double eps = plan.epsilons[k];
        const std::string tag = "eps" + std::to_string(k);
        ModelSpec rs = regularized_spec(spec, eps);
        LedgerWriter ledger(art.path("ledger_" + tag + ".csv"));
        ledger.append(ledger_row(initial_state(init.u, init.phi, init.psi, rs, init.time), rs));
        try {
            runs.push_back(run_one_epsilon(plan, spec, eps, [&](const SimState& s, const StepReport& r) {
                ledger.append(ledger_row(s, r, rs));
            }));
        } catch (const std::exception& e) {
            fail(out, tag + " (epsilon " + std::to_string(eps) + "): " + e.what());
            return;
        }
        const EpsilonRun& run = runs.back();
        out.steps += run.steps;
        art.snapshot(tag + "_final", run.final_state);
        for (std::size_t j = 0; j < run.flux_history.size(); ++j) {
            const FluxFields& f = run.flux_history[j].second;
            std::string p = tag + "_flux_" + step_tag(static_cast<int>(j) * plan.flux_stride + 1);
            art.faces(p + "_jphi", f.j_phi);
            art.faces(p + "_jpsi", f.j_psi);
            art.faces(p + "_jhatphi", f.jhat_phi);
            art.faces(p + "_jhatpsi", f.jhat_psi);
        }
        if (run.max_reduced_residual > cfg.solver.energy_audit_tol)
            fail(out, tag + ": reduced energy inequality violated by " +
                          std::to_string(run.max_reduced_residual));
        if (run.max_sigma1_entropy_excess > 0.0)
            fail(out, tag + ": sigma1 |W'| <= alpha violated on a recorded state");
        if (log)
            *log << tag << " epsilon=" << eps << " c_eps=" << run.c_eps << " steps=" << run.steps
                 << " factorization=" << run.max_factorization_error
                 << " weak_flux=" << run.weak.max_relative() << "\n";
    }
    ContinuationReport rep = continuation_report(runs);
    write_summary(rep, art.path("summary.csv"));
    for (const std::string& c : rep.blowup) fail(out, "blow-up across epsilon in column " + c);
    if (!rep.c_eps_nonincreasing) fail(out, "c_eps increased along the schedule");
}

}  // namespace

SimState make_scenario(const RunConfig& cfg, const ModelSpec& spec) {
    const Grid2D g(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly);
    const ScenarioConfig& sc = cfg.scenario;
    ScalarField phi(g), psi(g);
    StaggeredVelocity u(g);
    switch (sc.kind) {
        case ScenarioKind::uniform:
            phi = ScalarField(g, sc.phi_mean);
            psi = ScalarField(g, sc.psi_mean);
            break;
        case ScenarioKind::spinodal: {
            std::mt19937_64 rng(cfg.seed);
            std::uniform_real_distribution<double> d(-1.0, 1.0);
            for (double& v : phi.data()) v = std::clamp(sc.phi_mean + sc.amplitude * d(rng), -kClip, kClip);
            psi = ScalarField(g, sc.psi_mean);
            break;
        }
        case ScenarioKind::droplet: {
            double r = sc.radius > 0.0 ? sc.radius : 0.25 * g.lx;
            double w = 3.0 * g.dx();
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    double x = (i + 0.5) * g.dx() - 0.5 * g.lx, y = (j + 0.5) * g.dy() - 0.5 * g.ly;
                    double v = std::tanh((r - std::hypot(x, y)) / w);
                    phi(i, j) = std::clamp(v, -kClip, kClip);
                    psi(i, j) = sc.psi_base + sc.psi_boost * (1.0 - phi(i, j) * phi(i, j));
                }
            break;
        }
        case ScenarioKind::file:
            phi = checked_read(sc.phi_file, g, "phi_file");
            psi = checked_read(sc.psi_file, g, "psi_file");
            if (!sc.ux_file.empty()) {
                try {
                    u = read_velocity_snapshot(sc.ux_file, sc.uy_file, g);
                } catch (const std::exception& e) {
                    throw ConfigError(std::string("scenario.ux_file/uy_file: ") + e.what());
                }
                u = leray_project(u).u;
            }
            break;
    }
    if (!(phi.min() > -1.0 && phi.max() < 1.0 && psi.min() > 0.0 && psi.max() < 1.0))
        throw ConfigError("initial data must lie in (-1,1) x (0,1) cellwise");
    return initial_state(u, phi, psi, spec);
}

RunOutcome run_simulation(const RunConfig& cfg, const RunOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelSpec spec = validate_config(cfg);
    SimState init = make_scenario(cfg, spec);

    fs::path dir(cfg.output.directory);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());

    RunOutcome out;
    Artifacts art(dir, out);
    try {
        if (cfg.mode == RunMode::nondegenerate)
            run_nondegenerate(cfg, spec, init, art, out, opts.log);
        else
            run_continuation(cfg, spec, init, art, out, opts.log);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        fail(out, e.what());
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ofstream m(dir / "manifest.txt");
    m << "# nsch-sim run manifest\n";
    m << "# program = nsch-sim 1.0\n";
    m << "# eigen = " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "\n";
    m << "# compiler = " << __VERSION__ << "\n";
    m << "# threads = " << opts.threads << "\n";
    m << "# steps = " << out.steps << "\n";
    m << "# wall_time_s = " << out.wall_seconds << "\n";
    m << "# status = " << (out.ok ? "ok" : "failed") << "\n";
    if (!out.ok) m << "# failure = " << out.failure << "\n";
    m << config_text(cfg);
    out.artifacts.push_back("manifest.txt");
    return out;
}

}  // namespace nsch
