#include "nsch/operators.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nsch {

FaceField grad_cc(const ScalarField& f) {
    const Grid2D& g = f.grid();
    FaceField q(g);
    const double rdx = 1.0 / g.dx(), rdy = 1.0 / g.dy();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) q.xf(i, j) = (f(i, j) - f(i - 1, j)) * rdx;
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) q.yf(i, j) = (f(i, j) - f(i, j - 1)) * rdy;
    return q;
}

ScalarField div_face(const FaceField& q) {
    const Grid2D& g = q.grid();
    ScalarField d(g);
    const double rdx = 1.0 / g.dx(), rdy = 1.0 / g.dy();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            d(i, j) = (q.xf(i + 1, j) - q.xf(i, j)) * rdx + (q.yf(i, j + 1) - q.yf(i, j)) * rdy;
    return d;
}

ScalarField neumann_laplacian(const ScalarField& f) { return div_face(grad_cc(f)); }

FaceField face_average(const ScalarField& f) {
    const Grid2D& g = f.grid();
    FaceField q(g);
    for (int j = 0; j < g.ny; ++j) {
        q.xf(0, j) = f(0, j);
        q.xf(g.nx, j) = f(g.nx - 1, j);
        for (int i = 1; i < g.nx; ++i) q.xf(i, j) = 0.5 * (f(i - 1, j) + f(i, j));
    }
    for (int i = 0; i < g.nx; ++i) {
        q.yf(i, 0) = f(i, 0);
        q.yf(i, g.ny) = f(i, g.ny - 1);
    }
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) q.yf(i, j) = 0.5 * (f(i, j - 1) + f(i, j));
    return q;
}

FaceField face_product(const FaceField& a, const FaceField& b) {
    FaceField r(a.grid());
    for (std::size_t k = 0; k < r.x.size(); ++k) r.x[k] = a.x[k] * b.x[k];
    for (std::size_t k = 0; k < r.y.size(); ++k) r.y[k] = a.y[k] * b.y[k];
    return r;
}

ScalarField advect(const StaggeredVelocity& u, const ScalarField& f, AdvectionScheme scheme) {
    const Grid2D& g = f.grid();
    FaceField flux(g);
    auto pick = [scheme](double vel, double left, double right) {
        if (scheme == AdvectionScheme::centered) return 0.5 * (left + right);
        return vel >= 0.0 ? left : right;
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 1; i < g.nx; ++i) {
            double v = u.xf(i, j);
            flux.xf(i, j) = v * pick(v, f(i - 1, j), f(i, j));
        }
    for (int j = 1; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double v = u.yf(i, j);
            flux.yf(i, j) = v * pick(v, f(i, j - 1), f(i, j));
        }
    return div_face(flux);
}

// ---------------------------------------------------------------------------------------------
// Inner products and norms

double l2_inner(const ScalarField& f, const ScalarField& g) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * g[k];
    return s * f.grid().cell_volume();
}

double l2_norm(const ScalarField& f) { return std::sqrt(l2_inner(f, f)); }

double face_inner(const FaceField& a, const FaceField& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.x.size(); ++k) s += a.x[k] * b.x[k];
    for (std::size_t k = 0; k < a.y.size(); ++k) s += a.y[k] * b.y[k];
    return s * a.grid().cell_volume();
}

// ---------------------------------------------------------------------------------------------
// Conjugate gradients for -Delta_h on zero-mean fields

namespace {

void remove_mean(std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double& x : v) x -= m;
}

void apply_neg_laplacian(const Grid2D& g, const std::vector<double>& p, std::vector<double>& out) {
    const double ax = 1.0 / (g.dx() * g.dx()), ay = 1.0 / (g.dy() * g.dy());
    const int nx = g.nx, ny = g.ny;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const std::size_t k = static_cast<std::size_t>(j * nx + i);
            double c = p[k];
            double s = 0.0;
            if (i > 0) s += (c - p[k - 1]) * ax;
            if (i + 1 < nx) s += (c - p[k + 1]) * ax;
            if (j > 0) s += (c - p[k - static_cast<std::size_t>(nx)]) * ay;
            if (j + 1 < ny) s += (c - p[k + static_cast<std::size_t>(nx)]) * ay;
            out[k] = s;
        }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

}  // namespace

CgResult inverse_neumann_solve(const ScalarField& f, const CgOptions& opts) {
    const Grid2D& g = f.grid();
    const int cap = opts.max_iter > 0 ? opts.max_iter : 20 * (g.nx + g.ny);
    std::vector<double> b = f.data();
    remove_mean(b);
    CgResult res;
    res.solution = ScalarField(g);
    const double bnorm = std::sqrt(dot(b, b));
    if (bnorm == 0.0) return res;

    std::vector<double> x(b.size(), 0.0), r = b, p = b, ap(b.size());
    double rr = dot(r, r);
    int it = 0;
    while (std::sqrt(rr) > opts.tol * bnorm) {
        if (it >= cap) {
            std::ostringstream os;
            os << "inverse_neumann: CG did not converge in " << cap
               << " iterations, relative residual " << std::sqrt(rr) / bnorm;
            throw SolverError(os.str(), std::sqrt(rr) / bnorm);
        }
        apply_neg_laplacian(g, p, ap);
        double alpha = rr / dot(p, ap);
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        remove_mean(r);
        double rr_new = dot(r, r);
        double beta = rr_new / rr;
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = r[k] + beta * p[k];
        rr = rr_new;
        ++it;
    }
    remove_mean(x);
    res.solution.data() = std::move(x);
    res.iterations = it;
    res.residual = std::sqrt(rr) / bnorm;
    return res;
}

ScalarField inverse_neumann(const ScalarField& f, const CgOptions& opts) {
    return inverse_neumann_solve(f, opts).solution;
}

Projection leray_project(const StaggeredVelocity& u, const CgOptions& opts) {
    ScalarField d = div_face(u);
    d *= -1.0;
    CgResult cg = inverse_neumann_solve(d, opts);
    Projection pr;
    pr.pressure = std::move(cg.solution);
    pr.iterations = cg.iterations;
    FaceField gp = grad_cc(pr.pressure);
    StaggeredVelocity out = u;
    out -= gp;
    out.enforce_no_slip();
    pr.u = std::move(out);
    return pr;
}

double star_norm(const ScalarField& f, const CgOptions& opts) {
    ScalarField z = f;
    double m = z.mean();
    for (double& v : z.data()) v -= m;
    ScalarField w = inverse_neumann(z, opts);
    return std::sqrt(std::max(0.0, l2_inner(z, w)));
}

double h_neg1_norm(const ScalarField& f, const CgOptions& opts) {
    double s = star_norm(f, opts);
    double m = f.mean();
    return std::sqrt(s * s + m * m);
}

// ---------------------------------------------------------------------------------------------
// Staggered symmetric gradient

std::vector<StrainTerm> strain_terms(const Grid2D& g, WallTreatment walls) {
    const int nx = g.nx, ny = g.ny;
    const int offset_y = g.x_faces();
    auto xi = [&](int i, int j) { return j * (nx + 1) + i; };
    auto yi = [&](int i, int j) { return offset_y + j * nx + i; };
    const double rdx = 1.0 / g.dx(), rdy = 1.0 / g.dy(), vol = g.cell_volume();

    std::vector<StrainTerm> terms;
    terms.reserve(static_cast<std::size_t>(2 * nx * ny + (nx + 1) * (ny + 1)));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            StrainTerm exx;
            exx.weight = vol;
            exx.i = i;
            exx.j = j;
            exx.n = 2;
            exx.idx[0] = xi(i + 1, j);
            exx.coef[0] = rdx;
            exx.idx[1] = xi(i, j);
            exx.coef[1] = -rdx;
            terms.push_back(exx);
            StrainTerm eyy = exx;
            eyy.idx[0] = yi(i, j + 1);
            eyy.coef[0] = rdy;
            eyy.idx[1] = yi(i, j);
            eyy.coef[1] = -rdy;
            terms.push_back(eyy);
        }
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            bool wall_x = (i == 0 || i == nx), wall_y = (j == 0 || j == ny);
            if (walls == WallTreatment::interior_only && (wall_x || wall_y)) continue;
            StrainTerm t;
            t.at_node = true;
            t.i = i;
            t.j = j;
            // 2 nu e_xy^2 on the dual cell of the node
            t.weight = 2.0 * vol * (wall_x ? 0.5 : 1.0) * (wall_y ? 0.5 : 1.0);
            auto add = [&t](int idx, double c) {
                t.idx[t.n] = idx;
                t.coef[t.n] = c;
                ++t.n;
            };
            // e_xy = (d_y u_x + d_x u_y) / 2 with reflected ghosts at the walls
            if (!wall_x) {
                if (j == 0) {
                    add(xi(i, 0), rdy);
                } else if (j == ny) {
                    add(xi(i, ny - 1), -rdy);
                } else {
                    add(xi(i, j), 0.5 * rdy);
                    add(xi(i, j - 1), -0.5 * rdy);
                }
            }
            if (!wall_y) {
                if (i == 0) {
                    add(yi(0, j), rdx);
                } else if (i == nx) {
                    add(yi(nx - 1, j), -rdx);
                } else {
                    add(yi(i, j), 0.5 * rdx);
                    add(yi(i - 1, j), -0.5 * rdx);
                }
            }
            if (t.n > 0) terms.push_back(t);
        }
    return terms;
}

double strain_viscosity(const StrainTerm& t, const ScalarField& nu) {
    if (!t.at_node) return nu(t.i, t.j);
    const Grid2D& g = nu.grid();
    double s = 0.0;
    int c = 0;
    for (int dj = -1; dj <= 0; ++dj)
        for (int di = -1; di <= 0; ++di) {
            int ci = t.i + di, cj = t.j + dj;
            if (ci < 0 || cj < 0 || ci >= g.nx || cj >= g.ny) continue;
            s += nu(ci, cj);
            ++c;
        }
    return s / c;
}

double symmetric_gradient_norm(const StaggeredVelocity& u, const ScalarField& nu,
                               WallTreatment walls) {
    const Grid2D& g = u.grid();
    const std::size_t nxf = u.x.size();
    double sum = 0.0;
    for (const StrainTerm& t : strain_terms(g, walls)) {
        double e = 0.0;
        for (int k = 0; k < t.n; ++k) {
            std::size_t id = static_cast<std::size_t>(t.idx[k]);
            e += t.coef[k] * (id < nxf ? u.x[id] : u.y[id - nxf]);
        }
        sum += t.weight * strain_viscosity(t, nu) * e * e;
    }
    return sum;
}

double symmetric_gradient_norm(const StaggeredVelocity& u, WallTreatment walls) {
    return symmetric_gradient_norm(u, ScalarField(u.grid(), 1.0), walls);
}

// ---------------------------------------------------------------------------------------------
// Snapshots

namespace {

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t k = 0; k < sizeof(T) / 2; ++k) std::swap(b[k], b[sizeof(T) - 1 - k]);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <typename T>
void put(std::ostream& os, T v) {
    v = to_little(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
    T v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw std::runtime_error("snapshot truncated: " + path);
    }
    return to_little(v);
}

}  // namespace

void write_raw_snapshot(const std::string& path, const RawSnapshot& s) {
    if (s.data.size() != static_cast<std::size_t>(s.nx) * s.ny) {
        throw std::invalid_argument("snapshot payload does not match its shape");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open snapshot for writing: " + path);
    os.write("NSCH", 4);
    put<std::uint32_t>(os, 1u);
    put<std::uint32_t>(os, s.nx);
    put<std::uint32_t>(os, s.ny);
    put<double>(os, s.lx);
    put<double>(os, s.ly);
    for (double v : s.data) put<double>(os, v);
    if (!os) throw std::runtime_error("snapshot write failed: " + path);
}

RawSnapshot read_raw_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open snapshot: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NSCH", 4) != 0) {
        throw std::runtime_error("not an NSCH snapshot: " + path);
    }
    auto version = get<std::uint32_t>(is, path);
    if (version != 1u) throw std::runtime_error("unsupported snapshot version in " + path);
    RawSnapshot s;
    s.nx = get<std::uint32_t>(is, path);
    s.ny = get<std::uint32_t>(is, path);
    s.lx = get<double>(is, path);
    s.ly = get<double>(is, path);
    s.data.resize(static_cast<std::size_t>(s.nx) * s.ny);
    for (double& v : s.data) v = get<double>(is, path);
    return s;
}

void write_snapshot(const std::string& path, const ScalarField& f) {
    const Grid2D& g = f.grid();
    write_raw_snapshot(path, {static_cast<unsigned>(g.nx), static_cast<unsigned>(g.ny), g.lx,
                              g.ly, f.data()});
}

ScalarField read_snapshot(const std::string& path) {
    RawSnapshot s = read_raw_snapshot(path);
    ScalarField f(Grid2D(static_cast<int>(s.nx), static_cast<int>(s.ny), s.lx, s.ly));
    f.data() = std::move(s.data);
    return f;
}

void write_velocity_snapshot(const std::string& path_x, const std::string& path_y,
                             const StaggeredVelocity& u) {
    const Grid2D& g = u.grid();
    write_raw_snapshot(path_x, {static_cast<unsigned>(g.nx + 1), static_cast<unsigned>(g.ny),
                                g.lx, g.ly, u.x});
    write_raw_snapshot(path_y, {static_cast<unsigned>(g.nx), static_cast<unsigned>(g.ny + 1),
                                g.lx, g.ly, u.y});
}

StaggeredVelocity read_velocity_snapshot(const std::string& path_x, const std::string& path_y,
                                         const Grid2D& g) {
    RawSnapshot sx = read_raw_snapshot(path_x), sy = read_raw_snapshot(path_y);
    if (sx.nx != static_cast<unsigned>(g.nx + 1) || sx.ny != static_cast<unsigned>(g.ny) ||
        sy.nx != static_cast<unsigned>(g.nx) || sy.ny != static_cast<unsigned>(g.ny + 1)) {
        throw std::runtime_error("velocity snapshot shape does not match the grid");
    }
    StaggeredVelocity u(g);
    u.x = std::move(sx.data);
    u.y = std::move(sy.data);
    return u;
}

}  // namespace nsch
