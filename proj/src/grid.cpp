#include "nsch/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nsch {

Grid2D::Grid2D(int nx_, int ny_, double lx_, double ly_) : nx(nx_), ny(ny_), lx(lx_), ly(ly_) {
    if (nx < 4 || ny < 4) {
        throw std::invalid_argument("grid needs at least 4 cells per direction, got " +
                                    std::to_string(nx) + "x" + std::to_string(ny));
    }
    if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly)) {
        throw std::invalid_argument("grid side lengths must be positive");
    }
}

ScalarField::ScalarField(const Grid2D& g, double value)
    : grid_(g), data_(static_cast<std::size_t>(g.cells()), value) {}

double ScalarField::mean() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s / static_cast<double>(data_.size());
}

double ScalarField::min() const { return *std::min_element(data_.begin(), data_.end()); }
double ScalarField::max() const { return *std::max_element(data_.begin(), data_.end()); }

double ScalarField::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
}

ScalarField& ScalarField::operator*=(double a) {
    for (double& v : data_) v *= a;
    return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double a, ScalarField f) { return f *= a; }

FaceField::FaceField(const Grid2D& g)
    : x(static_cast<std::size_t>(g.x_faces()), 0.0),
      y(static_cast<std::size_t>(g.y_faces()), 0.0),
      grid_(g) {}

double FaceField::max_abs() const {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    for (double v : y) m = std::max(m, std::abs(v));
    return m;
}

FaceField& FaceField::operator+=(const FaceField& o) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += o.x[k];
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += o.y[k];
    return *this;
}

FaceField& FaceField::operator-=(const FaceField& o) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] -= o.x[k];
    for (std::size_t k = 0; k < y.size(); ++k) y[k] -= o.y[k];
    return *this;
}

FaceField& FaceField::operator*=(double a) {
    for (double& v : x) v *= a;
    for (double& v : y) v *= a;
    return *this;
}

void StaggeredVelocity::enforce_no_slip() {
    const Grid2D& g = grid();
    for (int j = 0; j < g.ny; ++j) {
        xf(0, j) = 0.0;
        xf(g.nx, j) = 0.0;
    }
    for (int i = 0; i < g.nx; ++i) {
        yf(i, 0) = 0.0;
        yf(i, g.ny) = 0.0;
    }
}

double StaggeredVelocity::boundary_normal_max() const {
    const Grid2D& g = grid();
    double m = 0.0;
    for (int j = 0; j < g.ny; ++j) m = std::max({m, std::abs(xf(0, j)), std::abs(xf(g.nx, j))});
    for (int i = 0; i < g.nx; ++i) m = std::max({m, std::abs(yf(i, 0)), std::abs(yf(i, g.ny))});
    return m;
}

}  // namespace nsch
