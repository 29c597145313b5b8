#pragma once

#include <cstddef>
#include <vector>

namespace nsch {

struct Grid2D {
    int nx = 4;
    int ny = 4;
    double lx = 1.0;
    double ly = 1.0;

    Grid2D() = default;
    // Throws std::invalid_argument unless nx, ny >= 4 and lx, ly > 0.
    Grid2D(int nx, int ny, double lx, double ly);

    double dx() const { return lx / nx; }
    double dy() const { return ly / ny; }
    double cell_volume() const { return dx() * dy(); }
    double measure() const { return lx * ly; }
    int cells() const { return nx * ny; }
    int x_faces() const { return (nx + 1) * ny; }
    int y_faces() const { return nx * (ny + 1); }
    bool operator==(const Grid2D&) const = default;
};

// Cell-centred values, row-major with x fastest: index j * nx + i.
class ScalarField {
  public:
    ScalarField() = default;
    explicit ScalarField(const Grid2D& g, double value = 0.0);

    const Grid2D& grid() const { return grid_; }
    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(j * grid_.nx + i)]; }
    double operator()(int i, int j) const {
        return data_[static_cast<std::size_t>(j * grid_.nx + i)];
    }
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }
    std::size_t size() const { return data_.size(); }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double mean() const;
    double min() const;
    double max() const;
    double max_abs() const;

    ScalarField& operator+=(const ScalarField& o);
    ScalarField& operator-=(const ScalarField& o);
    ScalarField& operator*=(double a);

  private:
    Grid2D grid_;
    std::vector<double> data_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double a, ScalarField f);

// Face-normal values: x-faces (nx+1) x ny at j*(nx+1)+i sitting at x = i dx,
// y-faces nx x (ny+1) at j*nx+i sitting at y = j dy.
class FaceField {
  public:
    FaceField() = default;
    explicit FaceField(const Grid2D& g);

    const Grid2D& grid() const { return grid_; }
    double& xf(int i, int j) { return x[static_cast<std::size_t>(j * (grid_.nx + 1) + i)]; }
    double xf(int i, int j) const { return x[static_cast<std::size_t>(j * (grid_.nx + 1) + i)]; }
    double& yf(int i, int j) { return y[static_cast<std::size_t>(j * grid_.nx + i)]; }
    double yf(int i, int j) const { return y[static_cast<std::size_t>(j * grid_.nx + i)]; }
    double max_abs() const;

    FaceField& operator+=(const FaceField& o);
    FaceField& operator-=(const FaceField& o);
    FaceField& operator*=(double a);

    std::vector<double> x;
    std::vector<double> y;

  private:
    Grid2D grid_;
};

// MAC velocity; the wall-normal faces are held at zero.
class StaggeredVelocity : public FaceField {
  public:
    StaggeredVelocity() = default;
    explicit StaggeredVelocity(const Grid2D& g) : FaceField(g) {}
    explicit StaggeredVelocity(const FaceField& f) : FaceField(f) { enforce_no_slip(); }

    void enforce_no_slip();
    double boundary_normal_max() const;
};

}  // namespace nsch
