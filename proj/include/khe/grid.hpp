#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace khe {

/// Uniform tensor-product grid over [x_min, x_max] x [y_min, y_max].
/// Node (i, j) sits at (x_min + i dx, y_min + j dy).
struct Grid2D {
    double x_min = -14.0;
    double x_max = 14.0;
    double y_min = -5.0;
    double y_max = 5.0;
    std::size_t nx = 281;
    std::size_t ny = 101;

    /// Throws ShapeError unless nx, ny >= 3 and both intervals are non-empty.
    void validate() const;

    double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
    double dy() const { return (y_max - y_min) / static_cast<double>(ny - 1); }
    double x(std::size_t i) const { return x_min + dx() * static_cast<double>(i); }
    double y(std::size_t j) const { return y_min + dy() * static_cast<double>(j); }

    /// Grid with twice the resolution (2n - 1 nodes per axis, same extent).
    Grid2D refined() const;

    bool operator==(const Grid2D&) const = default;
};

/// Real values on a Grid2D, stored with y as the outer index:
/// values[j * nx + i] is the value at node (i, j).
class Field {
public:
    Field() = default;
    explicit Field(const Grid2D& grid, double fill = 0.0);

    const Grid2D& grid() const { return grid_; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& at(std::size_t i, std::size_t j) { return values_[j * grid_.nx + i]; }
    double at(std::size_t i, std::size_t j) const { return values_[j * grid_.nx + i]; }

    /// Trapezoid-rule integral over the grid rectangle.
    double mass() const;
    double min_value() const;
    double max_abs() const;

    /// Samples the field at every other node of a refined grid (inverse of
    /// Grid2D::refined). Throws ShapeError when the field's grid is not a refinement of `coarse`.
    Field restrict_to(const Grid2D& coarse) const;

private:
    Grid2D grid_;
    std::vector<double> values_;
};

/// Values along the horizontal line at ordinate y (one per x node), by
/// Catmull-Rom interpolation across rows with zero extension outside the grid.
/// Throws DomainError when y lies outside [y_min, y_max].
std::vector<double> line_cut_y(const Field& field, double y);

/// CSV with header `x,y,value`; y outer, x inner, 17 significant digits.
void write_field_csv(const Field& field, std::ostream& out);
void write_field_csv(const Field& field, const std::string& path);

/// Parses a CSV written by write_field_csv; the grid is reconstructed from the coordinates.
Field read_field_csv(std::istream& in);
Field read_field_csv(const std::string& path);

/// printf("%.17g") formatting used by every CSV writer in the project.
std::string format_double(double value);

}  // namespace khe
