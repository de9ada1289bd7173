#include "khe/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "khe/errors.hpp"

namespace khe {

void Grid2D::validate() const {
    if (nx < 3 || ny < 3) throw ShapeError("grid needs at least 3 nodes per axis");
    if (!(x_min < x_max) || !(y_min < y_max)) throw ShapeError("grid bounds must satisfy min < max");
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(y_min) ||
        !std::isfinite(y_max)) {
        throw ShapeError("grid bounds must be finite");
    }
}

Grid2D Grid2D::refined() const {
    Grid2D g = *this;
    g.nx = 2 * nx - 1;
    g.ny = 2 * ny - 1;
    return g;
}

Field::Field(const Grid2D& grid, double fill) : grid_(grid) {
    grid_.validate();
    values_.assign(grid_.nx * grid_.ny, fill);
}

double Field::mass() const {
    double total = 0.0;
    for (std::size_t j = 0; j < grid_.ny; ++j) {
        const double wy = (j == 0 || j + 1 == grid_.ny) ? 0.5 : 1.0;
        double row = 0.0;
        for (std::size_t i = 0; i < grid_.nx; ++i) {
            const double wx = (i == 0 || i + 1 == grid_.nx) ? 0.5 : 1.0;
            row += wx * at(i, j);
        }
        total += wy * row;
    }
    return total * grid_.dx() * grid_.dy();
}

double Field::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

double Field::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

Field Field::restrict_to(const Grid2D& coarse) const {
    if (!(coarse.refined() == grid_)) throw ShapeError("field grid is not a refinement of the target");
    Field out(coarse);
    for (std::size_t j = 0; j < coarse.ny; ++j) {
        for (std::size_t i = 0; i < coarse.nx; ++i) out.at(i, j) = at(2 * i, 2 * j);
    }
    return out;
}

std::vector<double> line_cut_y(const Field& field, double y) {
    const Grid2D& g = field.grid();
    if (!(y >= g.y_min && y <= g.y_max)) throw DomainError("line cut ordinate outside the grid");
    const double v = (y - g.y_min) / g.dy();
    const long base = std::min(static_cast<long>(std::floor(v)), static_cast<long>(g.ny) - 1);
    const double s = v - static_cast<double>(base);
    // Catmull-Rom weights for rows base-1 .. base+2.
    const double w[4] = {0.5 * (-s + 2.0 * s * s - s * s * s), 0.5 * (2.0 - 5.0 * s * s + 3.0 * s * s * s),
                         0.5 * (s + 4.0 * s * s - 3.0 * s * s * s), 0.5 * (-s * s + s * s * s)};
    std::vector<double> out(g.nx, 0.0);
    for (int r = 0; r < 4; ++r) {
        const long j = base - 1 + r;
        if (j < 0 || j >= static_cast<long>(g.ny) || w[r] == 0.0) continue;
        for (std::size_t i = 0; i < g.nx; ++i) out[i] += w[r] * field.at(i, static_cast<std::size_t>(j));
    }
    return out;
}

std::string format_double(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

void write_field_csv(const Field& field, std::ostream& out) {
    const Grid2D& g = field.grid();
    out << "x,y,value\n";
    for (std::size_t j = 0; j < g.ny; ++j) {
        const std::string y = format_double(g.y(j));
        for (std::size_t i = 0; i < g.nx; ++i) {
            out << format_double(g.x(i)) << ',' << y << ',' << format_double(field.at(i, j))
                << '\n';
        }
    }
}

void write_field_csv(const Field& field, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_field_csv(field, out);
}

Field read_field_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "x,y,value") {
        throw ShapeError("field CSV must start with header x,y,value");
    }
    std::vector<double> xs, ys, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b, c;
        if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c)) {
            throw ShapeError("malformed field CSV row: " + line);
        }
        xs.push_back(std::stod(a));
        ys.push_back(std::stod(b));
        vs.push_back(std::stod(c));
    }
    if (xs.empty()) throw ShapeError("field CSV has no rows");
    std::size_t nx = 1;
    while (nx < ys.size() && ys[nx] == ys[0]) ++nx;
    if (vs.size() % nx != 0) throw ShapeError("field CSV is not a full tensor grid");
    Grid2D g;
    g.nx = nx;
    g.ny = vs.size() / nx;
    g.x_min = xs.front();
    g.x_max = xs[nx - 1];
    g.y_min = ys.front();
    g.y_max = ys.back();
    Field f(g);
    f.values() = std::move(vs);
    return f;
}

Field read_field_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_field_csv(in);
}

}  // namespace khe
