#include "khe_cli/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "khe/errors.hpp"

namespace khe::cli {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '<') out += "&lt;";
        else if (ch == '>') out += "&gt;";
        else if (ch == '&') out += "&amp;";
        else out += ch;
    }
    return out;
}

// Piecewise-linear interpolation through a few viridis anchors.
std::string colour(double s) {
    static constexpr std::array<std::array<double, 3>, 5> anchors{{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    s = std::clamp(s, 0.0, 1.0) * static_cast<double>(anchors.size() - 1);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s), anchors.size() - 2);
    const double w = s - static_cast<double>(k);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::lround((1 - w) * anchors[k][0] + w * anchors[k + 1][0])),
                  static_cast<int>(std::lround((1 - w) * anchors[k][1] + w * anchors[k + 1][1])),
                  static_cast<int>(std::lround((1 - w) * anchors[k][2] + w * anchors[k + 1][2])));
    return buf;
}

void save(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot write figure");
    out << text;
}

}  // namespace

void write_heatmap_svg(const Field& field, const std::string& title, const std::string& path,
                       std::size_t max_cells) {
    const Grid2D& g = field.grid();
    const std::size_t bx = (g.nx + max_cells - 1) / max_cells;
    const double aspect = (g.y_max - g.y_min) / (g.x_max - g.x_min);
    const std::size_t cols = (g.nx + bx - 1) / bx;
    const std::size_t rows_target = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(cols * aspect)));
    const std::size_t by = std::max<std::size_t>(1, (g.ny + rows_target - 1) / rows_target);
    const std::size_t rows = (g.ny + by - 1) / by;

    std::vector<double> cells(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t j = r * by; j < std::min(g.ny, (r + 1) * by); ++j) {
                for (std::size_t i = c * bx; i < std::min(g.nx, (c + 1) * bx); ++i, ++n) sum += field.at(i, j);
            }
            cells[r * cols + c] = sum / static_cast<double>(n);
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(cells.begin(), cells.end());
    const double lo = *lo_it, hi = *hi_it, span = hi > lo ? hi - lo : 1.0;

    const double width = 640.0, left = 50.0, top = 30.0;
    const double cw = width / static_cast<double>(cols);
    const double height = cw * static_cast<double>(rows);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width + left + 90) << "\" height=\""
        << num(height + top + 40) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<text x=\"" << num(left) << "\" y=\"18\">" << escape(title) << "</text>\n";
    svg << "<g shape-rendering=\"crispEdges\">\n";
    for (std::size_t r = 0; r < rows; ++r) {
        // Row 0 is the lowest y; SVG's y axis points down.
        const double py = top + height - cw * static_cast<double>(r + 1);
        for (std::size_t c = 0; c < cols; ++c) {
            svg << "<rect x=\"" << num(left + cw * static_cast<double>(c)) << "\" y=\"" << num(py) << "\" width=\""
                << num(cw + 0.05) << "\" height=\"" << num(cw + 0.05) << "\" fill=\""
                << colour((cells[r * cols + c] - lo) / span) << "\"/>\n";
        }
    }
    svg << "</g>\n";
    const double bottom = top + height;
    svg << "<text x=\"" << num(left) << "\" y=\"" << num(bottom + 16) << "\">x = " << num(g.x_min) << "</text>\n";
    svg << "<text x=\"" << num(left + width) << "\" y=\"" << num(bottom + 16) << "\" text-anchor=\"end\">x = "
        << num(g.x_max) << "</text>\n";
    svg << "<text x=\"" << num(left - 4) << "\" y=\"" << num(bottom) << "\" text-anchor=\"end\">" << num(g.y_min)
        << "</text>\n";
    svg << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + 10) << "\" text-anchor=\"end\">" << num(g.y_max)
        << "</text>\n";
    // Colour bar.
    const double bx0 = left + width + 15;
    for (int k = 0; k < 50; ++k) {
        svg << "<rect x=\"" << num(bx0) << "\" y=\"" << num(top + height * (1.0 - (k + 1) / 50.0)) << "\" width=\"14\" height=\""
            << num(height / 50.0 + 0.05) << "\" fill=\"" << colour((k + 0.5) / 50.0) << "\"/>\n";
    }
    svg << "<text x=\"" << num(bx0 + 18) << "\" y=\"" << num(top + 10) << "\">" << num(hi) << "</text>\n";
    svg << "<text x=\"" << num(bx0 + 18) << "\" y=\"" << num(bottom) << "\">" << num(lo) << "</text>\n";
    svg << "</svg>\n";
    save(path, svg.str());
}

void write_line_plot_svg(const std::vector<double>& xs, const std::vector<Series>& series,
                         const std::string& title, const std::string& path) {
    if (xs.size() < 2) throw ShapeError("line plot needs at least two abscissae");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Series& s : series) {
        if (s.values.size() != xs.size()) throw ShapeError("series " + s.name + " does not match the abscissae");
        for (double v : s.values) {
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!(hi > lo)) {
        lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
        hi = lo + 2.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    const double left = 70, top = 30, width = 600, height = 360;
    const double x0 = xs.front(), x1 = xs.back();
    auto px = [&](double x) { return left + width * (x - x0) / (x1 - x0); };
    auto py = [&](double v) { return top + height * (1.0 - (v - lo) / (hi - lo)); };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(left + width + 150) << "\" height=\""
        << num(top + height + 40) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<text x=\"" << num(left) << "\" y=\"18\">" << escape(title) << "</text>\n";
    svg << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        svg << "<text x=\"" << num(left - 4) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">" << num(v)
            << "</text>\n";
        const double x = x0 + (x1 - x0) * k / 4.0;
        svg << "<text x=\"" << num(px(x)) << "\" y=\"" << num(top + height + 16) << "\" text-anchor=\"middle\">"
            << num(x) << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* col = palette[s % std::size(palette)];
        std::string d;
        bool pen_down = false;
        std::size_t finite = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double v = series[s].values[i];
            if (!std::isfinite(v)) continue;
            ++finite;
            d += (pen_down ? " L" : "M") + num(px(xs[i])) + "," + num(py(v));
            pen_down = true;
        }
        // A sparse series (e.g. Monte Carlo at every k-th node) is drawn as markers.
        if (finite * 2 < xs.size()) {
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double v = series[s].values[i];
                if (std::isfinite(v)) {
                    svg << "<circle cx=\"" << num(px(xs[i])) << "\" cy=\"" << num(py(v)) << "\" r=\"2.5\" fill=\""
                        << col << "\"/>\n";
                }
            }
        } else if (!d.empty()) {
            svg << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\"/>\n";
        }
        const double ly = top + 14 + 18.0 * static_cast<double>(s);
        svg << "<rect x=\"" << num(left + width + 12) << "\" y=\"" << num(ly - 9) << "\" width=\"14\" height=\"3\" fill=\""
            << col << "\"/>\n";
        svg << "<text x=\"" << num(left + width + 32) << "\" y=\"" << num(ly - 3) << "\">" << escape(series[s].name)
            << "</text>\n";
    }
    svg << "</svg>\n";
    save(path, svg.str());
}

}  // namespace khe::cli
