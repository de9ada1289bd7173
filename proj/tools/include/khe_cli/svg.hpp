#pragma once

#include <string>
#include <vector>

#include "khe/grid.hpp"

namespace khe::cli {

/// Heatmap of a field, averaged down to at most `max_cells` columns (rows
/// keep the grid's aspect ratio).
void write_heatmap_svg(const Field& field, const std::string& title, const std::string& path,
                       std::size_t max_cells = 160);

struct Series {
    std::string name;
    std::vector<double> values;   // NaN entries are skipped
};

void write_line_plot_svg(const std::vector<double>& xs, const std::vector<Series>& series,
                         const std::string& title, const std::string& path);

}  // namespace khe::cli
