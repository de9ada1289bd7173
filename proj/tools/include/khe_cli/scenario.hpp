#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "khe/fd_reference.hpp"
#include "khe/grid.hpp"
#include "khe/metrics.hpp"
#include "khe/stochastic_ref.hpp"
#include "khe_cli/config.hpp"

namespace khe::cli {

/// Wall-clock durations of the stages of a command, in execution order.
struct Timings {
    std::vector<std::pair<std::string, double>> stages;
};

/// FD reference on the refined grid, sampled back onto the run grid.
struct FdOutcome {
    Field field;
    FdReport report;
};
FdOutcome fd_reference_on_run_grid(const RunConfig& cfg);

/// u(T, x_k, y) by Monte Carlo at every `stride`-th node of the run grid on
/// the line at ordinate y; the other entries are NaN.
struct McLine {
    std::vector<double> mean;
    std::vector<double> std_error;
};
McLine mc_line(const RunConfig& cfg, double y, std::size_t stride);

struct LineCut {
    double y = 0.0;
    std::vector<double> x;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;   // one per name; NaN marks a missing value
};
/// CSV with header `x,<names...>`; NaN is written as an empty cell.
void write_line_cut_csv(const LineCut& cut, const std::string& path);

struct Table1Result {
    Field reference;        // FD on the run grid
    Field n1;
    Field n5;
    FdReport fd_report;
    std::vector<ErrorReport> reports;   // N = 1, then N = 5
    LineCut line_cut;                   // FD, MC, N = 1, N = 5 at output.line_cut_y
};

/// The table1 experiment: one FD reference, propagation with N = 1 and N = 5,
/// relative errors and the line cut. The config must select the table1 drift.
Table1Result run_table1(const RunConfig& cfg, Timings& timings, std::ostream* log = nullptr);

}  // namespace khe::cli
