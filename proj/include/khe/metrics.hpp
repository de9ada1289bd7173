#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "khe/grid.hpp"

namespace khe {

enum class LpNorm { l1, l2, linf };

/// Relative discrete L^p distance between a reference and an approximation on
/// the same grid: (sum |g - f|^p)^{1/p} / (sum |f|^p)^{1/p}, and
/// max |g - f| / max |f| for p = inf. Nodes carry equal weight.
/// Throws ShapeError on grid mismatch and DegenerateKernelError when the
/// reference is identically zero.
double relative_lp_error(const Field& reference, const Field& approx, LpNorm p);

struct ErrorReport {
    double l1 = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
    std::string scenario;
    int n_iterations = 0;
    std::string reference;

    bool operator==(const ErrorReport&) const = default;
};

ErrorReport make_error_report(const Field& reference, const Field& approx, std::string scenario,
                              int n_iterations, std::string reference_name);

/// CSV with header `scenario,n_iterations,reference,l1,l2,linf`; numbers use
/// 17 significant digits so parsing the output restores every report exactly.
/// Text fields must not contain commas or newlines (ConfigError otherwise).
void write_error_reports(const std::vector<ErrorReport>& reports, std::ostream& out);
std::vector<ErrorReport> read_error_reports(std::istream& in);

}  // namespace khe
