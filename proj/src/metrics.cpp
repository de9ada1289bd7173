#include "khe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "khe/errors.hpp"

namespace khe {

double relative_lp_error(const Field& reference, const Field& approx, LpNorm p) {
    if (!(reference.grid() == approx.grid())) throw ShapeError("relative_lp_error: grids differ");
    const auto& f = reference.values();
    const auto& g = approx.values();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double e = std::abs(g[k] - f[k]);
        const double r = std::abs(f[k]);
        switch (p) {
            case LpNorm::l1:
                num += e;
                den += r;
                break;
            case LpNorm::l2:
                num += e * e;
                den += r * r;
                break;
            case LpNorm::linf:
                num = std::max(num, e);
                den = std::max(den, r);
                break;
        }
    }
    if (den == 0.0) throw DegenerateKernelError("relative_lp_error: reference is identically zero");
    return p == LpNorm::l2 ? std::sqrt(num) / std::sqrt(den) : num / den;
}

ErrorReport make_error_report(const Field& reference, const Field& approx, std::string scenario,
                              int n_iterations, std::string reference_name) {
    ErrorReport r;
    r.l1 = relative_lp_error(reference, approx, LpNorm::l1);
    r.l2 = relative_lp_error(reference, approx, LpNorm::l2);
    r.linf = relative_lp_error(reference, approx, LpNorm::linf);
    r.scenario = std::move(scenario);
    r.n_iterations = n_iterations;
    r.reference = std::move(reference_name);
    return r;
}

namespace {

void require_plain(const std::string& text) {
    if (text.find_first_of(",\n\r") != std::string::npos) {
        throw ConfigError("error report text must not contain commas or newlines: " + text);
    }
}

}  // namespace

void write_error_reports(const std::vector<ErrorReport>& reports, std::ostream& out) {
    out << "scenario,n_iterations,reference,l1,l2,linf\n";
    for (const ErrorReport& r : reports) {
        require_plain(r.scenario);
        require_plain(r.reference);
        out << r.scenario << ',' << r.n_iterations << ',' << r.reference << ','
            << format_double(r.l1) << ',' << format_double(r.l2) << ',' << format_double(r.linf)
            << '\n';
    }
}

std::vector<ErrorReport> read_error_reports(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "scenario,n_iterations,reference,l1,l2,linf") {
        throw ShapeError("error report CSV has an unexpected header");
    }
    std::vector<ErrorReport> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cells[6];
        for (int k = 0; k < 6; ++k) {
            if (!std::getline(row, cells[k], k == 5 ? '\n' : ',')) {
                throw ShapeError("malformed error report row: " + line);
            }
        }
        ErrorReport r;
        r.scenario = cells[0];
        r.n_iterations = std::stoi(cells[1]);
        r.reference = cells[2];
        r.l1 = std::stod(cells[3]);
        r.l2 = std::stod(cells[4]);
        r.linf = std::stod(cells[5]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace khe
