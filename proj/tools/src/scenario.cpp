#include "khe_cli/scenario.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>

#include "khe/errors.hpp"
#include "khe/propagator.hpp"

namespace khe::cli {

namespace {

class Stopwatch {
public:
    Stopwatch(Timings& t, std::string name) : timings_(t), name_(std::move(name)) {}
    ~Stopwatch() {
        timings_.stages.emplace_back(
            name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    }

private:
    Timings& timings_;
    std::string name_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

FdOutcome fd_reference_on_run_grid(const RunConfig& cfg) {
    const FdConfig fd = cfg.fd_config();
    FdOutcome out;
    const Field u = fd_solve(gaussian_ic(fd.grid, cfg.sigma_c2), cfg.drift.build(), fd, &out.report);
    // Every refinement doubles the resolution, so run-grid node (i, j) is FD node (i, j) * 2^refine.
    const std::size_t stride = std::size_t{1} << cfg.fd.refine;
    out.field = Field(cfg.grid);
    for (std::size_t j = 0; j < cfg.grid.ny; ++j) {
        for (std::size_t i = 0; i < cfg.grid.nx; ++i) out.field.at(i, j) = u.at(i * stride, j * stride);
    }
    return out;
}

McLine mc_line(const RunConfig& cfg, double y, std::size_t stride) {
    const double s2 = cfg.sigma_c2;
    const Payoff f = [s2](double x, double yy) {
        return std::exp(-(x * x + yy * yy) / (2.0 * s2)) / (2.0 * std::numbers::pi * s2);
    };
    std::vector<double> xs;
    for (std::size_t i = 0; i < cfg.grid.nx; i += stride) xs.push_back(cfg.grid.x(i));
    const auto est = estimate_u_line(cfg.T, xs, y, f, cfg.drift.build(), cfg.mc.config);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    McLine line{std::vector<double>(cfg.grid.nx, nan), std::vector<double>(cfg.grid.nx, nan)};
    for (std::size_t k = 0; k < est.size(); ++k) {
        line.mean[k * stride] = est[k].value();
        line.std_error[k * stride] = est[k].std_error;
    }
    return line;
}

void write_line_cut_csv(const LineCut& cut, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path + ": cannot write line cut");
    out << "x";
    for (const auto& n : cut.names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < cut.x.size(); ++i) {
        out << format_double(cut.x[i]);
        for (const auto& col : cut.columns) {
            out << ',';
            if (std::isfinite(col[i])) out << format_double(col[i]);
        }
        out << '\n';
    }
}

Table1Result run_table1(const RunConfig& cfg, Timings& timings, std::ostream* log) {
    if (cfg.drift.preset != "table1") throw ConfigError("/drift/preset: the table1 scenario needs the table1 drift");
    const DriftSpec drift = cfg.drift.build();
    Table1Result r;
    {
        Stopwatch w(timings, "fd_reference");
        FdOutcome fd = fd_reference_on_run_grid(cfg);
        r.reference = std::move(fd.field);
        r.fd_report = fd.report;
    }
    if (log) *log << "FD reference done (mass " << r.fd_report.initial_mass << " -> " << r.fd_report.final_mass << ")\n";

    const Field f = gaussian_ic(cfg.grid, cfg.sigma_c2);
    for (std::size_t n : {std::size_t{1}, std::size_t{5}}) {
        PropagateConfig p = cfg.propagate;
        p.T = cfg.T;
        p.N = n;
        Stopwatch w(timings, "propagate_N" + std::to_string(n));
        Field u = propagate(f, drift, p).field;
        r.reports.push_back(make_error_report(r.reference, u, "table1", static_cast<int>(n), "fd"));
        (n == 1 ? r.n1 : r.n5) = std::move(u);
        if (log) {
            const ErrorReport& e = r.reports.back();
            *log << "N = " << n << ": L1 " << e.l1 << ", L2 " << e.l2 << ", Linf " << e.linf << '\n';
        }
    }

    const double y = cfg.output.line_cut_y;
    McLine mc;
    {
        Stopwatch w(timings, "mc_line_cut");
        mc = mc_line(cfg, y, cfg.mc.line_stride);
    }
    r.line_cut.y = y;
    for (std::size_t i = 0; i < cfg.grid.nx; ++i) r.line_cut.x.push_back(cfg.grid.x(i));
    r.line_cut.names = {"fd", "mc", "mc_se", "n1", "n5"};
    r.line_cut.columns = {line_cut_y(r.reference, y), mc.mean, mc.std_error, line_cut_y(r.n1, y),
                          line_cut_y(r.n5, y)};
    return r;
}

}  // namespace khe::cli
