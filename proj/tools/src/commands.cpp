#include "khe_cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include <Eigen/Core>
#include <fftw3.h>
#include <gsl/gsl_version.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "khe/closed_kernels.hpp"
#include "khe/errors.hpp"
#include "khe/parallel.hpp"
#include "khe/propagator.hpp"
#include "khe/smalltime_kernel.hpp"
#include "khe_cli/config.hpp"
#include "khe_cli/oracles.hpp"
#include "khe_cli/scenario.hpp"
#include "khe_cli/svg.hpp"

#ifndef KHE_VERSION
#define KHE_VERSION "unknown"
#endif

namespace khe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool quick = false;
};

// Shared state of one command: resolved configuration, output directory and
// the manifest being assembled.
struct Run {
    std::string command;
    Options opts;
    RunConfig cfg;
    fs::path dir;
    json manifest;
    Timings timings;
    std::vector<std::string> outputs;
    std::ostream& out;

    fs::path file(const std::string& name) {
        outputs.push_back(name);
        return dir / name;
    }

    void field(const Field& f, const std::string& name, const std::string& title) {
        write_field_csv(f, file("field_" + name + ".csv").string());
        if (cfg.output.figures) write_heatmap_svg(f, title, file("figures/" + name + ".svg").string());
    }

    template <class F>
    auto timed(const std::string& stage, F&& body) {
        const auto start = std::chrono::steady_clock::now();
        struct Record {
            Timings& t;
            std::string name;
            std::chrono::steady_clock::time_point start;
            ~Record() {
                t.stages.emplace_back(name,
                                      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            }
        } record{timings, stage, start};
        return body();
    }
};

void write_errors(Run& run, const std::vector<ErrorReport>& reports) {
    std::ofstream f(run.file("errors.csv"), std::ios::binary);
    write_error_reports(reports, f);
    json list = json::array();
    for (const auto& r : reports) {
        list.push_back({{"scenario", r.scenario}, {"n_iterations", r.n_iterations}, {"reference", r.reference},
                        {"l1", r.l1}, {"l2", r.l2}, {"linf", r.linf}});
        run.out << r.scenario << " N = " << r.n_iterations << " vs " << r.reference << ": L1 " << format_double(r.l1)
                << "  L2 " << format_double(r.l2) << "  Linf " << format_double(r.linf) << '\n';
    }
    run.manifest["errors"] = list;
}

json fd_report_json(const FdReport& r) {
    return {{"cfl_x", r.cfl_x},
            {"diffusion_number", r.diffusion_number},
            {"initial_mass", r.initial_mass},
            {"final_mass", r.final_mass}};
}

// ---------------------------------------------------------------------------
// kernel

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

Eigen::VectorXd v1(double v) { return Eigen::VectorXd::Constant(1, v); }

void cmd_kernel(Run& run) {
    const KernelChoice& k = run.cfg.kernel;
    const Complex alpha(k.alpha[0], k.alpha[1]);
    const OuTanhSign sign = k.ou_sign == "proof" ? OuTanhSign::proof : OuTanhSign::statement;
    const bool khe_family = k.family == "linear_khe" || k.family == "quad_khe" || k.family == "ou_khe" ||
                            k.family == "q" || k.family == "pbar";
    const DriftSpec drift = run.cfg.drift.build();

    // Value at one point; coordinates follow the family's arity.
    const std::function<Complex(const std::vector<double>&)> eval = [&](const std::vector<double>& p) -> Complex {
        const double t = k.t;
        if (k.family == "heat") {
            Eigen::VectorXd z(static_cast<Eigen::Index>(p.size()));
            for (std::size_t i = 0; i < p.size(); ++i) z[static_cast<Eigen::Index>(i)] = p[i];
            return heat_kernel(t, z);
        }
        if (k.family == "linear_potential") return linear_potential_kernel(t, v1(p[0]), v1(p[1]), {v1(k.a), alpha});
        if (k.family == "quadratic_potential") {
            return quadratic_potential_kernel(t, v1(p[0]), v1(p[1]), {v1(k.rho), alpha});
        }
        if (k.family == "ou_potential") return ou_potential_kernel(t, p[0], p[1], {k.zeta, alpha}, sign);
        if (k.family == "linear_khe") return linear_khe_kernel(t, p[0], v1(p[1]), p[2], v1(p[3]), v1(k.a));
        if (k.family == "quad_khe") return quad_khe_kernel(t, p[0], v1(p[1]), p[2], v1(p[3]), v1(k.rho)).value;
        if (k.family == "ou_khe") return ou_khe_kernel(t, p[0], p[1], p[2], p[3], k.zeta, sign);
        if (k.family == "q") return frozen_kernel_q(t, p[0], p[1], p[2], p[3], drift, run.cfg.propagate.kernel);
        return pbar_kernel(t, p[0], p[1], p[2], p[3], drift, run.cfg.propagate.kernel);
    };

    if (!k.points.empty()) {
        std::ofstream f(run.file("kernel_points.csv"), std::ios::binary);
        f << (k.family == "heat" ? "z" : khe_family ? "x,y,x_prime,y_prime" : "y,z") << ",re,im\n";
        run.timed("kernel_points", [&] {
            for (const auto& p : k.points) {
                const Complex v = eval(p);
                for (double c : p) f << format_double(c) << ',';
                f << format_double(v.real()) << ',' << format_double(v.imag()) << '\n';
            }
            return 0;
        });
        run.out << "evaluated " << k.points.size() << " points of the " << k.family << " kernel\n";
        return;
    }

    // Grid evaluation: hypoelliptic families map the grid to (x', y') from
    // the configured source point, potential families to (y, z) and the heat
    // kernel to z in R^2.
    const Grid2D& g = run.cfg.grid;
    Field re(g), im(g);
    run.timed("kernel_grid", [&] {
        if (k.family == "quad_khe") {
            std::vector<double> gaps(g.nx);
            for (std::size_t i = 0; i < g.nx; ++i) gaps[i] = k.source[0] - g.x(i);
            parallel_for(g.ny, [&](std::size_t j) {
                const auto u = quad_khe_density(k.t, k.source[1], g.y(j), k.rho, gaps);
                for (std::size_t i = 0; i < g.nx; ++i) re.at(i, j) = u[i];
            });
            return 0;
        }
        parallel_for(g.ny, [&](std::size_t j) {
            for (std::size_t i = 0; i < g.nx; ++i) {
                std::vector<double> p;
                if (k.family == "heat") p = {g.x(i), g.y(j)};
                else if (khe_family) p = {k.source[0], k.source[1], g.x(i), g.y(j)};
                else p = {g.x(i), g.y(j)};
                const Complex v = eval(p);
                re.at(i, j) = v.real();
                im.at(i, j) = v.imag();
            }
        });
        return 0;
    });
    run.field(re, "kernel", k.family + " kernel, t = " + format_double(k.t));
    if (k.family == "linear_potential" || k.family == "quadratic_potential" || k.family == "ou_potential") {
        run.field(im, "kernel_imag", k.family + " kernel (imaginary part)");
    }
    run.out << "evaluated the " << k.family << " kernel on a " << g.nx << " x " << g.ny << " grid\n";
}

// ---------------------------------------------------------------------------
// propagate, mc, fd, compare, table1

PropagateResult propagate_run(Run& run, const std::string& stage) {
    const Field f = gaussian_ic(run.cfg.grid, run.cfg.sigma_c2);
    return run.timed(stage, [&] { return propagate(f, run.cfg.drift.build(), run.cfg.propagate); });
}

void cmd_propagate(Run& run) {
    const PropagateResult r = propagate_run(run, "propagate");
    run.field(r.field, "propagate", "iterated kernel, N = " + std::to_string(run.cfg.propagate.N));
    std::ofstream f(run.file("propagate_steps.csv"), std::ios::binary);
    f << "step,mass,min_value\n";
    for (std::size_t k = 0; k < r.steps.size(); ++k) {
        f << k + 1 << ',' << format_double(r.steps[k].mass) << ',' << format_double(r.steps[k].min_value) << '\n';
    }
    run.out << "propagated with N = " << run.cfg.propagate.N << ", final mass " << format_double(r.field.mass())
            << '\n';
}

void cmd_mc(Run& run) {
    const RunConfig& cfg = run.cfg;
    if (!cfg.mc.points.empty()) {
        const double s2 = cfg.sigma_c2;
        const Payoff payoff = [s2](double x, double y) {
            return std::exp(-(x * x + y * y) / (2.0 * s2)) / (2.0 * std::acos(-1.0) * s2);
        };
        const DriftSpec drift = cfg.drift.build();
        std::ofstream f(run.file("mc_points.csv"), std::ios::binary);
        f << "x,y,mean,std_error\n";
        run.timed("mc_points", [&] {
            for (const auto& p : cfg.mc.points) {
                const McEstimate e = estimate_u(cfg.T, p[0], p[1], payoff, drift, cfg.mc.config);
                f << format_double(p[0]) << ',' << format_double(p[1]) << ',' << format_double(e.value()) << ','
                  << format_double(e.std_error) << '\n';
            }
            return 0;
        });
        run.out << "estimated u(T) at " << cfg.mc.points.size() << " points\n";
        return;
    }
    const McLine line = run.timed("mc_line", [&] { return mc_line(cfg, cfg.output.line_cut_y, cfg.mc.line_stride); });
    std::ofstream f(run.file("mc_line.csv"), std::ios::binary);
    f << "x,y,mean,std_error\n";
    for (std::size_t i = 0; i < cfg.grid.nx; ++i) {
        if (!std::isfinite(line.mean[i])) continue;
        f << format_double(cfg.grid.x(i)) << ',' << format_double(cfg.output.line_cut_y) << ','
          << format_double(line.mean[i]) << ',' << format_double(line.std_error[i]) << '\n';
    }
    run.out << "estimated u(T) along y = " << format_double(cfg.output.line_cut_y) << '\n';
}

FdOutcome fd_run(Run& run) {
    FdOutcome fd = run.timed("fd_reference", [&] { return fd_reference_on_run_grid(run.cfg); });
    run.manifest["fd_report"] = fd_report_json(fd.report);
    run.field(fd.field, "fd", "finite-difference reference");
    return fd;
}

void cmd_fd(Run& run) {
    const FdOutcome fd = fd_run(run);
    run.out << "FD reference: mass " << format_double(fd.report.initial_mass) << " -> "
            << format_double(fd.report.final_mass) << ", CFL " << format_double(fd.report.cfl_x) << '\n';
}

void cmd_compare(Run& run) {
    const FdOutcome fd = fd_run(run);
    const PropagateResult r = propagate_run(run, "propagate");
    run.field(r.field, "propagate", "iterated kernel, N = " + std::to_string(run.cfg.propagate.N));
    write_errors(run, {make_error_report(fd.field, r.field, run.cfg.drift.preset,
                                         static_cast<int>(run.cfg.propagate.N), "fd")});
}

void cmd_table1(Run& run) {
    const Table1Result r = run_table1(run.cfg, run.timings, &run.out);
    run.manifest["fd_report"] = fd_report_json(r.fd_report);
    run.field(r.reference, "fd", "FD reference, T = " + format_double(run.cfg.T));
    run.field(r.n1, "n1", "iterated kernel, N = 1");
    run.field(r.n5, "n5", "iterated kernel, N = 5");
    write_errors(run, r.reports);
    write_line_cut_csv(r.line_cut, run.file("line_cut.csv").string());
    if (run.cfg.output.figures) {
        std::vector<Series> series;
        for (std::size_t k = 0; k < r.line_cut.names.size(); ++k) {
            if (r.line_cut.names[k] != "mc_se") series.push_back({r.line_cut.names[k], r.line_cut.columns[k]});
        }
        write_line_plot_svg(r.line_cut.x, series, "u(T, x, " + format_double(r.line_cut.y) + ")",
                            run.file("figures/line_cut.svg").string());
    }
}

// ---------------------------------------------------------------------------
// selftest

bool cmd_selftest(Run& run) {
    OracleBudget budget;
    if (run.opts.seed) budget.seed = *run.opts.seed;
    budget.quick = run.opts.quick;
    const auto records = run.timed("selftest", [&] {
        return run_oracles(budget, [&](const Oracle& o) { return !budget.quick || o.quick; }, &run.out);
    });
    std::ofstream f(run.file("selftest.csv"), std::ios::binary);
    f << "oracle,passed,detail\n";
    std::size_t failed = 0;
    json list = json::array();
    for (const auto& r : records) {
        f << r.name << ',' << (r.passed ? "true" : "false") << ',' << csv_quote(r.detail) << '\n';
        list.push_back({{"oracle", r.name}, {"passed", r.passed}, {"seconds", r.seconds}});
        failed += r.passed ? 0 : 1;
    }
    run.manifest["oracles"] = list;
    run.out << records.size() - failed << " of " << records.size() << " oracles passed\n";
    return failed == 0;
}

// ---------------------------------------------------------------------------

json library_versions() {
    return {{"khe", KHE_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"gsl", std::string(gsl_version)},
            {"fftw", std::string(fftw_version)},
            {"compiler", std::string(__VERSION__)}};
}

int execute(const std::string& command, const Options& opts, std::ostream& out) {
    Run run{command, opts, {}, {}, json::object(), {}, {}, out};
    if (!opts.config_path.empty()) {
        run.cfg = load_run_config(opts.config_path);
    } else {
        run.cfg.propagate.T = run.cfg.T;
        run.cfg.validate();
    }
    if (opts.out_dir) run.cfg.output.directory = *opts.out_dir;
    if (opts.seed) run.cfg.mc.config.seed = *opts.seed;
    set_max_threads(opts.threads);

    run.dir = run.cfg.output.directory;
    fs::create_directories(run.dir);
    if (run.cfg.output.figures) fs::create_directories(run.dir / "figures");

    const auto start = std::chrono::steady_clock::now();
    int code = kExitOk;
    if (command == "kernel") cmd_kernel(run);
    else if (command == "propagate") cmd_propagate(run);
    else if (command == "mc") cmd_mc(run);
    else if (command == "fd") cmd_fd(run);
    else if (command == "compare") cmd_compare(run);
    else if (command == "table1") cmd_table1(run);
    else if (command == "selftest") code = cmd_selftest(run) ? kExitOk : kExitOracle;

    json timings = json::object();
    for (const auto& [name, seconds] : run.timings.stages) timings[name] = seconds;
    timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.manifest["command"] = command;
    run.manifest["config"] = to_json(run.cfg);
    run.manifest["config_path"] = opts.config_path;
    run.manifest["threads"] = max_threads();
    run.manifest["quick"] = opts.quick;
    run.manifest["versions"] = library_versions();
    run.manifest["timings_seconds"] = timings;
    run.manifest["outputs"] = run.outputs;
    run.manifest["exit_code"] = code;
    std::ofstream(run.dir / "run_manifest.json", std::ios::binary) << run.manifest.dump(2) << '\n';
    set_max_threads(0);
    return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Kernels, propagation and reference solvers for Kolmogorov hypoelliptic equations", "khe_bench"};
    app.set_version_flag("--version", KHE_VERSION);
    Options opts;
    std::uint64_t seed = 0;
    app.add_option("--config", opts.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--out", opts.out_dir, "Output directory (overrides output.directory)");
    auto* seed_opt = app.add_option("--seed", seed, "Seed of the Monte Carlo streams and the self-test");
    app.add_option("--threads", opts.threads, "Cap on worker threads (0: all cores)");
    app.add_flag("--quick", opts.quick, "selftest: run the fast subset of oracles");
    app.require_subcommand(1);
    app.fallthrough();

    const std::vector<std::pair<std::string, std::string>> commands{
        {"kernel", "Evaluate a kernel at explicit points or over the grid"},
        {"propagate", "Iterate the approximated semigroup from the Gaussian initial condition"},
        {"mc", "Monte Carlo estimate of u(T) at points or along the line cut"},
        {"fd", "Finite-difference reference solution"},
        {"compare", "Relative errors of the iterated kernel against the FD reference"},
        {"table1", "The table1 experiment: FD reference, N = 1 and N = 5, line cut"},
        {"selftest", "Run the oracle suite"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (seed_opt->count() > 0) opts.seed = seed;
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        return execute(command, opts, out);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        err << "numerical divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    set_max_threads(0);
    return kExitOther;
}

}  // namespace khe::cli
