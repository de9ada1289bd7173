#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <Eigen/Dense>
#include <pybind11/eigen.h>

#include <sstream>
#include <limits>

#include "khe/closed_kernels.hpp"
#include "khe/drift.hpp"
#include "khe/errors.hpp"
#include "khe/fd_reference.hpp"
#include "khe/grid.hpp"
#include "khe/metrics.hpp"
#include "khe/parallel.hpp"
#include "khe/propagator.hpp"
#include "khe/smalltime_kernel.hpp"
#include "khe/stochastic_ref.hpp"
#include "khe_cli/commands.hpp"

namespace py = pybind11;
using namespace khe;

namespace {

using Array2D = py::array_t<double, py::array::c_style | py::array::forcecast>;

Field field_from_array(const Grid2D& grid, const Array2D& values) {
    if (values.ndim() != 2 || static_cast<std::size_t>(values.shape(0)) != grid.ny ||
        static_cast<std::size_t>(values.shape(1)) != grid.nx) {
        throw ShapeError("expected an array of shape (ny, nx) = (" + std::to_string(grid.ny) + ", " +
                         std::to_string(grid.nx) + ")");
    }
    Field f(grid);
    std::copy(values.data(), values.data() + values.size(), f.values().begin());
    return f;
}

Array2D field_to_array(const Field& f) {
    Array2D out({f.grid().ny, f.grid().nx});
    std::copy(f.values().begin(), f.values().end(), out.mutable_data());
    return out;
}

KernelMode kernel_mode(const std::string& s) {
    if (s == "pbar") return KernelMode::pbar;
    if (s == "q") return KernelMode::q;
    if (s == "exact_affine") return KernelMode::exact_affine;
    throw ConfigError("kernel_mode must be pbar, q or exact_affine");
}

XScheme x_scheme(const std::string& s) {
    if (s == "spectral") return XScheme::spectral;
    if (s == "upwind1") return XScheme::upwind1;
    if (s == "centered2") return XScheme::centered2;
    throw ConfigError("x_scheme must be spectral, upwind1 or centered2");
}

LpNorm lp_norm(const std::string& s) {
    if (s == "1") return LpNorm::l1;
    if (s == "2") return LpNorm::l2;
    if (s == "inf") return LpNorm::linf;
    throw ConfigError("p must be \"1\", \"2\" or \"inf\"");
}

OuTanhSign ou_sign(const std::string& s) {
    if (s == "statement") return OuTanhSign::statement;
    if (s == "proof") return OuTanhSign::proof;
    throw ConfigError("sign must be statement or proof");
}

McConfig mc_config(std::size_t n_steps, std::size_t n_samples, std::uint64_t seed) {
    McConfig c;
    c.n_steps = n_steps;
    c.n_samples = n_samples;
    c.seed = seed;
    return c;
}

std::pair<Complex, double> estimate_pair(const McEstimate& e) { return {e.mean, e.std_error}; }

}  // namespace

PYBIND11_MODULE(_khe, m) {
    m.doc() = "Kernels, propagation and reference solvers for Kolmogorov hypoelliptic equations";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
    py::register_exception<DegenerateKernelError>(m, "DegenerateKernelError", PyExc_ValueError);
    py::register_exception<DegenerateGradientError>(m, "DegenerateGradientError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

    py::class_<Grid2D>(m, "Grid2D")
        .def(py::init([](double x_min, double x_max, double y_min, double y_max, std::size_t nx, std::size_t ny) {
                 Grid2D g{x_min, x_max, y_min, y_max, nx, ny};
                 g.validate();
                 return g;
             }),
             py::arg("x_min") = -14.0, py::arg("x_max") = 14.0, py::arg("y_min") = -5.0, py::arg("y_max") = 5.0,
             py::arg("nx") = 281, py::arg("ny") = 101)
        .def_readonly("x_min", &Grid2D::x_min)
        .def_readonly("x_max", &Grid2D::x_max)
        .def_readonly("y_min", &Grid2D::y_min)
        .def_readonly("y_max", &Grid2D::y_max)
        .def_readonly("nx", &Grid2D::nx)
        .def_readonly("ny", &Grid2D::ny)
        .def("refined", &Grid2D::refined)
        .def("xs", [](const Grid2D& g) {
            std::vector<double> v(g.nx);
            for (std::size_t i = 0; i < g.nx; ++i) v[i] = g.x(i);
            return v;
        })
        .def("ys", [](const Grid2D& g) {
            std::vector<double> v(g.ny);
            for (std::size_t j = 0; j < g.ny; ++j) v[j] = g.y(j);
            return v;
        })
        .def(py::self == py::self)
        .def("__repr__", [](const Grid2D& g) {
            return "Grid2D(" + format_double(g.x_min) + ", " + format_double(g.x_max) + ", " +
                   format_double(g.y_min) + ", " + format_double(g.y_max) + ", " + std::to_string(g.nx) + ", " +
                   std::to_string(g.ny) + ")";
        });

    py::class_<Field>(m, "Field")
        .def(py::init(&field_from_array), py::arg("grid"), py::arg("values"))
        .def_property_readonly("grid", &Field::grid)
        .def_property_readonly("values", &field_to_array, "Copy of the values as an (ny, nx) array")
        .def("mass", &Field::mass)
        .def("min_value", &Field::min_value)
        .def("restrict_to", &Field::restrict_to)
        .def("line_cut_y", [](const Field& f, double y) { return line_cut_y(f, y); })
        .def("to_csv", [](const Field& f, const std::string& path) { write_field_csv(f, path); })
        .def_static("from_csv", [](const std::string& path) { return read_field_csv(path); });

    py::class_<DriftSpec>(m, "DriftSpec")
        .def_static("table1", &DriftSpec::table1)
        .def_static("affine", &DriftSpec::affine, py::arg("a"), py::arg("c0") = 0.0)
        .def_static("quadratic", &DriftSpec::quadratic, py::arg("beta"), py::arg("omega"))
        .def_static("photon", &DriftSpec::photon)
        .def_static("polynomial", &DriftSpec::polynomial, py::arg("coeffs"))
        .def_static("exponential", &DriftSpec::exponential)
        .def_property_readonly("name", &DriftSpec::name)
        .def_property_readonly("dim", &DriftSpec::dim)
        .def("value", py::overload_cast<const Eigen::VectorXd&>(&DriftSpec::value, py::const_))
        .def("gradient", &DriftSpec::gradient)
        .def("hessian", &DriftSpec::hessian);

    // closed-form kernels
    m.def("heat_kernel", py::overload_cast<double, const Eigen::VectorXd&>(&heat_kernel), py::arg("t"),
          py::arg("z"));
    m.def(
        "linear_potential_kernel",
        [](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z, const Eigen::VectorXd& a, Complex alpha) {
            return linear_potential_kernel(t, y, z, {a, alpha});
        },
        py::arg("t"), py::arg("y"), py::arg("z"), py::arg("a"), py::arg("alpha"));
    m.def(
        "quadratic_potential_kernel",
        [](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z, const Eigen::VectorXd& rho, Complex alpha) {
            return quadratic_potential_kernel(t, y, z, {rho, alpha});
        },
        py::arg("t"), py::arg("y"), py::arg("z"), py::arg("rho"), py::arg("alpha"));
    m.def("oscillator_factor", &oscillator_factor, py::arg("w"));
    m.def("linear_khe_kernel", &linear_khe_kernel, py::arg("t"), py::arg("x"), py::arg("y"), py::arg("x_prime"),
          py::arg("y_prime"), py::arg("a"));
    m.def(
        "quad_khe_kernel",
        [](double t, double x, const Eigen::VectorXd& y, double xp, const Eigen::VectorXd& yp,
           const Eigen::VectorXd& rho) { return quad_khe_kernel(t, x, y, xp, yp, rho).value; },
        py::arg("t"), py::arg("x"), py::arg("y"), py::arg("x_prime"), py::arg("y_prime"), py::arg("rho"));
    m.def(
        "ou_potential_kernel",
        [](double t, double y, double z, double zeta, Complex alpha, const std::string& sign) {
            return ou_potential_kernel(t, y, z, {zeta, alpha}, ou_sign(sign));
        },
        py::arg("t"), py::arg("y"), py::arg("z"), py::arg("zeta"), py::arg("alpha"), py::arg("sign") = "statement");
    m.def(
        "ou_khe_kernel",
        [](double t, double x, double y, double xp, double yp, double zeta, const std::string& sign) {
            return ou_khe_kernel(t, x, y, xp, yp, zeta, ou_sign(sign));
        },
        py::arg("t"), py::arg("x"), py::arg("y"), py::arg("x_prime"), py::arg("y_prime"), py::arg("zeta"),
        py::arg("sign") = "statement");

    // small-time kernels
    m.def(
        "h_correction",
        [](const Eigen::VectorXd& y, const Eigen::VectorXd& yp, const DriftSpec& drift, std::size_t order) {
            return h_correction(y, yp, drift, order);
        },
        py::arg("y"), py::arg("y_prime"), py::arg("drift"), py::arg("quad_order") = 32);
    m.def(
        "frozen_kernel_q",
        [](double t, double x, const Eigen::VectorXd& y, double xp, const Eigen::VectorXd& yp,
           const DriftSpec& drift) { return frozen_kernel_q(t, x, y, xp, yp, drift); },
        py::arg("t"), py::arg("x"), py::arg("y"), py::arg("x_prime"), py::arg("y_prime"), py::arg("drift"));
    m.def(
        "pbar_kernel",
        [](double t, double x, const Eigen::VectorXd& y, double xp, const Eigen::VectorXd& yp,
           const DriftSpec& drift) { return pbar_kernel(t, x, y, xp, yp, drift); },
        py::arg("t"), py::arg("x"), py::arg("y"), py::arg("x_prime"), py::arg("y_prime"), py::arg("drift"));

    // propagation and references
    m.def("gaussian_ic", &gaussian_ic, py::arg("grid"), py::arg("sigma_c2") = 0.2);
    m.def(
        "propagate",
        [](const Field& f, const DriftSpec& drift, double T, std::size_t N, const std::string& mode,
           bool clamp_negative, const std::string& quadrature, double cutoff) {
            PropagateConfig cfg;
            cfg.T = T;
            cfg.N = N;
            cfg.kernel_mode = kernel_mode(mode);
            cfg.clamp_negative = clamp_negative;
            if (quadrature != "product" && quadrature != "trapezoid") {
                throw ConfigError("quadrature must be product or trapezoid");
            }
            cfg.quadrature = quadrature == "product" ? QuadratureRule::product : QuadratureRule::trapezoid;
            cfg.support_cutoff_sigmas = cutoff;
            py::gil_scoped_release release;
            return propagate(f, drift, cfg).field;
        },
        py::arg("field"), py::arg("drift"), py::arg("T") = 2.5, py::arg("N") = 5, py::arg("kernel_mode") = "pbar",
        py::arg("clamp_negative") = false, py::arg("quadrature") = "product",
        py::arg("support_cutoff_sigmas") = 8.0);
    m.def(
        "fd_solve",
        [](const Field& f, const DriftSpec& drift, double T, std::size_t n_t, const std::string& scheme) {
            FdConfig cfg;
            cfg.grid = f.grid();
            cfg.T = T;
            cfg.n_t = n_t;
            cfg.x_scheme = x_scheme(scheme);
            FdReport report;
            Field u;
            {
                py::gil_scoped_release release;
                u = fd_solve(f, drift, cfg, &report);
            }
            py::dict r;
            r["cfl_x"] = report.cfl_x;
            r["diffusion_number"] = report.diffusion_number;
            r["initial_mass"] = report.initial_mass;
            r["final_mass"] = report.final_mass;
            return py::make_tuple(u, r);
        },
        py::arg("field"), py::arg("drift"), py::arg("T") = 2.5, py::arg("n_t") = 2000,
        py::arg("x_scheme") = "spectral");
    m.def(
        "estimate_u",
        [](double T, double x, double y, const DriftSpec& drift, double sigma_c2, std::size_t n_steps,
           std::size_t n_samples, std::uint64_t seed) {
            const Payoff f = [sigma_c2](double a, double b) {
                return std::exp(-(a * a + b * b) / (2.0 * sigma_c2)) / (2.0 * std::acos(-1.0) * sigma_c2);
            };
            py::gil_scoped_release release;
            const McEstimate e = estimate_u(T, x, y, f, drift, mc_config(n_steps, n_samples, seed));
            return std::make_pair(e.value(), e.std_error);
        },
        py::arg("T"), py::arg("x"), py::arg("y"), py::arg("drift"), py::arg("sigma_c2") = 0.2,
        py::arg("n_steps") = 1000, py::arg("n_samples") = 100000, py::arg("seed") = 20240607,
        "Monte Carlo u(T, x, y) for the Gaussian initial condition; returns (mean, std_error)");
    m.def(
        "characteristic_function",
        [](double T, double x, double y, const std::vector<std::array<double, 2>>& thetas, const DriftSpec& drift,
           double zeta, std::size_t n_steps, std::size_t n_samples, std::uint64_t seed) {
            std::vector<McEstimate> est;
            {
                py::gil_scoped_release release;
                est = characteristic_function(T, x, y, thetas, PathModel{&drift, zeta},
                                              mc_config(n_steps, n_samples, seed));
            }
            std::vector<std::pair<Complex, double>> out;
            for (const auto& e : est) out.push_back(estimate_pair(e));
            return out;
        },
        py::arg("T"), py::arg("x"), py::arg("y"), py::arg("thetas"), py::arg("drift"), py::arg("zeta") = 0.0,
        py::arg("n_steps") = 1000, py::arg("n_samples") = 100000, py::arg("seed") = 20240607);
    m.def(
        "relative_lp_error",
        [](const Field& reference, const Field& approx, const std::string& p) {
            return relative_lp_error(reference, approx, lp_norm(p));
        },
        py::arg("reference"), py::arg("approx"), py::arg("p"));

    m.def("set_max_threads", &set_max_threads, py::arg("n"));
    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "khe_bench");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = khe::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a khe_bench command line in-process; returns (exit_code, stdout, stderr)");
}
