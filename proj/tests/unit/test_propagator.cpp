#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "khe/errors.hpp"
#include "khe/metrics.hpp"
#include "khe/parallel.hpp"
#include "khe/propagator.hpp"

using namespace khe;

namespace {

constexpr double kPi = std::numbers::pi;

// u(T, x, y) for dX = (a Y + c0) dt, dY = dW and f the N(0, s2 I) density:
// (X_T, Y_T) is Gaussian, so u is a bivariate normal density at its mean.
Field affine_solution(const Grid2D& grid, double a, double c0, double T, double s2) {
    Field u(grid);
    const double vxx = a * a * T * T * T / 3.0 + s2;
    const double vxy = a * T * T / 2.0;
    const double vyy = T + s2;
    const double det = vxx * vyy - vxy * vxy;
    for (std::size_t j = 0; j < grid.ny; ++j) {
        for (std::size_t i = 0; i < grid.nx; ++i) {
            const double y = grid.y(j);
            const double mx = grid.x(i) + T * (c0 + a * y);
            const double my = y;
            const double quad = (vyy * mx * mx - 2.0 * vxy * mx * my + vxx * my * my) / det;
            u.at(i, j) = std::exp(-0.5 * quad) / (2.0 * kPi * std::sqrt(det));
        }
    }
    return u;
}

Grid2D small_grid() { return Grid2D{-8.0, 8.0, -4.0, 4.0, 161, 81}; }

}  // namespace

TEST_CASE("gaussian initial condition") {
    const Grid2D grid;
    const Field f = gaussian_ic(grid, 0.2);
    CHECK(f.at(140, 50) == doctest::Approx(1.0 / (2.0 * kPi * 0.2)).epsilon(1e-15));
    CHECK(f.at(140, 50) == doctest::Approx(0.7957747).epsilon(1e-7));
    CHECK(std::abs(f.mass() - 1.0) < 1e-6);
    double asym = 0.0;   // node coordinates are only symmetric up to rounding
    for (std::size_t j = 0; j < grid.ny; ++j) {
        for (std::size_t i = 0; i < grid.nx; ++i) {
            const double v = f.at(i, j);
            asym = std::max(asym, std::abs(v - f.at(grid.nx - 1 - i, j)) / v);
            asym = std::max(asym, std::abs(v - f.at(i, grid.ny - 1 - j)) / v);
        }
    }
    CHECK(asym < 1e-10);
    CHECK_THROWS_AS(gaussian_ic(grid, 0.0), DomainError);
}

TEST_CASE("configuration errors") {
    const Grid2D grid{-2.0, 2.0, 4.0, 8.0, 21, 41};   // y = 6 is a node
    PropagateConfig cfg;
    CHECK_THROWS_WITH_AS(StepOperator(grid, DriftSpec::table1(), 0.1, cfg),
                         doctest::Contains("row 20"), ConfigError);
    cfg.kernel_mode = KernelMode::exact_affine;
    CHECK_THROWS_AS(StepOperator(small_grid(), DriftSpec::table1(), 0.1, cfg), ConfigError);
    PropagateConfig bad;
    bad.N = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = PropagateConfig{};
    bad.support_cutoff_sigmas = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("exact affine kernel reproduces the Gaussian solution") {
    const Grid2D grid = small_grid();
    const DriftSpec drift = DriftSpec::affine(Eigen::VectorXd::Constant(1, -1.0), 0.3);
    PropagateConfig cfg;
    cfg.kernel_mode = KernelMode::exact_affine;
    cfg.T = 1.0;
    const Field f = gaussian_ic(grid, 0.2);
    const Field exact = affine_solution(grid, -1.0, 0.3, 1.0, 0.2);

    cfg.N = 1;
    const Field one = propagate(f, drift, cfg).field;
    cfg.N = 4;
    const Field four = propagate(f, drift, cfg).field;
    CHECK(relative_lp_error(one, four, LpNorm::linf) < 1e-3);
    CHECK(relative_lp_error(exact, one, LpNorm::linf) < 1e-3);
    CHECK(relative_lp_error(exact, four, LpNorm::linf) < 1e-3);

    // pbar and q coincide for affine drifts.
    cfg.kernel_mode = KernelMode::pbar;
    const Field pbar = propagate(f, drift, cfg).field;
    cfg.kernel_mode = KernelMode::q;
    const Field q = propagate(f, drift, cfg).field;
    CHECK(relative_lp_error(q, pbar, LpNorm::linf) < 1e-14);
}

TEST_CASE("a very short step is close to the identity") {
    const Grid2D grid = small_grid();
    const Field f = gaussian_ic(grid, 0.2);
    const PropagateConfig cfg;
    const Field g = step(f, DriftSpec::table1(), 1e-3, cfg);
    CHECK(relative_lp_error(f, g, LpNorm::linf) < 1e-2);
}

TEST_CASE("table1 step keeps its mass") {
    const Grid2D grid;
    const Field f = gaussian_ic(grid, 0.2);
    PropagateConfig cfg;
    cfg.T = 0.5;
    cfg.N = 1;
    const PropagateResult r = propagate(f, DriftSpec::table1(), cfg);
    CHECK(r.steps.size() == 1);
    CHECK(r.steps[0].mass > 0.99);
    CHECK(r.steps[0].mass < 1.01);
    CHECK(r.steps[0].mass == doctest::Approx(r.field.mass()).epsilon(1e-15));

    SUBCASE("N = 1 is one step call") {
        const Field s = step(f, DriftSpec::table1(), 0.5, cfg);
        CHECK(s.values() == r.field.values());
    }
}

TEST_CASE("support cutoff at 8 sigma matches the full-domain integral") {
    const Grid2D grid{-10.0, 10.0, -4.0, 4.0, 101, 41};
    const Field f = gaussian_ic(grid, 0.2);
    PropagateConfig cfg;
    cfg.T = 1.0;
    cfg.N = 2;
    const Field cut = propagate(f, DriftSpec::table1(), cfg).field;
    cfg.support_cutoff_sigmas = std::numeric_limits<double>::infinity();
    const Field full = propagate(f, DriftSpec::table1(), cfg).field;
    CHECK(relative_lp_error(full, cut, LpNorm::linf) < 1e-6);
}

TEST_CASE("output does not depend on the thread count") {
    const Grid2D grid = small_grid();
    const Field f = gaussian_ic(grid, 0.2);
    PropagateConfig cfg;
    cfg.T = 1.0;
    cfg.N = 2;
    set_max_threads(1);
    const Field a = propagate(f, DriftSpec::table1(), cfg).field;
    set_max_threads(3);
    const Field b = propagate(f, DriftSpec::table1(), cfg).field;
    set_max_threads(0);
    CHECK(a.values() == b.values());
}

TEST_CASE("clamping removes negative values and keeps the step mass") {
    const Grid2D grid = small_grid();
    const Field f = gaussian_ic(grid, 0.2);
    PropagateConfig cfg;
    cfg.T = 2.5;
    cfg.N = 1;
    const PropagateResult raw = propagate(f, DriftSpec::table1(), cfg);
    REQUIRE(raw.field.min_value() < 0.0);
    cfg.clamp_negative = true;
    const PropagateResult clamped = propagate(f, DriftSpec::table1(), cfg);
    CHECK(clamped.field.min_value() >= 0.0);
    CHECK(clamped.field.mass() == doctest::Approx(raw.steps[0].mass).epsilon(1e-12));
}

TEST_CASE("trapezoid and product rules agree when the kernel is resolved") {
    const Grid2D grid = small_grid();
    const Field f = gaussian_ic(grid, 0.2);
    PropagateConfig cfg;
    cfg.T = 2.0;
    cfg.N = 1;
    const Field product = propagate(f, DriftSpec::table1(), cfg).field;
    cfg.quadrature = QuadratureRule::trapezoid;
    const Field trapezoid = propagate(f, DriftSpec::table1(), cfg).field;
    CHECK(relative_lp_error(product, trapezoid, LpNorm::l2) < 1e-3);
}
