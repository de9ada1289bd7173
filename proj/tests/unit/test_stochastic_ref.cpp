#include <cmath>
#include <numbers>

#include "doctest.h"
#include "khe/closed_kernels.hpp"
#include "khe/errors.hpp"
#include "khe/parallel.hpp"
#include "khe/stochastic_ref.hpp"

using namespace khe;
using Eigen::VectorXd;
using Complex = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;

VectorXd scalar_vec(double v) { return VectorXd::Constant(1, v); }

McConfig config(std::size_t steps, std::size_t samples, std::uint64_t seed = 7) {
    McConfig c;
    c.n_steps = steps;
    c.n_samples = samples;
    c.seed = seed;
    return c;
}

bool within_se(const McEstimate& e, Complex reference, double k = 3.0) {
    return std::abs(e.mean - reference) <= k * e.std_error;
}

double gaussian_ic(double x, double y) {
    constexpr double s2 = 0.2;
    return std::exp(-(x * x + y * y) / (2.0 * s2)) / (2.0 * kPi * s2);
}

}  // namespace

TEST_CASE("McConfig rejects empty runs") {
    CHECK_THROWS_AS(config(0, 10).validate(), ConfigError);
    CHECK_THROWS_AS(config(10, 0).validate(), ConfigError);
    McConfig c = config(10, 1);
    c.antithetic = true;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("estimates are bit-identical across seeds reruns and thread counts") {
    const DriftSpec drift = DriftSpec::table1();
    const McConfig cfg = config(50, 20000, 11);
    set_max_threads(1);
    const McEstimate a = estimate_u(0.5, 0.0, 3.0, gaussian_ic, drift, cfg);
    set_max_threads(4);
    const McEstimate b = estimate_u(0.5, 0.0, 3.0, gaussian_ic, drift, cfg);
    const McEstimate c = estimate_u(0.5, 0.0, 3.0, gaussian_ic, drift, cfg);
    set_max_threads(0);
    CHECK(a.mean == b.mean);
    CHECK(a.std_error == b.std_error);
    CHECK(b.mean == c.mean);
    const McEstimate other = estimate_u(0.5, 0.0, 3.0, gaussian_ic, drift, config(50, 20000, 12));
    CHECK(other.mean != a.mean);
}

TEST_CASE("path i draws from stream i regardless of the run size") {
    const PathSampler first_normal = [](GaussianSource& g, std::span<Complex> out) {
        out[0] = g.normal();
    };
    for (std::size_t n : {std::size_t{4096}, std::size_t{10000}}) {
        const McEstimate e = run_monte_carlo(config(1, n, 99), 1, first_normal).front();
        double manual = 0.0;
        for (std::size_t i = 0; i < n; ++i) manual += RandomStream(99, i).normal();
        CHECK(e.n_effective == n);
        CHECK(e.mean.real() == doctest::Approx(manual / static_cast<double>(n)).epsilon(1e-12));
    }
}

TEST_CASE("estimate_u: frozen X and the first moment of c(y) = -y") {
    const auto project_x = [](double x, double) { return x; };
    const McEstimate frozen =
        estimate_u(1.3, 0.7, -2.0, project_x, DriftSpec::affine(scalar_vec(0.0)), config(10, 1000));
    CHECK(frozen.mean.real() == 0.7);
    CHECK(frozen.std_error == 0.0);

    // E[X_T] = x - T y for dX = -Y dt.
    const McEstimate moved =
        estimate_u(1.0, 0.5, 1.0, project_x, DriftSpec::affine(scalar_vec(-1.0)), config(100, 40000));
    CHECK(within_se(moved, 0.5 - 1.0));
    CHECK(moved.std_error < 0.01);
}

TEST_CASE("characteristic function of the linear system is Gaussian") {
    // dX = -Y dt: X_t = x - t y - int W, Var(int_0^t W) = t^3/3, Cov(int W, W_t) = t^2/2.
    const DriftSpec drift = DriftSpec::affine(scalar_vec(-1.0));
    const double t = 1.0, x = 0.2, y = -0.4;
    const std::vector<std::array<double, 2>> thetas{{1.0, 0.0}, {0.5, -1.0}, {2.0, 1.0}};
    const auto mc = characteristic_function(t, x, y, thetas, PathModel{&drift, 0.0},
                                            config(1000, 50000));
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        const double a = thetas[k][0], b = thetas[k][1];
        const double mean = a * (x - t * y) + b * y;
        const double var = a * a * t * t * t / 3.0 + b * b * t - 2.0 * a * b * t * t / 2.0;
        const Complex exact = std::polar(std::exp(-0.5 * var), mean);
        CHECK(within_se(mc[k], exact));
    }
}

TEST_CASE("line estimates agree with pointwise estimates on shared paths") {
    const DriftSpec drift = DriftSpec::table1();
    const std::vector<double> xs{-0.5, 0.0, 0.75};
    const McConfig cfg = config(40, 5000);
    const auto line = estimate_u_line(0.3, xs, 0.5, gaussian_ic, drift, cfg);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const McEstimate point = estimate_u(0.3, xs[k], 0.5, gaussian_ic, drift, cfg);
        CHECK(line[k].mean.real() == doctest::Approx(point.mean.real()).epsilon(1e-12));
    }
}

TEST_CASE("bridge functional against the closed-form potential kernels") {
    const McConfig cfg = config(1024, 40000);
    SUBCASE("alpha = 0 is the heat kernel") {
        const McEstimate e = bridge_functional(0.8, scalar_vec(0.1), scalar_vec(-0.3),
                                               BridgePotential::linear(scalar_vec(1.0)), 0.0, cfg);
        CHECK(e.mean.real() == doctest::Approx(heat_kernel(0.8, -0.4)).epsilon(1e-15));
        CHECK(e.std_error == 0.0);
    }
    SUBCASE("linear potential, alpha = 1") {
        const McEstimate e = bridge_functional(1.0, scalar_vec(0.0), scalar_vec(0.0),
                                               BridgePotential::linear(scalar_vec(1.0)), 1.0, cfg);
        CHECK(within_se(e, std::exp(1.0 / 24.0) / std::sqrt(2.0 * kPi)));
        const Complex kernel = linear_potential_kernel(1.0, scalar_vec(0.0), scalar_vec(0.0),
                                                       LinearPotentialParams{scalar_vec(1.0), 1.0});
        CHECK(within_se(e, kernel));
    }
    SUBCASE("linear potential, complex alpha and d = 2") {
        const VectorXd y = (VectorXd(2) << 0.3, -0.2).finished();
        const VectorXd z = (VectorXd(2) << -0.1, 0.4).finished();
        const VectorXd a = (VectorXd(2) << 1.0, 0.5).finished();
        const Complex alpha(0.3, 1.2);
        const McEstimate e =
            bridge_functional(0.7, y, z, BridgePotential::linear(a), alpha, cfg);
        CHECK(within_se(e, linear_potential_kernel(0.7, y, z, LinearPotentialParams{a, alpha})));
    }
    SUBCASE("quadratic potential, alpha = -1") {
        const McEstimate e = bridge_functional(1.0, scalar_vec(0.0), scalar_vec(0.0),
                                               BridgePotential::quadratic(scalar_vec(1.0)), -1.0, cfg);
        const Complex kernel = quadratic_potential_kernel(
            1.0, scalar_vec(0.0), scalar_vec(0.0), QuadraticPotentialParams{scalar_vec(1.0), -1.0});
        CHECK(within_se(e, kernel));
    }
}

TEST_CASE("antithetic pairs do not increase the bridge standard error") {
    McConfig plain = config(256, 20000);
    McConfig anti = plain;
    anti.antithetic = true;
    const auto pot = BridgePotential::linear(scalar_vec(1.0));
    const McEstimate a = bridge_functional(1.0, scalar_vec(0.0), scalar_vec(0.0), pot, 1.0, plain);
    const McEstimate b = bridge_functional(1.0, scalar_vec(0.0), scalar_vec(0.0), pot, 1.0, anti);
    CHECK(b.n_effective == 10000);
    CHECK(b.std_error <= a.std_error);
}

TEST_CASE("Karhunen-Loeve bridge functional") {
    const McConfig cfg = config(1, 20000);
    const KlBridgeResult zero = kl_bridge_functional(0.0, 16, cfg);
    CHECK(zero.estimate.mean == Complex(1.0, 0.0));
    CHECK(zero.product == Complex(1.0, 0.0));

    CHECK(std::abs(kl_truncated_product(-0.5, 100000) - oscillator_factor(-1.0)) < 1e-4);

    const KlBridgeResult r = kl_bridge_functional(-0.5, 1024, cfg);
    CHECK(within_se(r.estimate, r.product));
    const KlBridgeResult c = kl_bridge_functional(Complex(-0.2, 0.6), 1024, cfg);
    CHECK(within_se(c.estimate, c.product));
    CHECK(std::abs(c.product - oscillator_factor(Complex(-0.4, 1.2))) < 1e-3);

    double previous = 0.0;
    for (std::size_t k : {1, 4, 16, 256, 4096}) {
        const double p = kl_truncated_product(-0.5, k).real();
        CHECK(p < previous + (k == 1 ? 1.0 : 0.0));
        previous = p;
    }
    CHECK(previous > oscillator_factor(-1.0).real());

    CHECK_THROWS_AS(kl_truncated_product(kPi * kPi / 2.0, 3), SingularityError);
}

TEST_CASE("OU bridge oracle") {
    SUBCASE("alpha = 0 returns the transition density") {
        const McEstimate e = ou_bridge_oracle(1.0, 0.3, 0.1, 1.0, 0.0, config(64, 100));
        CHECK(e.mean.real() == doctest::Approx(ou_transition_density(1.0, 0.3, 0.1, 1.0)));
        CHECK(e.std_error == 0.0);
    }
    SUBCASE("covariance of the integral with the endpoint") {
        const McEstimate cov = ou_integral_covariance(1.0, 1.0, config(256, 100000));
        const double expected = 0.5 * std::pow(1.0 - std::exp(-1.0), 2);
        CHECK(within_se(cov, expected));
        CHECK(expected == doctest::Approx(ou_omega(1.0, 1.0) * (1.0 - std::exp(-2.0)) / 2.0));
    }
    SUBCASE("the statement sign is selected") {
        const OUParams params{1.0, 1.0};
        const McEstimate e = ou_bridge_oracle(1.0, 0.3, 0.1, 1.0, 1.0, config(512, 100000));
        const Complex statement = ou_potential_kernel(1.0, 0.3, 0.1, params, OuTanhSign::statement);
        const Complex proof = ou_potential_kernel(1.0, 0.3, 0.1, params, OuTanhSign::proof);
        CHECK(within_se(e, statement));
        CHECK(std::abs(e.mean - proof) > 5.0 * e.std_error);
    }
}

TEST_CASE("reversed-drift adjoint check") {
    const McConfig cfg = config(200, 40000);
    SUBCASE("affine drift") {
        const AdjointCheckReport r = reversed_drift_check(0.5, DriftSpec::affine(scalar_vec(1.5), 0.2), cfg);
        CHECK(r.thetas.size() == 25);
        CHECK(r.max_deviation_se < 4.0);
    }
    SUBCASE("table1 drift") {
        const AdjointCheckReport r = reversed_drift_check(0.5, DriftSpec::table1(), cfg);
        CHECK(r.max_deviation_se < 4.0);
    }
    SUBCASE("zero drift: y-marginals coincide") {
        AdjointCheckOptions opts;
        opts.theta_x = {0.0};
        const AdjointCheckReport r =
            reversed_drift_check(0.5, DriftSpec::affine(scalar_vec(0.0)), cfg, opts);
        CHECK(r.max_deviation_se < 4.0);
    }
    SUBCASE("a wrong sign is detected") {
        // Running the "reversed" side with the forward drift breaks the identity.
        AdjointCheckOptions opts;
        const DriftSpec drift = DriftSpec::affine(scalar_vec(2.0), 1.0);
        const DriftSpec flipped = DriftSpec::affine(scalar_vec(-2.0), -1.0);
        const AdjointCheckReport good = reversed_drift_check(0.5, drift, cfg, opts);
        const AdjointCheckReport a = reversed_drift_check(0.5, flipped, cfg, opts);
        CHECK(good.max_deviation_se < 4.0);
        CHECK(a.max_deviation_se < 4.0);
        // Mixing the two runs compares forward(c) with reversed(-c), which differ.
        double worst = 0.0;
        for (std::size_t k = 0; k < good.thetas.size(); ++k) {
            const double se = std::hypot(good.forward[k].std_error, a.forward[k].std_error);
            worst = std::max(worst, std::abs(good.forward[k].mean - a.reversed[k].mean) / se);
        }
        CHECK(worst > 10.0);
    }
}

TEST_CASE("small-time error estimator") {
    SUBCASE("vanishes for affine drifts") {
        const auto e = smalltime_error_estimate(0.2, 0.1, 0.5, gaussian_ic,
                                                DriftSpec::affine(scalar_vec(1.3), 0.4),
                                                config(64, 512));
        CHECK(std::abs(e.difference.mean) < 1e-14);
        CHECK(e.reference.mean.real() > 0.0);
    }
    SUBCASE("reference part agrees with forward simulation") {
        const DriftSpec drift = DriftSpec::table1();
        const auto e = smalltime_error_estimate(0.3, 0.0, 0.5, gaussian_ic, drift, config(64, 4000));
        const McEstimate forward = estimate_u(0.3, 0.0, 0.5, gaussian_ic, drift, config(300, 40000));
        const double se = std::hypot(e.reference.std_error, forward.std_error);
        CHECK(std::abs(e.reference.mean - forward.mean) < 3.0 * se + 2e-3 * std::abs(forward.mean));
    }
    SUBCASE("decays faster than t^{3/2} for table1 at (0, 3)") {
        const DriftSpec drift = DriftSpec::table1();
        const auto big = smalltime_error_estimate(0.4, 0.0, 3.0, gaussian_ic, drift, config(128, 4000));
        const auto small = smalltime_error_estimate(0.1, 0.0, 3.0, gaussian_ic, drift, config(128, 4000));
        CHECK(big.difference.std_error < 0.1 * std::abs(big.difference.mean));
        CHECK(small.difference.std_error < 0.1 * std::abs(small.difference.mean));
        const double slope =
            std::log(std::abs(big.difference.mean) / std::abs(small.difference.mean)) / std::log(4.0);
        CHECK(slope > 1.3);
    }
}
