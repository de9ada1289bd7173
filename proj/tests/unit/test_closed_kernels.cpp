#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "doctest.h"
#include "khe/closed_kernels.hpp"
#include "khe/errors.hpp"
#include "khe/quadrature.hpp"

using namespace khe;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Truncated Weierstrass product prod_{k <= K} (1 - w / (pi k)^2)^{-1/2} with the
// first-order tail estimate sum_{k > K} w / (2 pi^2 k^2).
Complex weierstrass_product(Complex w, long terms) {
    Complex log_sum = 0.0;
    for (long k = terms; k >= 1; --k) {
        const double pk2 = kPi * kPi * static_cast<double>(k) * static_cast<double>(k);
        log_sum += -0.5 * std::log(1.0 - w / pk2);
    }
    const double kt = static_cast<double>(terms);
    log_sum += w / (2.0 * kPi * kPi) * (1.0 / kt - 0.5 / (kt * kt));
    return std::exp(log_sum);
}

}  // namespace

TEST_CASE("heat kernel values and normalization") {
    CHECK(heat_kernel(1.0, vec({0.0})) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
    CHECK(heat_kernel(2.0, vec({0.0, 0.0})) == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-15));
    CHECK(heat_kernel(0.7, 0.3) == doctest::Approx(heat_kernel(0.7, vec({0.3}))).epsilon(1e-15));
    const double mass = trapezoid([](double z) { return heat_kernel(0.7, z); }, -10.0, 10.0, 2001);
    CHECK(std::abs(mass - 1.0) < 1e-8);
    CHECK_THROWS_AS(heat_kernel(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(heat_kernel(-1.0, vec({1.0})), DomainError);
}

TEST_CASE("linear potential kernel") {
    const VectorXd y = vec({0.2, -0.4});
    const VectorXd z = vec({-0.1, 0.5});
    const VectorXd a = vec({1.5, -0.7});
    const double heat = heat_kernel(0.8, VectorXd(z - y));

    SUBCASE("alpha = 0 and a = 0 reduce to the heat kernel") {
        CHECK(std::abs(linear_potential_kernel(0.8, y, z, {a, 0.0}) - heat) < 1e-15);
        CHECK(std::abs(linear_potential_kernel(0.8, y, z, {VectorXd::Zero(2), {1.3, -0.4}}) -
                       heat) < 1e-15);
    }
    SUBCASE("closed value at the origin") {
        const Complex v = linear_potential_kernel(1.0, vec({0.0}), vec({0.0}), {vec({1.0}), 1.0});
        CHECK(v.real() == doctest::Approx(std::exp(1.0 / 24.0) / std::sqrt(2.0 * kPi)).epsilon(1e-14));
        CHECK(v.imag() == 0.0);
    }
    SUBCASE("modulus identity for imaginary coupling") {
        for (double gamma : {-3.0, -0.5, 0.25, 2.0, 7.0}) {
            for (double t : {0.1, 0.5, 1.3}) {
                const Complex v = linear_potential_kernel(t, y, z, {a, {0.0, gamma}});
                const double expected = std::exp(-gamma * gamma * a.squaredNorm() * t * t * t / 24.0) *
                                        heat_kernel(t, VectorXd(z - y));
                CHECK(rel(std::abs(v), expected) < 1e-13);
            }
        }
    }
    CHECK_THROWS_AS(linear_potential_kernel(0.0, y, z, {a, 1.0}), DomainError);
    CHECK_THROWS_AS(linear_potential_kernel(1.0, y, vec({1.0}), {a, 1.0}), ShapeError);
}

TEST_CASE("oscillator factor") {
    CHECK(oscillator_factor(0.0) == Complex(1.0, 0.0));

    SUBCASE("negative real argument") {
        const Complex v = oscillator_factor(-1.0);
        CHECK(v.real() == doctest::Approx(0.922452236291571654).epsilon(1e-14));
        CHECK(std::abs(v.imag()) < 1e-15);
        CHECK(oscillator_factor(-0.5).real() == doctest::Approx(0.959835394379154).epsilon(1e-13));
        // Truncated product with k <= 1e6, no tail: 0.9224522830235248.
        Complex plain = 1.0;
        double log_plain = 0.0;
        for (long k = 1000000; k >= 1; --k) {
            log_plain += -0.5 * std::log1p(1.0 / (kPi * kPi * double(k) * double(k)));
        }
        plain = std::exp(log_plain);
        CHECK(std::abs(plain.real() - 0.9224522830235248) < 1e-12);
        CHECK(std::abs(v.real() - plain.real()) < 1e-4);
        CHECK(std::abs(weierstrass_product(-1.0, 1000000) - v) < 1e-12);
    }

    SUBCASE("complex arguments agree with the Weierstrass product") {
        for (Complex w : {Complex(0.5, 0.5), Complex(30.0, 20.0), Complex(-40.0, -3.0),
                          Complex(5.0, -60.0), Complex(100.0, 1.0)}) {
            const Complex closed = oscillator_factor(w);
            const Complex product = weierstrass_product(w, 200000);
            CHECK(std::abs(closed - product) < 1e-4 * std::max(1.0, std::abs(product)));
        }
    }

    SUBCASE("positive real axis beyond the first pole is the upper limit") {
        for (double w : {20.0, 50.0, 100.0}) {
            const Complex on_axis = oscillator_factor(w);
            const Complex above = oscillator_factor(Complex(w, 1e-9));
            CHECK(std::abs(on_axis - above) < 1e-6 * std::abs(on_axis));
        }
        CHECK(std::abs(oscillator_factor(20.0).real()) < 1e-12);
        CHECK(oscillator_factor(20.0).imag() > 0.0);
    }

    SUBCASE("poles raise SingularityError") {
        CHECK_THROWS_AS(oscillator_factor(kPi * kPi), SingularityError);
        CHECK_THROWS_AS(oscillator_factor(4.0 * kPi * kPi), SingularityError);
    }

    SUBCASE("branch continuity along rays") {
        for (Complex w0 : {Complex(0.0, 2000.0), Complex(300.0, 150.0), Complex(-500.0, 40.0),
                           Complex(80.0, -80.0)}) {
            const int n = 10000;
            Complex previous = 1.0;
            double max_jump = 0.0;
            for (int k = 1; k <= n; ++k) {
                const Complex w = w0 * (static_cast<double>(k) / n);
                const Complex v = oscillator_factor(w);
                max_jump = std::max(max_jump, std::abs(v - previous) / std::max(std::abs(v), 1e-300));
                previous = v;
            }
            // A sign flip would give a relative jump of 2.
            CHECK(max_jump < 0.2);
        }
    }

    SUBCASE("incremental tracker matches direct evaluation") {
        OscillatorBranch branch;
        for (int k = 1; k <= 400; ++k) {
            const Complex w(0.0, 25.0 * k);
            const Complex tracked = std::exp(branch.advance(w));
            CHECK(std::abs(tracked - oscillator_factor(w)) < 1e-12 * std::abs(tracked));
        }
    }
}

TEST_CASE("quadratic potential kernel") {
    SUBCASE("small coupling reduces to the heat kernel") {
        const VectorXd y = vec({0.3, -0.2});
        const VectorXd z = vec({-0.5, 0.4});
        const Complex v = quadratic_potential_kernel(0.7, y, z, {vec({1.0, 2.0}), 1e-12});
        CHECK(rel(v.real(), heat_kernel(0.7, VectorXd(y - z))) < 1e-6);
    }
    SUBCASE("Mehler value at the origin") {
        for (double t : {0.5, 1.0, 2.0}) {
            const Complex v = quadratic_potential_kernel(t, vec({0.0}), vec({0.0}), {vec({1.0}), -1.0});
            CHECK(rel(v.real(), 1.0 / std::sqrt(2.0 * kPi * std::sinh(t))) < 1e-13);
        }
    }
    SUBCASE("Mehler kernel off the origin") {
        const double t = 0.8, y = 0.7, z = -0.3;
        const double expected = std::sqrt(1.0 / (2.0 * kPi * std::sinh(t))) *
                                std::exp(-((y * y + z * z) * std::cosh(t) - 2.0 * y * z) /
                                         (2.0 * std::sinh(t)));
        const Complex v = quadratic_potential_kernel(t, vec({y}), vec({z}), {vec({1.0}), -1.0});
        CHECK(rel(v.real(), expected) < 1e-13);
    }
    SUBCASE("coordinate factorization") {
        const VectorXd y = vec({0.3, -0.2});
        const VectorXd z = vec({-0.5, 0.4});
        for (Complex alpha : {Complex(-1.0, 0.0), Complex(0.3, 2.0), Complex(0.0, -5.0)}) {
            const Complex joint = quadratic_potential_kernel(0.9, y, z, {vec({1.0, 2.0}), alpha});
            const Complex p1 = quadratic_potential_kernel(0.9, vec({0.3}), vec({-0.5}), {vec({1.0}), alpha});
            const Complex p2 = quadratic_potential_kernel(0.9, vec({-0.2}), vec({0.4}), {vec({2.0}), alpha});
            CHECK(std::abs(joint - p1 * p2) < 1e-14 * std::abs(joint));
        }
    }
    SUBCASE("conjugate symmetry and modulus bound") {
        for (double gamma = 0.0; gamma < 200.0; gamma += 3.7) {
            const Complex v = quadratic_potential_kernel(0.5, vec({0.4}), vec({-0.6}), {vec({1.5}), {0.0, gamma}});
            const Complex w = quadratic_potential_kernel(0.5, vec({0.4}), vec({-0.6}), {vec({1.5}), {0.0, -gamma}});
            CHECK(std::abs(v - std::conj(w)) < 1e-13 * heat_kernel(0.5, 1.0));
            CHECK(std::abs(v) <= heat_kernel(0.5, 1.0) * (1.0 + 1e-12));
        }
    }
    SUBCASE("dense Omega is rotated into its eigenbasis") {
        Eigen::MatrixXd omega(2, 2);
        omega << 2.0, 0.5, 0.5, 1.0;
        const EigenbasisPotential e = rotate_to_eigenbasis(omega, -1.0);
        const Eigen::MatrixXd rebuilt =
            e.rotation.transpose() * e.params.rho.asDiagonal() * e.rotation;
        CHECK((rebuilt - omega).norm() < 1e-13);
        // The potential value 1/2 y^T Omega y is invariant under the rotation.
        const VectorXd y = vec({0.3, -0.8});
        const VectorXd py = e.rotation * y;
        CHECK(std::abs(0.5 * y.dot(omega * y) - 0.5 * py.dot(e.params.rho.asDiagonal() * py)) < 1e-14);
        CHECK_THROWS_AS(rotate_to_eigenbasis(Eigen::MatrixXd::Identity(2, 3), 1.0), ShapeError);
    }
    CHECK_THROWS_AS(quadratic_potential_kernel(kPi, vec({0.0}), vec({0.0}), {vec({1.0}), 1.0}),
                    SingularityError);
    CHECK_THROWS_AS(quadratic_potential_kernel(-1.0, vec({0.0}), vec({0.0}), {vec({1.0}), 1.0}),
                    DomainError);
}

TEST_CASE("linear KHE kernel") {
    const VectorXd a = vec({1.0});
    SUBCASE("plug-in at the centre") {
        const double v = linear_khe_kernel(1.0, 0.0, vec({0.0}), 0.0, vec({0.0}), a);
        CHECK(rel(v, heat_kernel(1.0, 0.0) * std::sqrt(12.0) / std::sqrt(2.0 * kPi)) < 1e-14);
    }
    SUBCASE("normalization") {
        const double t = 1.0;
        const double sx = std::sqrt(t * t * t / 12.0);
        double total = 0.0;
        const int ny = 401, nx = 401;
        const double ylo = -10.0, yhi = 10.0;
        const double hy = (yhi - ylo) / (ny - 1);
        for (int j = 0; j < ny; ++j) {
            const double yp = ylo + hy * j;
            const double centre = -0.5 * t * yp;
            const double xlo = centre - 10.0 * sx, xhi = centre + 10.0 * sx;
            const double hx = (xhi - xlo) / (nx - 1);
            double row = 0.0;
            for (int i = 0; i < nx; ++i) {
                const double w = (i == 0 || i == nx - 1) ? 0.5 : 1.0;
                row += w * linear_khe_kernel(t, 0.0, vec({0.0}), xlo + hx * i, vec({yp}), a);
            }
            total += ((j == 0 || j == ny - 1) ? 0.5 : 1.0) * row * hx;
        }
        CHECK(std::abs(total * hy - 1.0) < 1e-6);
    }
    SUBCASE("Chapman-Kolmogorov at s = t/2") {
        const double t = 1.0, s = 0.5, x = 0.1, y = 0.4, xp = -0.2, yp = -0.1;
        const double direct = linear_khe_kernel(t, x, vec({y}), xp, vec({yp}), a);
        const int n = 301;
        const double ulo = -3.0, uhi = 3.0, vlo = -5.0, vhi = 5.0;
        const double hu = (uhi - ulo) / (n - 1), hv = (vhi - vlo) / (n - 1);
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            const double v = vlo + hv * j;
            for (int i = 0; i < n; ++i) {
                const double u = ulo + hu * i;
                total += linear_khe_kernel(s, x, vec({y}), u, vec({v}), a) *
                         linear_khe_kernel(t - s, u, vec({v}), xp, vec({yp}), a);
            }
        }
        CHECK(rel(total * hu * hv, direct) < 1e-3);
    }
    CHECK_THROWS_AS(linear_khe_kernel(1.0, 0.0, vec({0.0}), 0.0, vec({0.0}), vec({0.0})),
                    DegenerateKernelError);
    CHECK_THROWS_AS(linear_khe_kernel(0.0, 0.0, vec({0.0}), 0.0, vec({0.0}), a), DomainError);
}

namespace {

// Integral over x' of the quadratic KHE density for one (y, y') pair, on a
// grid adapted to the conditional mean and spread of the gap.
// Returns (mass, mean of x' - x).
std::pair<double, double> x_moments(double t, double y, double yp, double rho, int n) {
    const double mean_i = t * (y * y + y * yp + yp * yp) / 3.0 + t * t / 6.0;
    const double d = yp - y;
    const double sd_i = std::abs(rho) *
                        std::sqrt(4.0 * t * t * t * (y * y / 12.0 + y * d / 12.0 + d * d / 45.0) +
                                  t * t * t * t / 45.0);
    const double mean_s = -rho * mean_i;
    const double lo = mean_s - 20.0 * sd_i, hi = mean_s + 20.0 * sd_i;
    std::vector<double> gaps(n), first(n);
    for (int i = 0; i < n; ++i) gaps[i] = lo + (hi - lo) * i / (n - 1);
    const std::vector<double> u = quad_khe_density(t, y, yp, rho, gaps);
    for (int i = 0; i < n; ++i) first[i] = -gaps[i] * u[i];
    const double h = (hi - lo) / (n - 1);
    return {trapezoid(u, h), trapezoid(first, h)};
}

double x_marginal(double t, double y, double yp, double rho, int n = 4001) {
    return x_moments(t, y, yp, rho, n).first;
}

}  // namespace

TEST_CASE("quadratic KHE kernel") {
    SUBCASE("Fourier integrand modulus bound") {
        for (double gamma = -50.0; gamma <= 50.0; gamma += 0.37) {
            const Complex f = quad_khe_fourier_integrand(gamma, 0.5, 1.0, 0.3, -0.4);
            CHECK(std::abs(f) <= heat_kernel(0.5, -0.7) * (1.0 + 1e-12));
        }
        CHECK(std::abs(quad_khe_fourier_integrand(0.0, 0.5, 1.0, 0.3, -0.4) - heat_kernel(0.5, 0.7)) <
              1e-15);
    }
    SUBCASE("x-marginal equals the heat kernel in y") {
        for (double yp : {-1.0, 0.0, 0.5, 2.0}) {
            CHECK(rel(x_marginal(0.5, 0.2, yp, 1.0), heat_kernel(0.5, yp - 0.2)) < 1e-6);
        }
        CHECK(rel(x_marginal(1.0, 0.0, 0.3, -0.7), heat_kernel(1.0, 0.3)) < 1e-6);
    }
    SUBCASE("joint normalization and mean") {
        for (double t : {0.25, 0.5, 1.0}) {
            const double y = 0.3, rho = 1.0;
            const int ny = 41;
            const double lo = y - 8.0 * std::sqrt(t), hi = y + 8.0 * std::sqrt(t);
            std::vector<double> marg(ny);
            for (int j = 0; j < ny; ++j) marg[j] = x_marginal(t, y, lo + (hi - lo) * j / (ny - 1), rho, 1001);
            CHECK(std::abs(trapezoid(marg, (hi - lo) / (ny - 1)) - 1.0) < 1e-3);
        }
    }
    SUBCASE("conditional mean of the gap") {
        // E[x' - x | y'] = rho (t (y^2 + y y' + y'^2)/3 + t^2/6).
        const double t = 0.5, y = 0.4, yp = -0.3, rho = 1.0;
        const double mean = rho * (t * (y * y + y * yp + yp * yp) / 3.0 + t * t / 6.0);
        const auto [mass, first] = x_moments(t, y, yp, rho, 4001);
        CHECK(rel(first / mass, mean) < 1e-6);
    }
    SUBCASE("density vanishes on the wrong side of the drift") {
        // With rho > 0 the increment x' - x is non-negative.
        const std::vector<double> gaps = {0.5, 1.0};
        for (double v : quad_khe_density(0.5, 0.0, 0.0, 1.0, gaps)) CHECK(std::abs(v) < 1e-8);
    }
    SUBCASE("d = 2 convolution agrees with the product inversion") {
        const VectorXd y = vec({0.3, -0.2});
        const VectorXd yp = vec({0.1, 0.4});
        const VectorXd rho = vec({1.0, 0.5});
        for (double xp : {0.05, 0.15, 0.3}) {
            const InversionResult conv = quad_khe_kernel(0.5, 0.0, y, xp, yp, rho);
            const InversionResult prod = quad_khe_kernel_product(0.5, 0.0, y, xp, yp, rho);
            CHECK(conv.value > 0.0);
            CHECK(rel(conv.value, prod.value) < 1e-5);
            CHECK_FALSE(conv.diagnostics.accuracy_warning);
            CHECK_FALSE(prod.diagnostics.accuracy_warning);
        }
    }
    SUBCASE("diagnostics flag a truncation that is too short") {
        FourierInversionConfig cfg;
        cfg.max_points = 64;
        cfg.min_points = 16;
        const InversionResult r = quad_khe_kernel(0.5, 0.0, vec({0.0}), 0.1, vec({0.0}), vec({1.0}), cfg);
        CHECK(r.diagnostics.accuracy_warning);
    }
    CHECK_THROWS_AS(quad_khe_kernel(0.5, 0.0, vec({0.0}), 0.1, vec({0.0}), vec({0.0})),
                    DegenerateKernelError);
}

TEST_CASE("Ornstein-Uhlenbeck kernels") {
    SUBCASE("closed-form variances match quadrature") {
        GaussLegendre gl(64);
        for (double zeta : {0.001, 0.005, 0.02, 0.5, 1.0, 3.0}) {
            for (double t : {0.3, 1.0, 2.0}) {
                const double sz = gl.integrate(
                    [&](double u) {
                        const double g = -std::expm1(-zeta * (t - u)) / zeta;
                        return g * g;
                    },
                    0.0, t);
                const double cov = std::pow(-std::expm1(-zeta * t), 2) / (2.0 * zeta * zeta);
                const double var_m = -std::expm1(-2.0 * zeta * t) / (2.0 * zeta);
                CHECK(rel(ou_sigma2_z(t, zeta), sz) < 1e-9);
                CHECK(rel(ou_sigma2_xi(t, zeta), sz - cov * cov / var_m) < 1e-8);
                CHECK(rel(ou_omega(t, zeta), cov / var_m) < 1e-13);
            }
        }
    }
    SUBCASE("series and direct branches meet at the switch") {
        for (double t : {0.5, 1.0}) {
            const double below = 0.999999e-2 / t, above = 1.000001e-2 / t;
            CHECK(rel(ou_sigma2_z(t, below), ou_sigma2_z(t, above)) < 1e-6);
            CHECK(rel(ou_sigma2_xi(t, below), ou_sigma2_xi(t, above)) < 1e-6);
        }
    }
    SUBCASE("alpha = 0 gives the OU marginal density") {
        const double t = 0.7, zeta = 1.3, y = 0.4, z = -0.2;
        const double e = std::exp(-zeta * t);
        const double expected = std::sqrt(zeta / kPi) *
                                std::exp(-zeta * (z - y * e) * (z - y * e) / (1.0 - e * e)) /
                                std::sqrt(1.0 - e * e);
        CHECK(rel(ou_potential_kernel(t, y, z, {zeta, 0.0}).real(), expected) < 1e-13);
    }
    SUBCASE("zeta -> 0 reduces to the linear potential kernel") {
        const Complex ou = ou_potential_kernel(1.0, 0.0, 0.0, {1e-6, 1.0});
        const Complex lin = linear_potential_kernel(1.0, vec({0.0}), vec({0.0}), {vec({1.0}), 1.0});
        CHECK(rel(ou.real(), std::exp(1.0 / 24.0) * heat_kernel(1.0, 0.0)) < 1e-4);
        CHECK(std::abs(ou - lin) < 1e-4 * std::abs(lin));
    }
    SUBCASE("OU-KHE normalization") {
        const double t = 1.0, zeta = 1.0;
        const double sx = std::sqrt(ou_sigma2_xi(t, zeta));
        const int n = 401;
        const double ylo = -8.0, yhi = 8.0, hy = (yhi - ylo) / (n - 1);
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            const double yp = ylo + hy * j;
            const double centre = -ou_omega(t, zeta) * yp;
            const double xlo = centre - 10.0 * sx, hx = 20.0 * sx / (n - 1);
            double row = 0.0;
            for (int i = 0; i < n; ++i) {
                row += ((i == 0 || i == n - 1) ? 0.5 : 1.0) *
                       ou_khe_kernel(t, 0.0, 0.0, xlo + hx * i, yp, zeta);
            }
            total += ((j == 0 || j == n - 1) ? 0.5 : 1.0) * row * hx;
        }
        CHECK(std::abs(total * hy - 1.0) < 1e-6);
    }
    SUBCASE("OU-KHE zeta -> 0 reduces to the linear KHE with a = 1") {
        for (double xp : {-0.5, 0.0, 0.4}) {
            for (double yp : {-0.6, 0.2, 1.0}) {
                const double ou = ou_khe_kernel(1.0, 0.1, 0.3, xp, yp, 1e-6);
                const double lin = linear_khe_kernel(1.0, 0.1, vec({0.3}), xp, vec({yp}), vec({1.0}));
                CHECK(std::abs(ou - lin) < 1e-4 * std::max(lin, 1e-3));
            }
        }
    }
    SUBCASE("sign variants differ") {
        const Complex s = ou_potential_kernel(1.0, 0.3, 0.1, {1.0, 1.0}, OuTanhSign::statement);
        const Complex p = ou_potential_kernel(1.0, 0.3, 0.1, {1.0, 1.0}, OuTanhSign::proof);
        CHECK(std::abs(s - p) > 1e-3);
    }
    CHECK_THROWS_AS(ou_potential_kernel(1.0, 0.0, 0.0, {0.0, 1.0}), DomainError);
    CHECK_THROWS_AS(ou_potential_kernel(1.0, 0.0, 0.0, {-1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(ou_khe_kernel(0.0, 0.0, 0.0, 0.0, 0.0, 1.0), DomainError);
}
