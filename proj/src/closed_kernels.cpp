#include "khe/closed_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "khe/errors.hpp"

namespace khe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPoleTolerance = 1e-10;
constexpr Complex kI{0.0, 1.0};

void require_positive_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw DomainError("time must be positive and finite, got " + std::to_string(t));
    }
}

void require_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    }
    if (a.size() == 0) throw ShapeError(std::string(what) + ": empty vector");
}

// exp(z) - 1 without cancellation for small |z|.
Complex complex_expm1(Complex z) {
    const double a = z.real();
    const double b = z.imag();
    const double half_sin = std::sin(0.5 * b);
    const double re = std::expm1(a) * std::cos(b) - 2.0 * half_sin * half_sin;
    const double im = std::exp(a) * std::sin(b);
    return {re, im};
}

void require_off_pole(Complex w) {
    const Complex s = std::sqrt(w);
    if (std::abs(s.imag()) < 20.0 && std::abs(s) >= 1e-4 && std::abs(std::sin(s)) < kPoleTolerance) {
        throw SingularityError("oscillator factor evaluated at a pole: w = " +
                               std::to_string(w.real()) + " + " + std::to_string(w.imag()) + "i");
    }
}

// A log of sqrt(w) / sin(sqrt(w)), defined up to multiples of 2 pi i. Callers
// check pole proximity themselves; intermediate path points may pass close by.
Complex log_sinc_ratio(Complex w) {
    const Complex s = std::sqrt(w);
    if (std::abs(s) < 1e-4) return w / 6.0 + w * w / 180.0;
    Complex log_sin;
    if (std::abs(s.imag()) < 20.0) {
        const Complex sn = std::sin(s);
        log_sin = std::log(sn == Complex(0.0, 0.0) ? Complex(1e-300, 0.0) : sn);
    } else if (s.imag() > 0.0) {
        log_sin = -kI * s + std::log(1.0 - std::exp(2.0 * kI * s)) + std::log(Complex(0.0, 0.5));
    } else {
        log_sin = kI * s + std::log(1.0 - std::exp(-2.0 * kI * s)) + std::log(Complex(0.0, -0.5));
    }
    return std::log(s) - log_sin;
}

// kappa coth(kappa t) and kappa / sinh(kappa t) for kappa^2 = k2, Re kappa >= 0.
struct MehlerCoefficients {
    Complex kcoth;
    Complex kcsch;
};

MehlerCoefficients mehler_coefficients(double t, Complex k2) {
    const Complex kappa = std::sqrt(k2);
    const Complex kt = kappa * t;
    if (std::abs(kt) < 1e-3) {
        const Complex k4 = k2 * k2;
        return {1.0 / t + k2 * t / 3.0 - k4 * t * t * t / 45.0,
                1.0 / t - k2 * t / 6.0 + 7.0 * k4 * t * t * t / 360.0};
    }
    const Complex one_minus_e = -complex_expm1(-2.0 * kt);
    const Complex e = std::exp(-2.0 * kt);
    return {kappa * (1.0 + e) / one_minus_e, kappa * 2.0 * std::exp(-kt) / one_minus_e};
}

double em1_over_zeta(double t, double zeta) {
    return zeta == 0.0 ? t : -std::expm1(-zeta * t) / zeta;
}

void require_nonnegative_zeta(double zeta) {
    if (!(zeta >= 0.0) || !std::isfinite(zeta)) {
        throw DomainError("zeta must be positive, got " + std::to_string(zeta));
    }
}

// ---------------------------------------------------------------------------
// Fourier inversion for the quadratic KHE

struct GapMoments {
    double mean = 0.0;
    double sd = 0.0;
};

// Mean and standard deviation of s = x - x' = -rho int_0^t Y^2 under the
// bridge from y to y'.
GapMoments quad_gap_moments(double t, double y, double yp, double rho) {
    const double delta = yp - y;
    const double mean_integral = t * (y * y + y * yp + yp * yp) / 3.0 + t * t / 6.0;
    const double var_integral =
        4.0 * t * t * t * (y * y / 12.0 + y * delta / 12.0 + delta * delta / 45.0) +
        t * t * t * t / 45.0;
    return {-rho * mean_integral, std::abs(rho) * std::sqrt(var_integral)};
}

class QuadIntegrand {
public:
    QuadIntegrand(double t, std::vector<double> y, std::vector<double> yp, std::vector<double> rho)
        : t_(t), y_(std::move(y)), yp_(std::move(yp)), rho_(std::move(rho)) {
        for (std::size_t i = 0; i < rho_.size(); ++i) {
            if (rho_[i] == 0.0) {
                throw DegenerateKernelError("quadratic KHE needs every rho_i != 0");
            }
            const GapMoments m = quad_gap_moments(t_, y_[i], yp_[i], rho_[i]);
            moments_.mean += m.mean;
            moments_.sd = std::hypot(moments_.sd, m.sd);
        }
    }

    const GapMoments& moments() const { return moments_; }

    Complex at(double gamma) const {
        Complex log_value = 0.0;
        for (std::size_t i = 0; i < rho_.size(); ++i) {
            const Complex w = 2.0 * kI * gamma * rho_[i] * t_ * t_;
            log_value += oscillator_log_factor(w) + coordinate_log_rest(gamma, i);
        }
        return std::exp(log_value);
    }

    // Values at gamma_k = k * step for k = 0..n.
    std::vector<Complex> sweep(double step, std::size_t n) const {
        std::vector<Complex> out(n + 1);
        std::vector<OscillatorBranch> branches(rho_.size());
        for (std::size_t k = 0; k <= n; ++k) {
            const double gamma = step * static_cast<double>(k);
            Complex log_value = 0.0;
            for (std::size_t i = 0; i < rho_.size(); ++i) {
                const Complex w = 2.0 * kI * gamma * rho_[i] * t_ * t_;
                log_value += branches[i].advance(w) + coordinate_log_rest(gamma, i);
            }
            out[k] = std::exp(log_value);
        }
        return out;
    }

private:
    Complex coordinate_log_rest(double gamma, std::size_t i) const {
        const Complex alpha_rho = 2.0 * kI * gamma * rho_[i];
        return -oscillator_action(t_, alpha_rho, y_[i], yp_[i]) - 0.5 * std::log(2.0 * kPi * t_);
    }

    double t_;
    std::vector<double> y_, yp_, rho_;
    GapMoments moments_;
};

std::vector<double> invert(const QuadIntegrand& f, double t, std::span<const double> gaps,
                           const FourierInversionConfig& cfg, InversionDiagnostics* diagnostics) {
    const GapMoments& m = f.moments();
    double reach = 0.0;
    for (double s : gaps) reach = std::max(reach, std::abs(s - m.mean));
    const double period = 2.0 * (reach + cfg.support_sigmas * m.sd);
    double step = 2.0 * kPi / period;

    double gamma_max = cfg.gamma_max > 0.0 ? cfg.gamma_max : 200.0 / t;
    const double cap = step * static_cast<double>(cfg.max_points);
    double boundary = std::abs(f.at(gamma_max));
    while (boundary >= cfg.boundary_tolerance && 2.0 * gamma_max <= cap) {
        gamma_max *= 2.0;
        boundary = std::abs(f.at(gamma_max));
    }

    auto n = static_cast<std::size_t>(std::ceil(gamma_max / step));
    n = std::clamp<std::size_t>(n, cfg.min_points, cfg.max_points);
    step = gamma_max / static_cast<double>(n);

    const std::vector<Complex> values = f.sweep(step, n);
    boundary = std::abs(values.back());

    std::vector<double> out(gaps.size());
    for (std::size_t j = 0; j < gaps.size(); ++j) {
        const double s = gaps[j];
        const Complex rotation = std::polar(1.0, step * s);
        Complex phase = 1.0;
        double sum = 0.5 * values[0].real();
        for (std::size_t k = 1; k <= n; ++k) {
            if (k % 1024 == 0) {
                phase = std::polar(1.0, step * static_cast<double>(k) * s);
            } else {
                phase *= rotation;
            }
            const double term = (phase * values[k]).real();
            sum += (k == n) ? 0.5 * term : term;
        }
        out[j] = sum * step / kPi;
    }

    if (diagnostics != nullptr) {
        diagnostics->gamma_max = gamma_max;
        diagnostics->gamma_step = step;
        diagnostics->n_points = n;
        diagnostics->boundary_modulus = boundary;
        diagnostics->accuracy_warning = boundary >= cfg.boundary_tolerance;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

EigenbasisPotential rotate_to_eigenbasis(const Eigen::MatrixXd& omega, Complex alpha) {
    if (omega.rows() != omega.cols() || omega.rows() == 0) {
        throw ShapeError("Omega must be a non-empty square matrix");
    }
    if (!omega.isApprox(omega.transpose(), 1e-12)) throw ShapeError("Omega must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(omega);
    if (solver.info() != Eigen::Success) throw DomainError("eigendecomposition of Omega failed");
    EigenbasisPotential out;
    out.params.rho = solver.eigenvalues();
    out.params.alpha = alpha;
    out.rotation = solver.eigenvectors().transpose();
    return out;
}

double heat_kernel(double t, const Eigen::VectorXd& z) {
    require_positive_time(t);
    const double d = static_cast<double>(z.size());
    return std::pow(2.0 * kPi * t, -0.5 * d) * std::exp(-z.squaredNorm() / (2.0 * t));
}

double heat_kernel(double t, double z) {
    require_positive_time(t);
    return std::exp(-z * z / (2.0 * t)) / std::sqrt(2.0 * kPi * t);
}

Complex linear_potential_kernel(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                const LinearPotentialParams& params) {
    require_positive_time(t);
    require_same_size(y, z, "linear_potential_kernel");
    require_same_size(params.a, y, "linear_potential_kernel");
    const Complex alpha = params.alpha;
    const double sigma2_xi = t * t * t / 12.0;
    const Complex exponent = 0.5 * alpha * t * params.a.dot(z + y) +
                             0.5 * params.a.squaredNorm() * alpha * alpha * sigma2_xi;
    return std::exp(exponent) * heat_kernel(t, Eigen::VectorXd(z - y));
}

Complex OscillatorBranch::advance(Complex w) {
    require_off_pole(w);
    const double distance = std::abs(std::sqrt(w) - std::sqrt(last_w_));
    const int steps = std::max(1, static_cast<int>(std::ceil(distance / (kPi / 8.0))));
    const Complex start = last_w_;
    for (int k = 1; k <= steps; ++k) {
        step_to(start + (w - start) * (static_cast<double>(k) / steps), 0);
    }
    return {0.5 * log_modulus_, 0.5 * phase_};
}

void OscillatorBranch::step_to(Complex w, int depth) {
    const Complex value = log_sinc_ratio(w);
    const double jump = std::remainder(value.imag() - last_principal_imag_, 2.0 * kPi);
    if (std::abs(jump) >= kPi / 4.0 && depth < 40) {
        const Complex mid = 0.5 * (last_w_ + w);
        step_to(mid, depth + 1);
        step_to(w, depth + 1);
        return;
    }
    phase_ += jump;
    last_principal_imag_ = value.imag();
    log_modulus_ = value.real();
    last_w_ = w;
}

Complex oscillator_log_factor(Complex w) {
    if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) {
        throw DomainError("oscillator factor argument must be finite");
    }
    if (w == Complex(0.0, 0.0)) return 0.0;
    require_off_pole(w);
    if (w.imag() == 0.0 && w.real() > 0.0) {
        // Real axis beyond the origin: each pole passed from above adds pi/2 to the argument.
        const Complex value = log_sinc_ratio(w);
        const double poles_passed = std::floor(std::sqrt(w.real()) / kPi);
        return {0.5 * value.real(), 0.5 * kPi * poles_passed};
    }
    OscillatorBranch branch;
    return branch.advance(w);
}

Complex oscillator_factor(Complex w) { return std::exp(oscillator_log_factor(w)); }

Complex oscillator_action(double t, Complex alpha_rho, double y, double z) {
    const MehlerCoefficients c = mehler_coefficients(t, -alpha_rho);
    return 0.5 * ((y * y + z * z) * c.kcoth - 2.0 * y * z * c.kcsch);
}

Complex quadratic_potential_kernel(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                   const QuadraticPotentialParams& params) {
    require_positive_time(t);
    require_same_size(y, z, "quadratic_potential_kernel");
    require_same_size(params.rho, y, "quadratic_potential_kernel");
    Complex log_value = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const Complex alpha_rho = params.alpha * params.rho[i];
        log_value += oscillator_log_factor(alpha_rho * t * t) -
                     oscillator_action(t, alpha_rho, y[i], z[i]) -
                     0.5 * std::log(2.0 * kPi * t);
    }
    return std::exp(log_value);
}

double linear_khe_kernel(double t, double x, const Eigen::VectorXd& y, double x_prime,
                         const Eigen::VectorXd& y_prime, const Eigen::VectorXd& a) {
    require_positive_time(t);
    require_same_size(y, y_prime, "linear_khe_kernel");
    require_same_size(a, y, "linear_khe_kernel");
    const double a2 = a.squaredNorm();
    if (a2 == 0.0) {
        throw DegenerateKernelError("linear KHE kernel with a = 0 has no density in x'");
    }
    const double variance = a2 * t * t * t / 12.0;
    const double gap = x - x_prime - 0.5 * t * a.dot(y + y_prime);
    return std::exp(-gap * gap / (2.0 * variance)) / std::sqrt(2.0 * kPi * variance) *
           heat_kernel(t, Eigen::VectorXd(y_prime - y));
}

Complex quad_khe_fourier_integrand(double gamma, double t, double rho, double y, double y_prime) {
    require_positive_time(t);
    const QuadIntegrand f(t, {y}, {y_prime}, {rho});
    return f.at(gamma);
}

std::vector<double> quad_khe_density(double t, double y, double y_prime, double rho,
                                     std::span<const double> gaps,
                                     const FourierInversionConfig& cfg,
                                     InversionDiagnostics* diagnostics) {
    require_positive_time(t);
    const QuadIntegrand f(t, {y}, {y_prime}, {rho});
    return invert(f, t, gaps, cfg, diagnostics);
}

InversionResult quad_khe_kernel(double t, double x, const Eigen::VectorXd& y, double x_prime,
                                const Eigen::VectorXd& y_prime, const Eigen::VectorXd& rho,
                                const FourierInversionConfig& cfg) {
    require_positive_time(t);
    require_same_size(y, y_prime, "quad_khe_kernel");
    require_same_size(rho, y, "quad_khe_kernel");
    const double gap = x - x_prime;
    InversionResult result;
    if (y.size() == 1) {
        const double s[1] = {gap};
        result.value = quad_khe_density(t, y[0], y_prime[0], rho[0], s, cfg,
                                        &result.diagnostics)[0];
        return result;
    }

    // Shared gap grid with spacing h; coordinate 0 is offset by the requested
    // gap so that index sum 0 of the convolution lands exactly on it.
    const auto d = static_cast<std::size_t>(y.size());
    std::vector<GapMoments> moments(d);
    double min_sd = std::numeric_limits<double>::infinity();
    double max_width = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (rho[static_cast<Eigen::Index>(i)] == 0.0) {
            throw DegenerateKernelError("quadratic KHE needs every rho_i != 0");
        }
        moments[i] = quad_gap_moments(t, y[static_cast<Eigen::Index>(i)],
                                      y_prime[static_cast<Eigen::Index>(i)],
                                      rho[static_cast<Eigen::Index>(i)]);
        min_sd = std::min(min_sd, moments[i].sd);
        max_width = std::max(max_width, 2.0 * cfg.support_sigmas * moments[i].sd);
    }
    constexpr double kMaxNodes = 1 << 14;
    const double h = std::max(min_sd / 16.0, max_width / kMaxNodes);

    std::vector<double> conv;
    long conv_start = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double offset = (i == 0) ? gap : 0.0;
        const double lo = moments[i].mean - cfg.support_sigmas * moments[i].sd;
        const double hi = moments[i].mean + cfg.support_sigmas * moments[i].sd;
        const auto k_lo = static_cast<long>(std::floor((lo - offset) / h));
        const auto k_hi = static_cast<long>(std::ceil((hi - offset) / h));
        std::vector<double> nodes;
        nodes.reserve(static_cast<std::size_t>(k_hi - k_lo + 1));
        for (long k = k_lo; k <= k_hi; ++k) nodes.push_back(offset + h * static_cast<double>(k));

        InversionDiagnostics diag;
        std::vector<double> values =
            quad_khe_density(t, y[static_cast<Eigen::Index>(i)],
                             y_prime[static_cast<Eigen::Index>(i)],
                             rho[static_cast<Eigen::Index>(i)], nodes, cfg, &diag);
        result.diagnostics.boundary_modulus =
            std::max(result.diagnostics.boundary_modulus, diag.boundary_modulus);
        result.diagnostics.accuracy_warning |= diag.accuracy_warning;
        result.diagnostics.n_points = std::max(result.diagnostics.n_points, diag.n_points);
        result.diagnostics.gamma_max = std::max(result.diagnostics.gamma_max, diag.gamma_max);

        if (i == 0) {
            conv = std::move(values);
            conv_start = k_lo;
            continue;
        }
        std::vector<double> next(conv.size() + values.size() - 1, 0.0);
        for (std::size_t a = 0; a < conv.size(); ++a) {
            for (std::size_t b = 0; b < values.size(); ++b) next[a + b] += conv[a] * values[b] * h;
        }
        conv = std::move(next);
        conv_start += k_lo;
    }
    // Node k of the convolution sits at gap + k h; evaluate at k = 0.
    const long index = -conv_start;
    result.value = (index >= 0 && index < static_cast<long>(conv.size()))
                       ? conv[static_cast<std::size_t>(index)]
                       : 0.0;
    return result;
}

InversionResult quad_khe_kernel_product(double t, double x, const Eigen::VectorXd& y,
                                        double x_prime, const Eigen::VectorXd& y_prime,
                                        const Eigen::VectorXd& rho,
                                        const FourierInversionConfig& cfg) {
    require_positive_time(t);
    require_same_size(y, y_prime, "quad_khe_kernel_product");
    require_same_size(rho, y, "quad_khe_kernel_product");
    const QuadIntegrand f(t, std::vector<double>(y.data(), y.data() + y.size()),
                          std::vector<double>(y_prime.data(), y_prime.data() + y_prime.size()),
                          std::vector<double>(rho.data(), rho.data() + rho.size()));
    const double s[1] = {x - x_prime};
    InversionResult result;
    result.value = invert(f, t, s, cfg, &result.diagnostics)[0];
    return result;
}

double ou_sigma2_z(double t, double zeta) {
    require_positive_time(t);
    require_nonnegative_zeta(zeta);
    const double u = zeta * t;
    if (u < 1e-2) {
        const double series =
            1.0 / 3.0 +
            u * (-1.0 / 4.0 +
                 u * (7.0 / 60.0 +
                      u * (-1.0 / 24.0 +
                           u * (31.0 / 2520.0 +
                                u * (-1.0 / 320.0 +
                                     u * (127.0 / 181440.0 +
                                          u * (-17.0 / 120960.0 + u * 73.0 / 2851200.0)))))));
        return t * t * t * series;
    }
    const double em1 = -std::expm1(-u);
    const double em2 = -std::expm1(-2.0 * u);
    return (t - 2.0 * em1 / zeta + em2 / (2.0 * zeta)) / (zeta * zeta);
}

double ou_sigma2_xi(double t, double zeta) {
    require_positive_time(t);
    require_nonnegative_zeta(zeta);
    const double u = zeta * t;
    if (u < 1e-2) {
        const double u2 = u * u;
        const double series =
            1.0 / 12.0 +
            u2 * (-1.0 / 120.0 +
                  u2 * (17.0 / 20160.0 + u2 * (-31.0 / 362880.0 + u2 * 691.0 / 79833600.0)));
        return t * t * t * series;
    }
    const double em1 = -std::expm1(-u);
    return ou_sigma2_z(t, zeta) -
           em1 * em1 * em1 / (2.0 * zeta * zeta * zeta * (1.0 + std::exp(-u)));
}

double ou_omega(double t, double zeta) {
    require_positive_time(t);
    require_nonnegative_zeta(zeta);
    return zeta == 0.0 ? 0.5 * t : std::tanh(0.5 * zeta * t) / zeta;
}

double ou_transition_density(double t, double y, double z, double zeta) {
    require_positive_time(t);
    require_nonnegative_zeta(zeta);
    if (zeta == 0.0) return heat_kernel(t, z - y);
    const double variance = -std::expm1(-2.0 * zeta * t) / (2.0 * zeta);
    const double r = z - y * std::exp(-zeta * t);
    return std::exp(-r * r / (2.0 * variance)) / std::sqrt(2.0 * kPi * variance);
}

Complex ou_potential_kernel(double t, double y, double z, const OUParams& params,
                            OuTanhSign sign) {
    require_positive_time(t);
    if (!(params.zeta > 0.0)) throw DomainError("OU kernel needs zeta > 0");
    const double zeta = params.zeta;
    const Complex alpha = params.alpha;
    const double direction = sign == OuTanhSign::statement ? 1.0 : -1.0;
    const double regression = ou_omega(t, zeta) * (z - y * std::exp(-zeta * t));
    const Complex exponent = alpha * y * em1_over_zeta(t, zeta) + direction * alpha * regression +
                             0.5 * alpha * alpha * ou_sigma2_xi(t, zeta);
    return std::exp(exponent) * ou_transition_density(t, y, z, zeta);
}

double ou_khe_kernel(double t, double x, double y, double x_prime, double y_prime, double zeta,
                     OuTanhSign sign) {
    require_positive_time(t);
    if (!(zeta > 0.0)) throw DomainError("OU-KHE kernel needs zeta > 0");
    const double direction = sign == OuTanhSign::statement ? 1.0 : -1.0;
    const double regression = ou_omega(t, zeta) * (y_prime - y * std::exp(-zeta * t));
    const double mean = x - y * em1_over_zeta(t, zeta) - direction * regression;
    const double variance = ou_sigma2_xi(t, zeta);
    const double r = x_prime - mean;
    return std::exp(-r * r / (2.0 * variance)) / std::sqrt(2.0 * kPi * variance) *
           ou_transition_density(t, y, y_prime, zeta);
}

}  // namespace khe
