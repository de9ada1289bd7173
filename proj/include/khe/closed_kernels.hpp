#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace khe {

using Complex = std::complex<double>;

/// A point (x, y) of the hypoelliptic state space: scalar transport coordinate
/// x and diffusive coordinates y in R^d.
struct SpacePoint {
    double x = 0.0;
    Eigen::VectorXd y;
};

/// Linear potential V(y) = <a, y> scaled by a complex coupling alpha.
struct LinearPotentialParams {
    Eigen::VectorXd a;
    Complex alpha{0.0, 0.0};
};

/// Quadratic potential V(y) = 1/2 ||Omega^{1/2} y||^2 given in the eigenbasis of
/// Omega: rho holds the (nonzero) eigenvalues. Callers rotate y and z with
/// rotate_to_eigenbasis() when Omega is available as a dense matrix.
struct QuadraticPotentialParams {
    Eigen::VectorXd rho;
    Complex alpha{0.0, 0.0};
};

/// Ornstein-Uhlenbeck diffusion dY = dW - zeta Y dt with potential V(y) = y.
struct OUParams {
    double zeta = 1.0;
    Complex alpha{0.0, 0.0};
};

/// Sign of the tanh term in the OU fundamental solution. `statement` carries
/// exp(+alpha/zeta (z - y e^{-zeta t}) tanh(zeta t / 2)), which is what the
/// Gaussian regression E[e^{alpha Z} | M = m] = e^{alpha omega m + alpha^2 sigma_xi^2 / 2}
/// gives; `proof` is the flipped sign. The Monte Carlo bridge oracle selects
/// `statement` (see tests), so it is the default everywhere.
enum class OuTanhSign { statement, proof };

struct EigenbasisPotential {
    QuadraticPotentialParams params;
    Eigen::MatrixXd rotation;  // P with Omega = P^T diag(rho) P
};

/// Diagonalizes a dense symmetric Omega; returns rho and the rotation P.
EigenbasisPotential rotate_to_eigenbasis(const Eigen::MatrixXd& omega, Complex alpha);

// ---------------------------------------------------------------------------
// Parabolic kernels

/// Brownian transition density (2 pi t)^{-d/2} exp(-||z||^2 / (2t)).
double heat_kernel(double t, const Eigen::VectorXd& z);
double heat_kernel(double t, double z);

Complex linear_potential_kernel(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                const LinearPotentialParams& params);

/// Oscillator (Mehler) kernel for the quadratic potential, evaluated in the
/// eigenbasis of Omega. Throws SingularityError close to a pole.
Complex quadratic_potential_kernel(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                   const QuadraticPotentialParams& params);

/// (sqrt(w) / sin(sqrt(w)))^{1/2}, continued analytically from the value 1 at
/// w = 0 along the segment [0, w]. Equals prod_k (1 - w / (pi k)^2)^{-1/2}.
/// For real w beyond the first pole the value is the limit from Im w > 0.
Complex oscillator_factor(Complex w);

/// Log of the branch-continuous oscillator factor, i.e. log(oscillator_factor(w)).
Complex oscillator_log_factor(Complex w);

/// Incremental continuation of the oscillator factor along a path starting at
/// w = 0. Each call extends the path by a straight segment to `w` and returns
/// log of the factor there. Used for sweeps over many nearby arguments.
class OscillatorBranch {
public:
    Complex advance(Complex w);

private:
    void step_to(Complex w, int depth);

    Complex last_w_{0.0, 0.0};
    double last_principal_imag_ = 0.0;
    double phase_ = 0.0;
    double log_modulus_ = 0.0;
};

/// Action of the Mehler kernel for one eigen-coordinate:
/// 1/2 kappa / sinh(kappa t) ((y^2 + z^2) cosh(kappa t) - 2 y z), kappa^2 = -alpha rho.
Complex oscillator_action(double t, Complex alpha_rho, double y, double z);

// ---------------------------------------------------------------------------
// Hypoelliptic kernels (scalar x, diffusive y in R^d)

/// Transition density of dX = -<a, Y> dt, dY = dW. Gaussian in the x-gap
/// centred at x' = x - t <a, y + y'> / 2 with variance ||a||^2 t^3 / 12.
/// Throws DegenerateKernelError when ||a|| = 0.
double linear_khe_kernel(double t, double x, const Eigen::VectorXd& y, double x_prime,
                         const Eigen::VectorXd& y_prime, const Eigen::VectorXd& a);

struct FourierInversionConfig {
    double gamma_max = 0.0;              // initial truncation; 0 selects 200 / t
    std::size_t min_points = 1u << 14;   // minimum number of gamma nodes on [0, Gamma]
    std::size_t max_points = 1u << 22;   // hard cap; exceeding it raises the accuracy warning
    double boundary_tolerance = 1e-10;   // |f(Gamma)| target
    double support_sigmas = 40.0;        // half-width of the assumed x support, in std devs
};

struct InversionDiagnostics {
    double gamma_max = 0.0;
    double gamma_step = 0.0;
    std::size_t n_points = 0;
    double boundary_modulus = 0.0;  // |f| at the truncation point
    bool accuracy_warning = false;  // boundary modulus above tolerance
};

struct InversionResult {
    double value = 0.0;
    InversionDiagnostics diagnostics;
};

/// Fourier-side integrand of the quadratic KHE kernel for one eigen-coordinate:
/// the quadratic-potential kernel with alpha = 2 i gamma, with the oscillator
/// factor branch continued along the imaginary axis.
Complex quad_khe_fourier_integrand(double gamma, double t, double rho, double y, double y_prime);

/// Per-coordinate inverse transform u(t, s, y_i, y'_i) evaluated at several gaps
/// s = x - x'. The quadrature grid is shared by all requested gaps.
std::vector<double> quad_khe_density(double t, double y, double y_prime, double rho,
                                     std::span<const double> gaps,
                                     const FourierInversionConfig& cfg = {},
                                     InversionDiagnostics* diagnostics = nullptr);

/// Transition density of dX = sum_i rho_i Y_i^2 dt, dY = dW. For d = 1 this is
/// a direct Fourier inversion; for d > 1 the per-coordinate inversions are
/// combined by discrete convolution on a shared gap grid.
InversionResult quad_khe_kernel(double t, double x, const Eigen::VectorXd& y, double x_prime,
                                const Eigen::VectorXd& y_prime, const Eigen::VectorXd& rho,
                                const FourierInversionConfig& cfg = {});

/// Same kernel through a single inversion of the product of the
/// per-coordinate integrands (no convolution). Independent route for checks.
InversionResult quad_khe_kernel_product(double t, double x, const Eigen::VectorXd& y,
                                        double x_prime, const Eigen::VectorXd& y_prime,
                                        const Eigen::VectorXd& rho,
                                        const FourierInversionConfig& cfg = {});

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck family

/// Var(int_0^t Y ds) for the OU process started at 0.
double ou_sigma2_z(double t, double zeta);
/// Residual variance of int_0^t Y ds after regression on Y(t).
double ou_sigma2_xi(double t, double zeta);
/// Regression coefficient tanh(zeta t / 2) / zeta.
double ou_omega(double t, double zeta);
/// Density of Y(t) given Y(0) = y.
double ou_transition_density(double t, double y, double z, double zeta);

Complex ou_potential_kernel(double t, double y, double z, const OUParams& params,
                            OuTanhSign sign = OuTanhSign::statement);

/// Transition density of dX = -Y dt, dY = dW - zeta Y dt, using the exact
/// residual variance sigma_xi^2(t).
double ou_khe_kernel(double t, double x, double y, double x_prime, double y_prime, double zeta,
                     OuTanhSign sign = OuTanhSign::statement);

}  // namespace khe
