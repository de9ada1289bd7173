#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "khe/drift.hpp"
#include "khe/rng.hpp"
#include "khe/smalltime_kernel.hpp"

namespace khe {

struct McConfig {
    std::size_t n_steps = 1000;       // time steps per path (Euler steps or bridge nodes)
    std::size_t n_samples = 100000;   // simulated paths; antithetic pairs count as two
    std::uint64_t seed = 20240607;
    bool antithetic = false;

    /// Throws ConfigError unless n_steps >= 1 and n_samples >= 1 (>= 2 when antithetic).
    void validate() const;
};

/// Sample mean with std_error = sample standard deviation / sqrt(n_effective).
/// For complex quantities the standard deviation is that of the complex
/// variable, sqrt(Var Re + Var Im).
struct McEstimate {
    std::complex<double> mean{0.0, 0.0};
    double std_error = 0.0;
    std::size_t n_effective = 0;

    double value() const { return mean.real(); }
};

/// Standard normal draws from a RandomStream, optionally negated (the
/// antithetic partner of a path replays the same stream with sign = -1).
class GaussianSource {
public:
    GaussianSource(std::uint64_t seed, std::uint64_t stream, double sign)
        : rng_(seed, stream), sign_(sign) {}
    double normal() { return sign_ * rng_.normal(); }

private:
    RandomStream rng_;
    double sign_;
};

/// Writes the vector of quantities produced by one simulated path.
using PathSampler = std::function<void(GaussianSource&, std::span<std::complex<double>>)>;

/// Generic estimator used by every oracle below. Path i draws from stream
/// (salt << 40) + i of the seed, so results do not depend on the thread
/// count. Samples are reduced in batches of 4096 and batches are merged in
/// index order.
std::vector<McEstimate> run_monte_carlo(const McConfig& cfg, std::size_t n_outputs,
                                        const PathSampler& sampler, std::uint64_t salt = 0);

/// Payoff g(x, y) of the terminal state.
using Payoff = std::function<double(double, double)>;
using ComplexPayoff = std::function<std::complex<double>(double, double)>;

/// Simulation of dX = c(Y) dt, dY = dW - zeta Y dt from (x, y) over [0, T]:
/// Y is advanced with its exact Gaussian transition and X by the left-endpoint
/// sum X_{k+1} = X_k + c(Y_k) T/n. The drift must be one-dimensional.
struct PathModel {
    const DriftSpec* drift = nullptr;
    double zeta = 0.0;   // Ornstein-Uhlenbeck mean reversion of Y; 0 is Brownian
};

/// E^{x,y}[g_k(X_T, Y_T)] for several payoffs at once (shared paths).
std::vector<McEstimate> estimate_expectations(double T, double x, double y,
                                              const std::vector<ComplexPayoff>& payoffs,
                                              const PathModel& model, const McConfig& cfg,
                                              std::uint64_t salt = 0);

/// u(T, x, y) = E^{x,y}[f(X_T, Y_T)] for dY = dW.
McEstimate estimate_u(double T, double x, double y, const Payoff& f, const DriftSpec& drift,
                      const McConfig& cfg);

/// u(T, x_k, y) for every x_k from one set of paths: X_T started at x equals
/// x plus X_T started at 0, so all targets share the simulated increments.
std::vector<McEstimate> estimate_u_line(double T, std::span<const double> xs, double y,
                                        const Payoff& f, const DriftSpec& drift,
                                        const McConfig& cfg);

/// E[exp(i (theta_x X_T + theta_y Y_T))] for every (theta_x, theta_y) pair.
std::vector<McEstimate> characteristic_function(double T, double x, double y,
                                                std::span<const std::array<double, 2>> thetas,
                                                const PathModel& model, const McConfig& cfg);

/// Potential V of the bridge functional: linear V(y) = <a, y> or quadratic
/// V(y) = (1/2) sum_i rho_i y_i^2 (eigenbasis form of (1/2)||Omega^{1/2} y||^2).
struct BridgePotential {
    enum class Kind { linear, quadratic };
    Kind kind = Kind::linear;
    Eigen::VectorXd coeffs;   // a for linear, rho for quadratic

    static BridgePotential linear(Eigen::VectorXd a) { return {Kind::linear, std::move(a)}; }
    static BridgePotential quadratic(Eigen::VectorXd rho) {
        return {Kind::quadratic, std::move(rho)};
    }
    double operator()(const Eigen::VectorXd& y) const;
};

/// E[exp(alpha int_0^t V(y + W(s)) ds) | W(t) = z - y] p_t(z - y). The path is
/// y + (s/t)(z - y) + sqrt(t) b(s/t) with b a Brownian bridge on [0, 1]
/// sampled at cfg.n_steps + 1 nodes (B(u) - u B(1) for a discrete Brownian
/// motion B); the time integral uses the trapezoid rule.
McEstimate bridge_functional(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                             const BridgePotential& potential, std::complex<double> alpha,
                             const McConfig& cfg);

struct KlBridgeResult {
    McEstimate estimate;               // MC of E[exp(lambda int_0^1 b^2)]
    std::complex<double> product;      // prod_{k <= k_max} (1 - 2 lambda / (pi k)^2)^{-1/2}
};

/// Karhunen-Loeve bridge b(s) = sqrt(2) sum_k z_k sin(k pi s) / (k pi), for
/// which int_0^1 b^2 = sum_k z_k^2 / (k pi)^2. Each factor of the product uses
/// the principal square root, which is the value of E[exp(lambda z^2 / (k pi)^2)]
/// whenever that expectation is finite. Throws SingularityError on a zero factor.
KlBridgeResult kl_bridge_functional(std::complex<double> lambda, std::size_t k_max,
                                    const McConfig& cfg);

/// Deterministic part of kl_bridge_functional.
std::complex<double> kl_truncated_product(std::complex<double> lambda, std::size_t k_max);

/// E^y[exp(alpha int_0^t Y ds) | Y(t) = z] times the OU transition density, for
/// dY = dW - zeta Y dt. Paths are exact OU bridges from y to z (each node drawn
/// from its Gaussian conditional law given the previous node and the endpoint)
/// on cfg.n_steps steps; the integral uses the trapezoid rule.
McEstimate ou_bridge_oracle(double t, double y, double z, double zeta, std::complex<double> alpha,
                            const McConfig& cfg);

/// E[Z(t) M(t)] for Z = int_0^t Y ds and M = Y(t), with Y an OU process started
/// at 0 and simulated exactly on cfg.n_steps steps (trapezoid rule for Z).
McEstimate ou_integral_covariance(double t, double zeta, const McConfig& cfg);

/// Gaussian density on the plane with independent coordinates.
struct GaussianDensity2D {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double sd_x = 1.0;
    double sd_y = 1.0;
    double operator()(double x, double y) const;
};

struct AdjointCheckOptions {
    GaussianDensity2D phi{0.0, 0.0, 0.5, 0.5};    // start density of the forward system
    GaussianDensity2D psi{0.5, 0.5, 0.5, 0.5};    // start density of the reversed system
    std::vector<double> theta_x{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<double> theta_y{-1.0, -0.5, 0.0, 0.5, 1.0};
};

struct AdjointCheckReport {
    std::vector<std::array<double, 2>> thetas;
    std::vector<McEstimate> forward;    // E_{phi}[psi(X_t, Y_t) e^{i theta.(X_t, Y_t)}]
    std::vector<McEstimate> reversed;   // E_{psi}[e^{i theta.(X*_0, Y*_0)} phi(X*_t, Y*_t)]
    std::vector<double> deviation_se;   // |forward - reversed| / sqrt(SE_f^2 + SE_r^2)
    double max_deviation_se = 0.0;
};

/// Compares the forward system dX = c(Y) dt with the reversed-drift system
/// dX* = -c(Y*) dt through the duality
///   int int phi(x,y) E^{x,y}[g(X_t,Y_t)] = int int g(x',y') E^{x',y'}[phi(X*_t,Y*_t)]
/// with g = psi e^{i theta.(x,y)}, one complex test function per theta on the grid.
/// Both sides are estimated from independent streams.
AdjointCheckReport reversed_drift_check(double t, const DriftSpec& drift, const McConfig& cfg,
                                        const AdjointCheckOptions& opts = {});

struct ErrorEstimateOptions {
    std::size_t y_nodes = 64;   // Gauss-Legendre nodes for the terminal value Y_t
    double y_reach = 10.0;      // Y_t is integrated over y +- y_reach sqrt(t)
};

/// Monte Carlo estimate of P_t f(x, y) - Pbar_t f(x, y), the error of the
/// first-order small-time kernel. The terminal value Y_t = y' is integrated by
/// Gauss-Legendre quadrature against p_t(y' - y); given y', every sample
/// draws one Brownian bridge (shared by all nodes) on cfg.n_steps steps and forms
/// X = x + int c(Y) and Xl = x + int [c(y) + <c'(y), Y - y>] by the trapezoid
/// rule. The conditional law of Xl given y' is the x-law of q, so
///   f(X, y') - f(Xl, y') - slope int g N(g; sigma^2) f(x', y') dx'
/// has conditional mean P_t f - Pbar_t f restricted to y'. The dx' integral
/// uses Gauss-Legendre quadrature over 12 standard deviations of q. The drift
/// must be one-dimensional.
struct SmallTimeErrorEstimate {
    McEstimate difference;   // P_t f - Pbar_t f
    McEstimate reference;    // P_t f from the same paths
};

SmallTimeErrorEstimate smalltime_error_estimate(double t, double x, double y, const Payoff& f,
                                                const DriftSpec& drift, const McConfig& cfg,
                                                const ErrorEstimateOptions& est = {},
                                                const SmallTimeOptions& opts = {});

}  // namespace khe
