#pragma once

#include <Eigen/Dense>

#include <cstddef>

#include "khe/drift.hpp"

namespace khe {

struct SmallTimeOptions {
    double grad_epsilon = 1e-8;    // ||c'(y)|| at or below this raises DegenerateGradientError
    std::size_t quad_order = 32;   // Gauss-Legendre nodes per axis for H
};

/// H(y, y') = int_0^1 int_0^1 s^2 (y'-y)^T h c''(y + (1-h) s (y'-y)) (y'-y) dh ds
/// by tensor-product Gauss-Legendre quadrature.
double h_correction(const Eigen::VectorXd& y, const Eigen::VectorXd& y_prime,
                    const DriftSpec& drift, std::size_t quad_order = 32);
double h_correction(double y, double y_prime, const DriftSpec& drift, std::size_t quad_order = 32);

/// The small-time kernel for a fixed pair (y, y') as a function of the x-gap
/// s = x - x':
///   q(s)    = y_weight * N(s + shift; 0, sigma^2)
///   pbar(s) = q(s) * (1 + slope * (s + shift))
/// with shift = t (c(y) + <c'(y), y'-y>/2), sigma^2 = t^3 ||c'(y)||^2 / 12,
/// y_weight = p_t(y'-y) and slope = -12 H(y, y') / (t^2 ||c'(y)||^2).
struct FrozenPair {
    double shift = 0.0;
    double sigma = 0.0;
    double y_weight = 0.0;
    double slope = 0.0;

    double q(double gap) const;
    double pbar(double gap) const;
};

FrozenPair frozen_pair(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& y_prime,
                       const DriftSpec& drift, const SmallTimeOptions& opts = {});
FrozenPair frozen_pair(double t, double y, double y_prime, const DriftSpec& drift,
                       const SmallTimeOptions& opts = {});

/// Frozen Gaussian kernel q(t, x, y, x', y').
double frozen_kernel_q(double t, double x, const Eigen::VectorXd& y, double x_prime,
                       const Eigen::VectorXd& y_prime, const DriftSpec& drift,
                       const SmallTimeOptions& opts = {});
double frozen_kernel_q(double t, double x, double y, double x_prime, double y_prime,
                       const DriftSpec& drift, const SmallTimeOptions& opts = {});

/// First-order corrected kernel pbar = q (1 - 12 g H / (t^2 ||c'||^2)). Not a
/// density: it can be negative in the tails.
double pbar_kernel(double t, double x, const Eigen::VectorXd& y, double x_prime,
                   const Eigen::VectorXd& y_prime, const DriftSpec& drift,
                   const SmallTimeOptions& opts = {});
double pbar_kernel(double t, double x, double y, double x_prime, double y_prime,
                   const DriftSpec& drift, const SmallTimeOptions& opts = {});

/// Kernel of (Z1, Z2) = (X, phi(Y)) where dX = c(Y) dt, dY = dW; `drift` is c
/// (already composed with phi, see compose()). Evaluates
/// pbar(t, z1, phi^{-1}(z2), z1', phi^{-1}(z2')) |(phi^{-1})'(z2')|.
double warped_pbar_kernel(double t, double z1, double z2, double z1_prime, double z2_prime,
                          const DriftSpec& drift, const WarpSpec& warp,
                          const SmallTimeOptions& opts = {});

}  // namespace khe
