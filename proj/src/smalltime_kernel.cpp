#include "khe/smalltime_kernel.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "khe/closed_kernels.hpp"
#include "khe/errors.hpp"
#include "khe/quadrature.hpp"

namespace khe {

namespace {

void require_positive_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("time must be positive and finite");
}

void require_order(std::size_t order) {
    if (order < 2) throw ConfigError("quad_order must be >= 2");
}

const GaussLegendre& rule(std::size_t order) {
    // Rules for the common orders are built once; others on demand per thread.
    static const GaussLegendre default_rule(32);
    if (order == 32) return default_rule;
    thread_local std::size_t cached_order = 0;
    thread_local std::unique_ptr<GaussLegendre> cached;
    if (cached_order != order) {
        cached = std::make_unique<GaussLegendre>(order);
        cached_order = order;
    }
    return *cached;
}

FrozenPair assemble(double t, double c, double grad_dot_delta, double grad_norm2, double h,
                    double y_weight, double grad_epsilon) {
    if (!(std::sqrt(grad_norm2) > grad_epsilon)) {
        std::ostringstream msg;
        msg << "||c'(y)|| = " << std::sqrt(grad_norm2) << " is at or below " << grad_epsilon
            << "; the small-time kernel is undefined there";
        throw DegenerateGradientError(msg.str());
    }
    FrozenPair p;
    p.shift = t * (c + 0.5 * grad_dot_delta);
    p.sigma = std::sqrt(t * t * t * grad_norm2 / 12.0);
    p.y_weight = y_weight;
    p.slope = -12.0 * h / (t * t * grad_norm2);
    return p;
}

}  // namespace

double h_correction(const Eigen::VectorXd& y, const Eigen::VectorXd& y_prime,
                    const DriftSpec& drift, std::size_t quad_order) {
    require_order(quad_order);
    if (y.size() != y_prime.size() || y.size() != drift.dim()) {
        throw ShapeError("h_correction: dimension mismatch");
    }
    const Eigen::VectorXd delta = y_prime - y;
    if (delta.squaredNorm() == 0.0) return 0.0;
    if (drift.affine_form()) return 0.0;
    const GaussLegendre& gl = rule(quad_order);
    double total = 0.0;
    for (std::size_t a = 0; a < gl.order(); ++a) {
        const double s = gl.node(a, 0.0, 1.0);
        double inner = 0.0;
        for (std::size_t b = 0; b < gl.order(); ++b) {
            const double h = gl.node(b, 0.0, 1.0);
            const Eigen::VectorXd point = y + (1.0 - h) * s * delta;
            inner += gl.weight(b, 0.0, 1.0) * h * delta.dot(drift.hessian(point) * delta);
        }
        total += gl.weight(a, 0.0, 1.0) * s * s * inner;
    }
    return total;
}

double h_correction(double y, double y_prime, const DriftSpec& drift, std::size_t quad_order) {
    require_order(quad_order);
    const double delta = y_prime - y;
    if (delta == 0.0) return 0.0;
    if (drift.affine_form()) return 0.0;
    const GaussLegendre& gl = rule(quad_order);
    double total = 0.0;
    for (std::size_t a = 0; a < gl.order(); ++a) {
        const double s = gl.node(a, 0.0, 1.0);
        double inner = 0.0;
        for (std::size_t b = 0; b < gl.order(); ++b) {
            const double h = gl.node(b, 0.0, 1.0);
            inner += gl.weight(b, 0.0, 1.0) * h * drift.second(y + (1.0 - h) * s * delta);
        }
        total += gl.weight(a, 0.0, 1.0) * s * s * inner;
    }
    return total * delta * delta;
}

double FrozenPair::q(double gap) const {
    const double g = gap + shift;
    return y_weight * std::exp(-0.5 * g * g / (sigma * sigma)) /
           (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

double FrozenPair::pbar(double gap) const { return q(gap) * (1.0 + slope * (gap + shift)); }

FrozenPair frozen_pair(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& y_prime,
                       const DriftSpec& drift, const SmallTimeOptions& opts) {
    require_positive_time(t);
    if (y.size() != y_prime.size() || y.size() != drift.dim()) {
        throw ShapeError("frozen_pair: dimension mismatch");
    }
    const Eigen::VectorXd grad = drift.gradient(y);
    const Eigen::VectorXd delta = y_prime - y;
    return assemble(t, drift.value(y), grad.dot(delta), grad.squaredNorm(),
                    h_correction(y, y_prime, drift, opts.quad_order), heat_kernel(t, delta),
                    opts.grad_epsilon);
}

FrozenPair frozen_pair(double t, double y, double y_prime, const DriftSpec& drift,
                       const SmallTimeOptions& opts) {
    require_positive_time(t);
    const double grad = drift.derivative(y);
    const double delta = y_prime - y;
    return assemble(t, drift.value(y), grad * delta, grad * grad,
                    h_correction(y, y_prime, drift, opts.quad_order), heat_kernel(t, delta),
                    opts.grad_epsilon);
}

double frozen_kernel_q(double t, double x, const Eigen::VectorXd& y, double x_prime,
                       const Eigen::VectorXd& y_prime, const DriftSpec& drift,
                       const SmallTimeOptions& opts) {
    return frozen_pair(t, y, y_prime, drift, opts).q(x - x_prime);
}

double frozen_kernel_q(double t, double x, double y, double x_prime, double y_prime,
                       const DriftSpec& drift, const SmallTimeOptions& opts) {
    return frozen_pair(t, y, y_prime, drift, opts).q(x - x_prime);
}

double pbar_kernel(double t, double x, const Eigen::VectorXd& y, double x_prime,
                   const Eigen::VectorXd& y_prime, const DriftSpec& drift,
                   const SmallTimeOptions& opts) {
    return frozen_pair(t, y, y_prime, drift, opts).pbar(x - x_prime);
}

double pbar_kernel(double t, double x, double y, double x_prime, double y_prime,
                   const DriftSpec& drift, const SmallTimeOptions& opts) {
    return frozen_pair(t, y, y_prime, drift, opts).pbar(x - x_prime);
}

double warped_pbar_kernel(double t, double z1, double z2, double z1_prime, double z2_prime,
                          const DriftSpec& drift, const WarpSpec& warp,
                          const SmallTimeOptions& opts) {
    for (double z : {z2, z2_prime}) {
        if (!(z > warp.range_min && z < warp.range_max)) {
            std::ostringstream msg;
            msg << "z2 = " << z << " is outside the range of warp '" << warp.name << "'";
            throw DomainError(msg.str());
        }
    }
    const double y = warp.phi_inverse(z2);
    const double y_prime = warp.phi_inverse(z2_prime);
    return pbar_kernel(t, z1, y, z1_prime, y_prime, drift, opts) *
           std::abs(warp.phi_inverse_d1(z2_prime));
}

}  // namespace khe
