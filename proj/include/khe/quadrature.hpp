#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace khe {

/// Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 2n-1.
class GaussLegendre {
public:
    explicit GaussLegendre(std::size_t order);

    std::size_t order() const { return nodes_.size(); }
    std::span<const double> nodes() const { return nodes_; }
    std::span<const double> weights() const { return weights_; }

    /// Integral of f over [a, b].
    double integrate(const std::function<double(double)>& f, double a, double b) const;

    /// Node and weight mapped onto [a, b].
    double node(std::size_t i, double a, double b) const {
        return 0.5 * (a + b) + 0.5 * (b - a) * nodes_[i];
    }
    double weight(std::size_t i, double a, double b) const { return 0.5 * (b - a) * weights_[i]; }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// Composite trapezoid rule for samples on a uniform grid with spacing h.
double trapezoid(std::span<const double> samples, double h);

/// Composite trapezoid rule of f on [a, b] with n >= 2 nodes.
double trapezoid(const std::function<double(double)>& f, double a, double b, std::size_t n);

}  // namespace khe
