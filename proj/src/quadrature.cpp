#include "khe/quadrature.hpp"

#include <gsl/gsl_integration.h>

#include <memory>
#include <stdexcept>

#include "khe/errors.hpp"

namespace khe {

GaussLegendre::GaussLegendre(std::size_t order) {
    if (order < 1) throw ConfigError("Gauss-Legendre order must be >= 1");
    std::unique_ptr<gsl_integration_glfixed_table, decltype(&gsl_integration_glfixed_table_free)>
        table(gsl_integration_glfixed_table_alloc(order), &gsl_integration_glfixed_table_free);
    if (!table) throw std::runtime_error("gsl_integration_glfixed_table_alloc failed");
    nodes_.resize(order);
    weights_.resize(order);
    for (std::size_t i = 0; i < order; ++i) {
        gsl_integration_glfixed_point(-1.0, 1.0, i, &nodes_[i], &weights_[i], table.get());
    }
}

double GaussLegendre::integrate(const std::function<double(double)>& f, double a, double b) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) sum += weight(i, a, b) * f(node(i, a, b));
    return sum;
}

double trapezoid(std::span<const double> samples, double h) {
    if (samples.size() < 2) return 0.0;
    double sum = 0.5 * (samples.front() + samples.back());
    for (std::size_t i = 1; i + 1 < samples.size(); ++i) sum += samples[i];
    return sum * h;
}

double trapezoid(const std::function<double(double)>& f, double a, double b, std::size_t n) {
    if (n < 2) throw ConfigError("trapezoid rule needs at least two nodes");
    const double h = (b - a) / static_cast<double>(n - 1);
    double sum = 0.5 * (f(a) + f(b));
    for (std::size_t i = 1; i + 1 < n; ++i) sum += f(a + h * static_cast<double>(i));
    return sum * h;
}

}  // namespace khe
