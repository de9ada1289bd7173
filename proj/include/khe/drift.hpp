#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace khe {

/// Scalar transport field c(y) on R^d with derivatives up to order two
/// (three for d = 1). Callables must be reentrant: they are invoked
/// concurrently by the propagator and the Monte Carlo engine.
class DriftSpec {
public:
    using ScalarFn = std::function<double(double)>;
    using ValueFn = std::function<double(const Eigen::VectorXd&)>;
    using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
    using HessianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

    struct AffineForm {
        Eigen::VectorXd a;
        double c0 = 0.0;
    };

    DriftSpec() = default;

    /// One-dimensional drift from c, c', c'', c'''.
    static DriftSpec scalar(std::string name, ScalarFn value, ScalarFn d1, ScalarFn d2, ScalarFn d3);
    /// d-dimensional drift from c, gradient and Hessian.
    static DriftSpec vector(std::string name, int dim, ValueFn value, GradientFn gradient,
                            HessianFn hessian);

    /// c(y) = <a, y> + c0.
    static DriftSpec affine(const Eigen::VectorXd& a, double c0 = 0.0);
    /// c(y) = (1/4)(-y^2/2 + 6y), the drift of the numerical experiment.
    static DriftSpec table1();
    /// c(y) = -beta ||Omega^{1/2} y||^2 = -beta y^T Omega y.
    static DriftSpec quadratic(double beta, const Eigen::MatrixXd& omega);
    /// c(y) = -y^2.
    static DriftSpec photon();
    /// c(y) = sum_k coeffs[k] y^k (d = 1).
    static DriftSpec polynomial(std::vector<double> coeffs);
    /// c(y) = e^y (d = 1).
    static DriftSpec exponential();

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    bool is_scalar() const { return static_cast<bool>(s_value_); }
    const std::optional<AffineForm>& affine_form() const { return affine_; }

    double value(const Eigen::VectorXd& y) const { return value_(y); }
    Eigen::VectorXd gradient(const Eigen::VectorXd& y) const { return gradient_(y); }
    Eigen::MatrixXd hessian(const Eigen::VectorXd& y) const { return hessian_(y); }

    /// Scalar fast path; throws DomainError for d > 1 drifts.
    double value(double y) const;
    double derivative(double y) const;
    double second(double y) const;
    double third(double y) const;

private:
    void require_scalar() const;

    std::string name_;
    int dim_ = 0;
    ValueFn value_;
    GradientFn gradient_;
    HessianFn hessian_;
    ScalarFn s_value_, s_d1_, s_d2_, s_d3_;
    std::optional<AffineForm> affine_;
};

/// Checks the DriftSpec invariants on `n_probes` pseudo-random points of
/// [-radius, radius]^d: gradient against central differences (1e-5 relative)
/// and Hessian symmetry. Throws ConfigError describing the first failure.
void validate_drift(const DriftSpec& drift, int n_probes = 32, double radius = 3.0,
                    std::uint64_t seed = 20240607);

/// Smooth monotone change of variable z = phi(y) on the diffusive coordinate.
struct WarpSpec {
    std::string name;
    std::function<double(double)> phi;
    std::function<double(double)> phi_d1;
    std::function<double(double)> phi_d2;
    std::function<double(double)> phi_d3;
    std::function<double(double)> phi_inverse;
    std::function<double(double)> phi_inverse_d1;
    double range_min = -std::numeric_limits<double>::infinity();  // open range of phi
    double range_max = std::numeric_limits<double>::infinity();

    static WarpSpec identity();
    static WarpSpec exponential();
    /// phi(y) = y + k y^3 with k > 0.
    static WarpSpec cubic(double k = 0.1);
};

/// Checks phi(phi^{-1}(z)) = z (1e-10) and (phi^{-1})' against central
/// differences (1e-6) on probe points inside the range. Throws ConfigError.
void validate_warp(const WarpSpec& warp, const std::vector<double>& probes_z);

/// The drift y -> outer(phi(y)) of the un-warped system, with chain-rule derivatives.
DriftSpec compose(const DriftSpec& outer, const WarpSpec& warp);

}  // namespace khe
