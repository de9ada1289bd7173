#include "khe/drift.hpp"

#include <cmath>
#include <sstream>

#include "khe/errors.hpp"
#include "khe/rng.hpp"

namespace khe {

namespace {

Eigen::VectorXd one(double v) {
    Eigen::VectorXd out(1);
    out[0] = v;
    return out;
}

Eigen::MatrixXd one_by_one(double v) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = v;
    return out;
}

double require_1d(const Eigen::VectorXd& y) {
    if (y.size() != 1) throw ShapeError("scalar drift evaluated at a point of dimension != 1");
    return y[0];
}

}  // namespace

DriftSpec DriftSpec::scalar(std::string name, ScalarFn value, ScalarFn d1, ScalarFn d2,
                            ScalarFn d3) {
    DriftSpec d;
    d.name_ = std::move(name);
    d.dim_ = 1;
    d.s_value_ = std::move(value);
    d.s_d1_ = std::move(d1);
    d.s_d2_ = std::move(d2);
    d.s_d3_ = std::move(d3);
    d.value_ = [f = d.s_value_](const Eigen::VectorXd& y) { return f(require_1d(y)); };
    d.gradient_ = [f = d.s_d1_](const Eigen::VectorXd& y) { return one(f(require_1d(y))); };
    d.hessian_ = [f = d.s_d2_](const Eigen::VectorXd& y) { return one_by_one(f(require_1d(y))); };
    return d;
}

DriftSpec DriftSpec::vector(std::string name, int dim, ValueFn value, GradientFn gradient,
                            HessianFn hessian) {
    if (dim < 1) throw ConfigError("drift dimension must be >= 1");
    DriftSpec d;
    d.name_ = std::move(name);
    d.dim_ = dim;
    d.value_ = std::move(value);
    d.gradient_ = std::move(gradient);
    d.hessian_ = std::move(hessian);
    return d;
}

DriftSpec DriftSpec::affine(const Eigen::VectorXd& a, double c0) {
    if (a.size() < 1) throw ConfigError("affine drift needs a non-empty coefficient vector");
    DriftSpec d;
    if (a.size() == 1) {
        const double s = a[0];
        d = scalar(
            "affine", [s, c0](double y) { return s * y + c0; }, [s](double) { return s; },
            [](double) { return 0.0; }, [](double) { return 0.0; });
    } else {
        const auto n = static_cast<int>(a.size());
        d = vector(
            "affine", n, [a, c0](const Eigen::VectorXd& y) { return a.dot(y) + c0; },
            [a](const Eigen::VectorXd&) { return Eigen::VectorXd(a); },
            [n](const Eigen::VectorXd&) { return Eigen::MatrixXd(Eigen::MatrixXd::Zero(n, n)); });
    }
    d.affine_ = AffineForm{a, c0};
    return d;
}

DriftSpec DriftSpec::table1() {
    return scalar(
        "table1", [](double y) { return 0.25 * (-0.5 * y * y + 6.0 * y); },
        [](double y) { return 0.25 * (-y + 6.0); }, [](double) { return -0.25; },
        [](double) { return 0.0; });
}

DriftSpec DriftSpec::quadratic(double beta, const Eigen::MatrixXd& omega) {
    if (omega.rows() != omega.cols() || omega.rows() == 0) {
        throw ConfigError("quadratic drift needs a non-empty square Omega");
    }
    if (!omega.isApprox(omega.transpose(), 1e-12)) throw ConfigError("Omega must be symmetric");
    if (omega.rows() == 1) {
        const double w = omega(0, 0);
        return scalar(
            "quadratic", [beta, w](double y) { return -beta * w * y * y; },
            [beta, w](double y) { return -2.0 * beta * w * y; },
            [beta, w](double) { return -2.0 * beta * w; }, [](double) { return 0.0; });
    }
    return vector(
        "quadratic", static_cast<int>(omega.rows()),
        [beta, omega](const Eigen::VectorXd& y) { return -beta * y.dot(omega * y); },
        [beta, omega](const Eigen::VectorXd& y) { return Eigen::VectorXd(-2.0 * beta * omega * y); },
        [beta, omega](const Eigen::VectorXd&) { return Eigen::MatrixXd(-2.0 * beta * omega); });
}

DriftSpec DriftSpec::photon() {
    return scalar(
        "photon", [](double y) { return -y * y; }, [](double y) { return -2.0 * y; },
        [](double) { return -2.0; }, [](double) { return 0.0; });
}

DriftSpec DriftSpec::polynomial(std::vector<double> coeffs) {
    if (coeffs.empty()) throw ConfigError("polynomial drift needs at least one coefficient");
    // Horner evaluation of the k-th derivative.
    auto derivative = [](const std::vector<double>& c, int order, double y) {
        double acc = 0.0;
        for (int k = static_cast<int>(c.size()) - 1; k >= order; --k) {
            double falling = 1.0;
            for (int j = 0; j < order; ++j) falling *= static_cast<double>(k - j);
            acc = acc * y + falling * c[static_cast<std::size_t>(k)];
        }
        return acc;
    };
    return scalar(
        "polynomial", [=](double y) { return derivative(coeffs, 0, y); },
        [=](double y) { return derivative(coeffs, 1, y); },
        [=](double y) { return derivative(coeffs, 2, y); },
        [=](double y) { return derivative(coeffs, 3, y); });
}

DriftSpec DriftSpec::exponential() {
    auto e = [](double y) { return std::exp(y); };
    return scalar("exponential", e, e, e, e);
}

void DriftSpec::require_scalar() const {
    if (!is_scalar()) throw DomainError("drift '" + name_ + "' has no scalar fast path");
}

double DriftSpec::value(double y) const {
    require_scalar();
    return s_value_(y);
}

double DriftSpec::derivative(double y) const {
    require_scalar();
    return s_d1_(y);
}

double DriftSpec::second(double y) const {
    require_scalar();
    return s_d2_(y);
}

double DriftSpec::third(double y) const {
    require_scalar();
    return s_d3_(y);
}

void validate_drift(const DriftSpec& drift, int n_probes, double radius, std::uint64_t seed) {
    if (drift.dim() < 1) throw ConfigError("drift is not initialized");
    RandomStream rng(seed, 0);
    const int d = drift.dim();
    for (int p = 0; p < n_probes; ++p) {
        Eigen::VectorXd y(d);
        for (int i = 0; i < d; ++i) y[i] = radius * (2.0 * rng.uniform() - 1.0);
        const Eigen::VectorXd g = drift.gradient(y);
        const Eigen::MatrixXd h = drift.hessian(y);
        if (g.size() != d || h.rows() != d || h.cols() != d) {
            throw ConfigError("drift '" + drift.name() + "': derivative shapes do not match dimension");
        }
        if (!h.isApprox(h.transpose(), 1e-12) && (h - h.transpose()).norm() > 1e-12) {
            throw ConfigError("drift '" + drift.name() + "': Hessian is not symmetric");
        }
        for (int i = 0; i < d; ++i) {
            const double step = 1e-5 * std::max(1.0, std::abs(y[i]));
            Eigen::VectorXd up = y, down = y;
            up[i] += step;
            down[i] -= step;
            const double fd = (drift.value(up) - drift.value(down)) / (2.0 * step);
            const double scale = std::max({1.0, std::abs(g[i]), std::abs(drift.value(y))});
            if (std::abs(fd - g[i]) > 1e-5 * scale) {
                std::ostringstream msg;
                msg << "drift '" << drift.name() << "': gradient component " << i
                    << " disagrees with finite differences at probe " << p << " (" << g[i]
                    << " vs " << fd << ")";
                throw ConfigError(msg.str());
            }
        }
    }
}

WarpSpec WarpSpec::identity() {
    WarpSpec w;
    w.name = "identity";
    w.phi = [](double y) { return y; };
    w.phi_d1 = [](double) { return 1.0; };
    w.phi_d2 = [](double) { return 0.0; };
    w.phi_d3 = [](double) { return 0.0; };
    w.phi_inverse = [](double z) { return z; };
    w.phi_inverse_d1 = [](double) { return 1.0; };
    return w;
}

WarpSpec WarpSpec::exponential() {
    WarpSpec w;
    w.name = "exponential";
    auto e = [](double y) { return std::exp(y); };
    w.phi = e;
    w.phi_d1 = e;
    w.phi_d2 = e;
    w.phi_d3 = e;
    w.phi_inverse = [](double z) { return std::log(z); };
    w.phi_inverse_d1 = [](double z) { return 1.0 / z; };
    w.range_min = 0.0;
    return w;
}

WarpSpec WarpSpec::cubic(double k) {
    if (!(k > 0.0)) throw ConfigError("cubic warp needs k > 0");
    WarpSpec w;
    w.name = "cubic";
    w.phi = [k](double y) { return y + k * y * y * y; };
    w.phi_d1 = [k](double y) { return 1.0 + 3.0 * k * y * y; };
    w.phi_d2 = [k](double y) { return 6.0 * k * y; };
    w.phi_d3 = [k](double) { return 6.0 * k; };
    // Real root of k y^3 + y - z = 0 (Cardano), polished by two Newton steps.
    w.phi_inverse = [k](double z) {
        const double p = 1.0 / k;
        const double q = -z / k;
        const double root = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
        double y = std::cbrt(-q / 2.0 + root) + std::cbrt(-q / 2.0 - root);
        for (int it = 0; it < 2; ++it) y -= (y + k * y * y * y - z) / (1.0 + 3.0 * k * y * y);
        return y;
    };
    w.phi_inverse_d1 = [k, inv = w.phi_inverse](double z) {
        const double y = inv(z);
        return 1.0 / (1.0 + 3.0 * k * y * y);
    };
    return w;
}

void validate_warp(const WarpSpec& warp, const std::vector<double>& probes_z) {
    for (double z : probes_z) {
        if (!(z > warp.range_min && z < warp.range_max)) {
            throw ConfigError("warp '" + warp.name + "': probe outside the range of phi");
        }
        const double round_trip = warp.phi(warp.phi_inverse(z));
        if (std::abs(round_trip - z) > 1e-10 * std::max(1.0, std::abs(z))) {
            throw ConfigError("warp '" + warp.name + "': phi(phi^-1(z)) != z");
        }
        const double step = 1e-5 * std::max(1.0, std::abs(z));
        double lo = z - step, hi = z + step;
        if (!(lo > warp.range_min)) lo = z;
        if (!(hi < warp.range_max)) hi = z;
        const double fd = (warp.phi_inverse(hi) - warp.phi_inverse(lo)) / (hi - lo);
        const double d1 = warp.phi_inverse_d1(z);
        if (std::abs(fd - d1) > 1e-6 * std::max(1.0, std::abs(d1))) {
            throw ConfigError("warp '" + warp.name + "': (phi^-1)' disagrees with finite differences");
        }
    }
}

DriftSpec compose(const DriftSpec& outer, const WarpSpec& warp) {
    if (outer.dim() != 1) throw ConfigError("compose needs a one-dimensional outer drift");
    const WarpSpec w = warp;
    const DriftSpec g = outer;
    return DriftSpec::scalar(
        g.name() + "_o_" + w.name, [g, w](double y) { return g.value(w.phi(y)); },
        [g, w](double y) { return g.derivative(w.phi(y)) * w.phi_d1(y); },
        [g, w](double y) {
            const double p = w.phi(y);
            const double d1 = w.phi_d1(y);
            return g.second(p) * d1 * d1 + g.derivative(p) * w.phi_d2(y);
        },
        [g, w](double y) {
            const double p = w.phi(y);
            const double d1 = w.phi_d1(y);
            return g.third(p) * d1 * d1 * d1 + 3.0 * g.second(p) * d1 * w.phi_d2(y) +
                   g.derivative(p) * w.phi_d3(y);
        });
}

}  // namespace khe
