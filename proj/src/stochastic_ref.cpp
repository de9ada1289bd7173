#include "khe/stochastic_ref.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "khe/closed_kernels.hpp"
#include "khe/errors.hpp"
#include "khe/parallel.hpp"
#include "khe/quadrature.hpp"

namespace khe {

namespace {

constexpr std::size_t kBatch = 4096;

using Complex = std::complex<double>;

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be positive and finite");
    }
}

// Running mean and centred second moments of a complex quantity.
struct Accumulator {
    double n = 0.0;
    Complex mean{0.0, 0.0};
    double m2 = 0.0;   // sum |v - mean|^2

    void add(Complex v) {
        n += 1.0;
        const Complex d = v - mean;
        mean += d / n;
        m2 += std::real(d * std::conj(v - mean));
    }

    void merge(const Accumulator& o) {
        if (o.n == 0.0) return;
        if (n == 0.0) {
            *this = o;
            return;
        }
        const double total = n + o.n;
        const Complex d = o.mean - mean;
        mean += d * (o.n / total);
        m2 += o.m2 + std::norm(d) * n * o.n / total;
        n = total;
    }
};

// Unit-interval Brownian bridge on m + 1 nodes, b(0) = b(1) = 0.
void sample_unit_bridge(GaussianSource& g, std::size_t m, std::span<double> b) {
    const double sd = std::sqrt(1.0 / static_cast<double>(m));
    b[0] = 0.0;
    for (std::size_t k = 1; k <= m; ++k) b[k] = b[k - 1] + sd * g.normal();
    const double end = b[m];
    for (std::size_t k = 0; k <= m; ++k) b[k] -= end * static_cast<double>(k) / static_cast<double>(m);
}

double trapezoid_sum(std::span<const double> v, double h) {
    double s = 0.5 * (v.front() + v.back());
    for (std::size_t k = 1; k + 1 < v.size(); ++k) s += v[k];
    return s * h;
}

// Exact OU transition over a step h: mean factor e^{-zeta h} and variance.
struct OuStep {
    double decay = 1.0;
    double variance = 0.0;
};

OuStep ou_step(double zeta, double h) {
    if (zeta == 0.0) return {1.0, h};
    return {std::exp(-zeta * h), -std::expm1(-2.0 * zeta * h) / (2.0 * zeta)};
}

std::function<double(double)> scalar_drift(const DriftSpec& drift) {
    if (drift.dim() != 1) throw ShapeError("path simulation needs a one-dimensional drift");
    if (drift.is_scalar()) return [&drift](double y) { return drift.value(y); };
    return [&drift](double y) { return drift.value(Eigen::VectorXd::Constant(1, y)); };
}

}  // namespace

void McConfig::validate() const {
    if (n_steps < 1) throw ConfigError("mc.n_steps must be >= 1");
    if (n_samples < 1) throw ConfigError("mc.n_samples must be >= 1");
    if (antithetic && n_samples < 2) throw ConfigError("antithetic sampling needs n_samples >= 2");
}

std::vector<McEstimate> run_monte_carlo(const McConfig& cfg, std::size_t n_outputs,
                                        const PathSampler& sampler, std::uint64_t salt) {
    cfg.validate();
    const std::size_t n_paths = cfg.antithetic ? cfg.n_samples / 2 : cfg.n_samples;
    const std::size_t n_batches = (n_paths + kBatch - 1) / kBatch;
    std::vector<std::vector<Accumulator>> batches(n_batches,
                                                  std::vector<Accumulator>(n_outputs));
    const std::uint64_t base = salt << 40;

    parallel_for(n_batches, [&](std::size_t b) {
        std::vector<Complex> out(n_outputs), partner(n_outputs);
        auto& acc = batches[b];
        const std::size_t end = std::min(n_paths, (b + 1) * kBatch);
        for (std::size_t i = b * kBatch; i < end; ++i) {
            GaussianSource g(cfg.seed, base + i, 1.0);
            sampler(g, out);
            if (cfg.antithetic) {
                GaussianSource mirrored(cfg.seed, base + i, -1.0);
                sampler(mirrored, partner);
                for (std::size_t k = 0; k < n_outputs; ++k) out[k] = 0.5 * (out[k] + partner[k]);
            }
            for (std::size_t k = 0; k < n_outputs; ++k) acc[k].add(out[k]);
        }
    });

    std::vector<McEstimate> result(n_outputs);
    for (std::size_t k = 0; k < n_outputs; ++k) {
        Accumulator total;
        for (const auto& batch : batches) total.merge(batch[k]);
        McEstimate& e = result[k];
        e.mean = total.mean;
        e.n_effective = n_paths;
        e.std_error = n_paths > 1 ? std::sqrt(total.m2 / (total.n - 1.0) / total.n) : 0.0;
    }
    return result;
}

std::vector<McEstimate> estimate_expectations(double T, double x, double y,
                                              const std::vector<ComplexPayoff>& payoffs,
                                              const PathModel& model, const McConfig& cfg,
                                              std::uint64_t salt) {
    require_positive(T, "T");
    if (model.drift == nullptr) throw ConfigError("path model has no drift");
    if (model.zeta < 0.0) throw DomainError("zeta must be non-negative");
    cfg.validate();
    const auto c = scalar_drift(*model.drift);
    const double h = T / static_cast<double>(cfg.n_steps);
    const OuStep step = ou_step(model.zeta, h);
    const double sd = std::sqrt(step.variance);
    return run_monte_carlo(
        cfg, payoffs.size(),
        [&](GaussianSource& g, std::span<Complex> out) {
            double xs = x, ys = y;
            for (std::size_t k = 0; k < cfg.n_steps; ++k) {
                xs += c(ys) * h;
                ys = step.decay * ys + sd * g.normal();
            }
            for (std::size_t k = 0; k < payoffs.size(); ++k) out[k] = payoffs[k](xs, ys);
        },
        salt);
}

McEstimate estimate_u(double T, double x, double y, const Payoff& f, const DriftSpec& drift,
                      const McConfig& cfg) {
    const std::vector<ComplexPayoff> payoffs{[&f](double a, double b) { return Complex(f(a, b)); }};
    return estimate_expectations(T, x, y, payoffs, PathModel{&drift, 0.0}, cfg).front();
}

std::vector<McEstimate> estimate_u_line(double T, std::span<const double> xs, double y,
                                        const Payoff& f, const DriftSpec& drift,
                                        const McConfig& cfg) {
    require_positive(T, "T");
    cfg.validate();
    const auto c = scalar_drift(drift);
    const double h = T / static_cast<double>(cfg.n_steps);
    const double sd = std::sqrt(h);
    return run_monte_carlo(cfg, xs.size(), [&](GaussianSource& g, std::span<Complex> out) {
        double displacement = 0.0, ys = y;
        for (std::size_t k = 0; k < cfg.n_steps; ++k) {
            displacement += c(ys) * h;
            ys += sd * g.normal();
        }
        for (std::size_t k = 0; k < xs.size(); ++k) out[k] = f(xs[k] + displacement, ys);
    });
}

std::vector<McEstimate> characteristic_function(double T, double x, double y,
                                                std::span<const std::array<double, 2>> thetas,
                                                const PathModel& model, const McConfig& cfg) {
    std::vector<ComplexPayoff> payoffs;
    payoffs.reserve(thetas.size());
    for (const auto& th : thetas) {
        payoffs.emplace_back([th](double a, double b) {
            return std::polar(1.0, th[0] * a + th[1] * b);
        });
    }
    return estimate_expectations(T, x, y, payoffs, model, cfg);
}

double BridgePotential::operator()(const Eigen::VectorXd& y) const {
    if (kind == Kind::linear) return coeffs.dot(y);
    return 0.5 * coeffs.dot(y.cwiseAbs2());
}

McEstimate bridge_functional(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                             const BridgePotential& potential, Complex alpha,
                             const McConfig& cfg) {
    require_positive(t, "t");
    const auto d = static_cast<std::size_t>(y.size());
    if (z.size() != y.size() || potential.coeffs.size() != y.size() || d == 0) {
        throw ShapeError("bridge_functional: dimension mismatch");
    }
    cfg.validate();
    const double density = heat_kernel(t, Eigen::VectorXd(z - y));
    if (alpha == Complex(0.0, 0.0)) {
        McEstimate e;
        e.mean = density;
        e.n_effective = cfg.antithetic ? cfg.n_samples / 2 : cfg.n_samples;
        return e;
    }
    const std::size_t m = cfg.n_steps;
    const double root_t = std::sqrt(t);
    const double h = t / static_cast<double>(m);
    return run_monte_carlo(cfg, 1, [&](GaussianSource& g, std::span<Complex> out) {
        std::vector<double> b(m + 1), v(m + 1, 0.0);
        Eigen::VectorXd point(static_cast<Eigen::Index>(d));
        std::vector<std::vector<double>> bridges(d, std::vector<double>(m + 1));
        for (std::size_t i = 0; i < d; ++i) sample_unit_bridge(g, m, bridges[i]);
        for (std::size_t k = 0; k <= m; ++k) {
            const double u = static_cast<double>(k) / static_cast<double>(m);
            for (std::size_t i = 0; i < d; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                point[ii] = y[ii] + u * (z[ii] - y[ii]) + root_t * bridges[i][k];
            }
            v[k] = potential(point);
        }
        out[0] = std::exp(alpha * trapezoid_sum(v, h)) * density;
    }).front();
}

Complex kl_truncated_product(Complex lambda, std::size_t k_max) {
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    Complex log_sum{0.0, 0.0};
    for (std::size_t k = k_max; k >= 1; --k) {
        const double kp = static_cast<double>(k) * std::numbers::pi;
        const Complex factor = 1.0 - 2.0 * lambda / (kp * kp);
        if (std::abs(factor) < 1e-14) {
            throw SingularityError("Karhunen-Loeve product has a zero factor");
        }
        log_sum += -0.5 * std::log(factor);
    }
    return std::exp(log_sum);
}

KlBridgeResult kl_bridge_functional(Complex lambda, std::size_t k_max, const McConfig& cfg) {
    KlBridgeResult r;
    r.product = kl_truncated_product(lambda, k_max);
    if (lambda == Complex(0.0, 0.0)) {
        cfg.validate();
        r.estimate.mean = 1.0;
        r.estimate.n_effective = cfg.antithetic ? cfg.n_samples / 2 : cfg.n_samples;
        return r;
    }
    std::vector<double> inv_k2pi2(k_max);
    for (std::size_t k = 0; k < k_max; ++k) {
        const double kp = static_cast<double>(k + 1) * std::numbers::pi;
        inv_k2pi2[k] = 1.0 / (kp * kp);
    }
    r.estimate = run_monte_carlo(cfg, 1, [&](GaussianSource& g, std::span<Complex> out) {
        double energy = 0.0;
        for (std::size_t k = 0; k < k_max; ++k) {
            const double zk = g.normal();
            energy += zk * zk * inv_k2pi2[k];
        }
        out[0] = std::exp(lambda * energy);
    }).front();
    return r;
}

McEstimate ou_bridge_oracle(double t, double y, double z, double zeta, Complex alpha,
                            const McConfig& cfg) {
    require_positive(t, "t");
    require_positive(zeta, "zeta");
    cfg.validate();
    const double density = ou_transition_density(t, y, z, zeta);
    if (alpha == Complex(0.0, 0.0)) {
        McEstimate e;
        e.mean = density;
        e.n_effective = cfg.antithetic ? cfg.n_samples / 2 : cfg.n_samples;
        return e;
    }
    const std::size_t m = cfg.n_steps;
    const double h = t / static_cast<double>(m);
    const OuStep one = ou_step(zeta, h);
    // Conditional law of the next node given the current node a and Y(t) = z:
    // prior N(a e^{-zeta h}, v(h)) times likelihood of z given the node.
    struct Node {
        double w_prev, w_end, sd;
    };
    std::vector<Node> nodes(m);
    for (std::size_t k = 0; k + 1 < m; ++k) {
        const double remaining = t - static_cast<double>(k + 1) * h;
        const OuStep rest = ou_step(zeta, remaining);
        const double precision = 1.0 / one.variance + rest.decay * rest.decay / rest.variance;
        nodes[k] = {one.decay / one.variance / precision, rest.decay / rest.variance / precision,
                    std::sqrt(1.0 / precision)};
    }
    return run_monte_carlo(cfg, 1, [&](GaussianSource& g, std::span<Complex> out) {
        double a = y;
        double integral = 0.5 * y;
        for (std::size_t k = 0; k + 1 < m; ++k) {
            const Node& nd = nodes[k];
            a = nd.w_prev * a + nd.w_end * z + nd.sd * g.normal();
            integral += a;
        }
        integral = (integral + 0.5 * z) * h;
        out[0] = std::exp(alpha * integral) * density;
    }).front();
}

McEstimate ou_integral_covariance(double t, double zeta, const McConfig& cfg) {
    require_positive(t, "t");
    require_positive(zeta, "zeta");
    cfg.validate();
    const std::size_t m = cfg.n_steps;
    const double h = t / static_cast<double>(m);
    const OuStep step = ou_step(zeta, h);
    const double sd = std::sqrt(step.variance);
    return run_monte_carlo(cfg, 1, [&](GaussianSource& g, std::span<Complex> out) {
        double yk = 0.0, integral = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double next = step.decay * yk + sd * g.normal();
            integral += 0.5 * (yk + next) * h;
            yk = next;
        }
        out[0] = integral * yk;
    }).front();
}

double GaussianDensity2D::operator()(double x, double y) const {
    const double u = (x - mean_x) / sd_x;
    const double v = (y - mean_y) / sd_y;
    return std::exp(-0.5 * (u * u + v * v)) / (2.0 * std::numbers::pi * sd_x * sd_y);
}

AdjointCheckReport reversed_drift_check(double t, const DriftSpec& drift, const McConfig& cfg,
                                        const AdjointCheckOptions& opts) {
    require_positive(t, "t");
    cfg.validate();
    const auto c = scalar_drift(drift);
    AdjointCheckReport report;
    for (double tx : opts.theta_x) {
        for (double ty : opts.theta_y) report.thetas.push_back({tx, ty});
    }
    const std::size_t n_theta = report.thetas.size();
    const double h = t / static_cast<double>(cfg.n_steps);
    const double sd = std::sqrt(h);

    // One path: start drawn from `start`, X moves with sign * c(Y).
    auto simulate = [&](GaussianSource& g, const GaussianDensity2D& start, double sign,
                        double& x0, double& y0, double& xt, double& yt) {
        x0 = start.mean_x + start.sd_x * g.normal();
        y0 = start.mean_y + start.sd_y * g.normal();
        xt = x0;
        yt = y0;
        for (std::size_t k = 0; k < cfg.n_steps; ++k) {
            xt += sign * c(yt) * h;
            yt += sd * g.normal();
        }
    };

    report.forward = run_monte_carlo(
        cfg, n_theta,
        [&](GaussianSource& g, std::span<Complex> out) {
            double x0, y0, xt, yt;
            simulate(g, opts.phi, 1.0, x0, y0, xt, yt);
            const double weight = opts.psi(xt, yt);
            for (std::size_t k = 0; k < n_theta; ++k) {
                const auto& th = report.thetas[k];
                out[k] = weight * std::polar(1.0, th[0] * xt + th[1] * yt);
            }
        },
        1);
    report.reversed = run_monte_carlo(
        cfg, n_theta,
        [&](GaussianSource& g, std::span<Complex> out) {
            double x0, y0, xt, yt;
            simulate(g, opts.psi, -1.0, x0, y0, xt, yt);
            const double weight = opts.phi(xt, yt);
            for (std::size_t k = 0; k < n_theta; ++k) {
                const auto& th = report.thetas[k];
                out[k] = weight * std::polar(1.0, th[0] * x0 + th[1] * y0);
            }
        },
        2);

    report.deviation_se.resize(n_theta);
    for (std::size_t k = 0; k < n_theta; ++k) {
        const double se = std::hypot(report.forward[k].std_error, report.reversed[k].std_error);
        const double gap = std::abs(report.forward[k].mean - report.reversed[k].mean);
        report.deviation_se[k] = se > 0.0 ? gap / se : (gap == 0.0 ? 0.0 : HUGE_VAL);
        report.max_deviation_se = std::max(report.max_deviation_se, report.deviation_se[k]);
    }
    return report;
}

SmallTimeErrorEstimate smalltime_error_estimate(double t, double x, double y, const Payoff& f,
                                                const DriftSpec& drift, const McConfig& cfg,
                                                const ErrorEstimateOptions& est,
                                                const SmallTimeOptions& opts) {
    require_positive(t, "t");
    cfg.validate();
    if (est.y_nodes < 2) throw ConfigError("y_nodes must be >= 2");
    const auto c = scalar_drift(drift);
    const double c0 = c(y);
    const double c1 = drift.is_scalar() ? drift.derivative(y)
                                        : drift.gradient(Eigen::VectorXd::Constant(1, y))[0];
    const std::size_t m = cfg.n_steps;
    const double h = t / static_cast<double>(m);
    const double root_t = std::sqrt(t);

    // Terminal nodes y'_j with weights w_j p_t(y'_j - y), and the deterministic
    // part int (q - pbar) f dx' / p_t at each node.
    const GaussLegendre y_rule(est.y_nodes);
    const GaussLegendre x_rule(48);
    constexpr double kReach = 6.0;
    const double y_lo = y - est.y_reach * root_t;
    const double y_hi = y + est.y_reach * root_t;
    struct Terminal {
        double y_end, weight, correction;
    };
    std::vector<Terminal> nodes(est.y_nodes);
    for (std::size_t j = 0; j < est.y_nodes; ++j) {
        const double y_end = y_rule.node(j, y_lo, y_hi);
        const FrozenPair pair =
            drift.is_scalar()
                ? frozen_pair(t, y, y_end, drift, opts)
                : frozen_pair(t, Eigen::VectorXd::Constant(1, y),
                              Eigen::VectorXd::Constant(1, y_end), drift, opts);
        // -slope int g N(g; sigma^2) f(x', y') dx' with g = x - x' + shift.
        const double centre = x + pair.shift;
        const double lo = centre - kReach * pair.sigma;
        const double hi = centre + kReach * pair.sigma;
        double correction = 0.0;
        for (std::size_t i = 0; i < x_rule.order(); ++i) {
            const double xp = x_rule.node(i, lo, hi);
            const double gap = centre - xp;
            const double u = gap / pair.sigma;
            const double normal =
                std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * pair.sigma);
            correction += x_rule.weight(i, lo, hi) * gap * normal * f(xp, y_end);
        }
        nodes[j] = {y_end, y_rule.weight(j, y_lo, y_hi) * pair.y_weight, -pair.slope * correction};
    }

    const auto estimates = run_monte_carlo(cfg, 2, [&](GaussianSource& g, std::span<Complex> out) {
        std::vector<double> b(m + 1);
        sample_unit_bridge(g, m, b);
        double total = 0.0, exact = 0.0;
        for (const Terminal& node : nodes) {
            const double delta = node.y_end - y;
            double full = 0.5 * (c0 + c(node.y_end)), linear = 0.5 * delta;
            for (std::size_t k = 1; k < m; ++k) {
                const double u = static_cast<double>(k) / static_cast<double>(m);
                const double dev = u * delta + root_t * b[k];
                full += c(y + dev);
                linear += dev;
            }
            const double x_full = x + full * h;
            const double x_linear = x + t * c0 + c1 * linear * h;
            const double at_full = f(x_full, node.y_end);
            total += node.weight * (at_full - f(x_linear, node.y_end) + node.correction);
            exact += node.weight * at_full;
        }
        out[0] = total;
        out[1] = exact;
    });
    return {estimates[0], estimates[1]};
}

}  // namespace khe
