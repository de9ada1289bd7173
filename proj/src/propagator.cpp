#include "khe/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "khe/errors.hpp"
#include "khe/parallel.hpp"
#include "khe/quadrature.hpp"

namespace khe {

namespace {

// Catmull-Rom cardinal function, support (-2, 2).
double catmull_rom(double s) {
    const double a = std::abs(s);
    if (a < 1.0) return (1.5 * a - 2.5) * a * a + 1.0;
    if (a < 2.0) return ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0;
    return 0.0;
}

// Gauss-Legendre panels covering [lo, hi], with breakpoints on the lattice
// spacing / p where p is the smallest integer making the panel <= max_width.
struct Panels {
    double width = 0.0;
    long first = 0;
    long last = 0;   // panels [k w, (k+1) w] for k in [first, last)
};

Panels make_panels(double lo, double hi, double spacing, double max_width) {
    const double p = std::max(1.0, std::ceil(spacing / max_width));
    Panels out;
    out.width = spacing / p;
    out.first = static_cast<long>(std::floor(lo / out.width));
    out.last = static_cast<long>(std::ceil(hi / out.width));
    return out;
}

constexpr std::size_t kPanelOrder = 4;

const GaussLegendre& panel_rule() {
    static const GaussLegendre rule(kPanelOrder);
    return rule;
}

double derivative_norm(const DriftSpec& drift, double y) {
    if (drift.is_scalar()) return std::abs(drift.derivative(y));
    return drift.gradient(Eigen::VectorXd::Constant(1, y)).norm();
}

FrozenPair pair_for(double dt, double y, double y_prime, const DriftSpec& drift,
                    const PropagateConfig& cfg) {
    if (drift.is_scalar()) return frozen_pair(dt, y, y_prime, drift, cfg.kernel);
    return frozen_pair(dt, Eigen::VectorXd::Constant(1, y), Eigen::VectorXd::Constant(1, y_prime),
                       drift, cfg.kernel);
}

double kernel_value(const FrozenPair& p, double gap, KernelMode mode) {
    return mode == KernelMode::pbar ? p.pbar(gap) : p.q(gap);
}

// Dense accumulator of the blocks of one target row.
class RowBuilder {
public:
    RowBuilder(std::size_t ny) : blocks_(ny) {}

    void add(std::size_t row, long offset, double w) {
        auto& b = blocks_[row];
        if (b.empty()) {
            b.first = offset;
            b.values.push_back(w);
            return;
        }
        if (offset < b.first) {
            b.values.insert(b.values.begin(), static_cast<std::size_t>(b.first - offset), 0.0);
            b.first = offset;
        }
        const auto idx = static_cast<std::size_t>(offset - b.first);
        if (idx >= b.values.size()) b.values.resize(idx + 1, 0.0);
        b.values[idx] += w;
    }

    template <class Out>
    void emit(Out& out) {
        for (std::size_t r = 0; r < blocks_.size(); ++r) {
            auto& b = blocks_[r];
            if (b.values.empty()) continue;
            out.push_back({r, b.first, std::move(b.values)});
        }
    }

private:
    struct Pending {
        long first = 0;
        std::vector<double> values;
        bool empty() const { return values.empty(); }
    };
    std::vector<Pending> blocks_;
};

}  // namespace

void PropagateConfig::validate() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("propagate.T must be positive");
    if (N == 0) throw ConfigError("propagate.N must be >= 1");
    if (!(support_cutoff_sigmas > 0.0)) {
        throw ConfigError("propagate.support_cutoff_sigmas must be positive");
    }
}

Field gaussian_ic(const Grid2D& grid, double sigma_c2) {
    if (!(sigma_c2 > 0.0)) throw DomainError("sigma_c2 must be positive");
    Field f(grid);
    const double norm = 1.0 / (2.0 * std::numbers::pi * sigma_c2);
    for (std::size_t j = 0; j < grid.ny; ++j) {
        const double y = grid.y(j);
        for (std::size_t i = 0; i < grid.nx; ++i) {
            const double x = grid.x(i);
            f.at(i, j) = norm * std::exp(-(x * x + y * y) / (2.0 * sigma_c2));
        }
    }
    return f;
}

StepOperator::StepOperator(const Grid2D& grid, const DriftSpec& drift, double dt,
                           const PropagateConfig& cfg)
    : grid_(grid), dt_(dt) {
    grid_.validate();
    cfg.validate();
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("dt must be positive");
    if (drift.dim() != 1) throw ShapeError("the propagator needs a one-dimensional drift");
    if (cfg.kernel_mode == KernelMode::exact_affine && !drift.affine_form()) {
        throw ConfigError("kernel_mode exact_affine needs an affine drift, got " + drift.name());
    }
    for (std::size_t j = 0; j < grid_.ny; ++j) {
        if (!(derivative_norm(drift, grid_.y(j)) > cfg.kernel.grad_epsilon)) {
            std::ostringstream msg;
            msg << "||c'(y)|| vanishes on grid row " << j << " (y = " << grid_.y(j)
                << "); the small-time kernel is undefined there";
            throw ConfigError(msg.str());
        }
    }

    const double dx = grid_.dx(), dy = grid_.dy();
    const double reach = cfg.support_cutoff_sigmas;
    const double root_dt = std::sqrt(dt);
    const long nx = static_cast<long>(grid_.nx);
    const long ny = static_cast<long>(grid_.ny);
    const double x_span = grid_.x_max - grid_.x_min;
    const bool product = cfg.quadrature == QuadratureRule::product;
    const KernelMode mode = cfg.kernel_mode;
    rows_.resize(grid_.ny);

    parallel_for(grid_.ny, [&](std::size_t j) {
        const double y = grid_.y(j);
        RowBuilder builder(grid_.ny);

        // Adds the x-weights of one source ordinate y' with y-weight wy spread
        // over the source rows given by `rows` / `row_weights`.
        auto add_x_weights = [&](const FrozenPair& pair, double wy, const long* rows,
                                 const double* row_weights, int n_rows) {
            // Gap g = x - x' is supported near -shift.
            const double half = std::isfinite(reach) ? reach * pair.sigma : HUGE_VAL;
            const double g_lo = std::max(-pair.shift - half, -x_span - 2.0 * dx);
            const double g_hi = std::min(-pair.shift + half, x_span + 2.0 * dx);
            if (!(g_lo < g_hi)) return;
            if (!product) {
                const long k0 = static_cast<long>(std::ceil(g_lo / dx));
                const long k1 = static_cast<long>(std::floor(g_hi / dx));
                for (long k = k0; k <= k1; ++k) {
                    const double w = wy * dx * kernel_value(pair, static_cast<double>(k) * dx, mode);
                    for (int r = 0; r < n_rows; ++r) {
                        builder.add(static_cast<std::size_t>(rows[r]), k, row_weights[r] * w);
                    }
                }
                return;
            }
            const Panels panels = make_panels(g_lo, g_hi, dx, 0.5 * pair.sigma);
            const GaussLegendre& gl = panel_rule();
            for (long p = panels.first; p < panels.last; ++p) {
                const double a = static_cast<double>(p) * panels.width;
                const double b = a + panels.width;
                for (std::size_t n = 0; n < gl.order(); ++n) {
                    const double g = gl.node(n, a, b);
                    const double w = wy * gl.weight(n, a, b) * kernel_value(pair, g, mode);
                    if (w == 0.0) continue;
                    const long base = static_cast<long>(std::floor(g / dx));
                    for (long k = base - 1; k <= base + 2; ++k) {
                        const double bx = catmull_rom((static_cast<double>(k) * dx - g) / dx);
                        if (bx == 0.0) continue;
                        for (int r = 0; r < n_rows; ++r) {
                            builder.add(static_cast<std::size_t>(rows[r]), k,
                                        row_weights[r] * w * bx);
                        }
                    }
                }
            }
        };

        const double half_y = std::isfinite(reach) ? reach * root_dt : HUGE_VAL;
        if (!product) {
            const long j0 = std::max<long>(0, static_cast<long>(std::ceil((y - half_y - grid_.y_min) / dy)));
            const long j1 = std::min<long>(ny - 1, static_cast<long>(std::floor((y + half_y - grid_.y_min) / dy)));
            for (long jp = j0; jp <= j1; ++jp) {
                const double yp = grid_.y(static_cast<std::size_t>(jp));
                const FrozenPair pair = pair_for(dt, y, yp, drift, cfg);
                const double row_weight = 1.0;
                add_x_weights(pair, dy, &jp, &row_weight, 1);
            }
        } else {
            // Offsets of y' from y_min, measured in the lattice.
            const double lo = std::max(y - half_y, grid_.y_min - 2.0 * dy) - grid_.y_min;
            const double hi = std::min(y + half_y, grid_.y_max + 2.0 * dy) - grid_.y_min;
            const Panels panels = make_panels(lo, hi, dy, 0.5 * root_dt);
            const GaussLegendre& gl = panel_rule();
            for (long p = panels.first; p < panels.last; ++p) {
                const double a = static_cast<double>(p) * panels.width;
                const double b = a + panels.width;
                for (std::size_t n = 0; n < gl.order(); ++n) {
                    const double v = gl.node(n, a, b);
                    const double yp = grid_.y_min + v;
                    long rows[4];
                    double weights[4];
                    int count = 0;
                    const long base = static_cast<long>(std::floor(v / dy));
                    for (long jp = base - 1; jp <= base + 2; ++jp) {
                        if (jp < 0 || jp >= ny) continue;
                        const double by = catmull_rom((static_cast<double>(jp) * dy - v) / dy);
                        if (by == 0.0) continue;
                        rows[count] = jp;
                        weights[count] = by;
                        ++count;
                    }
                    if (count == 0) continue;
                    const FrozenPair pair = pair_for(dt, y, yp, drift, cfg);
                    add_x_weights(pair, gl.weight(n, a, b), rows, weights, count);
                }
            }
        }
        std::vector<Block>& out = rows_[j];
        builder.emit(out);
        // Trim offsets that can never reach a grid node.
        for (Block& blk : out) {
            const long lo_k = -(nx - 1), hi_k = nx - 1;
            long first = blk.first_offset;
            auto& w = blk.weights;
            if (first < lo_k) {
                const auto drop = static_cast<std::size_t>(std::min<long>(lo_k - first, static_cast<long>(w.size())));
                w.erase(w.begin(), w.begin() + static_cast<long>(drop));
                first = lo_k;
            }
            const long last = first + static_cast<long>(w.size()) - 1;
            if (last > hi_k) w.resize(static_cast<std::size_t>(std::max<long>(0, hi_k - first + 1)));
            blk.first_offset = first;
        }
    });
}

Field StepOperator::apply(const Field& field) const {
    if (!(field.grid() == grid_)) throw ShapeError("field grid does not match the step operator");
    Field out(grid_);
    const long nx = static_cast<long>(grid_.nx);
    parallel_for(grid_.ny, [&](std::size_t j) {
        std::vector<double> acc(grid_.nx, 0.0);
        for (const Block& blk : rows_[j]) {
            const double* src = field.values().data() + blk.source_row * grid_.nx;
            const long n_w = static_cast<long>(blk.weights.size());
            for (long i = 0; i < nx; ++i) {
                // Source index i' = i - k for k = first_offset + m.
                const long m_lo = std::max<long>(0, i - (nx - 1) - blk.first_offset);
                const long m_hi = std::min<long>(n_w - 1, i - blk.first_offset);
                double s = 0.0;
                for (long m = m_lo; m <= m_hi; ++m) {
                    s += blk.weights[static_cast<std::size_t>(m)] * src[i - blk.first_offset - m];
                }
                acc[static_cast<std::size_t>(i)] += s;
            }
        }
        for (std::size_t i = 0; i < grid_.nx; ++i) out.at(i, j) = acc[i];
    });
    return out;
}

Field step(const Field& field, const DriftSpec& drift, double dt, const PropagateConfig& cfg) {
    return StepOperator(field.grid(), drift, dt, cfg).apply(field);
}

PropagateResult propagate(const Field& f, const DriftSpec& drift, const PropagateConfig& cfg) {
    cfg.validate();
    const StepOperator op(f.grid(), drift, cfg.dt(), cfg);
    PropagateResult result;
    result.field = f;
    for (std::size_t n = 0; n < cfg.N; ++n) {
        result.field = op.apply(result.field);
        StepDiagnostics d;
        d.mass = result.field.mass();
        d.min_value = result.field.min_value();
        result.steps.push_back(d);
        if (cfg.clamp_negative && d.min_value < 0.0) {
            for (double& v : result.field.values()) v = std::max(v, 0.0);
            const double clamped = result.field.mass();
            if (clamped > 0.0) {
                for (double& v : result.field.values()) v *= d.mass / clamped;
            }
        }
    }
    return result;
}

}  // namespace khe
