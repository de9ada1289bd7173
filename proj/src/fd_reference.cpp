#include "khe/fd_reference.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <vector>

#include "khe/errors.hpp"
#include "khe/parallel.hpp"

namespace khe {

namespace {

using Complex = std::complex<double>;

std::vector<double> row_speeds(const DriftSpec& drift, const Grid2D& g) {
    if (drift.dim() != 1) throw ShapeError("fd_solve needs a one-dimensional drift");
    std::vector<double> c(g.ny);
    for (std::size_t j = 0; j < g.ny; ++j) {
        c[j] = drift.is_scalar() ? drift.value(g.y(j)) : drift.value(Eigen::VectorXd::Constant(1, g.y(j)));
    }
    return c;
}

// Crank-Nicolson for v_t = (1/2) v_yy on interior nodes with zero boundary
// values, using the compact fourth-order Laplacian (I + d2/12) v_yy ~ d2 v / dy^2
// where d2 v_j = v_{j-1} - 2 v_j + v_{j+1}. With r = dt / (2 dy^2) each step solves
// (5/6 + r) v_j + (1/12 - r/2)(v_{j-1} + v_{j+1}) = (5/6 - r) u_j + (1/12 + r/2)(u_{j-1} + u_{j+1}).
// The constant tridiagonal matrix is factored once.
class CrankNicolsonY {
public:
    CrankNicolsonY(std::size_t ny, double r)
        : rhs_diag_(5.0 / 6.0 - r), rhs_off_(1.0 / 12.0 + 0.5 * r), off_(1.0 / 12.0 - 0.5 * r),
          c_prime_(ny, 0.0), inv_pivot_(ny, 0.0) {
        if (ny < 3) return;
        const double diag = 5.0 / 6.0 + r;
        double prev_c = 0.0;
        for (std::size_t j = 1; j + 1 < ny; ++j) {
            const double pivot = diag - off_ * prev_c;
            inv_pivot_[j] = 1.0 / pivot;
            prev_c = off_ / pivot;
            c_prime_[j] = prev_c;
        }
    }

    // In-place step on v[0 .. ny-1] accessed with a stride.
    template <class T>
    void solve(T* v, std::size_t ny, std::size_t stride, std::vector<T>& work) const {
        work.assign(ny, T{});
        for (std::size_t j = 1; j + 1 < ny; ++j) {
            work[j] = rhs_diag_ * v[j * stride] + rhs_off_ * (v[(j - 1) * stride] + v[(j + 1) * stride]);
        }
        // Forward sweep (Thomas).
        T prev{};
        for (std::size_t j = 1; j + 1 < ny; ++j) {
            prev = (work[j] - off_ * prev) * inv_pivot_[j];
            work[j] = prev;
        }
        // Back substitution.
        v[(ny - 1) * stride] = T{};
        T next{};
        for (std::size_t j = ny - 2; j >= 1; --j) {
            next = work[j] - c_prime_[j] * next;
            v[j * stride] = next;
        }
        v[0] = T{};
    }

private:
    double rhs_diag_, rhs_off_, off_;
    std::vector<double> c_prime_;
    std::vector<double> inv_pivot_;
};

// Tridiagonal solve with constant bands a (sub), b (diag), c (super).
void solve_tridiagonal(double a, const std::vector<double>& b, double c, std::vector<double>& d,
                       std::vector<double>& scratch) {
    const std::size_t n = d.size();
    scratch.assign(n, 0.0);
    double beta = b[0];
    d[0] /= beta;
    for (std::size_t i = 1; i < n; ++i) {
        scratch[i] = c / beta;
        beta = b[i] - a * scratch[i];
        d[i] = (d[i] - a * d[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= scratch[i + 1] * d[i + 1];
}

std::string cfl_message(const FdReport& r) {
    std::ostringstream msg;
    msg << "FD solution diverged (CFL |c| dt/dx = " << r.cfl_x
        << ", dt/dy^2 = " << r.diffusion_number << ")";
    return msg.str();
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

class Divergence {
public:
    Divergence(double factor, double initial) : factor_(factor), last_(initial) {}
    void check(double current, const FdReport& r) {
        if (!std::isfinite(current) || (last_ > 0.0 && current > factor_ * last_)) {
            throw DivergenceError(cfl_message(r));
        }
        last_ = current;
    }

private:
    double factor_;
    double last_;
};

// Spectral scheme: the field lives in x-Fourier space on a periodic array of
// 2 nx points (the grid plus nx zeros). Transport over dt multiplies mode k of
// row j by exp(i gamma_k c_j dt); the y-diffusion acts on each mode separately.
void solve_spectral(Field& u, const std::vector<double>& c, const FdConfig& cfg, FdReport& rep) {
    const Grid2D& g = cfg.grid;
    const std::size_t nx = g.nx, ny = g.ny;
    const std::size_t np = 2 * nx;
    const std::size_t nk = np / 2 + 1;
    const double dt = cfg.T / static_cast<double>(cfg.n_t);
    const double dx = g.dx();

    double* real = fftw_alloc_real(np * ny);
    fftw_complex* spec = fftw_alloc_complex(nk * ny);
    const int n_int = static_cast<int>(np);
    fftw_plan forward = fftw_plan_many_dft_r2c(1, &n_int, static_cast<int>(ny), real, nullptr, 1,
                                               n_int, spec, nullptr, 1, static_cast<int>(nk),
                                               FFTW_ESTIMATE);
    fftw_plan backward = fftw_plan_many_dft_c2r(1, &n_int, static_cast<int>(ny), spec, nullptr, 1,
                                                static_cast<int>(nk), real, nullptr, 1, n_int,
                                                FFTW_ESTIMATE);
    auto* modes = reinterpret_cast<Complex*>(spec);

    auto to_fourier = [&] {
        std::fill(real, real + np * ny, 0.0);
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i < nx; ++i) real[j * np + i] = u.at(i, j);
        }
        fftw_execute(forward);
    };
    auto to_physical = [&] {
        fftw_execute(backward);
        const double scale = 1.0 / static_cast<double>(np);
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i < nx; ++i) u.at(i, j) = real[j * np + i] * scale;
        }
    };

    // Phase tables for a half and a full step.
    const double dgamma = 2.0 * std::numbers::pi / (static_cast<double>(np) * dx);
    std::vector<Complex> half(nk * ny), full(nk * ny);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t k = 0; k < nk; ++k) {
            const double angle = dgamma * static_cast<double>(k) * c[j] * dt;
            if (k == nk - 1) {
                // The Nyquist mode of a real signal stays real.
                half[j * nk + k] = std::cos(0.5 * angle);
                full[j * nk + k] = std::cos(angle);
            } else {
                half[j * nk + k] = std::polar(1.0, 0.5 * angle);
                full[j * nk + k] = std::polar(1.0, angle);
            }
        }
    }
    auto apply_phase = [&](const std::vector<Complex>& table) {
        parallel_for(ny, [&](std::size_t j) {
            for (std::size_t k = 0; k < nk; ++k) modes[j * nk + k] *= table[j * nk + k];
        });
    };

    const CrankNicolsonY cn(ny, dt / (2.0 * g.dy() * g.dy()));
    auto diffuse = [&] {
        parallel_for(nk, [&](std::size_t k) {
            thread_local std::vector<Complex> work;
            cn.solve(modes + k, ny, nk, work);
        });
    };

    Divergence guard(cfg.divergence_factor, u.max_abs());
    to_fourier();
    std::size_t done = 0;
    try {
        while (done < cfg.n_t) {
            const std::size_t burst = std::min(cfg.flush_interval, cfg.n_t - done);
            apply_phase(half);
            for (std::size_t s = 0; s < burst; ++s) {
                diffuse();
                apply_phase(s + 1 < burst ? full : half);
            }
            done += burst;
            // Clearing the padding removes what left through x_min or x_max.
            to_physical();
            guard.check(u.max_abs(), rep);
            if (done < cfg.n_t) to_fourier();
        }
    } catch (...) {
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
        fftw_free(real);
        fftw_free(spec);
        throw;
    }
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spec);
}

// Finite-difference transport u_t = c u_x over dt on every row, zero inflow.
void transport_rows(Field& u, const std::vector<double>& c, double dt, XScheme scheme) {
    const Grid2D& g = u.grid();
    const std::size_t nx = g.nx;
    const double dx = g.dx();
    parallel_for(g.ny, [&](std::size_t j) {
        thread_local std::vector<double> row, next, diag, scratch;
        row.assign(nx, 0.0);
        for (std::size_t i = 0; i < nx; ++i) row[i] = u.at(i, j);
        const double nu = c[j] * dt / dx;
        if (scheme == XScheme::upwind1) {
            next.assign(nx, 0.0);
            // Information travels from x + c dt: forward difference when c > 0.
            for (std::size_t i = 0; i < nx; ++i) {
                const double here = row[i];
                if (nu >= 0.0) {
                    const double ahead = i + 1 < nx ? row[i + 1] : 0.0;
                    next[i] = here + nu * (ahead - here);
                } else {
                    const double behind = i > 0 ? row[i - 1] : 0.0;
                    next[i] = here + nu * (here - behind);
                }
            }
            row.swap(next);
        } else {
            // (I - (nu/4) D) u^{n+1} = (I + (nu/4) D) u^n with D u_i = u_{i+1} - u_{i-1}.
            const double q = 0.25 * nu;
            next.assign(nx, 0.0);
            for (std::size_t i = 0; i < nx; ++i) {
                const double right = i + 1 < nx ? row[i + 1] : 0.0;
                const double left = i > 0 ? row[i - 1] : 0.0;
                next[i] = row[i] + q * (right - left);
            }
            diag.assign(nx, 1.0);
            solve_tridiagonal(q, diag, -q, next, scratch);
            row.swap(next);
        }
        for (std::size_t i = 0; i < nx; ++i) u.at(i, j) = row[i];
    });
}

void solve_finite_difference(Field& u, const std::vector<double>& c, const FdConfig& cfg,
                             FdReport& rep) {
    const Grid2D& g = cfg.grid;
    const double dt = cfg.T / static_cast<double>(cfg.n_t);
    const CrankNicolsonY cn(g.ny, dt / (2.0 * g.dy() * g.dy()));
    Divergence guard(cfg.divergence_factor, u.max_abs());
    for (std::size_t n = 0; n < cfg.n_t; ++n) {
        transport_rows(u, c, 0.5 * dt, cfg.x_scheme);
        parallel_for(g.nx, [&](std::size_t i) {
            thread_local std::vector<double> work;
            cn.solve(u.values().data() + i, g.ny, g.nx, work);
        });
        transport_rows(u, c, 0.5 * dt, cfg.x_scheme);
        guard.check(max_abs(u.values()), rep);
    }
}

}  // namespace

void FdConfig::validate() const {
    grid.validate();
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("fd.T must be positive");
    if (n_t == 0) throw ConfigError("fd.n_t must be >= 1");
    if (flush_interval == 0) throw ConfigError("fd.flush_interval must be >= 1");
    if (!(divergence_factor > 1.0)) throw ConfigError("fd.divergence_factor must exceed 1");
}

Field fd_solve(const Field& f, const DriftSpec& drift, const FdConfig& cfg, FdReport* report) {
    cfg.validate();
    if (!(f.grid() == cfg.grid)) throw ShapeError("initial field is not on the FD grid");
    const std::vector<double> c = row_speeds(drift, cfg.grid);
    const double dt = cfg.T / static_cast<double>(cfg.n_t);

    FdReport rep;
    double c_max = 0.0;
    for (double v : c) c_max = std::max(c_max, std::abs(v));
    rep.cfl_x = c_max * dt / cfg.grid.dx();
    rep.diffusion_number = dt / (cfg.grid.dy() * cfg.grid.dy());

    Field u = f;
    // Boundary values are zero from the start.
    for (std::size_t i = 0; i < cfg.grid.nx; ++i) {
        u.at(i, 0) = 0.0;
        u.at(i, cfg.grid.ny - 1) = 0.0;
    }
    rep.initial_mass = u.mass();
    if (cfg.x_scheme == XScheme::spectral) {
        solve_spectral(u, c, cfg, rep);
    } else {
        solve_finite_difference(u, c, cfg, rep);
    }
    rep.final_mass = u.mass();
    if (report != nullptr) *report = rep;
    return u;
}

}  // namespace khe
