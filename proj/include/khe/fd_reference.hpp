#pragma once

#include <cstddef>

#include "khe/drift.hpp"
#include "khe/grid.hpp"

namespace khe {

enum class XScheme {
    spectral,   // exact transport per Fourier mode on a zero-padded periodic extension
    upwind1,    // explicit first-order upwind
    centered2,  // second-order centered differences, Crank-Nicolson in time
};

struct FdConfig {
    Grid2D grid{-14.0, 14.0, -5.0, 5.0, 561, 201};
    double T = 2.5;
    std::size_t n_t = 2000;
    XScheme x_scheme = XScheme::spectral;
    /// Spectral scheme: the padding is cleared (outflow through x_min, x_max)
    /// every this many steps.
    std::size_t flush_interval = 25;
    /// Divergence is declared when max|u| grows by more than this factor between checks.
    double divergence_factor = 10.0;

    /// Throws ConfigError on T <= 0, n_t = 0, flush_interval = 0 or an invalid grid.
    void validate() const;
};

struct FdReport {
    double cfl_x = 0.0;             // max_j |c(y_j)| dt / dx
    double diffusion_number = 0.0;  // dt / dy^2
    double initial_mass = 0.0;
    double final_mass = 0.0;
};

/// Solves u_t = (1/2) u_yy + c(y) u_x on the grid rectangle with u = 0 on the
/// boundary, u(0) = f, by Strang splitting: half-step of transport in x, one
/// Crank-Nicolson step of the y-diffusion, half-step of transport.
/// Throws ShapeError when f is not on cfg.grid and DivergenceError (with the
/// CFL numbers in the message) when the solution blows up.
Field fd_solve(const Field& f, const DriftSpec& drift, const FdConfig& cfg,
               FdReport* report = nullptr);

}  // namespace khe
