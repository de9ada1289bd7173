#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "khe/drift.hpp"
#include "khe/fd_reference.hpp"
#include "khe/grid.hpp"
#include "khe/propagator.hpp"
#include "khe/stochastic_ref.hpp"

namespace khe::cli {

inline constexpr int kSchemaVersion = 1;

/// Drift selection: a named preset or the coefficients of a polynomial in y.
struct DriftChoice {
    std::string preset = "table1";   // table1 | affine | photon | exponential | polynomial
    std::vector<double> coeffs;      // polynomial: c(y) = sum coeffs[k] y^k; affine: {c0, a}

    DriftSpec build() const;
};

/// Kernel evaluated by the `kernel` subcommand.
struct KernelChoice {
    std::string family = "pbar";   // heat | linear_potential | quadratic_potential | ou_potential
                                    // | linear_khe | quad_khe | ou_khe | q | pbar
    double t = 0.5;
    std::array<double, 2> alpha{1.0, 0.0};   // complex coupling of the potential kernels
    double a = 1.0;                          // linear potential / linear KHE coefficient
    double rho = 1.0;                        // quadratic potential / quadratic KHE
    double zeta = 1.0;                       // OU families
    std::string ou_sign = "statement";
    std::array<double, 2> source{0.0, 3.74}; // (x, y) for grid evaluation
    /// Explicit evaluation points. Hypoelliptic families take (x, y, x', y'),
    /// potential families (y, z) and heat (z). Empty: evaluate over the grid.
    std::vector<std::vector<double>> points;
};

struct McChoice {
    McConfig config;
    /// Points (x, y) at which `mc` estimates u(T, x, y); empty: the line cut.
    std::vector<std::array<double, 2>> points;
    /// Every k-th x node of the line cut is estimated by Monte Carlo.
    std::size_t line_stride = 4;
};

struct FdChoice {
    FdConfig config;        // its grid and T are overwritten from the run
    unsigned refine = 1;    // FD grid = run grid refined this many times
};

struct OutputChoice {
    std::string directory = "khe_out";
    double line_cut_y = 3.74;
    bool figures = true;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    DriftChoice drift;
    Grid2D grid;
    double T = 2.5;
    double sigma_c2 = 0.2;
    PropagateConfig propagate;   // T is kept equal to RunConfig::T
    KernelChoice kernel;
    McChoice mc;
    FdChoice fd;
    OutputChoice output;

    /// FD configuration on the refined grid with the run's T.
    FdConfig fd_config() const;
    /// Throws ConfigError when any section is invalid.
    void validate() const;
};

/// Parses a configuration document. Unknown keys, wrong types and invalid
/// values raise ConfigError whose message starts with the JSON pointer of the
/// offending entry (e.g. "/propagate/N: expected a positive integer").
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

/// Full document with every field spelled out (defaults included).
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace khe::cli
