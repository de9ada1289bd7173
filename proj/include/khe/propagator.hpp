#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "khe/drift.hpp"
#include "khe/grid.hpp"
#include "khe/smalltime_kernel.hpp"

namespace khe {

enum class KernelMode {
    pbar,          // first-order corrected kernel
    q,             // frozen Gaussian kernel
    exact_affine,  // q for an affine drift, where it is the exact transition density
};

enum class QuadratureRule {
    trapezoid,  // kernel sampled at the grid nodes
    product,    // field interpolated (Catmull-Rom) and integrated against the kernel
};

struct PropagateConfig {
    double T = 2.5;
    std::size_t N = 5;
    KernelMode kernel_mode = KernelMode::pbar;
    bool clamp_negative = false;
    /// Kernel support in standard deviations (x'-Gaussian and y'-Gaussian);
    /// infinity integrates over the whole grid.
    double support_cutoff_sigmas = 8.0;
    QuadratureRule quadrature = QuadratureRule::product;
    SmallTimeOptions kernel;

    /// Throws ConfigError for T <= 0, N = 0 or a non-positive cutoff.
    void validate() const;
    double dt() const { return T / static_cast<double>(N); }
};

/// f(x, y) = exp(-(x^2 + y^2) / (2 sigma_c2)) / (2 pi sigma_c2) at the nodes.
Field gaussian_ic(const Grid2D& grid, double sigma_c2);

/// One application of the discretized semigroup, u(x_i, y_j) = sum W phi, as a
/// banded operator. For a target row j and a source row j' the weights depend
/// only on the x-offset i - i', so each (j, j') block is a short convolution.
///
/// The field is extended by zero outside the grid. With the product rule the
/// weight of node (i', j') is int int k(dt, x_i, y_j, x', y') B_i'(x') B_j'(y')
/// dx' dy', where B is the Catmull-Rom cardinal function of the node; the
/// integral uses Gauss-Legendre panels aligned with the grid and no wider than
/// half the kernel's standard deviation in each direction.
class StepOperator {
public:
    /// Throws ConfigError when some grid row has ||c'(y_j)|| <= grad_epsilon,
    /// or when kernel_mode is exact_affine and the drift is not affine.
    StepOperator(const Grid2D& grid, const DriftSpec& drift, double dt,
                 const PropagateConfig& cfg);

    const Grid2D& grid() const { return grid_; }
    double dt() const { return dt_; }

    /// Applies the operator. Each output node is a fixed-order sum, so the
    /// result does not depend on the number of threads.
    Field apply(const Field& field) const;

private:
    struct Block {
        std::size_t source_row = 0;
        long first_offset = 0;         // offset i - i' of weights[0]
        std::vector<double> weights;
    };

    Grid2D grid_;
    double dt_ = 0.0;
    std::vector<std::vector<Block>> rows_;   // rows_[j]: blocks feeding target row j
};

/// step(field) with kernel time dt; builds a StepOperator and applies it once.
Field step(const Field& field, const DriftSpec& drift, double dt, const PropagateConfig& cfg);

struct StepDiagnostics {
    double mass = 0.0;        // trapezoid mass after the step (before clamping)
    double min_value = 0.0;   // smallest value after the step (before clamping)
};

struct PropagateResult {
    Field field;
    std::vector<StepDiagnostics> steps;
};

/// N-fold application of the step operator with dt = T / N. With
/// clamp_negative, negative values are set to zero after each step and the field
/// is rescaled to its unclamped mass.
PropagateResult propagate(const Field& f, const DriftSpec& drift, const PropagateConfig& cfg);

}  // namespace khe
