"""Kernels, propagation and reference solvers for Kolmogorov hypoelliptic equations."""

from ._khe import (
    ConfigError,
    DegenerateGradientError,
    DegenerateKernelError,
    DivergenceError,
    DomainError,
    DriftSpec,
    Field,
    Grid2D,
    ShapeError,
    SingularityError,
    characteristic_function,
    estimate_u,
    fd_solve,
    frozen_kernel_q,
    gaussian_ic,
    h_correction,
    heat_kernel,
    linear_khe_kernel,
    linear_potential_kernel,
    ou_khe_kernel,
    ou_potential_kernel,
    oscillator_factor,
    pbar_kernel,
    propagate,
    quad_khe_kernel,
    quadratic_potential_kernel,
    relative_lp_error,
    run_cli,
    set_max_threads,
)

__all__ = [name for name in dir() if not name.startswith("_")]
