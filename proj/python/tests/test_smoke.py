import math

import numpy as np
import pytest

import khe


def test_heat_kernel_matches_gaussian():
    t, z = 0.7, np.array([0.3, -0.4])
    expected = math.exp(-0.25 / (2 * t)) / (2 * math.pi * t)
    assert khe.heat_kernel(t, z) == pytest.approx(expected, rel=1e-14)


def test_linear_khe_kernel_closed_form():
    t, x, y, xp, yp = 0.5, 0.2, 0.1, -0.05, 0.4
    a = np.array([1.5])
    value = khe.linear_khe_kernel(t, x, np.array([y]), xp, np.array([yp]), a)
    mean = x - t * 1.5 * (y + yp) / 2
    var_x = 1.5**2 * t**3 / 12
    expected = (math.exp(-(xp - mean) ** 2 / (2 * var_x)) / math.sqrt(2 * math.pi * var_x)
                * math.exp(-(yp - y) ** 2 / (2 * t)) / math.sqrt(2 * math.pi * t))
    assert value == pytest.approx(expected, rel=1e-12)


def test_pbar_reduces_to_linear_kernel_for_affine_drift():
    drift = khe.DriftSpec.affine(np.array([-0.8]), 0.0)
    args = (0.3, 0.1, np.array([0.2]), 0.05, np.array([-0.1]))
    exact = khe.linear_khe_kernel(*args, np.array([0.8]))
    assert khe.pbar_kernel(*args, drift) == pytest.approx(exact, rel=1e-10)
    assert khe.frozen_kernel_q(*args, drift) == pytest.approx(exact, rel=1e-10)


def test_oscillator_factor_at_minus_one():
    assert abs(khe.oscillator_factor(-1.0) - math.sinh(1.0) ** -0.5) < 1e-14


def test_propagate_conserves_mass_and_shape():
    grid = khe.Grid2D(-6.0, 6.0, -4.0, 4.0, 61, 41)
    f0 = khe.gaussian_ic(grid, 0.2)
    assert f0.values.shape == (41, 61)
    u = khe.propagate(f0, khe.DriftSpec.table1(), T=0.5, N=2)
    assert u.values.shape == (41, 61)
    assert u.mass() == pytest.approx(f0.mass(), abs=2e-2)


def test_fd_solve_and_relative_error():
    grid = khe.Grid2D(-6.0, 6.0, -4.0, 4.0, 61, 41)
    f0 = khe.gaussian_ic(grid, 0.2)
    drift = khe.DriftSpec.affine(np.array([-0.5]), 0.0)
    fd, report = khe.fd_solve(f0, drift, T=0.5, n_t=200)
    assert report["final_mass"] == pytest.approx(report["initial_mass"], abs=1e-3)
    exact = khe.propagate(f0, drift, T=0.5, N=1, kernel_mode="exact_affine")
    assert khe.relative_lp_error(exact, fd, "1") < 0.05


def test_field_round_trip():
    grid = khe.Grid2D(-1.0, 1.0, -1.0, 1.0, 5, 4)
    values = np.arange(20.0).reshape(4, 5)
    field = khe.Field(grid, values)
    np.testing.assert_array_equal(field.values, values)
    with pytest.raises(khe.ShapeError):
        khe.Field(grid, values.T)


def test_estimate_u_is_deterministic():
    drift = khe.DriftSpec.table1()
    first = khe.estimate_u(0.5, 0.0, 0.0, drift, n_steps=50, n_samples=2000, seed=7)
    second = khe.estimate_u(0.5, 0.0, 0.0, drift, n_steps=50, n_samples=2000, seed=7)
    assert first == second
    assert first[1] > 0.0


def test_characteristic_function_at_zero_is_one():
    drift = khe.DriftSpec.affine(np.array([-1.0]), 0.0)
    (value, se), = khe.characteristic_function(0.5, 0.0, 0.0, [(0.0, 0.0)], drift,
                                               n_steps=10, n_samples=100)
    assert value == pytest.approx(1.0)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_errors_are_mapped():
    with pytest.raises(khe.ConfigError):
        khe.propagate(khe.gaussian_ic(khe.Grid2D(nx=5, ny=5), 0.2), khe.DriftSpec.table1(),
                      kernel_mode="unknown")
    with pytest.raises(khe.DegenerateKernelError):
        khe.linear_khe_kernel(0.5, 0.0, np.array([0.0]), 0.0, np.array([0.0]), np.array([0.0]))


def test_run_cli(tmp_path):
    code, out, _ = khe.run_cli(["--version"])
    assert code == 0 and out.strip()
    assert khe.run_cli(["no-such-command"])[0] == 2
    code, _, err = khe.run_cli(["selftest", "--quick", "--out", str(tmp_path)])
    assert code == 0, err
    assert (tmp_path / "selftest.csv").exists()
    assert (tmp_path / "run_manifest.json").exists()
