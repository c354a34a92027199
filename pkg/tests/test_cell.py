"""Checks for the explicit window cell field and its far-field fit."""

import numpy as np
import pytest

from wgpoles import explicit_window_solution_2d, fit_farfield_coefficient


def test_explicit_values_on_axis() -> None:
    sol = explicit_window_solution_2d(1.0)
    assert abs(sol(0.0, 2.0) - np.sqrt(5.0)) < 1e-14
    # wall point at the window center rises to the half-width
    assert abs(sol(0.0, 0.0) - 1.0) < 1e-14
    assert sol.farfield_constant == 0.5


def test_wall_trace_inside_and_outside() -> None:
    sol = explicit_window_solution_2d(1.0)
    x = np.array([0.0, 0.6, 1.0, 1.2, 3.0])
    h = sol.wall_height(x)
    assert abs(h[1] - 0.8) < 1e-14
    # Dirichlet wall outside the window, exactly
    assert h[2] == 0.0
    assert h[3] == 0.0
    assert h[4] == 0.0


def test_even_symmetry_and_domain_error() -> None:
    sol = explicit_window_solution_2d(0.7)
    assert sol(-0.4, 0.3) == sol(0.4, 0.3)
    assert sol(-2.1, 0.0) == sol(2.1, 0.0)
    with pytest.raises(ValueError):
        sol(0.2, -1e-9)


def test_window_neumann_condition() -> None:
    # vanishing vertical derivative across the open window, one-sided stencil
    sol = explicit_window_solution_2d(1.0)
    h = 1e-4
    for x1 in (0.0, 0.5, -0.8):
        fd = (-3.0 * sol(x1, 0.0) + 4.0 * sol(x1, h) - sol(x1, 2.0 * h)) / (2.0 * h)
        assert abs(fd) < 1e-6


def test_harmonic_away_from_endpoints() -> None:
    sol = explicit_window_solution_2d(1.0)
    h = 1e-3
    for x1, x2 in ((0.3, 0.4), (0.0, 1.2), (1.6, 0.5), (0.9, 0.35)):
        lap = (
            sol(x1 + h, x2)
            + sol(x1 - h, x2)
            + sol(x1, x2 + h)
            + sol(x1, x2 - h)
            - 4.0 * sol(x1, x2)
        ) / h**2
        assert abs(lap) < 1e-4


def test_farfield_fit_recovers_constant() -> None:
    c1 = fit_farfield_coefficient(explicit_window_solution_2d(1.0), 10.0, 100.0)
    assert abs(c1 - 0.5) < 1e-3
    c2 = fit_farfield_coefficient(explicit_window_solution_2d(2.0), 20.0, 200.0)
    assert abs(c2 - 2.0) < 4e-3


def test_farfield_fit_trivial_solution() -> None:
    # the unperturbed half-plane field xi_2 has no dipole correction
    c = fit_farfield_coefficient(lambda x1, x2: np.asarray(x2, float), 1.0, 10.0)
    assert abs(c) < 1e-12


def test_farfield_scaling_quadratic() -> None:
    for s in (0.5, 2.0, 4.0):
        c = fit_farfield_coefficient(explicit_window_solution_2d(s), 10.0 * s, 40.0 * s)
        assert abs(c / s**2 - 0.5) < 0.005


def test_fit_range_validation() -> None:
    sol = explicit_window_solution_2d(1.0)
    with pytest.raises(ValueError):
        fit_farfield_coefficient(sol, 10.0, 15.0)
    with pytest.raises(ValueError):
        # rho_min inside the near zone of a known window
        fit_farfield_coefficient(sol, 4.0, 100.0)


def test_fit_rejects_wrong_farfield() -> None:
    with pytest.raises(ValueError):
        fit_farfield_coefficient(lambda x1, x2: x2 + np.log(x2), 1.0, 10.0)
