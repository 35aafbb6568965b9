import dataclasses

import numpy as np
import pytest

from reflekt import convex, pde_oracle, presets
from reflekt.coefficients import CoefficientSet, Problem
from reflekt.pde_oracle import FDGrid

PROBE_T = np.linspace(0.0, 1.0, 11)
PROBE_X = np.linspace(-0.8, 0.8, 9)


def test_constant_solution():
    heat = presets.get("heat")
    const = dataclasses.replace(heat, coeffs=dataclasses.replace(heat.coeffs, h=lambda x: np.full((x.shape[0], 1), 0.7)))
    surf = pde_oracle.solve_pvi(const, FDGrid(41, 100))
    assert np.allclose(surf.u, 0.7, atol=1e-13)


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_mass_conservation(theta):
    surf = pde_oracle.solve_pvi(presets.get("heat"), FDGrid(81, 400, theta))
    mass = pde_oracle.trapezoid_mass(surf)
    assert np.max(np.abs(np.diff(mass))) <= 1e-8


def test_self_convergence_second_order():
    heat = presets.get("heat")
    surfaces = [pde_oracle.solve_pvi(heat, FDGrid(10 * 2**k + 1, 10 * 2**k)) for k in range(5)]
    values = [s.resample(PROBE_T, PROBE_X) for s in surfaces]
    diffs = np.array([np.abs(values[k + 1] - values[k]).max() for k in range(4)])
    orders = np.log2(diffs[:-1] / diffs[1:])
    assert np.all(np.abs(orders - 2.0) <= 0.2)


def test_heat_closed_form():
    surf = pde_oracle.solve_pvi(presets.get("heat"), FDGrid(201, 2000))
    exact = presets.heat_exact(PROBE_T[:, None], PROBE_X[None])
    assert np.abs(surf.resample(PROBE_T, PROBE_X) - exact).max() <= 1e-4


def test_box_invariance():
    surf = pde_oracle.solve_pvi(presets.get("obstacle_interior"), FDGrid(101, 500))
    assert surf.u.max() <= 0.6 and surf.u.min() >= -0.6


def test_one_sided_obstacle_on_boundary():
    surf = pde_oracle.solve_pvi(presets.get("obstacle_boundary"), FDGrid(101, 500))
    assert surf.u[:, 0].max() <= 0.6 and surf.u[:, -1].max() <= 0.6


def test_comparison_monotone_in_terminal():
    base = presets.get("drifted")
    lifted = dataclasses.replace(base, coeffs=dataclasses.replace(
        base.coeffs, h=lambda x: 0.8 * np.cos(np.pi * x) + 0.05 * (1.0 + x) ** 2))
    u0 = pde_oracle.solve_pvi(base, FDGrid(81, 400)).u
    u1 = pde_oracle.solve_pvi(lifted, FDGrid(81, 400)).u
    assert np.all(u1 >= u0 - 1e-12)


def test_linear_ode_without_noise():
    surf = pde_oracle.solve_pvi(presets.get("linear_ode"), FDGrid(21, 4000))
    assert surf.at(0.0, 0.3) == pytest.approx(1.15 * np.exp(-1.0), abs=1e-4)


def test_drift_dominated_grid_rejected():
    c = CoefficientSet(b=lambda t, x: np.full_like(x, 5.0), sigma=lambda t, x: np.full((x.shape[0], 1, 1), 0.1),
                       f=lambda t, x, y: np.zeros_like(y), g=lambda t, x, y: np.zeros_like(y),
                       h=lambda x: x[:, :1] ** 2)
    problem = Problem(presets.get("heat").domain, c, convex.zero(), convex.zero())
    with pytest.raises(pde_oracle.OracleError):
        pde_oracle.solve_pvi(problem, FDGrid(11, 10))


def test_grid_validation():
    with pytest.raises(ValueError):
        FDGrid(n_x=2)
    with pytest.raises(ValueError):
        FDGrid(theta=0.3)
