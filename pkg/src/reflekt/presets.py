"""Named problems on the interval ``(-1, 1)`` with horizon ``T = 1``.

* ``heat``: reflected Brownian motion, no drivers; ``u`` solves the Neumann
  heat equation with ``h(x) = cos(pi x)``.
* ``drifted``: mean-reverting drift, smaller noise, Lipschitz drivers in both
  the interior and on the boundary.
* ``obstacle_interior``: ``phi`` is the indicator of ``[-0.6, 0.6]`` and the
  constant driver ``f = 1`` pushes the value into the upper obstacle.
* ``obstacle_boundary``: ``psi`` is the indicator of ``(-inf, 0.6]`` and the
  boundary driver ``g = 1`` pushes the boundary value into it.
* ``linear_ode``: no motion, ``f = -y``; ``u(t, x) = h(x) exp(-(T - t))``.
"""
import numpy as np

from . import convex
from .coefficients import CoefficientSet, Problem
from .domain import Domain


def _const_drift(value):
    def b(t, x):
        return np.full_like(x, value)
    return b


def _const_sigma(value):
    def sigma(t, x):
        return np.full((x.shape[0], 1, 1), float(value))
    return sigma


def _zero_driver(t, x, y):
    return np.zeros_like(y)


def _const_driver(value):
    def f(t, x, y):
        return np.full_like(y, value)
    return f


def _heat():
    coeffs = CoefficientSet(
        b=_const_drift(0.0), sigma=_const_sigma(1.0),
        f=_zero_driver, g=_zero_driver, h=lambda x: np.cos(np.pi * x),
        beta=0.0, gamma=0.0, L_lip=0.0, M_bound=1.0, name="heat")
    return Problem(Domain.interval(-1.0, 1.0), coeffs, convex.zero(), convex.zero(), 1.0, "heat")


def _drifted():
    def f(t, x, y):
        return -0.5 * y + 0.3 * np.sin(np.pi * x)

    def g(t, x, y):
        return 0.25 - 0.2 * y

    coeffs = CoefficientSet(
        b=lambda t, x: 0.2 - x, sigma=_const_sigma(0.8), f=f, g=g,
        h=lambda x: 0.8 * np.cos(np.pi * x),
        beta=0.2, gamma=0.5, L_lip=1.0, M_bound=1.0, name="drifted")
    return Problem(Domain.interval(-1.0, 1.0), coeffs, convex.zero(), convex.zero(), 1.0, "drifted")


def _obstacle_interior():
    coeffs = CoefficientSet(
        b=_const_drift(0.0), sigma=_const_sigma(1.0),
        f=_const_driver(1.0), g=_zero_driver, h=lambda x: 0.5 * np.cos(np.pi * x),
        beta=0.0, gamma=1.0, L_lip=0.0, M_bound=1.0, name="obstacle_interior")
    return Problem(Domain.interval(-1.0, 1.0), coeffs,
                   convex.indicator_box([-0.6], [0.6]), convex.zero(), 1.0, "obstacle_interior")


def _obstacle_boundary():
    coeffs = CoefficientSet(
        b=_const_drift(0.0), sigma=_const_sigma(1.0),
        f=lambda t, x, y: -0.5 * y, g=_const_driver(1.0), h=lambda x: -0.5 * np.cos(np.pi * x),
        beta=0.0, gamma=1.0, L_lip=0.0, M_bound=1.0, name="obstacle_boundary")
    return Problem(Domain.interval(-1.0, 1.0), coeffs,
                   convex.zero(), convex.indicator_box([-np.inf], [0.6]), 1.0, "obstacle_boundary")


def _linear_ode():
    coeffs = CoefficientSet(
        b=_const_drift(0.0), sigma=_const_sigma(0.0),
        f=lambda t, x, y: -y, g=_zero_driver, h=lambda x: 1.0 + 0.5 * x,
        beta=0.0, gamma=1.0, L_lip=0.0, M_bound=1.0, name="linear_ode")
    return Problem(Domain.interval(-1.0, 1.0), coeffs, convex.zero(), convex.zero(), 1.0, "linear_ode")


PRESETS = {
    "heat": _heat,
    "drifted": _drifted,
    "obstacle_interior": _obstacle_interior,
    "obstacle_boundary": _obstacle_boundary,
    "linear_ode": _linear_ode,
}


def get(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def heat_exact(t, x, horizon=1.0):
    """Closed-form value of the ``heat`` preset."""
    return np.exp(-0.5 * np.pi**2 * (horizon - np.asarray(t))) * np.cos(np.pi * np.asarray(x))
