"""Finite-difference solver for the parabolic variational inequality

    -u_t - (1/2) sigma^2 u_xx - b u_x + d(phi)(u) ∋ f   in (lo, hi),
    du/dn + d(psi)(u) ∋ g                              at lo and hi,
    u(T, .) = h,

stepped backward from ``T``.  Each step is a theta-scheme linear solve with a
ghost-node Neumann boundary, followed by the resolvent of ``phi`` at every
node and the resolvent of ``psi`` at the two boundary nodes.  ``f`` and ``g``
are taken explicitly from the previous time level.

At a boundary node the ghost value turns the outward derivative ``G`` into
the source ``dt (sigma^2 / dx + b.n) G``, so ``psi`` enters with resolvent
weight ``dt (sigma^2 / dx + b.n)`` (``dt / dx`` for unit noise and no drift).
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import kernels
from .surface import ValueSurface


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class FDGrid:
    n_x: int = 200
    n_t: int = 2000
    theta: float = 0.5

    def __post_init__(self):
        if self.n_x < 3 or self.n_t < 1:
            raise ValueError("need n_x >= 3 and n_t >= 1")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")


def _operator(coeffs, t, nodes):
    """Tridiagonal ``L_h`` (sub, diag, super) and the boundary source weights."""
    dx = nodes[1] - nodes[0]
    x = nodes[:, None]
    b = coeffs.b(t, x)[:, 0]
    s2 = coeffs.sigma(t, x)[:, 0, 0] ** 2
    lower = 0.5 * s2 / dx**2 - 0.5 * b / dx
    upper = 0.5 * s2 / dx**2 + 0.5 * b / dx
    diag = -s2 / dx**2
    if np.any(lower[1:-1] < 0) or np.any(upper[1:-1] < 0):
        raise OracleError("drift dominates diffusion on this grid (refine n_x)")
    lower[-1] = s2[-1] / dx**2
    upper[0] = s2[0] / dx**2
    lower[0] = 0.0
    upper[-1] = 0.0
    weight = np.array([s2[0] / dx - b[0], s2[-1] / dx + b[-1]])
    if np.any(weight < 0):
        raise OracleError("boundary stencil lost diagonal dominance (refine n_x)")
    return lower, diag, upper, weight


def _apply(lower, diag, upper, v):
    out = diag * v
    out[1:] += lower[1:] * v[:-1]
    out[:-1] += upper[:-1] * v[1:]
    return out


def solve_pvi(problem, grid=FDGrid()):
    """Value surface on ``grid.n_t + 1`` times and ``grid.n_x`` nodes."""
    domain, coeffs, phi, psi = problem.domain, problem.coeffs, problem.phi, problem.psi
    if domain.dim != 1 or coeffs.m != 1:
        raise ValueError("the oracle handles d = m = 1 only")
    lo, hi = domain.bounds
    nodes = np.linspace(lo, hi, grid.n_x)
    times = np.linspace(0.0, problem.horizon, grid.n_t + 1)
    dt = times[1] - times[0]
    th = grid.theta
    x = nodes[:, None]
    xb = np.array([[lo], [hi]])
    u = np.empty((grid.n_t + 1, grid.n_x))
    u[-1] = coeffs.h(x)[:, 0]
    ends = np.array([0, grid.n_x - 1])
    dt_rows = np.full(grid.n_x, dt)
    for i in range(grid.n_t - 1, -1, -1):
        v = u[i + 1]
        lo_e, d_e, up_e, _ = _operator(coeffs, times[i + 1], nodes)
        lo_i, d_i, up_i, w_i = _operator(coeffs, times[i], nodes)
        rhs = v + (1 - th) * dt * _apply(lo_e, d_e, up_e, v)
        rhs += dt * coeffs.f(times[i + 1], x, v[:, None])[:, 0]
        gb = coeffs.g(times[i + 1], xb, v[ends][:, None])[:, 0]
        rhs[ends] += dt * w_i * gb
        a = -th * dt * lo_i
        c = -th * dt * up_i
        bdiag = 1.0 - th * dt * d_i
        w = kernels.thomas_solve(a, bdiag, c, rhs)
        w = phi.prox(w[:, None], dt_rows)[:, 0]
        live = w_i > 0
        if np.any(live):
            w[ends[live]] = psi.prox(w[ends[live]][:, None], dt * w_i[live])[:, 0]
        u[i] = w
    return ValueSurface(times, nodes, u)


def trapezoid_mass(surface):
    """``int u(t_i, x) dx`` by the trapezoid rule, per time level."""
    return integrate.trapezoid(surface.u, surface.nodes, axis=1)
