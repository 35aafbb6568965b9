"""Numeric inner loops, each with a numba and a pure-numpy implementation.

The public names (``radial_project``, ``thomas_solve``, ``hat_bin``) point at
the numba versions unless JIT is disabled (see :mod:`reflekt._accel`).  Both
variants are importable as ``*_jit`` / ``*_numpy`` so they can be compared
side by side.
"""
import numpy as np
from scipy.linalg import solve_banded

from ._accel import USE_JIT, njit

# Coefficients of the even C^3 profile used inside the smoothing radius:
# p(u) = (15 u^2 - 5 u^4 + u^6) / 16,  p'(u) = (15 u - 10 u^3 + 3 u^5) / 8.
_P_AT_ONE = 11.0 / 16.0


def _profile_numpy(rho, a0):
    """Radial profile ``rho -> prof(rho)``; equals ``rho`` for ``rho >= a0``."""
    rho = np.asarray(rho, dtype=float)
    u = np.minimum(rho / a0, 1.0)
    inner = a0 * ((15 * u**2 - 5 * u**4 + u**6) / 16.0 + 1.0 - _P_AT_ONE)
    return np.where(rho >= a0, rho, inner)


def _profile_d1_numpy(rho, a0):
    rho = np.asarray(rho, dtype=float)
    u = np.minimum(rho / a0, 1.0)
    return np.where(rho >= a0, 1.0, (15 * u - 10 * u**3 + 3 * u**5) / 8.0)


def _profile_d2_numpy(rho, a0):
    rho = np.asarray(rho, dtype=float)
    u = np.minimum(rho / a0, 1.0)
    return np.where(rho >= a0, 0.0, 15.0 * (1.0 - u**2) ** 2 / (8.0 * a0))


def _profile_scalar(rho, a0):
    if rho >= a0:
        return rho
    u = rho / a0
    return a0 * ((15 * u**2 - 5 * u**4 + u**6) / 16.0 + 1.0 - _P_AT_ONE)


def _profile_d1_scalar(rho, a0):
    if rho >= a0:
        return 1.0
    u = rho / a0
    return (15 * u - 10 * u**3 + 3 * u**5) / 8.0


_profile_jit = njit(_profile_scalar)
_profile_d1_jit = njit(_profile_d1_scalar)


# ---------------------------------------------------------------------------
# one-step Skorokhod projection along the radial normal
# ---------------------------------------------------------------------------

@njit
def _radial_project_kernel(rho_t, radius, a0, tol, max_iter):
    n = rho_t.shape[0]
    delta = np.zeros(n)
    status = np.zeros(n, dtype=np.int64)
    for i in range(n):
        rt = rho_t[i]
        if _profile_jit(rt, a0) - radius <= 0.0:
            continue
        if rt - radius > radius:
            status[i] = 2
            continue
        lo = 0.0
        hi = rt
        d = 0.0
        ok = False
        for _ in range(max_iter):
            val = _profile_jit(rt - d, a0) - radius
            if abs(val) <= tol:
                ok = True
                break
            if val > 0.0:
                lo = d
            else:
                hi = d
            slope = _profile_d1_jit(rt - d, a0)
            step_ok = slope > 0.0
            d_new = d
            if step_ok:
                d_new = d + val / slope
                step_ok = lo < d_new < hi
            if not step_ok:
                d_new = 0.5 * (lo + hi)
            d = d_new
        delta[i] = d
        if not ok:
            status[i] = 1
    return delta, status


def radial_project_jit(rho_t, radius, a0, tol=1e-12, max_iter=50):
    return _radial_project_kernel(np.ascontiguousarray(rho_t, dtype=float),
                                  float(radius), float(a0), float(tol), int(max_iter))


def radial_project_numpy(rho_t, radius, a0, tol=1e-12, max_iter=50):
    """Vectorized Newton iteration with bisection safeguard.

    Returns ``(delta, status)`` where ``delta >= 0`` solves
    ``prof(rho_t - delta) = radius`` for every entry outside the domain and
    ``status`` is 0 (ok), 1 (no convergence) or 2 (predictor too far out).
    """
    rho_t = np.asarray(rho_t, dtype=float)
    delta = np.zeros_like(rho_t)
    status = np.zeros(rho_t.shape, dtype=np.int64)
    outside = _profile_numpy(rho_t, a0) - radius > 0.0
    far = outside & (rho_t - radius > radius)
    status[far] = 2
    idx = np.flatnonzero(outside & ~far)
    if idx.size == 0:
        return delta, status
    rt = rho_t[idx]
    lo = np.zeros_like(rt)
    hi = rt.copy()
    d = np.zeros_like(rt)
    active = np.ones(rt.shape, dtype=bool)
    for _ in range(max_iter):
        val = _profile_numpy(rt - d, a0) - radius
        active &= np.abs(val) > tol
        if not active.any():
            break
        lo = np.where(active & (val > 0), d, lo)
        hi = np.where(active & (val <= 0), d, hi)
        slope = _profile_d1_numpy(rt - d, a0)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = d + val / slope
        good = (slope > 0) & (newton > lo) & (newton < hi)
        d = np.where(active, np.where(good, newton, 0.5 * (lo + hi)), d)
    delta[idx] = d
    status[idx[active]] = 1
    return delta, status


# ---------------------------------------------------------------------------
# tridiagonal solve
# ---------------------------------------------------------------------------

@njit
def _thomas_kernel(a, b, c, d):
    n = b.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m if i < n - 1 else 0.0
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def thomas_solve_jit(a, b, c, d):
    return _thomas_kernel(np.ascontiguousarray(a, dtype=float), np.ascontiguousarray(b, dtype=float),
                          np.ascontiguousarray(c, dtype=float), np.ascontiguousarray(d, dtype=float))


def thomas_solve_numpy(a, b, c, d):
    """Solve the tridiagonal system with sub-diagonal ``a`` (``a[0]`` unused),
    diagonal ``b`` and super-diagonal ``c`` (``c[-1]`` unused)."""
    n = len(b)
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    return solve_banded((1, 1), ab, d)


# ---------------------------------------------------------------------------
# mass deposition onto hat functions of a 1-D grid
# ---------------------------------------------------------------------------

@njit
def _hat_bin_kernel(samples, weights, nodes):
    n_nodes = nodes.shape[0]
    out = np.zeros(n_nodes)
    for i in range(samples.shape[0]):
        y = samples[i]
        w = weights[i]
        if y <= nodes[0]:
            out[0] += w
            continue
        if y >= nodes[n_nodes - 1]:
            out[n_nodes - 1] += w
            continue
        k = np.searchsorted(nodes, y, side="right") - 1
        lam = (y - nodes[k]) / (nodes[k + 1] - nodes[k])
        out[k] += w * (1.0 - lam)
        out[k + 1] += w * lam
    return out


def hat_bin_jit(samples, nodes, weights=None):
    samples = np.ascontiguousarray(samples, dtype=float)
    if weights is None:
        weights = np.full(samples.shape[0], 1.0 / max(samples.shape[0], 1))
    return _hat_bin_kernel(samples, np.ascontiguousarray(weights, dtype=float),
                           np.ascontiguousarray(nodes, dtype=float))


def hat_bin_numpy(samples, nodes, weights=None):
    """Deposit each sample's weight on the two neighbouring nodes (linear
    interpolation weights); samples outside the node range go to the end
    nodes."""
    samples = np.asarray(samples, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    if weights is None:
        weights = np.full(samples.shape[0], 1.0 / max(samples.shape[0], 1))
    y = np.clip(samples, nodes[0], nodes[-1])
    k = np.clip(np.searchsorted(nodes, y, side="right") - 1, 0, len(nodes) - 2)
    lam = (y - nodes[k]) / (nodes[k + 1] - nodes[k])
    out = np.bincount(k, weights * (1.0 - lam), minlength=len(nodes))
    out += np.bincount(k + 1, weights * lam, minlength=len(nodes))
    return out


if USE_JIT:
    radial_project = radial_project_jit
    thomas_solve = thomas_solve_jit
    hat_bin = hat_bin_jit
else:
    radial_project = radial_project_numpy
    thomas_solve = thomas_solve_numpy
    hat_bin = hat_bin_numpy

profile = _profile_numpy
profile_d1 = _profile_d1_numpy
profile_d2 = _profile_d2_numpy
