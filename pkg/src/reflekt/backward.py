"""Backward dynamic programming for the generalized BSDE with two
subdifferential terms.

One step solves, per node or per path,

    Y + dt * U + dA * V = E_next + dt * f(t, x, Y) + dA * g(t, x, Y),
    U in d(phi)(Y),  V in d(psi)(Y),

by the lagged fixed point ``Y <- J^psi_dA(J^phi_dt(R(Y)))``.  The two
resolvents are applied in a fixed order (``phi`` first by default); when one
of the functions is zero, or both coincide, the order does not matter.

Two engines provide ``E_next``:

* grid (``d = 1``): transition weights from each node onto piecewise-linear
  hat functions of the node grid, plus the mean one-step local time;
* regression: least squares of ``Y_{i+1}`` on polynomials of ``X_i`` along a
  simulated forward ensemble, with the pathwise local-time increment.
"""
from dataclasses import dataclass, field
from typing import Optional
import warnings

import numpy as np
from scipy import special

from . import kernels
from . import rng as rngmod
from .forward import ForwardEnsemble, simulate_ensemble, time_grid

#: local-time weights below this are treated as zero
DA_FLOOR = 1e-14


class BackwardConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class TransitionError(RuntimeError):
    """Transition weights do not sum to one."""


class IllConditionedError(RuntimeError):
    def __init__(self, cond):
        super().__init__(f"regression design matrix is ill-conditioned (cond={cond:.3e})")
        self.cond = cond


@dataclass(frozen=True)
class SolverParams:
    engine: str = "grid"
    prox_mode: str = "exact_resolvent"
    epsilon: float = 1e-2
    degree: int = 4
    n_inner: int = 200
    tol: float = 1e-13
    order: str = "phi_first"
    transition: str = "reflected_gaussian"
    n_mc: int = 2000
    boundary: str = "anchored"

    def __post_init__(self):
        if self.engine not in ("grid", "regression"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.prox_mode not in ("exact_resolvent", "moreau_penalized"):
            raise ValueError(f"unknown prox_mode {self.prox_mode!r}")
        if self.prox_mode == "moreau_penalized" and not self.epsilon > 0:
            raise ValueError("epsilon must be positive in penalized mode")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.order not in ("phi_first", "psi_first"):
            raise ValueError(f"unknown splitting order {self.order!r}")
        if self.transition not in ("reflected_gaussian", "exact_gaussian_projected", "mc"):
            raise ValueError(f"unknown transition {self.transition!r}")
        if self.boundary not in ("anchored", "local"):
            raise ValueError(f"unknown boundary coupling {self.boundary!r}")


@dataclass
class BackwardSolution:
    """Discrete solution along ``n`` trajectories (paths or frozen grid nodes).

    ``Y``, ``K1``, ``K2`` have shape ``(n, N + 1, m)``; ``U``, ``V``,
    ``M_inc`` shape ``(n, N, m)`` and ``dA`` shape ``(n, N)``: entry ``i``
    belongs to the cell ``(t_i, t_{i+1}]``.  ``Y_psi`` (shape ``(n, N, m)``)
    is the value at which the ``psi`` selection ``V`` was taken: ``Y_i``
    itself, or the wall value under anchored boundary coupling.
    """

    times: np.ndarray
    start_index: int
    Y: np.ndarray
    U: np.ndarray
    V: np.ndarray
    dA: np.ndarray
    M_inc: np.ndarray
    phi: object
    psi: object
    X: Optional[np.ndarray] = None
    Z_est: Optional[np.ndarray] = None
    Y_psi: Optional[np.ndarray] = None
    K1: np.ndarray = field(init=False)
    K2: np.ndarray = field(init=False)

    def __post_init__(self):
        dt = np.diff(self.times)
        n, _, m = self.Y.shape
        k1 = np.cumsum(self.U * dt[None, :, None], axis=1)
        k2 = np.cumsum(self.V * self.dA[:, :, None], axis=1)
        zero = np.zeros((n, 1, m))
        self.K1 = np.concatenate([zero, k1], axis=1)
        self.K2 = np.concatenate([zero, k2], axis=1)
        if self.Y_psi is None:
            self.Y_psi = self.Y[:, :-1].copy()

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def M(self):
        n, _, m = self.Y.shape
        return np.concatenate([np.zeros((n, 1, m)), np.cumsum(self.M_inc, axis=1)], axis=1)


# ---------------------------------------------------------------------------
# one step
# ---------------------------------------------------------------------------

def _prox_rows(spec, y, weight):
    """Resolvent with a per-row weight; rows with weight ~ 0 pass through."""
    active = weight > DA_FLOOR
    if not np.any(active):
        return y.copy()
    out = y.copy()
    out[active] = spec.prox(y[active], weight[active])
    return out


def _moreau_grad_rows(spec, eps, y):
    return (y - spec.prox(y, eps)) / eps


def _penalized_solve(R, dt, dA, phi, psi, eps, tol, max_iter=100):
    """Newton's method for ``Y + dt grad phi_eps(Y) + dA grad psi_eps(Y) = R``."""
    n, m = R.shape
    w = dA[:, None]

    def F(Y):
        return Y + dt * _moreau_grad_rows(phi, eps, Y) + w * _moreau_grad_rows(psi, eps, Y) - R

    Y = R.copy()
    r = F(Y)
    for _ in range(max_iter):
        norm = np.linalg.norm(r, axis=1)
        if np.max(norm) <= tol * (1.0 + np.max(np.abs(R))):
            return Y
        h = 1e-7 * (1.0 + np.abs(Y))
        J = np.empty((n, m, m))
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            J[:, :, k] = (F(Y + h[:, k:k + 1] * e) - F(Y - h[:, k:k + 1] * e)) / (2 * h[:, k:k + 1])
        step = np.linalg.solve(J, r[:, :, None])[:, :, 0]
        lam = np.ones(n)
        for _ in range(30):
            trial = Y - lam[:, None] * step
            r_trial = F(trial)
            worse = np.linalg.norm(r_trial, axis=1) > (1 - 1e-4 * lam) * norm
            worse &= norm > 0
            if not np.any(worse):
                break
            lam = np.where(worse, 0.5 * lam, lam)
        Y, r = trial, r_trial
    raise BackwardConvergenceError("penalized Newton solve did not converge",
                                   float(np.max(np.linalg.norm(r, axis=1))))


def backward_step(E_next, t_i, x_i, dt, dA, coeffs, phi, psi, params=SolverParams(), x_boundary=None):
    """One backward step; returns ``(Y, U, V)`` with shape ``(n, m)`` each.

    ``E_next`` is the conditional expectation of ``Y_{i+1}`` (shape ``(n, m)``),
    ``x_i`` the states ``(n, d)``, ``dA`` the local-time weights (scalar or
    ``(n,)``).  ``g`` is evaluated at ``x_boundary`` when given (the point
    where the push happened), otherwise at ``x_i``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    E_next = np.atleast_2d(np.asarray(E_next, dtype=float))
    n, m = E_next.shape
    x_i = np.asarray(x_i, dtype=float).reshape(n, -1)
    xg = x_i if x_boundary is None else np.asarray(x_boundary, dtype=float).reshape(n, -1)
    dA = np.broadcast_to(np.asarray(dA, dtype=float), (n,)).copy()
    if np.any(dA < 0):
        raise ValueError("dA must be nonnegative")
    dA[dA <= DA_FLOOR] = 0.0
    lip = coeffs.beta + coeffs.gamma
    if lip * (dt + float(dA.max())) >= 1.0:
        warnings.warn("(beta + gamma)(dt + dA) >= 1: the lagged fixed point may not contract",
                      RuntimeWarning, stacklevel=2)
    w = dA[:, None]
    has_a = dA > 0
    Y = E_next.copy()
    scale = 1.0 + float(np.max(np.abs(E_next)))
    dt_rows = np.full(n, float(dt))
    err = np.inf
    for _ in range(params.n_inner):
        R = E_next + dt * coeffs.f(t_i, x_i, Y) + w * coeffs.g(t_i, xg, Y)
        if params.prox_mode == "exact_resolvent":
            if params.order == "phi_first":
                Z = phi.prox(R, dt_rows)
                Y_new = _prox_rows(psi, Z, dA)
                U = (R - Z) / dt
                V = np.zeros_like(R)
                V[has_a] = (Z[has_a] - Y_new[has_a]) / w[has_a]
            else:
                Z = _prox_rows(psi, R, dA)
                Y_new = phi.prox(Z, dt_rows)
                V = np.zeros_like(R)
                V[has_a] = (R[has_a] - Z[has_a]) / w[has_a]
                U = (Z - Y_new) / dt
        else:
            eps = params.epsilon
            Y_new = _penalized_solve(R, dt, dA, phi, psi, eps, params.tol)
            U = _moreau_grad_rows(phi, eps, Y_new)
            V = np.where(has_a[:, None], _moreau_grad_rows(psi, eps, Y_new), 0.0)
        err = float(np.max(np.abs(Y_new - Y)))
        Y = Y_new
        if err <= params.tol * scale:
            return Y, U, V
    raise BackwardConvergenceError(f"fixed point did not converge in {params.n_inner} iterations", err)


# ---------------------------------------------------------------------------
# grid engine
# ---------------------------------------------------------------------------

def _gauss_cell_moments(mu, s, a, b):
    """``int_a^b p`` and ``int_a^b y p`` for ``p = N(mu, s^2)``, broadcasting."""
    za = (a - mu) / s
    zb = (b - mu) / s
    i0 = special.ndtr(zb) - special.ndtr(za)
    pa = np.exp(-0.5 * za**2) / np.sqrt(2 * np.pi)
    pb = np.exp(-0.5 * zb**2) / np.sqrt(2 * np.pi)
    i1 = mu * i0 - s * (pb - pa)
    return i0, i1


def _hat_weights_gaussian(mu, s, nodes):
    """Mass of ``N(mu, s^2)`` (rows) restricted to ``[nodes[0], nodes[-1]]`` and
    distributed on the hat functions of ``nodes``."""
    left = nodes[:-1][None, :]
    right = nodes[1:][None, :]
    width = right - left
    i0, i1 = _gauss_cell_moments(mu[:, None], s[:, None], left, right)
    to_left = (right * i0 - i1) / width
    to_right = (i1 - left * i0) / width
    w = np.zeros((mu.size, nodes.size))
    w[:, :-1] += to_left
    w[:, 1:] += to_right
    return w


def _running_max_excess(dist, drift, s, dt, n_quad=64):
    """``E[(max_{r<=dt}(drift r + sigma W_r) - dist)^+]`` for ``dist >= 0``."""
    z, wq = np.polynomial.legendre.leggauss(n_quad)
    span = 12.0 * s + np.abs(drift) * dt
    m = dist[:, None] + 0.5 * span[:, None] * (z[None, :] + 1.0)
    sd = s[:, None]
    mu_t = (drift * dt)[:, None]
    tail = special.ndtr(-(m - mu_t) / sd)
    log_second = 2.0 * drift[:, None] * m / (sd**2 / dt) + special.log_ndtr(-(m + mu_t) / sd)
    prob = tail + np.exp(np.minimum(log_second, 0.0))
    return 0.5 * span * np.sum(wq[None, :] * np.minimum(prob, 1.0), axis=1)


def transition_weights(domain, coeffs, t, nodes, dt, mode="reflected_gaussian", n_mc=2000,
                       seed=0, step_index=0):
    """One-step transition from every node onto the hat basis of ``nodes``.

    Returns ``(P, dA)`` with ``P[j, k]`` the weight of node ``k`` for a walker
    started at node ``j`` and ``dA[j]`` the mean one-step local time.

    ``reflected_gaussian`` folds the Gaussian step back into the interval by
    the method of images (the reflected transition for coefficients frozen at
    the node) and takes the local time from the running maximum of the
    drifted Brownian step.  ``exact_gaussian_projected`` integrates the Euler
    predictor followed by projection onto the closed interval in closed form.
    ``mc`` simulates that projected step with ``n_mc`` samples per node.
    """
    lo, hi = domain.bounds
    x = nodes[:, None]
    mu = (x + coeffs.b(t, x) * dt)[:, 0]
    s = np.abs(coeffs.sigma(t, x)[:, 0, 0]) * np.sqrt(dt)
    n = nodes.size
    if mode == "mc":
        g = rngmod.stream(seed, "grid-transition", step_index)
        z = g.standard_normal((n, n_mc))
        P = np.empty((n, n))
        dA = np.empty(n)
        for j in range(n):
            pred = mu[j] + s[j] * z[j]
            proj, delta = domain.project(pred[:, None])
            P[j] = kernels.hat_bin(proj[:, 0], nodes)
            dA[j] = delta.mean()
    else:
        P = np.zeros((n, n))
        dA = np.zeros(n)
        det = s == 0
        if np.any(det):
            proj, delta = domain.project(mu[det][:, None])
            for r, j in enumerate(np.flatnonzero(det)):
                P[j] = kernels.hat_bin(proj[r:r + 1, 0], nodes, np.ones(1))
            dA[det] = delta
        rnd = ~det
        if np.any(rnd):
            m_r, s_r = mu[rnd], s[rnd]
            if mode == "exact_gaussian_projected":
                w = _hat_weights_gaussian(m_r, s_r, nodes)
                w[:, 0] += special.ndtr((lo - m_r) / s_r)
                w[:, -1] += special.ndtr((m_r - hi) / s_r)
                e_hi = (m_r - hi) * special.ndtr((m_r - hi) / s_r) + s_r * np.exp(-0.5 * ((m_r - hi) / s_r) ** 2) / np.sqrt(2 * np.pi)
                e_lo = (lo - m_r) * special.ndtr((lo - m_r) / s_r) + s_r * np.exp(-0.5 * ((lo - m_r) / s_r) ** 2) / np.sqrt(2 * np.pi)
                da = e_hi + e_lo
            else:
                width = hi - lo
                w = np.zeros((m_r.size, n))
                n_img = int(np.ceil(10.0 * s_r.max() / (2 * width))) + 2
                for k in range(-n_img, n_img + 1):
                    w += _hat_weights_gaussian(m_r + 2 * k * width, s_r, nodes)
                    w += _hat_weights_gaussian(2 * lo - m_r + 2 * k * width, s_r, nodes)
                drift = ((mu - x[:, 0]) / dt)[rnd]
                da = (_running_max_excess(hi - x[rnd, 0], drift, s_r, dt)
                      + _running_max_excess(x[rnd, 0] - lo, -drift, s_r, dt))
            P[rnd] = w
            dA[rnd] = da
    sums = P.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-9:
        raise TransitionError(f"transition weights sum to {sums.min():.12f}..{sums.max():.12f}")
    return P, dA


@dataclass
class GridSolution:
    """Value surface ``u[i, j] = u(t_i, x_j)`` (shape ``(N + 1, n_x, m)``)."""

    times: np.ndarray
    nodes: np.ndarray
    u: np.ndarray
    se: np.ndarray
    solution: BackwardSolution

    def interpolate(self, t, x):
        """Bilinear interpolation of the surface (first output component)."""
        t = float(t)
        x = float(x)
        times, nodes = self.times, self.nodes
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        lam = (t - times[i]) / (times[i + 1] - times[i])
        lam = min(max(lam, 0.0), 1.0)
        row = (1 - lam) * self.u[i, :, 0] + lam * self.u[i + 1, :, 0]
        return float(np.interp(x, nodes, row))

    def interpolate_at_time(self, i, x):
        return np.interp(np.asarray(x, dtype=float), self.nodes, self.u[i, :, 0])


def solve_grid(problem, n_t=50, n_x=50, params=SolverParams(), seed=0, space_grid=None):
    """Dynamic programming on ``n_t`` uniform time steps and ``n_x`` nodes
    covering the closed interval (boundary points included).

    With ``params.boundary == "local"`` every node runs :func:`backward_step`
    with its own mean local time, so the ``psi`` resolvent acts on interior
    nodes within reach of the wall.  The default ``"anchored"`` coupling
    solves the two boundary nodes first and lets an interior node receive the
    boundary flux ``dA_j (g - V_b)`` of the nearer wall, evaluated at that
    wall's value: the push happens on the boundary, where ``Y`` is the
    boundary value.  Interior ``V`` entries then hold the wall's selection.
    """
    domain, coeffs = problem.domain, problem.coeffs
    if domain.dim != 1:
        raise ValueError("the grid engine needs a one-dimensional domain")
    lo, hi = domain.bounds
    nodes = np.linspace(lo, hi, n_x) if space_grid is None else np.asarray(space_grid, dtype=float)
    if abs(nodes[0] - lo) > 1e-12 or abs(nodes[-1] - hi) > 1e-12:
        raise ValueError("space grid must include both boundary points")
    times = time_grid(problem.horizon, n_t)
    dt = times[1] - times[0]
    m = coeffs.m
    n = nodes.size
    u = np.empty((n_t + 1, n, m))
    U = np.zeros((n_t, n, m))
    V = np.zeros((n_t, n, m))
    dA_all = np.zeros((n_t, n))
    Yq = np.zeros((n_t, n, m))
    x = nodes[:, None]
    upper = nodes > 0.5 * (lo + hi)
    xb = np.where(upper, hi, lo)[:, None]
    side = np.where(upper, n - 1, 0)
    ends = np.array([0, n - 1])
    inner = np.arange(1, n - 1)
    u[n_t] = coeffs.h(x).reshape(n, m)
    homogeneous = params.transition != "mc" and _time_homogeneous(coeffs, times)
    cached = None
    for i in range(n_t - 1, -1, -1):
        if homogeneous and cached is not None:
            P, dA = cached
        else:
            P, dA = transition_weights(domain, coeffs, times[i], nodes, dt, params.transition,
                                       params.n_mc, seed, i)
            cached = (P, dA)
        E_next = P @ u[i + 1]
        if params.boundary == "local":
            Y, Ui, Vi = backward_step(E_next, times[i], x, dt, dA, coeffs, problem.phi, problem.psi,
                                      params, x_boundary=xb)
        else:
            Y = np.empty((n, m))
            Ui = np.empty((n, m))
            Vi = np.empty((n, m))
            Y[ends], Ui[ends], Vi[ends] = backward_step(
                E_next[ends], times[i], x[ends], dt, dA[ends], coeffs, problem.phi, problem.psi, params)
            wall = side[inner]
            flux = dA[inner, None] * (coeffs.g(times[i], xb[inner], Y[wall]) - Vi[wall])
            Y[inner], Ui[inner], _ = backward_step(
                E_next[inner] + flux, times[i], x[inner], dt, 0.0, coeffs, problem.phi, problem.psi, params)
            Vi[inner] = Vi[wall]
            Yq[i] = Y[side]
        if params.boundary == "local":
            Yq[i] = Y
        u[i], U[i], V[i], dA_all[i] = Y, Ui, Vi, dA
    sol = BackwardSolution(times, 0, np.transpose(u, (1, 0, 2)).copy(), np.transpose(U, (1, 0, 2)).copy(),
                           np.transpose(V, (1, 0, 2)).copy(), dA_all.T.copy(), np.zeros((n, n_t, m)),
                           problem.phi, problem.psi, X=np.repeat(x[:, None, :], n_t + 1, axis=1),
                           Y_psi=np.transpose(Yq, (1, 0, 2)).copy())
    return GridSolution(times, nodes, u, np.zeros(u.shape[:2]), sol)


def _time_homogeneous(coeffs, times):
    probe = np.linspace(-0.5, 0.5, 7)[:, None]
    b0 = coeffs.b(times[0], probe)
    s0 = coeffs.sigma(times[0], probe)
    b1 = coeffs.b(times[-1], probe)
    s1 = coeffs.sigma(times[-1], probe)
    return np.array_equal(b0, b1) and np.array_equal(s0, s1)


# ---------------------------------------------------------------------------
# regression engine
# ---------------------------------------------------------------------------

def _basis(x, degree, mean, std):
    """Polynomials (no cross terms) of the standardized state."""
    z = (x - mean) / std
    cols = [np.ones(x.shape[0])]
    for k in range(x.shape[1]):
        for p in range(1, degree + 1):
            cols.append(z[:, k] ** p)
    return np.stack(cols, axis=1)


def fit_conditional_expectation(x, y, degree, max_cond=1e12):
    """Least-squares fit of ``y`` (``(n, m)``) on polynomials of ``x``.

    Returns a predictor ``x_new -> (k, m)``.  A constant state reduces the
    fit to the sample mean.
    """
    if np.all(np.ptp(x, axis=0) == 0):
        mean = y.mean(axis=0, keepdims=True)
        return lambda x_new: np.repeat(mean, len(x_new), axis=0)
    # drop powers that are degenerate for states taking few distinct values
    n_distinct = min(np.unique(x[:, k]).size for k in range(x.shape[1]))
    degree = min(degree, n_distinct - 1)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    design = _basis(x, degree, mean, std)
    cond = np.linalg.cond(design)
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(cond)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return lambda x_new: _basis(np.asarray(x_new, dtype=float), degree, mean, std) @ coef


def conditional_expectation(x, y, degree, max_cond=1e12):
    """Least-squares projection of ``y`` (``(n, m)``) onto polynomials of ``x``."""
    return fit_conditional_expectation(x, y, degree, max_cond)(x)


def _wall_local_time(domain, coeffs, t, dt):
    """Mean one-step local time started on each wall of an interval."""
    lo, hi = domain.bounds
    walls = np.array([[lo], [hi]])
    drift = coeffs.b(t, walls)[:, 0] * np.array([-1.0, 1.0])
    s = np.abs(coeffs.sigma(t, walls)[:, 0, 0]) * np.sqrt(dt)
    out = np.zeros(2)
    live = s > 0
    if np.any(live):
        out[live] = _running_max_excess(np.zeros(int(live.sum())), drift[live], s[live], dt)
    out[~live] = np.maximum(drift[~live], 0.0) * dt
    return walls, out


def solve_regression(ensemble, coeffs, phi, psi, params=SolverParams(engine="regression"),
                     estimate_z=False, domain=None):
    """Backward sweep along a :class:`ForwardEnsemble`.

    The local-time weight of step ``i`` is the pathwise increment
    ``A_{i+1} - A_i``.  With ``params.boundary == "local"`` (or no interval
    ``domain`` given) each path runs :func:`backward_step` with that weight
    and ``g`` at ``X_{i+1}``.  The ``"anchored"`` coupling first solves the
    wall values, fitted continuation at the wall plus the wall's mean
    one-step local time, and feeds each path the flux ``dA (g - V_b)`` of
    the wall that pushed it.  Before the start index the solution is frozen
    (``Y = Y_t``, no ``U``, ``V`` or martingale increments).
    """
    if params.degree < 1:
        raise ValueError("basis degree must be at least 1")
    anchored = params.boundary == "anchored" and domain is not None and domain.dim == 1
    X, A, times, i0 = ensemble.X, ensemble.A, ensemble.times, ensemble.start_index
    n, n1, d = X.shape
    N = n1 - 1
    m = coeffs.m
    dt = ensemble.dt
    dA = np.diff(A, axis=1)
    Y = np.zeros((n, n1, m))
    Y_psi = np.zeros((n, N, m))
    U = np.zeros((n, N, m))
    V = np.zeros((n, N, m))
    M_inc = np.zeros((n, N, m))
    Z = np.zeros((n, N, d, m)) if estimate_z else None
    Y[:, N] = coeffs.h(X[:, N]).reshape(n, m)
    dW = ensemble.dW
    if anchored:
        mid = 0.5 * sum(domain.bounds)
    for i in range(N - 1, i0 - 1, -1):
        fit = fit_conditional_expectation(X[:, i], Y[:, i + 1], params.degree)
        E_next = fit(X[:, i])
        if anchored:
            walls, da_wall = _wall_local_time(domain, coeffs, times[i], dt)
            Yb, _, Vb = backward_step(fit(walls), times[i], walls, dt, da_wall, coeffs, phi, psi, params)
            wall = (X[:, i + 1, 0] > mid).astype(int)
            flux = dA[:, i, None] * (coeffs.g(times[i], walls[wall], Yb[wall]) - Vb[wall])
            Y[:, i], U[:, i], _ = backward_step(E_next + flux, times[i], X[:, i], dt, 0.0, coeffs,
                                                phi, psi, params)
            V[:, i] = Vb[wall]
            Y_psi[:, i] = Yb[wall]
        else:
            Y[:, i], U[:, i], V[:, i] = backward_step(E_next, times[i], X[:, i], dt, dA[:, i], coeffs,
                                                      phi, psi, params, x_boundary=X[:, i + 1])
            Y_psi[:, i] = Y[:, i]
        M_inc[:, i] = Y[:, i + 1] - E_next
        if estimate_z:
            for k in range(d):
                Z[:, i, k] = conditional_expectation(X[:, i], M_inc[:, i] * dW[:, i, k:k + 1] / dt, params.degree)
    Y[:, :i0] = Y[:, i0:i0 + 1]
    Y_psi[:, :i0] = Y[:, :i0]
    return BackwardSolution(times, i0, Y, U, V, dA, M_inc, phi, psi, X=X, Z_est=Z, Y_psi=Y_psi)


def start_value(solution, coeffs, n_blocks=20, n_boot=200, seed=0):
    """``(Y_t, se)`` at the common start of a regression solution.

    The estimate is the mean of ``Y_t`` over paths.  The standard error comes
    from a bootstrap over blocks of paths of the pathwise representation
    ``h(X_T) + sum (f dt + g dA - U dt - V dA)``, whose mean equals the
    estimate because the regression residuals sum to zero.
    """
    i0 = solution.start_index
    eta = solution.Y[:, i0, 0] + solution.M_inc[:, i0:, 0].sum(axis=1)
    value = float(solution.Y[:, i0, 0].mean())
    n = eta.size
    n_blocks = max(2, min(n_blocks, n))
    blocks = np.array_split(eta, n_blocks)
    block_means = np.array([b.mean() for b in blocks])
    sizes = np.array([b.size for b in blocks], dtype=float)
    g = rngmod.stream(seed, "start-value-bootstrap")
    boots = np.empty(n_boot)
    for r in range(n_boot):
        pick = g.integers(0, n_blocks, n_blocks)
        boots[r] = np.sum(block_means[pick] * sizes[pick]) / np.sum(sizes[pick])
    return value, float(boots.std(ddof=1))


def solve_regression_from(problem, t, x, n_paths=4000, n_steps=100, params=None, seed=0,
                          task="regression", scheme="symmetrized"):
    """Simulate from ``(t, x)`` and run the regression engine."""
    params = params or SolverParams(engine="regression")
    ens = simulate_ensemble(problem.domain, problem.coeffs, t, x, n_paths, n_steps,
                            problem.horizon, seed, task, scheme=scheme)
    sol = solve_regression(ens, problem.coeffs, problem.phi, problem.psi, params, domain=problem.domain)
    return ens, sol


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def _cell_mask(times, s1, s2):
    if not times[0] - 1e-12 <= s1 <= s2 <= times[-1] + 1e-12:
        raise ValueError("need 0 <= s1 <= s2 <= T")
    left = times[:-1]
    return (left >= s1 - 1e-12) & (left < s2 - 1e-12)


def variational_residual(sol, probes, s1=None, s2=None):
    """Worst positive violation of the two integrated subgradient inequalities

        int <v - Y, dK1> + int phi(Y) dr  <= int phi(v) dr
        int <v - Y, dK2> + int psi(Y) dA  <= int psi(v) dA

    over ``(s1, s2]``, every trajectory and every constant probe ``v``.
    Probes outside ``Dom(phi)`` (resp. ``Dom(psi)``) satisfy the
    corresponding inequality trivially.  Returns ``(r_phi, r_psi)``.
    """
    times = sol.times
    s1 = times[sol.start_index] if s1 is None else s1
    s2 = times[-1] if s2 is None else s2
    cells = _cell_mask(times, s1, s2)
    dt = np.diff(times)[cells]
    Y = sol.Y[:, :-1][:, cells]
    Yq = sol.Y_psi[:, cells]
    U = sol.U[:, cells]
    V = sol.V[:, cells]
    dA = sol.dA[:, cells]
    n, c, m = Y.shape
    flatY = Y.reshape(-1, m)
    phi_y = np.atleast_1d(sol.phi.value(flatY)).reshape(n, c)
    has_a = dA > 0
    psi_y = np.zeros((n, c))
    if np.any(has_a):
        psi_y[has_a] = np.atleast_1d(sol.psi.value(Yq[has_a]))
    if not np.all(np.isfinite(phi_y)) or not np.all(np.isfinite(psi_y)):
        raise ValueError("solution leaves Dom(phi) or Dom(psi)")
    probes = np.asarray(probes, dtype=float).reshape(-1, m)
    r_phi = 0.0
    r_psi = 0.0
    for v in probes:
        pv = float(sol.phi.value(v))
        qv = float(sol.psi.value(v))
        if np.isfinite(pv):
            lhs = np.sum((np.sum((v - Y) * U, axis=2) + phi_y - pv) * dt[None, :], axis=1)
            r_phi = max(r_phi, float(lhs.max()))
        if np.isfinite(qv):
            lhs = np.sum((np.sum((v - Yq) * V, axis=2) + psi_y - qv) * dA, axis=1)
            r_psi = max(r_psi, float(lhs.max()))
    return max(r_phi, 0.0), max(r_psi, 0.0)


def moment_bound_check(solutions, p=2, n_boot=200, seed=0, labels=None):
    """``E sup_s |Y_s|^p`` per solution with a percentile bootstrap interval.

    Returns ``{"rows": [...], "ratio": max/min}``.
    """
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    labels = list(labels) if labels is not None else list(range(1, len(solutions) + 1))
    g = rngmod.stream(seed, "moment-bootstrap")
    rows = []
    for label, sol in zip(labels, solutions):
        Y = sol.Y if isinstance(sol, BackwardSolution) else np.asarray(sol, dtype=float)
        if Y.ndim == 2:
            Y = Y[:, :, None]
        sup = np.max(np.linalg.norm(Y, axis=2), axis=1) ** p
        est = float(sup.mean())
        n = sup.size
        boots = np.array([sup[g.integers(0, n, n)].mean() for _ in range(n_boot)])
        lo, hi = np.percentile(boots, [2.5, 97.5])
        rows.append({"n": label, "estimate": est, "ci_low": float(lo), "ci_high": float(hi)})
    ests = np.array([r["estimate"] for r in rows])
    ratio = float(ests.max() / ests.min()) if ests.min() > 0 else (1.0 if ests.max() == 0 else np.inf)
    return {"rows": rows, "ratio": ratio}
