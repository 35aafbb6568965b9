"""The value function ``u(t, x) = Y_t^{t,x}`` and the experiments around it:
continuity along converging sequences, agreement of the two engines along
paths (Markov consistency) and tightness diagnostics of the backward
processes.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import backward, cadlag
from .backward import SolverParams
from .forward import loglog_slope
from .surface import ValueSurface


@dataclass(frozen=True)
class EngineConfig:
    engine: str = "grid"
    n_t: int = 50
    n_x: int = 50
    n_paths: int = 4000
    n_steps: int = 100
    seed: int = 0
    scheme: str = "symmetrized"
    params: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if self.engine not in ("grid", "regression"):
            raise ValueError(f"unknown engine {self.engine!r}")

    def with_engine(self, engine):
        return replace(self, engine=engine, params=replace(self.params, engine=engine))


def value_surface(problem, config=EngineConfig()):
    """Grid-engine surface of the first output component."""
    gs = backward.solve_grid(problem, config.n_t, config.n_x, config.params, config.seed)
    return ValueSurface(gs.times, gs.nodes, gs.u[:, :, 0])


def _regression_start(problem, t, x, config, task="valuefn"):
    params = replace(config.params, engine="regression")
    ens, sol = backward.solve_regression_from(problem, t, x, config.n_paths, config.n_steps,
                                              params, config.seed, task, config.scheme)
    return ens, sol


def evaluate_u(problem, t, x, config=EngineConfig(), surface=None):
    """``(u(t, x), standard error)`` for the first output component.

    The grid engine reads the (interpolated) surface and reports no sampling
    error; the regression engine simulates from ``(t, x)`` and bootstraps
    blocks of paths.  Pass a precomputed ``surface`` to skip the grid solve.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if not 0.0 <= t <= problem.horizon:
        raise ValueError("t outside [0, T]")
    if problem.domain.ell(x_arr[None])[0] > 1e-9:
        raise ValueError("x outside the closed domain")
    if t == problem.horizon:
        return float(problem.coeffs.h(x_arr[None])[0, 0]), 0.0
    if config.engine == "grid":
        surface = surface if surface is not None else value_surface(problem, config)
        return surface.at(t, float(x_arr[0])), 0.0
    _, sol = _regression_start(problem, t, x_arr, config)
    return backward.start_value(sol, problem.coeffs, seed=config.seed)


def geometric_sequence(t, x, n_values, horizon=1.0, bounds=(-1.0, 1.0)):
    """``(t + 2^-n, x + 2^-n)`` folded back inside ``[0, T] x [lo, hi]``."""
    out = []
    for n in n_values:
        step = 2.0 ** (-n)
        tn = t + step if t + step <= horizon else t - step
        xn = x + step if x + step <= bounds[1] else x - step
        out.append((tn, xn))
    return out


def continuity_modulus(problem, base, sequence, config=EngineConfig(), labels=None, surface=None):
    """Gaps ``|u(t_n, x_n) - u(t, x)|`` along ``sequence`` with fitted exponents.

    Returns ``{"rows": [...], "exponent_x": ..., "exponent_t": ...}``; the
    exponents are log-log slopes of the gap against ``|x_n - x|`` and
    ``|t_n - t|^(1/2)`` (``nan`` when that offset does not vary).
    """
    labels = list(labels) if labels is not None else list(range(1, len(sequence) + 1))
    if config.engine == "grid" and surface is None:
        surface = value_surface(problem, config)
    t, x = base
    u0, se0 = evaluate_u(problem, t, x, config, surface)
    rows = []
    for label, (tn, xn) in zip(labels, sequence):
        un, sen = evaluate_u(problem, tn, xn, config, surface)
        rows.append({"n": label, "dt": abs(tn - t), "dx": abs(xn - x), "gap": abs(un - u0),
                     "se": float(np.hypot(se0, sen)), "u_n": un})
    gaps = np.array([r["gap"] for r in rows])
    dx = np.array([r["dx"] for r in rows])
    dt = np.array([r["dt"] for r in rows])

    def fit(offsets):
        ok = (offsets > 0) & (gaps > 0)
        if ok.sum() < 2 or np.ptp(offsets[ok]) == 0:
            return float("nan")
        return loglog_slope(offsets[ok], gaps[ok])

    return {"rows": rows, "u_limit": u0, "se_limit": se0,
            "exponent_x": fit(dx), "exponent_t": fit(np.sqrt(dt))}


def markov_consistency(problem, t, x, checkpoints, config=EngineConfig(engine="regression"),
                       surface=None, surface_config=EngineConfig()):
    """``E |Y_s - u(s, X_s)|`` at each checkpoint ``s``.

    ``Y`` comes from the regression engine started at ``(t, x)`` and ``u``
    from the grid-engine surface, interpolated linearly.
    """
    surface = surface if surface is not None else value_surface(problem, surface_config)
    ens, sol = _regression_start(problem, t, x, config, task="markov")
    rows = []
    for s in checkpoints:
        i = int(np.argmin(np.abs(ens.times - s)))
        if abs(ens.times[i] - s) > 1e-9:
            raise ValueError(f"checkpoint {s} is not a grid point")
        if s == problem.horizon:
            u_s = problem.coeffs.h(ens.X[:, i])[:, 0]
        else:
            u_s = surface.at(ens.times[i], ens.X[:, i, 0])
        err = np.abs(sol.Y[:, i, 0] - u_s)
        rows.append({"s": float(s), "residual": float(err.mean()),
                     "se": float(err.std(ddof=1) / np.sqrt(err.size))})
    return rows


PROCESSES = ("Y", "K1", "K2", "M")


def tightness_along_sequence(problem, sequence, config=EngineConfig(engine="regression"), labels=None,
                             regressor=("bucket", 32), ratio_limit=3.0, scale_by_n=False):
    """Conditional variation plus expected supremum of ``Y``, ``K1``, ``K2``
    and ``M`` for every member of the sequence of starting points.

    ``scale_by_n`` multiplies ``Y^n`` by its label (a negative control that
    must be reported as unbounded).  Returns per-process diagnostics and the
    per-member totals summed over the four processes.
    """
    if len(sequence) < 3:
        raise ValueError("need at least three sequence members")
    labels = list(labels) if labels is not None else list(range(1, len(sequence) + 1))
    data = {name: [] for name in PROCESSES}
    states = []
    times = None
    for label, (tn, xn) in zip(labels, sequence):
        ens, sol = _regression_start(problem, tn, xn, config, task="tightness")
        times = ens.times
        factor = float(label) if scale_by_n else 1.0
        data["Y"].append(factor * sol.Y[:, :, 0])
        data["K1"].append(sol.K1[:, :, 0])
        data["K2"].append(sol.K2[:, :, 0])
        data["M"].append(sol.M[:, :, 0])
        states.append(ens.X[:, :, 0])
    reports = {}
    totals = np.zeros(len(labels))
    for name in PROCESSES:
        rep = cadlag.s_tightness_diagnostic(data[name], None, times, states, regressor, ratio_limit, labels)
        reports[name] = rep
        totals += np.array([r["total"] for r in rep["rows"]])
    lo, hi = float(totals.min()), float(totals.max())
    ratio = 1.0 if hi == 0 else (np.inf if lo == 0 else hi / lo)
    return {"processes": reports, "labels": labels, "totals": totals.tolist(), "ratio": ratio,
            "bounded": bool(ratio <= ratio_limit)}
