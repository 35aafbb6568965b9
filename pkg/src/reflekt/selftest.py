"""Randomized self-checks of the convex and path-integral layers.

Each check returns a dict of worst residuals so that the CLI and the test
suite can apply their own tolerances.
"""
import numpy as np

from . import cadlag, convex
from . import rng as rngmod

EPS_LADDER = (1e-3, 1e-1, 1.0)


def builtin_specs():
    """One instance of every built-in kind (the sum mixes three of them)."""
    return {
        "zero": convex.zero(1),
        "quadratic": convex.quadratic(1.5, 2),
        "abs_norm": convex.abs_norm(0.7, 2),
        "indicator_box": convex.indicator_box([-1.0, -0.5], [0.8, np.inf]),
        "custom_1d": convex.custom_1d([-1.0, 0.0, 1.0, 2.0], [2.0, 0.0, 0.5, 2.0]),
        "sum": convex.convex_sum(convex.abs_norm(0.5), convex.indicator_box([-1.0], [1.0]),
                                 convex.quadratic(1.0)),
    }


def convex_identity_trials(spec, n_trials=10_000, seed=0, n_probes=16, y_scale=2.0):
    """Worst residuals over ``n_trials`` random points of

    * ``moreau``: the envelope against the infimal convolution evaluated at
      the resolvent, plus its optimality against random competitors ``z``;
    * ``firm``: ``|J y1 - J y2|^2 - <J y1 - J y2, y1 - y2>`` (positive part);
    * ``subgradient``: ``grad phi_eps(y)`` tested as a subgradient at ``J y``.
    """
    g = rngmod.stream(seed, f"convex-selftest-{spec.kind}")
    m = spec.dim
    y1 = g.normal(scale=y_scale, size=(n_trials, m))
    y2 = g.normal(scale=y_scale, size=(n_trials, m))
    eps = np.asarray(EPS_LADDER)[g.integers(0, len(EPS_LADDER), n_trials)]
    j1 = spec.prox(y1, eps)
    j2 = spec.prox(y2, eps)
    grad = (y1 - j1) / eps[:, None]
    env = convex.moreau_envelope(spec, eps, y1)
    phi_j = spec.value(j1)
    inf_conv = phi_j + np.sum((y1 - j1) ** 2, axis=1) / (2 * eps)
    moreau = np.abs(env - inf_conv)
    z = y1[:, None, :] + g.normal(scale=y_scale, size=(n_trials, n_probes, m))
    phi_z = spec.value(z.reshape(-1, m)).reshape(n_trials, n_probes)
    competitor = phi_z + np.sum((y1[:, None, :] - z) ** 2, axis=2) / (2 * eps[:, None])
    finite = np.isfinite(competitor)
    excess = np.where(finite, env[:, None] - competitor, -np.inf).max(axis=1)
    moreau = np.maximum(moreau, np.maximum(excess, 0.0))
    dj = j1 - j2
    firm = np.maximum(np.sum(dj * dj, axis=1) - np.sum(dj * (y1 - y2), axis=1), 0.0)
    probes = g.normal(scale=y_scale, size=(n_probes, m))
    sub = np.zeros(n_trials)
    for k in range(0, n_trials, 2000):
        sl = slice(k, k + 2000)
        sub[sl] = convex.subgradient_inequality_residual(spec, j1[sl], grad[sl],
                                                         np.vstack([probes, y1[sl][:n_probes]]))
    return {"moreau": float(moreau.max()), "firm": float(firm.max()), "subgradient": float(sub.max())}


def convex_selftest(n_trials=10_000, seed=0):
    return {name: convex_identity_trials(spec, n_trials, seed) for name, spec in builtin_specs().items()}


def random_step_path(g, times, scale=1.0):
    values = np.cumsum(g.normal(scale=scale, size=times.size))
    return cadlag.BVPath(times, values, cadlag.STEP)


def cadlag_selftest(n_pairs=1000, n_points=100, seed=0, depth=14):
    """TV refinement of ``sin(2 pi t)`` and integration by parts on random step paths."""
    t = np.linspace(0.0, 1.0, 2**depth + 1)
    sine = cadlag.BVPath(t, np.sin(2 * np.pi * t), cadlag.LINEAR)
    tv = list(cadlag.refinement_sequence(sine, depth))
    g = rngmod.stream(seed, "cadlag-selftest")
    times = np.linspace(0.0, 1.0, n_points)
    ibp = 0.0
    cov_gap = 0.0
    for _ in range(n_pairs):
        a = random_step_path(g, times)
        b = random_step_path(g, times)
        s, e = np.sort(g.uniform(0.0, 1.0, 2))
        ibp = max(ibp, cadlag.ibp_residual(a, b, e))
        diff = cadlag.stieltjes_right(a, b, s, e) - cadlag.stieltjes_left(a, b, s, e)
        cov_gap = max(cov_gap, abs(diff - cadlag.jump_covariation(a, b, e, s)))
    return {"tv_sequence": tv, "tv_limit_error": abs(tv[-1] - 4.0),
            "tv_monotone": bool(np.all(np.diff(tv) >= -1e-12)),
            "ibp": float(ibp), "covariation": float(cov_gap)}
