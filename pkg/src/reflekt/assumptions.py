"""Sampled checks of the standing assumptions on a :class:`~reflekt.coefficients.Problem`.

Each check draws random points, evaluates the defining inequality and
reports the worst violation (``<= 0`` means satisfied on the sample) together
with the witness.  ``residual`` is the positive part of ``worst``.
"""
import numpy as np

from . import convex
from . import rng as rngmod


def _report(values, witnesses):
    values = np.asarray(values, dtype=float)
    k = int(np.argmax(values)) if values.size else 0
    worst = float(values[k]) if values.size else 0.0
    return {"worst": worst, "residual": max(worst, 0.0), "witness": witnesses(k) if values.size else None}


def _y_samples(g, n, m, scale):
    y = g.normal(scale=scale, size=(n, m))
    y[0] = 0.0
    return y


def check_compatibility(phi, psi, coeffs, domain, eps_list, sample_count=2000, rng_seed=0,
                        y_scale=2.0, boundary_tol=1e-10):
    """Worst signed violation of the three compatibility inequalities.

    For sampled ``t``, ``x`` on the boundary, ``x~`` in the closed domain and
    ``y`` in ``R^m``, and each ``eps`` in ``eps_list``:

    (i)   ``-<grad phi_eps(y), grad psi_eps(y)>``
    (ii)  ``<grad phi_eps(y), g(t,x,y)> - <grad psi_eps(y), g(t,x,y)>^+``
    (iii) ``<grad psi_eps(y), f(t,x~,y)> - <grad phi_eps(y), f(t,x~,y)>^+``
    """
    eps_list = list(eps_list)
    if not eps_list:
        raise ValueError("eps_list must not be empty")
    if not (phi.dim == psi.dim == coeffs.m):
        raise ValueError("phi, psi and the coefficients must share the dimension m")
    g = rngmod.stream(rng_seed, "compatibility")
    n = int(sample_count)
    t = g.uniform(0.0, 1.0, n)
    xb = domain.boundary_points(n, g)
    if np.max(np.abs(domain.ell(xb))) > boundary_tol:
        raise ValueError("sampler could not place points on the boundary")
    xi = domain.interior_points(n, g)
    y = _y_samples(g, n, coeffs.m, y_scale)
    out = {"i": [], "ii": [], "iii": []}
    wit = {"i": [], "ii": [], "iii": []}
    for eps in eps_list:
        gp = convex.moreau_gradient(phi, eps, y)
        gq = convex.moreau_gradient(psi, eps, y)
        gx = np.empty((n, coeffs.m))
        fx = np.empty((n, coeffs.m))
        for j in range(n):
            gx[j] = coeffs.g(t[j], xb[j:j + 1], y[j:j + 1])[0]
            fx[j] = coeffs.f(t[j], xi[j:j + 1], y[j:j + 1])[0]
        c1 = -np.sum(gp * gq, axis=1)
        c2 = np.sum(gp * gx, axis=1) - np.maximum(np.sum(gq * gx, axis=1), 0.0)
        c3 = np.sum(gq * fx, axis=1) - np.maximum(np.sum(gp * fx, axis=1), 0.0)
        for key, vals in (("i", c1), ("ii", c2), ("iii", c3)):
            k = int(np.argmax(vals))
            out[key].append(float(vals[k]))
            wit[key].append({"eps": eps, "t": float(t[k]), "x": xb[k].tolist(),
                             "x_tilde": xi[k].tolist(), "y": y[k].tolist()})
    report = {}
    for key in out:
        k = int(np.argmax(out[key]))
        report[key] = {"worst": out[key][k], "residual": max(out[key][k], 0.0), "witness": wit[key][k]}
    return report


def _pairs(g, domain, n, m, y_scale):
    t = g.uniform(0.0, 1.0, n)
    x1 = domain.interior_points(n, g)
    x2 = domain.interior_points(n, g)
    y1 = _y_samples(g, n, m, y_scale)
    y2 = _y_samples(g, n, m, y_scale)
    return t, x1, x2, y1, y2


def _rowwise(func, t, *args):
    return np.stack([func(t[j], *(a[j:j + 1] for a in args))[0] for j in range(len(t))])


def check_lipschitz_forward(coeffs, domain, sample_count=500, rng_seed=0):
    """``|b(t,x) - b(t,x~)| + |sigma(t,x) - sigma(t,x~)| - L |x - x~|``."""
    g = rngmod.stream(rng_seed, "lipschitz-forward")
    t, x1, x2, _, _ = _pairs(g, domain, sample_count, coeffs.m, 1.0)
    db = np.linalg.norm(_rowwise(coeffs.b, t, x1) - _rowwise(coeffs.b, t, x2), axis=1)
    ds = np.linalg.norm((_rowwise(coeffs.sigma, t, x1) - _rowwise(coeffs.sigma, t, x2)).reshape(sample_count, -1), axis=1)
    viol = db + ds - coeffs.L_lip * np.linalg.norm(x1 - x2, axis=1)
    return _report(viol, lambda k: {"t": float(t[k]), "x": x1[k].tolist(), "x_tilde": x2[k].tolist()})


def check_driver_growth_and_monotonicity(coeffs, domain, sample_count=500, rng_seed=0, y_scale=3.0):
    """Monotonicity (constant ``beta``) and linear growth (constant ``gamma``)
    of ``f`` on the closed domain and of ``g`` on the boundary."""
    g = rngmod.stream(rng_seed, "driver")
    n = sample_count
    t, x1, _, y1, y2 = _pairs(g, domain, n, coeffs.m, y_scale)
    xb = domain.boundary_points(n, g)
    res = {}
    for name, func, xs in (("f", coeffs.f, x1), ("g", coeffs.g, xb)):
        v1 = _rowwise(func, t, xs, y1)
        v2 = _rowwise(func, t, xs, y2)
        dy = y1 - y2
        mono = np.sum(dy * (v1 - v2), axis=1) - coeffs.beta * np.sum(dy * dy, axis=1)
        growth = np.linalg.norm(v1, axis=1) - coeffs.gamma * (1.0 + np.linalg.norm(y1, axis=1))
        res[f"{name}_monotone"] = _report(mono, lambda k, xs=xs: {"t": float(t[k]), "x": xs[k].tolist(),
                                                                   "y": y1[k].tolist(), "y_tilde": y2[k].tolist()})
        res[f"{name}_growth"] = _report(growth, lambda k, xs=xs: {"t": float(t[k]), "x": xs[k].tolist(),
                                                                   "y": y1[k].tolist()})
    return res


def check_boundary_driver_lipschitz(coeffs, domain, sample_count=500, rng_seed=0, y_scale=3.0):
    """``|g(t,x,y) - g(t~,x~,y~)| - beta (|t-t~| + |x-x~| + |y-y~|)`` on the boundary."""
    g = rngmod.stream(rng_seed, "boundary-lipschitz")
    n = sample_count
    t1 = g.uniform(0.0, 1.0, n)
    t2 = g.uniform(0.0, 1.0, n)
    x1 = domain.boundary_points(n, g)
    x2 = domain.boundary_points(n, g)
    y1 = _y_samples(g, n, coeffs.m, y_scale)
    y2 = _y_samples(g, n, coeffs.m, y_scale)
    v1 = _rowwise(coeffs.g, t1, x1, y1)
    v2 = np.stack([coeffs.g(t2[j], x2[j:j + 1], y2[j:j + 1])[0] for j in range(n)])
    gap = np.abs(t1 - t2) + np.linalg.norm(x1 - x2, axis=1) + np.linalg.norm(y1 - y2, axis=1)
    viol = np.linalg.norm(v1 - v2, axis=1) - coeffs.beta * gap
    return _report(viol, lambda k: {"t": float(t1[k]), "x": x1[k].tolist(), "y": y1[k].tolist()})


def check_terminal_bound(coeffs, domain, phi, psi, sample_count=500, rng_seed=0):
    """``|phi(h(x))| - M`` on the closed domain and ``|psi(h(x))| - M`` on the boundary."""
    g = rngmod.stream(rng_seed, "terminal")
    xi = domain.interior_points(sample_count, g)
    xb = domain.boundary_points(sample_count, g)
    hp = np.atleast_1d(phi.value(coeffs.h(xi)))
    hq = np.atleast_1d(psi.value(coeffs.h(xb)))
    if not (np.all(np.isfinite(hp)) and np.all(np.isfinite(hq))):
        return {"worst": np.inf, "residual": np.inf, "witness": "h leaves Dom(phi) or Dom(psi)"}
    viol = np.concatenate([np.abs(hp), np.abs(hq)]) - coeffs.M_bound
    pts = np.concatenate([xi, xb])
    return _report(viol, lambda k: {"x": pts[k].tolist()})


def check_normalization(spec, sample_count=500, rng_seed=0, y_scale=3.0):
    """``phi(0) = 0`` and ``min(phi(y) - phi(0), 0)`` on samples (negated)."""
    g = rngmod.stream(rng_seed, "normalization")
    y = _y_samples(g, sample_count, spec.dim, y_scale)
    vals = np.atleast_1d(spec.value(y))
    at_zero = float(spec.value(np.zeros(spec.dim)))
    viol = np.concatenate([[abs(at_zero)], -(vals - at_zero)])
    return _report(viol, lambda k: {"y": (np.zeros(spec.dim) if k == 0 else y[k - 1]).tolist()})


def check_domain(domain, sample_count=500, rng_seed=0):
    """``| |grad ell| - 1 |`` on boundary samples."""
    g = rngmod.stream(rng_seed, "domain")
    xb = domain.boundary_points(sample_count, g)
    viol = np.abs(np.linalg.norm(domain.grad(xb), axis=-1) - 1.0)
    return _report(viol, lambda k: {"x": xb[k].tolist()})


def validate_problem(problem, eps_list=(1e-3, 1e-2, 1e-1, 1.0), sample_count=400, rng_seed=0, tol=1e-8):
    """Run every check; returns ``(ok, flat dict of reports)``."""
    c, d = problem.coeffs, problem.domain
    reports = {
        "domain_unit_gradient": check_domain(d, sample_count, rng_seed),
        "phi_normalized": check_normalization(problem.phi, sample_count, rng_seed),
        "psi_normalized": check_normalization(problem.psi, sample_count, rng_seed),
        "forward_lipschitz": check_lipschitz_forward(c, d, sample_count, rng_seed),
        "boundary_driver_lipschitz": check_boundary_driver_lipschitz(c, d, sample_count, rng_seed),
        "terminal_bound": check_terminal_bound(c, d, problem.phi, problem.psi, sample_count, rng_seed),
    }
    reports.update(check_driver_growth_and_monotonicity(c, d, sample_count, rng_seed))
    compat = check_compatibility(problem.phi, problem.psi, c, d, eps_list, sample_count, rng_seed)
    for key, rep in compat.items():
        reports[f"compatibility_{key}"] = rep
    ok = all(r["residual"] <= tol for r in reports.values())
    return ok, reports
