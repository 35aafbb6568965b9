"""Right-continuous paths with left limits on finite grids.

A :class:`CadlagPath` is either piecewise constant (``interp="step"``, value
on ``[t_i, t_{i+1})`` is ``values[i]``) or piecewise linear.  All integrals are
Lebesgue-Stieltjes integrals over half-open intervals ``(s, t]`` and are
computed exactly on the union of both paths' grids: on each merged cell the
continuous part of ``dk`` meets a constant or linear integrand, and the atoms
of ``dk`` sit on grid points.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

STEP = "step"
LINEAR = "linear"


class EnsembleError(ValueError):
    """Ensemble too small or unusable for a conditional estimate."""


class DegenerateDesignError(EnsembleError):
    """Regression design matrix without full column rank."""


@dataclass(frozen=True, eq=False)
class CadlagPath:
    times: np.ndarray
    values: np.ndarray
    interp: str = STEP

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size < 2 or values.shape[0] != times.size:
            raise ValueError("need at least two grid times and one value per time")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("grid must start at 0 and be strictly increasing")
        if self.interp not in (STEP, LINEAR):
            raise ValueError(f"interp must be 'step' or 'linear', got {self.interp!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def dim(self):
        return self.values.shape[1]

    def value_at(self, t):
        """Right-continuous value(s) at time(s) ``t``; shape ``(..., d)``."""
        t = np.asarray(t, dtype=float)
        if self.interp == STEP:
            k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1)
            return self.values[k]
        return np.stack([np.interp(t, self.times, self.values[:, j]) for j in range(self.dim)], axis=-1)

    def left_limit(self, t):
        """``x_{t-}``, with the convention ``x_{0-} = x_0``."""
        t = np.asarray(t, dtype=float)
        if self.interp == STEP:
            k = np.clip(np.searchsorted(self.times, t, side="left") - 1, 0, self.times.size - 1)
            return self.values[k]
        return self.value_at(t)

    def jump(self, t):
        return self.value_at(t) - self.left_limit(t)

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def map(self, func):
        """Path ``r -> func(r, x_r)`` on the same grid and interpolation."""
        vals = np.asarray([func(t, v) for t, v in zip(self.times, self.values)], dtype=float)
        return type(self)(self.times, vals, self.interp)


@dataclass(frozen=True, eq=False)
class BVPath(CadlagPath):
    """A càdlàg path used as an integrator; caches its cell increments."""

    increments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "increments", np.diff(self.values, axis=0))

    @classmethod
    def from_path(cls, path):
        return cls(path.times, path.values, path.interp)

    def total_variation(self):
        return float(np.sum(np.linalg.norm(self.increments, axis=1)))


@dataclass(frozen=True)
class Partition:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2 or pts[0] != 0.0 or np.any(np.diff(pts) <= 0):
            raise ValueError("partition must be strictly increasing and start at 0")
        object.__setattr__(self, "points", pts)

    @property
    def mesh(self):
        return float(np.max(np.diff(self.points)))

    @classmethod
    def dyadic(cls, horizon, level):
        return cls(np.linspace(0.0, float(horizon), 2**int(level) + 1))

    @classmethod
    def of(cls, path):
        return cls(path.times)


def total_variation(k, pi=None):
    """``V_pi(k) = sum |k(t_{i+1}) - k(t_i)|``; the full variation when ``pi``
    is ``k``'s own grid (the default)."""
    pts = k.times if pi is None else pi.points
    if pts[-1] > k.horizon + 1e-12:
        raise ValueError("partition exceeds the path horizon")
    vals = k.value_at(pts)
    return float(np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1)))


def refinement_sequence(k, depth):
    """Variations over the nested dyadic partitions of levels ``1..depth``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    return [total_variation(k, Partition.dyadic(k.horizon, n)) for n in range(1, depth + 1)]


def _merged_points(x, k, s, t):
    pts = np.union1d(x.times, k.times)
    pts = pts[(pts > s) & (pts < t)]
    return np.concatenate([[s], pts, [t]]) if t > s else np.array([s])


def _check_pair(x, k, s, t):
    if x.dim != k.dim:
        raise ValueError("integrand and integrator dimensions differ")
    if not 0.0 <= s <= t <= min(x.horizon, k.horizon) + 1e-12:
        raise ValueError("need 0 <= s <= t <= T")


def _stieltjes(x, k, s, t, right):
    _check_pair(x, k, s, t)
    pts = _merged_points(x, k, s, t)
    if pts.size < 2:
        return 0.0
    a, b = pts[:-1], pts[1:]
    k_cont = k.left_limit(b) - k.value_at(a)
    if x.interp == STEP:
        x_cell = x.value_at(a)
    else:
        x_cell = 0.5 * (x.value_at(a) + x.left_limit(b))
    total = np.sum(x_cell * k_cont)
    atoms = k.value_at(b) - k.left_limit(b)
    x_atom = x.value_at(b) if right else x.left_limit(b)
    return float(total + np.sum(x_atom * atoms))


def stieltjes_left(x, k, s, t):
    """``int_(s,t] <x_{r-}, dk_r>``."""
    return _stieltjes(x, k, s, t, right=False)


def stieltjes_right(x, k, s, t):
    """``int_(s,t] <x_r, dk_r>``; differs from the left version only on the
    common jumps."""
    return _stieltjes(x, k, s, t, right=True)


def jump_covariation(x, k, t, s=0.0):
    """``[x, k]`` over ``(s, t]``: the sum of ``<dx, dk>`` over common jumps."""
    _check_pair(x, k, s, t)
    pts = _merged_points(x, k, s, t)[1:]
    if pts.size == 0:
        return 0.0
    return float(np.sum(x.jump(pts) * k.jump(pts)))


def ibp_residual(l, k, t):
    """Integration-by-parts defect

    ``| int <l_r, dk_r> + int <k_r, dl_r> - <l_t, k_t> + <l_0, k_0> - [l, k]_t |``

    with the second integral assembled as left integral plus jump covariation.
    """
    lhs = stieltjes_right(l, k, 0.0, t) + stieltjes_left(k, l, 0.0, t) + jump_covariation(k, l, t)
    rhs = (float(np.dot(l.value_at(t), k.value_at(t))) - float(np.dot(l.values[0], k.values[0]))
           + jump_covariation(l, k, t))
    return abs(lhs - rhs)


def helly_bray_gap(x_seq, k_seq, x, k, s, t):
    """``|int x^n dk^n - int x dk|`` over ``(s, t]`` for each ``n``."""
    limit = stieltjes_right(x, k, s, t)
    return [abs(stieltjes_right(xn, kn, s, t) - limit) for xn, kn in zip(x_seq, k_seq)]


# ---------------------------------------------------------------------------
# conditional variation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CVEstimate:
    """``value`` is the clipped estimate, ``raw`` the unclipped one."""

    value: float
    se: float
    raw: float

    def __float__(self):
        return self.value


def _bucket_index(state, bins):
    edges = np.quantile(state, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.searchsorted(edges, state, side="right")


def _bucket_predict(state, dl, fit, pred, bins):
    idx = _bucket_index(state, bins)
    counts = np.bincount(idx[fit], minlength=bins).astype(float)
    means = np.zeros((bins, dl.shape[1]))
    for j in range(dl.shape[1]):
        sums = np.bincount(idx[fit], dl[fit, j], minlength=bins)
        means[:, j] = np.divide(sums, counts, out=np.zeros(bins), where=counts > 0)
    return means[idx[pred]]


def _poly_predict(state, dl, fit, pred, degree):
    s = state
    spread = np.ptp(s)
    if spread == 0:
        mean = dl[fit].mean(axis=0)
        return np.repeat(mean[None], pred.sum(), axis=0)
    z = (s - s.mean()) / s.std()
    design = np.vander(z, degree + 1, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(design[fit], dl[fit], rcond=None)
    if rank < degree + 1:
        raise DegenerateDesignError(f"polynomial design of degree {degree} has rank {rank}")
    return design[pred] @ coef


def _partition_indices(times, pi):
    if pi is None:
        return np.arange(times.size)
    pts = pi.points if isinstance(pi, Partition) else np.asarray(pi, dtype=float)
    idx = np.searchsorted(times, pts - 1e-12)
    idx = np.clip(idx, 0, times.size - 1)
    if np.any(np.abs(times[idx] - pts) > 1e-9):
        raise ValueError("partition points must lie on the ensemble grid")
    return idx


def conditional_variation(paths, state=None, times=None, pi=None, regressor=("bucket", 32)):
    """Estimate ``sum_i E |E[L_{t_{i+1}} - L_{t_i} | state_{t_i}]|`` over the partition.

    ``paths`` has shape ``(n_paths, n_times)`` or ``(n_paths, n_times, d)``;
    ``state`` (defaults to the path itself, or its norm) is a scalar Markov
    statistic standing in for the past.  The conditional mean is fitted on
    one half of the sample (``regressor`` is ``("bucket", bins)`` with
    equal-mass bins or ``("polynomial", degree)``) and its direction scores
    the increments of the other half, and vice versa.  The cross-fit keeps
    the estimate centred at zero for martingales instead of biased upwards
    by the noise in the fitted means.
    """
    L = np.asarray(paths, dtype=float)
    if L.ndim == 2:
        L = L[:, :, None]
    n, g, _ = L.shape
    if n < 100:
        raise EnsembleError(f"conditional variation needs at least 100 paths, got {n}")
    if state is None:
        state = np.linalg.norm(L, axis=2) if L.shape[2] > 1 else L[:, :, 0]
    state = np.asarray(state, dtype=float)
    if state.shape != (n, g):
        raise ValueError("state must have shape (n_paths, n_times)")
    if times is None:
        times = np.arange(g, dtype=float)
    idx = _partition_indices(np.asarray(times, dtype=float), pi)
    kind, param = regressor
    halves = np.arange(n) % 2 == 0
    scores = np.zeros(n)
    for i0, i1 in zip(idx[:-1], idx[1:]):
        dl = L[:, i1] - L[:, i0]
        s = state[:, i0]
        pred = np.empty_like(dl)
        for fit_half in (halves, ~halves):
            target = ~fit_half
            if kind == "bucket":
                pred[target] = _bucket_predict(s, dl, fit_half, target, int(param))
            elif kind == "polynomial":
                pred[target] = _poly_predict(s, dl, fit_half, target, int(param))
            else:
                raise ValueError(f"unknown regressor {kind!r}")
        norm = np.linalg.norm(pred, axis=1, keepdims=True)
        direction = np.divide(pred, norm, out=np.zeros_like(pred), where=norm > 0)
        scores += np.sum(direction * dl, axis=1)
    raw = float(scores.mean())
    se = float(scores.std(ddof=1) / np.sqrt(n))
    return CVEstimate(max(raw, 0.0), se, raw)


def expected_sup(paths):
    L = np.asarray(paths, dtype=float)
    if L.ndim == 2:
        return float(np.mean(np.max(np.abs(L), axis=1)))
    return float(np.mean(np.max(np.linalg.norm(L, axis=2), axis=1)))


def s_tightness_diagnostic(ensembles, pi=None, times=None, states=None, regressor=("bucket", 32),
                           ratio_limit=3.0, labels=None):
    """Per-member ``CV_T + E sup |L|`` and a boundedness verdict.

    ``ensembles`` is a list (over the sequence index ``n``) of path arrays on
    a common grid; ``states`` optionally gives the conditioning state for
    each.  ``bounded`` is true when the largest total is within
    ``ratio_limit`` of the smallest.
    """
    if len(ensembles) < 2:
        raise ValueError("need at least two ensembles")
    labels = list(labels) if labels is not None else list(range(1, len(ensembles) + 1))
    rows = []
    for j, (label, paths) in enumerate(zip(labels, ensembles)):
        state = None if states is None else states[j]
        cv = conditional_variation(paths, state, times, pi, regressor)
        esup = expected_sup(paths)
        rows.append({"n": label, "cv": cv.value, "cv_se": cv.se, "esup": esup, "total": cv.value + esup})
    totals = np.array([r["total"] for r in rows])
    lo, hi = float(totals.min()), float(totals.max())
    if hi == 0.0:
        ratio = 1.0
    elif lo == 0.0:
        ratio = np.inf
    else:
        ratio = hi / lo
    positive = totals > 0
    slope = float("nan")
    if positive.sum() >= 2:
        n_arr = np.asarray(labels, dtype=float)[positive]
        if np.all(n_arr > 0) and np.ptp(n_arr) > 0:
            slope = float(np.polyfit(np.log(n_arr), np.log(totals[positive]), 1)[0])
    return {"rows": rows, "max_total": hi, "ratio": ratio, "growth_slope": slope,
            "bounded": bool(ratio <= ratio_limit)}


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_path_csv(path, file):
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"v{j}" for j in range(path.dim)])
        for t, v in zip(path.times, path.values):
            w.writerow([repr(float(t))] + [repr(float(c)) for c in v])


def read_path_csv(file, interp=STEP):
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "time":
        raise ValueError("path CSV must start with a 'time' column")
    data = np.array([[float(c) for c in r] for r in body])
    return CadlagPath(data[:, 0], data[:, 1:], interp)


def write_diagnostic_csv(report, file):
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "cv", "esup", "total"])
        for r in report["rows"]:
            w.writerow([r["n"], repr(r["cv"]), repr(r["esup"]), repr(r["total"])])
