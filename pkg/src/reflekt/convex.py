"""Proper convex l.s.c. functions on R^m with exact resolvents.

Every function here is normalized so that ``phi(y) >= phi(0) = 0``.  Points
are arrays whose last axis has length ``m``; leading axes are batch axes.  A
plain vector (or a scalar when ``m == 1``) gives a scalar result.

``+inf`` (``math.inf``) is returned by :func:`evaluate` outside the effective
domain.  It is a marker, not a number to compute with: residual routines check
for it explicitly and refuse or skip rather than let it propagate.
"""
from dataclasses import dataclass
import math

import numpy as np

INF = math.inf

#: distance to a box face still counted as inside the box
DOMAIN_TOL = 1e-12

#: tolerance and iteration cap of the splitting used for sums
SUM_TOL = 1e-10
SUM_MAX_ITER = 10_000


class ConvexError(ValueError):
    """Invalid convex specification or argument."""


class SolverError(RuntimeError):
    """An iterative resolvent did not converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class MoreauParams:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConvexError(f"epsilon must be positive, got {self.epsilon}")


def _eps_value(eps):
    if isinstance(eps, MoreauParams):
        return eps.epsilon
    eps_arr = np.asarray(eps, dtype=float)
    if np.any(eps_arr <= 0):
        raise ConvexError("epsilon must be positive")
    return eps_arr if eps_arr.ndim else float(eps_arr)


def _float_list(values):
    return [float(v) for v in np.atleast_1d(values)]


class ConvexSpec:
    """Base class; use the constructors below (``zero``, ``quadratic``, ...)."""

    kind = None

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ConvexError("dimension must be a positive integer")
        self.dim = dim

    # -- subclass hooks, operating on arrays of shape (n, m) ---------------
    def _value(self, y):
        raise NotImplementedError

    def _prox(self, y, eps):
        """``eps`` has shape (n, 1)."""
        raise NotImplementedError

    def _params(self):
        return {}

    # -- shared behaviour ---------------------------------------------------
    def _points(self, y):
        arr = np.asarray(y, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.shape[-1] != self.dim:
            raise ConvexError(f"dimension mismatch: expected m={self.dim}, got {arr.shape[-1]}")
        return arr

    def value(self, y):
        arr = self._points(y)
        flat = arr.reshape(-1, self.dim)
        out = self._value(flat).reshape(arr.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def prox(self, y, eps):
        arr = self._points(y)
        flat = arr.reshape(-1, self.dim)
        e = np.broadcast_to(np.asarray(_eps_value(eps), dtype=float), arr.shape[:-1]).reshape(-1, 1)
        out = self._prox(flat, e).reshape(arr.shape)
        if np.ndim(y) == 0:
            return float(out[0])
        return out

    def in_domain(self, y):
        v = self.value(y)
        return np.isfinite(v)

    def to_record(self):
        rec = {"kind": self.kind, "dim": self.dim}
        rec.update(self._params())
        return rec

    def __eq__(self, other):
        return isinstance(other, ConvexSpec) and self.to_record() == other.to_record()

    def __hash__(self):
        return hash(repr(self.to_record()))

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self._params().items())
        return f"{type(self).__name__}(dim={self.dim}{', ' if params else ''}{params})"


class Zero(ConvexSpec):
    kind = "zero"

    def _value(self, y):
        return np.zeros(y.shape[0])

    def _prox(self, y, eps):
        return y.copy()


class Quadratic(ConvexSpec):
    """``scale * |y|^2 / 2``."""

    kind = "quadratic"

    def __init__(self, scale=1.0, dim=1):
        super().__init__(dim)
        if not scale > 0:
            raise ConvexError("quadratic scale must be positive")
        self.scale = float(scale)

    def _value(self, y):
        return 0.5 * self.scale * np.sum(y * y, axis=-1)

    def _prox(self, y, eps):
        return y / (1.0 + eps * self.scale)

    def _params(self):
        return {"scale": self.scale}


class AbsNorm(ConvexSpec):
    """``scale * |y|`` with the Euclidean norm; soft-thresholding resolvent."""

    kind = "abs_norm"

    def __init__(self, scale=1.0, dim=1):
        super().__init__(dim)
        if scale < 0:
            raise ConvexError("abs_norm scale must be nonnegative")
        self.scale = float(scale)

    def _value(self, y):
        return self.scale * np.linalg.norm(y, axis=-1)

    def _prox(self, y, eps):
        norm = np.linalg.norm(y, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(norm > 0, np.maximum(0.0, 1.0 - eps * self.scale / norm), 0.0)
        return y * shrink

    def _params(self):
        return {"scale": self.scale}


class IndicatorBox(ConvexSpec):
    """Indicator of ``[lo, hi]`` (componentwise, infinite bounds allowed)."""

    kind = "indicator_box"

    def __init__(self, lo, hi):
        lo = np.array(_float_list(lo))
        hi = np.array(_float_list(hi))
        if lo.shape != hi.shape:
            raise ConvexError("lo and hi must have the same length")
        super().__init__(lo.size)
        if np.any(lo > 0) or np.any(hi < 0):
            raise ConvexError("indicator box must contain 0 (lo <= 0 <= hi)")
        self.lo, self.hi = lo, hi

    def _value(self, y):
        inside = np.all((y >= self.lo - DOMAIN_TOL) & (y <= self.hi + DOMAIN_TOL), axis=-1)
        return np.where(inside, 0.0, INF)

    def _prox(self, y, eps):
        return np.clip(y, self.lo, self.hi)

    def _params(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Custom1D(ConvexSpec):
    """Piecewise-linear convex function of one variable.

    Interpolates ``values`` at ``breakpoints`` and continues linearly with the
    end slopes outside.  ``0`` must be a breakpoint where the minimum value 0
    is attained.
    """

    kind = "custom_1d"

    def __init__(self, breakpoints, values):
        super().__init__(1)
        b = np.array(_float_list(breakpoints))
        v = np.array(_float_list(values))
        if b.size < 2 or b.size != v.size:
            raise ConvexError("custom_1d needs at least two breakpoints with matching values")
        if np.any(np.diff(b) <= 0):
            raise ConvexError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ConvexError("custom_1d values must be finite")
        slopes = np.diff(v) / np.diff(b)
        if np.any(np.diff(slopes) < -1e-12):
            raise ConvexError("custom_1d values are not convex")
        zero = np.flatnonzero(b == 0.0)
        if zero.size != 1 or v[zero[0]] != 0.0:
            raise ConvexError("custom_1d must have the breakpoint 0 with value 0")
        k = zero[0]
        left = slopes[max(k - 1, 0)]
        right = slopes[min(k, slopes.size - 1)]
        if left > 0 or right < 0:
            raise ConvexError("custom_1d must attain its minimum 0 at the breakpoint 0")
        self.breakpoints, self.values, self.slopes = b, v, slopes

    def _value(self, y):
        b, v, s = self.breakpoints, self.values, self.slopes
        x = y[:, 0]
        out = np.interp(x, b, v)
        out = np.where(x < b[0], v[0] + s[0] * (x - b[0]), out)
        return np.where(x > b[-1], v[-1] + s[-1] * (x - b[-1]), out)

    def _prox(self, y, eps):
        # y = z + eps * slope on each linear piece; interior breakpoint b_k
        # absorbs y in [b_k + eps*s_{k-1}, b_k + eps*s_k].
        b, s = self.breakpoints, self.slopes
        inner = b[1:-1]
        lows = inner + eps * s[:-1]
        highs = inner + eps * s[1:]
        edges = np.empty((y.shape[0], 2 * inner.size))
        edges[:, 0::2] = lows
        edges[:, 1::2] = highs
        idx = np.sum(edges <= y, axis=1)
        piece = idx // 2
        at_break = idx % 2 == 1
        z = np.where(at_break, b[np.minimum(piece + 1, b.size - 1)], y[:, 0] - eps[:, 0] * s[piece])
        return z[:, None]

    def _params(self):
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}


class ConvexSum(ConvexSpec):
    """Sum of built-in functions; resolvent by consensus Douglas-Rachford."""

    kind = "sum"

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ConvexError("sum needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ConvexError("all parts of a sum must share the dimension")
        super().__init__(dims.pop())
        self.parts = parts

    def _value(self, y):
        total = np.zeros(y.shape[0])
        for p in self.parts:
            total = total + p._value(y)
        return total

    def _prox(self, y, eps, tol=SUM_TOL, max_iter=SUM_MAX_ITER):
        n_parts = len(self.parts)
        if n_parts == 1:
            return self.parts[0]._prox(y, eps)
        # minimize sum_k [phi_k(x) + |x - y|^2 / (2 N eps)]; with step
        # gamma = N*eps each part's prox is J^{phi_k}_{N eps / 2}((y + v) / 2)
        tau = 0.5 * n_parts * eps
        s = np.repeat(y[None], n_parts, axis=0)
        z = y.copy()
        residual = INF
        for _ in range(max_iter):
            z_old = z
            z = s.mean(axis=0)
            x = np.stack([p._prox(0.5 * (y + 2 * z - s[k]), tau) for k, p in enumerate(self.parts)])
            s = s + x - z
            residual = max(float(np.max(np.abs(x - z))), float(np.max(np.abs(z - z_old))))
            if residual <= tol:
                break
        else:
            raise SolverError("sum resolvent did not converge", residual)
        z = s.mean(axis=0)
        for p in self.parts:
            if isinstance(p, IndicatorBox):
                z = np.clip(z, p.lo, p.hi)
        return z

    def _params(self):
        return {"parts": [p.to_record() for p in self.parts]}


# -- constructors -------------------------------------------------------------

def zero(dim=1):
    return Zero(dim)


def quadratic(scale=1.0, dim=1):
    return Quadratic(scale, dim)


def abs_norm(scale=1.0, dim=1):
    return AbsNorm(scale, dim)


def indicator_box(lo, hi):
    return IndicatorBox(lo, hi)


def custom_1d(breakpoints, values):
    return Custom1D(breakpoints, values)


def convex_sum(*parts):
    return ConvexSum(parts)


_KINDS = {
    "zero": lambda r: Zero(r.get("dim", 1)),
    "quadratic": lambda r: Quadratic(r.get("scale", 1.0), r.get("dim", 1)),
    "abs_norm": lambda r: AbsNorm(r.get("scale", 1.0), r.get("dim", 1)),
    "indicator_box": lambda r: IndicatorBox(r["lo"], r["hi"]),
    "custom_1d": lambda r: Custom1D(r["breakpoints"], r["values"]),
    "sum": lambda r: ConvexSum([from_record(p) for p in r["parts"]]),
}


def from_record(record):
    """Build a spec from a tagged record such as
    ``{"kind": "indicator_box", "lo": [-1], "hi": [1]}``."""
    try:
        builder = _KINDS[record["kind"]]
    except KeyError as exc:
        raise ConvexError(f"unknown convex kind in {record!r}") from exc
    return builder(record)


# -- operations ---------------------------------------------------------------

def evaluate(spec, y):
    """``phi(y)``; ``+inf`` exactly outside the domain."""
    return spec.value(y)


def resolvent(spec, eps, y):
    """``J_eps(y) = (I + eps d(phi))^{-1}(y)``, the proximal point of ``eps*phi``."""
    return spec.prox(y, eps)


def moreau_gradient(spec, eps, y):
    """``(y - J_eps(y)) / eps``."""
    e = _eps_value(eps)
    y_arr = np.asarray(y, dtype=float)
    j = np.asarray(spec.prox(y, e))
    e_arr = np.asarray(e, dtype=float)
    if e_arr.ndim and y_arr.ndim > e_arr.ndim:
        e_arr = e_arr[..., None]
    out = (y_arr - j) / e_arr
    return float(out) if np.ndim(out) == 0 else out


def moreau_envelope(spec, eps, y):
    """``phi_eps(y) = eps/2 |grad phi_eps(y)|^2 + phi(J_eps(y))``."""
    e = _eps_value(eps)
    y_arr = spec._points(y)
    j = np.asarray(spec.prox(y_arr, e))
    e_arr = np.asarray(e, dtype=float)
    grad = (y_arr - j) / (e_arr[..., None] if e_arr.ndim else e_arr)
    out = 0.5 * e_arr * np.sum(grad * grad, axis=-1) + spec.value(j)
    return float(out) if np.ndim(out) == 0 else out


def subgradient_inequality_residual(spec, y, u, probes):
    """``max_z (<u, z - y> + phi(y) - phi(z))^+`` over the probe points.

    Zero certifies ``u`` in the subdifferential at ``y`` as far as the probes
    can tell.  ``y`` and ``u`` may carry a batch axis; the result then has one
    entry per row.  Probes where ``phi`` is infinite satisfy the inequality
    trivially and are skipped.
    """
    y_arr = spec._points(y)
    u_arr = spec._points(u)
    single = y_arr.ndim == 1
    y2 = y_arr.reshape(-1, spec.dim)
    u2 = np.broadcast_to(u_arr.reshape(-1, spec.dim), y2.shape)
    phi_y = np.atleast_1d(spec.value(y2))
    if not np.all(np.isfinite(phi_y)):
        raise ConvexError("subgradient residual requires y in Dom(phi)")
    z = spec._points(probes).reshape(-1, spec.dim)
    phi_z = np.atleast_1d(spec.value(z))
    finite = np.isfinite(phi_z)
    if not finite.any():
        out = np.zeros(y2.shape[0])
    else:
        z, phi_z = z[finite], phi_z[finite]
        gaps = np.einsum("nm,knm->nk", u2, z[:, None, :] - y2[None, :, :]) + phi_y[:, None] - phi_z[None, :]
        out = np.maximum(gaps.max(axis=1), 0.0)
    return float(out[0]) if single else out
