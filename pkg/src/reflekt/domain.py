"""Bounded smooth domains ``D = {ell < 0}`` with ``|grad ell| = 1`` on the boundary.

Both built-in shapes use a radial level function ``ell(x) = prof(|x - c|) - R``
where ``prof(rho) = rho`` for ``rho >= R/2`` and ``prof`` is an even C^3
polynomial inside ``R/2``.  So ``ell`` is the signed distance to the boundary
on the outer half of the domain (and everywhere outside) and is smooth at the
centre.  The interval ``(lo, hi)`` is the one-dimensional ball.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels

#: tolerance on ell used by the projection root-find
PROJECTION_TOL = 1e-12
PROJECTION_MAX_ITER = 50


class StepRejectedError(RuntimeError):
    """Projection onto the boundary failed; the time step is too large."""


@dataclass(frozen=True)
class Domain:
    center: tuple
    radius: float
    kind: str = "ball"
    smoothing: float = field(default=0.5)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("domain radius must be positive")
        if not 0 < self.smoothing < 1:
            raise ValueError("smoothing fraction must lie in (0, 1)")

    @classmethod
    def interval(cls, lo, hi):
        lo, hi = float(lo), float(hi)
        if not hi > lo:
            raise ValueError("interval needs lo < hi")
        return cls(center=(0.5 * (lo + hi),), radius=0.5 * (hi - lo), kind="interval")

    @classmethod
    def ball(cls, radius, dim=2, center=None):
        c = tuple(float(v) for v in (center if center is not None else np.zeros(dim)))
        if len(c) != dim:
            raise ValueError("center dimension does not match dim")
        return cls(center=c, radius=float(radius), kind="ball" if dim > 1 else "interval")

    @property
    def dim(self):
        return len(self.center)

    @property
    def a0(self):
        return self.smoothing * self.radius

    @property
    def bounds(self):
        """``(lo, hi)`` of a one-dimensional domain."""
        if self.dim != 1:
            raise ValueError("bounds only defined for interval domains")
        c = self.center[0]
        return c - self.radius, c + self.radius

    @property
    def bounding_radius(self):
        """``sup |x|`` over the closed domain."""
        return float(np.linalg.norm(self.center)) + self.radius

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            x = x[..., None] if self.dim == 1 else x
        s = x - np.asarray(self.center)
        rho = np.linalg.norm(s, axis=-1)
        return x, s, rho

    def ell(self, x):
        _, _, rho = self._split(x)
        return kernels.profile(rho, self.a0) - self.radius

    def grad(self, x):
        x, s, rho = self._split(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[..., None] > 0, s / rho[..., None], 0.0)
        return kernels.profile_d1(rho, self.a0)[..., None] * unit

    def hessian(self, x):
        x, s, rho = self._split(x)
        d = self.dim
        a0 = self.a0
        p1 = kernels.profile_d1(rho, a0)
        p2 = kernels.profile_d2(rho, a0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[..., None] > 0, s / rho[..., None], 0.0)
            tangential = np.where(rho > 0, p1 / rho, 15.0 / (8.0 * a0))
        outer = unit[..., :, None] * unit[..., None, :]
        eye = np.eye(d)
        if d == 1:
            return np.broadcast_to(p2[..., None, None], rho.shape + (1, 1)).copy()
        centre = rho == 0
        radial = np.where(centre[..., None, None], 0.0, outer)
        return p2[..., None, None] * radial + tangential[..., None, None] * (eye - radial)

    def contains(self, x, tol=1e-9):
        return self.ell(x) <= tol

    def project(self, x_pred):
        """One-step Skorokhod projection.

        Returns ``(x_new, delta)`` with ``x_new = x_pred - delta * grad ell(x_new)``,
        ``ell(x_new) = 0`` when ``delta > 0`` and ``x_new = x_pred`` otherwise.
        """
        x, s, rho = self._split(x_pred)
        flat_rho = rho.reshape(-1)
        delta, status = kernels.radial_project(flat_rho, self.radius, self.a0,
                                               PROJECTION_TOL, PROJECTION_MAX_ITER)
        if np.any(status):
            bad = int(np.flatnonzero(status)[0])
            raise StepRejectedError(
                f"boundary projection failed for predictor at distance {flat_rho[bad]:.4g} "
                f"(radius {self.radius:.4g}); reduce the time step")
        delta = delta.reshape(rho.shape)
        moved = delta > 0
        if not np.any(moved):
            return x, delta
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = s / rho[..., None]
        x_new = np.where(moved[..., None], x - delta[..., None] * unit, x)
        return x_new, delta

    def boundary_points(self, n, rng):
        """``n`` points on ``Bd(D)`` (uniform on the sphere)."""
        if self.dim == 1:
            lo, hi = self.bounds
            return np.where(rng.random(n) < 0.5, lo, hi)[:, None]
        v = rng.standard_normal((n, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * v

    def interior_points(self, n, rng):
        """``n`` points uniform in the closed domain."""
        if self.dim == 1:
            lo, hi = self.bounds
            return rng.uniform(lo, hi, size=(n, 1))
        v = rng.standard_normal((n, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return np.asarray(self.center) + r[:, None] * v

    def to_record(self):
        if self.dim == 1:
            lo, hi = self.bounds
            return {"kind": "interval", "lo": lo, "hi": hi}
        return {"kind": "ball", "radius": self.radius, "center": list(self.center)}

    @classmethod
    def from_record(cls, rec):
        kind = rec.get("kind", "interval")
        if kind == "interval":
            return cls.interval(rec.get("lo", -1.0), rec.get("hi", 1.0))
        if kind == "ball":
            center = rec.get("center")
            dim = int(rec.get("dim", len(center) if center is not None else 2))
            return cls.ball(rec.get("radius", 1.0), dim, center)
        raise ValueError(f"unknown domain kind {kind!r}")
