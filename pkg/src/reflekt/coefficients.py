"""Coefficient containers.

All callables are vectorized over a leading batch axis:

* ``b(t, x)``: ``(n, d) -> (n, d)``
* ``sigma(t, x)``: ``(n, d) -> (n, d, d)``
* ``f(t, x, y)``, ``g(t, x, y)``: ``(n, d), (n, m) -> (n, m)``
* ``h(x)``: ``(n, d) -> (n, m)``
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex import ConvexSpec
from .domain import Domain


@dataclass(frozen=True)
class CoefficientSet:
    b: Callable
    sigma: Callable
    f: Callable
    g: Callable
    h: Callable
    dim: int = 1
    m: int = 1
    beta: float = 0.0
    gamma: float = 0.0
    L_lip: float = 0.0
    M_bound: float = 1.0
    name: str = "custom"

    def generator_ell(self, domain, t, x):
        """``L_t ell(x) = <b, grad ell> + tr(sigma sigma^T Hess ell) / 2``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        sig = self.sigma(t, x)
        drift = np.einsum("ni,ni->n", self.b(t, x), domain.grad(x))
        diff = 0.5 * np.einsum("nij,nkj,nik->n", sig, sig, domain.hessian(x))
        return drift + diff


@dataclass(frozen=True)
class Problem:
    """Everything that defines one forward-backward system on ``[0, T]``."""

    domain: Domain
    coeffs: CoefficientSet
    phi: ConvexSpec
    psi: ConvexSpec
    horizon: float = 1.0
    name: str = "custom"
    reference_point: tuple = field(default=(0.25, 0.3))
    notes: Optional[str] = None

    def __post_init__(self):
        if self.domain.dim != self.coeffs.dim:
            raise ValueError("domain and coefficient dimensions differ")
        if not (self.phi.dim == self.psi.dim == self.coeffs.m):
            raise ValueError("phi, psi and the coefficient output dimension m differ")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
