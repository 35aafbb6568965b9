"""Value surfaces on a tensor grid ``times x nodes`` (one space dimension)."""
import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class ValueSurface:
    """``u[i, j] = u(times[i], nodes[j])`` with standard errors ``se`` (same shape)."""

    times: np.ndarray
    nodes: np.ndarray
    u: np.ndarray
    se: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.times.size, self.nodes.size):
            raise ValueError(f"surface shape {self.u.shape} does not match the grid")
        if self.se is None:
            self.se = np.zeros_like(self.u)
        if not np.all(np.isfinite(self.u)):
            raise ValueError("surface has non-finite values")

    def at(self, t, x):
        """Bilinear interpolation; ``x`` may be an array."""
        times = self.times
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        lam = float(np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0))
        row = (1 - lam) * self.u[i] + lam * self.u[i + 1]
        out = np.interp(np.asarray(x, dtype=float), self.nodes, row)
        return float(out) if np.ndim(out) == 0 else out

    def resample(self, times, nodes):
        times = np.asarray(times, dtype=float)
        return np.stack([self.at(t, nodes) for t in times])

    def sup_gap(self, other):
        """``max |self - other|`` over the nodes of ``self``."""
        return float(np.max(np.abs(self.u - other.resample(self.times, self.nodes))))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "u", "se"])
            for i, t in enumerate(self.times):
                for j, x in enumerate(self.nodes):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(self.u[i, j])),
                                repr(float(self.se[i, j]))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times = np.unique(data[:, 0])
        nodes = np.unique(data[:, 1])
        shape = (times.size, nodes.size)
        return cls(times, nodes, data[:, 2].reshape(shape), data[:, 3].reshape(shape))
