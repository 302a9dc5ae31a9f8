"""Design matrix U = reg*I + sum g g^T / m and the posterior scale sigma.

Full mode keeps U and its inverse (rank-one Sherman-Morrison updates, with a
rebuild fallback if the update denominator degenerates); diagonal mode keeps
only diag(U), matching the diagonal approximation used for wide networks.
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


class DesignMatrix:
    """Incrementally updated design matrix over gradient features."""

    def __init__(self, dim: int, reg: float, width: int, mode: str = "full"):
        if reg <= 0:
            raise ValueError("reg must be positive")
        if width <= 0:
            raise ValueError("width must be positive")
        if mode not in ("full", "diagonal"):
            raise ValueError(f"unknown mode {mode!r}")
        self.dim = dim
        self.reg = reg
        self.width = width
        self.mode = mode
        self.logdet = dim * np.log(reg)
        self.n_rebuilds = 0
        if mode == "full":
            self._U = reg * np.eye(dim)
            self._inv = np.eye(dim) / reg
        else:
            self._diag = np.full(dim, reg)

    def _check(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.dim,):
            raise ValueError(f"feature length {g.shape} does not match dim {self.dim}")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite entries in gradient feature")
        return g

    def sigma(self, g: np.ndarray) -> float:
        """Posterior scale sqrt(reg * g^T U^{-1} g / m)."""
        g = self._check(g)
        if self.mode == "full":
            quad = float(g @ self._inv @ g)
        else:
            quad = float(np.sum(g * g / self._diag))
        return float(np.sqrt(max(self.reg * quad / self.width, 0.0)))

    def update(self, g: np.ndarray) -> None:
        """Rank-one update U += g g^T / m."""
        g = self._check(g)
        m = self.width
        if self.mode == "diagonal":
            self._diag += g * g / m
            self.logdet = float(np.sum(np.log(self._diag)))
            return
        self._U += np.outer(g, g) / m
        u = self._inv @ g
        denom = 1.0 + float(g @ u) / m
        if denom <= 0.0:
            log.warning("Sherman-Morrison denominator %.3g <= 0; rebuilding inverse",
                        denom)
            self._rebuild()
            return
        self._inv -= np.outer(u, u) / (m * denom)
        self._inv = (self._inv + self._inv.T) / 2.0
        self.logdet += float(np.log(denom))

    def _rebuild(self) -> None:
        self.n_rebuilds += 1
        self._inv = np.linalg.inv(self._U)
        self._inv = (self._inv + self._inv.T) / 2.0
        sign, self.logdet = np.linalg.slogdet(self._U)
        if sign <= 0:
            raise np.linalg.LinAlgError("design matrix lost positive definiteness")

    @property
    def matrix(self) -> np.ndarray:
        """The accumulated U (materialized in diagonal mode)."""
        if self.mode == "full":
            return self._U.copy()
        return np.diag(self._diag)

    @property
    def inverse(self) -> np.ndarray:
        if self.mode == "full":
            return self._inv.copy()
        return np.diag(1.0 / self._diag)
