"""Discretization of parameter and observation spaces.

Parameter grids carry prior weights; the three moment vectors built from
them (second moment, first moment, mass per grid point) reduce every cost
evaluation downstream to inner products with density slices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ParamGrid",
    "ObsGrid",
    "MomentVectors",
    "build_uniform_param_grid",
    "build_endpoint_param_grid",
    "build_obs_grid",
    "moment_vectors",
]

_UNIFORM_RTOL = 1e-12
_PRIOR_ATOL = 1e-8


def _check_uniform(points: np.ndarray, what: str) -> float:
    if points.ndim != 1 or points.size < 1:
        raise ValueError(f"{what}: need a 1-D array of at least one point")
    if points.size == 1:
        return 0.0
    steps = np.diff(points)
    if np.any(steps <= 0):
        raise ValueError(f"{what}: points must be strictly increasing")
    h = steps.mean()
    if np.max(np.abs(steps - h)) > _UNIFORM_RTOL * max(abs(h), 1.0):
        raise ValueError(f"{what}: spacing is not uniform")
    return float(h)


@dataclass(frozen=True)
class ParamGrid:
    """Discrete parameter values with prior densities.

    ``prior`` holds density values; the mass of point ``n`` is
    ``prior[n] * spacing`` and the masses must sum to one.
    """

    points: np.ndarray
    spacing: float
    prior: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        prior = np.asarray(self.prior, dtype=float)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "prior", prior)
        h = _check_uniform(points, "ParamGrid")
        if self.spacing <= 0:
            raise ValueError("ParamGrid: spacing must be positive")
        if points.size > 1 and abs(h - self.spacing) > _UNIFORM_RTOL * max(h, 1.0):
            raise ValueError("ParamGrid: spacing does not match the points")
        if prior.shape != points.shape:
            raise ValueError("ParamGrid: prior and points shapes differ")
        if np.any(prior < 0):
            raise ValueError("ParamGrid: prior densities must be nonnegative")
        mass = float(np.sum(prior) * self.spacing)
        if abs(mass - 1.0) > _PRIOR_ATOL:
            raise ValueError(f"ParamGrid: prior mass {mass} != 1")
        points.setflags(write=False)
        prior.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.points.size)


@dataclass(frozen=True)
class ObsGrid:
    """Uniform observation grid; quadrature weight is ``spacing`` per point."""

    points: np.ndarray
    spacing: float = field(default=0.0)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", points)
        h = _check_uniform(points, "ObsGrid")
        if self.spacing == 0.0:
            object.__setattr__(self, "spacing", h if h > 0 else 1.0)
        elif points.size > 1 and abs(h - self.spacing) > _UNIFORM_RTOL * max(h, 1.0):
            raise ValueError("ObsGrid: spacing does not match the points")
        if self.spacing <= 0:
            raise ValueError("ObsGrid: spacing must be positive")
        points.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.points.size)

    def cell_index(self, x) -> np.ndarray:
        """Index of the grid cell containing ``x`` (nearest point)."""
        idx = np.rint((np.asarray(x, dtype=float) - self.points[0]) / self.spacing)
        return np.clip(idx, 0, self.size - 1).astype(int)


@dataclass(frozen=True)
class MomentVectors:
    """Per-point moments of a parameter grid: ``c`` is the prior mass,
    ``b = theta * c`` and ``a = theta^2 * c``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            v.setflags(write=False)
        if not (self.a.shape == self.b.shape == self.c.shape):
            raise ValueError("MomentVectors: a, b, c shapes differ")
        if np.any(self.c < 0):
            raise ValueError("MomentVectors: c must be nonnegative")


def moment_vectors(grid: ParamGrid) -> MomentVectors:
    """Reduce a parameter grid to the moment vectors used by the cost kernels."""
    c = grid.prior * grid.spacing
    return MomentVectors(a=grid.points**2 * c, b=grid.points * c, c=c)


def build_uniform_param_grid(lo: float, hi: float, n: int) -> ParamGrid:
    """Midpoint-rule grid for a uniform prior on ``[lo, hi]``.

    Cell centers carry density ``1 / (hi - lo)`` each, so the discrete
    prior mass is exactly one for any ``n``.
    """
    if not lo < hi:
        raise ValueError("build_uniform_param_grid: need lo < hi")
    if n < 1:
        raise ValueError("build_uniform_param_grid: need n >= 1")
    h = (hi - lo) / n
    points = lo + h * (np.arange(n) + 0.5)
    prior = np.full(n, 1.0 / (hi - lo))
    return ParamGrid(points=points, spacing=h, prior=prior)


def build_endpoint_param_grid(lo: float, hi: float, n: int) -> ParamGrid:
    """Endpoint-inclusive grid for a uniform prior on ``[lo, hi]``.

    All ``n`` points, including ``lo`` and ``hi``, carry equal mass
    ``1 / n``. Compared to the midpoint rule this widens the effective
    support by half a cell on each side, which matters for quantities
    that are sensitive to the prior's edges (e.g. posterior variances).
    """
    if not lo < hi:
        raise ValueError("build_endpoint_param_grid: need lo < hi")
    if n < 2:
        raise ValueError("build_endpoint_param_grid: need n >= 2")
    points = np.linspace(lo, hi, n)
    h = (hi - lo) / (n - 1)
    prior = np.full(n, 1.0 / (n * h))
    return ParamGrid(points=points, spacing=h, prior=prior)


def build_obs_grid(lo: float, hi: float, m: int) -> ObsGrid:
    """Uniform observation grid with ``m`` points spanning ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError("build_obs_grid: need lo < hi")
    if m < 2:
        raise ValueError("build_obs_grid: need m >= 2")
    points = np.linspace(lo, hi, m)
    return ObsGrid(points=points, spacing=(hi - lo) / (m - 1))
