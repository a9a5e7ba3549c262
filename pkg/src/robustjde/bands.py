"""Density-band uncertainty sets and the clip-and-normalize projection.

A band constrains every conditional density row to lie pointwise between a
lower and an upper envelope. Projecting a candidate back into the band
amounts to scaling it by a constant, clipping to the envelopes, and picking
the scale so the result integrates to one; the scaled mass is monotone in
the scale, so a bisection bracket always exists for a feasible band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import ObsGrid

__all__ = [
    "DensityFamily",
    "BandModel",
    "BandInfeasibleError",
    "ProjectionError",
    "make_scaled_band",
    "clip_normalize",
    "clip_normalize_rows",
]

_MASS_ATOL = 1e-6
_NORM_ATOL = 1e-10


class BandInfeasibleError(ValueError):
    """The band cannot contain a normalized density."""


class ProjectionError(RuntimeError):
    """No scale normalizes the clipped candidate; treated as solver instability."""


@dataclass(frozen=True)
class DensityFamily:
    """Matrix of conditional density values, rows indexed by parameter point,
    columns by observation point."""

    values: np.ndarray
    hypothesis: int

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if self.hypothesis not in (0, 1):
            raise ValueError("DensityFamily: hypothesis must be 0 or 1")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("DensityFamily: values must be finite and nonnegative")
        values.setflags(write=False)

    @property
    def n_params(self) -> int:
        return int(self.values.shape[0])

    def row_masses(self, grid: ObsGrid) -> np.ndarray:
        return np.sum(self.values, axis=1) * grid.spacing

    def check_normalized(self, grid: ObsGrid, atol: float = _MASS_ATOL) -> None:
        masses = self.row_masses(grid)
        worst = float(np.max(np.abs(masses - 1.0)))
        if worst > atol:
            raise ValueError(f"DensityFamily: row mass off by {worst:.2e}")


@dataclass(frozen=True)
class BandModel:
    """Lower/upper envelopes around a nominal family for one hypothesis."""

    nominal: DensityFamily
    lower: DensityFamily
    upper: DensityFamily

    def __post_init__(self):
        shapes = {f.values.shape for f in (self.nominal, self.lower, self.upper)}
        if len(shapes) != 1:
            raise ValueError("BandModel: family shapes differ")
        hyps = {f.hypothesis for f in (self.nominal, self.lower, self.upper)}
        if len(hyps) != 1:
            raise ValueError("BandModel: hypothesis labels differ")
        if np.any(self.lower.values > self.nominal.values + 1e-15):
            raise ValueError("BandModel: lower envelope exceeds nominal")
        if np.any(self.nominal.values > self.upper.values + 1e-15):
            raise ValueError("BandModel: nominal exceeds upper envelope")

    @property
    def hypothesis(self) -> int:
        return self.nominal.hypothesis

    def check_feasible(self, grid: ObsGrid, atol: float = _MASS_ATOL) -> None:
        """Every row must admit a normalized density inside the band."""
        lo_mass = self.lower.row_masses(grid)
        hi_mass = self.upper.row_masses(grid)
        if np.any(lo_mass > 1.0 + atol):
            raise BandInfeasibleError(
                f"lower envelope mass up to {lo_mass.max():.6f} exceeds 1"
            )
        if np.any(hi_mass < 1.0 - atol):
            raise BandInfeasibleError(
                f"upper envelope mass down to {hi_mass.min():.6f} is below 1"
            )


def make_scaled_band(
    nominal: DensityFamily, c_lo: float, c_hi: float, grid: ObsGrid | None = None
) -> BandModel:
    """Band with envelopes ``c_lo * nominal`` and ``c_hi * nominal``.

    Requires ``0 <= c_lo <= 1 <= c_hi`` so that the nominal density itself
    stays inside the band and each row's envelopes bracket unit mass.
    """
    if not 0.0 <= c_lo <= 1.0:
        raise BandInfeasibleError(f"c_lo={c_lo} must lie in [0, 1]")
    if c_hi < 1.0:
        raise BandInfeasibleError(f"c_hi={c_hi} must be >= 1")
    band = BandModel(
        nominal=nominal,
        lower=DensityFamily(c_lo * nominal.values, nominal.hypothesis),
        upper=DensityFamily(c_hi * nominal.values, nominal.hypothesis),
    )
    if grid is not None:
        band.check_feasible(grid)
    return band


def clip_normalize_rows(
    candidates: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    dx: float,
    atol: float = _NORM_ATOL,
) -> np.ndarray:
    """Project candidate rows into the band: ``clip(gamma * candidate, lower,
    upper)`` with one ``gamma > 0`` per row chosen so every row integrates
    to one.

    The clipped mass is a nondecreasing piecewise-linear function of
    ``gamma``; bisection brackets the unit-mass crossing and an exact
    linear solve on the final active set removes the residual.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    lo = np.atleast_2d(np.asarray(lower, dtype=float))
    hi = np.atleast_2d(np.asarray(upper, dtype=float))
    if cand.shape != lo.shape or cand.shape != hi.shape:
        raise ValueError("clip_normalize: shape mismatch")
    if np.any(cand < 0) or not np.all(np.isfinite(cand)):
        raise ProjectionError("candidate has negative or non-finite entries")

    lo_mass = np.sum(lo, axis=1) * dx
    hi_mass = np.sum(hi, axis=1) * dx
    if np.any(lo_mass > 1.0 + _MASS_ATOL) or np.any(hi_mass < 1.0 - _MASS_ATOL):
        raise BandInfeasibleError("band cannot contain a normalized density")

    def mass(gamma: np.ndarray) -> np.ndarray:
        return np.einsum("rm->r", np.clip(gamma[:, None] * cand, lo, hi)) * dx

    n_rows = cand.shape[0]
    g_lo = np.zeros(n_rows)
    g_hi = np.ones(n_rows)
    for _ in range(120):
        short = mass(g_hi) < 1.0 - 1e-15
        if not short.any():
            break
        g_hi[short] *= 8.0
    else:
        raise ProjectionError("no scale reaches unit mass (candidate too sparse)")

    for _ in range(30):
        mid = 0.5 * (g_lo + g_hi)
        over = mass(mid) > 1.0
        g_hi = np.where(over, mid, g_hi)
        g_lo = np.where(over, g_lo, mid)

    gamma = 0.5 * (g_lo + g_hi)
    out = np.clip(gamma[:, None] * cand, lo, hi)
    # On the active set the mass is linear in gamma; solve the residual exactly.
    # Two passes let the active set settle when a breakpoint sits inside the
    # final bisection bracket.
    for _ in range(2):
        active = (out > lo) & (out < hi)
        free = np.einsum("rm->r", np.where(active, cand, 0.0)) * dx
        pinned = np.einsum("rm->r", np.where(active, 0.0, out)) * dx
        gamma = np.where(free > 0, (1.0 - pinned) / np.where(free > 0, free, 1.0), gamma)
        out = np.clip(gamma[:, None] * cand, lo, hi)

    err = np.abs(np.einsum("rm->r", out) * dx - 1.0)
    if np.any(err > atol):
        raise ProjectionError(f"normalization residual {err.max():.2e} exceeds {atol:g}")
    return out


def clip_normalize(
    candidate: np.ndarray, lower: np.ndarray, upper: np.ndarray, dx: float
) -> np.ndarray:
    """Single-row convenience wrapper around :func:`clip_normalize_rows`."""
    out = clip_normalize_rows(
        np.asarray(candidate, dtype=float)[None, :],
        np.asarray(lower, dtype=float)[None, :],
        np.asarray(upper, dtype=float)[None, :],
        dx,
    )
    return out[0]
