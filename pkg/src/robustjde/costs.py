"""Acceptance costs, the pointwise objective, and its gradients.

At a fixed observation the decision problem reduces to inner products
between moment vectors and the slice of conditional density values there.
The cost of accepting a hypothesis combines the opposing hypothesis's
weighted likelihood with the own hypothesis's weighted posterior-variance
term; the pointwise objective is the minimum of the two acceptance costs,
optionally smoothed by a softmin so its gradient stays invertible.

All kernels accept slices either as vectors (one observation) or as
matrices with one column per observation point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grids import MomentVectors

__all__ = [
    "ProblemConfig",
    "SliceState",
    "SliceGradient",
    "bayes_accept_cost",
    "np_accept_cost",
    "rho",
    "rho_gradient",
    "softmin",
    "softmin_weights",
]

BAYES = "bayes"
NP_MODE = "np"
HARD = "hard"
SOFT = "soft"


@dataclass(frozen=True)
class ProblemConfig:
    """Priors, cost coefficients and error levels defining one formulation.

    ``det_cost`` weights the error probabilities, ``est_cost`` the
    estimation error levels. ``alpha_max`` is only consulted in the
    constrained mode. ``softmin_xi`` controls the softmin steepness:
    larger values sharpen the minimum at the cost of gradient
    conditioning.
    """

    prior0: float
    prior1: float
    det_cost: tuple[float, float]
    est_cost: tuple[float, float]
    alpha_max: tuple[float, float] | None = None
    softmin_xi: float = 50.0
    mode: str = BAYES

    def __post_init__(self):
        if abs(self.prior0 + self.prior1 - 1.0) > 1e-12:
            raise ValueError("priors must sum to one")
        if min(self.prior0, self.prior1) < 0:
            raise ValueError("priors must be nonnegative")
        if min(self.det_cost) < 0 or min(self.est_cost) < 0:
            raise ValueError("cost coefficients must be nonnegative")
        if self.softmin_xi <= 0:
            raise ValueError("softmin_xi must be positive")
        if self.mode not in (BAYES, NP_MODE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == NP_MODE:
            if self.alpha_max is None:
                raise ValueError("constrained mode needs alpha_max")
            a0, a1 = self.alpha_max
            if not (0.0 < a0 < 0.5 and 0.0 < a1 < 1.0):
                raise ValueError("need alpha_max[0] in (0, 0.5) and alpha_max[1] in (0, 1)")

    def prior(self, i: int) -> float:
        return self.prior0 if i == 0 else self.prior1

    def with_det_cost(self, lam0: float, lam1: float) -> "ProblemConfig":
        return replace(self, det_cost=(float(lam0), float(lam1)))


@dataclass(frozen=True)
class SliceState:
    """Conditional density values at one observation point (or at all of
    them, column-wise).

    ``s0``/``s1`` drive the estimation (posterior-variance) terms. In the
    constrained mode the detection terms read the separate ``s0_d``/``s1_d``
    collections; when these are ``None`` they fall back to ``s0``/``s1``,
    which collapses to the single-collection form.
    """

    s0: np.ndarray
    s1: np.ndarray
    s0_d: np.ndarray | None = None
    s1_d: np.ndarray | None = None

    def __post_init__(self):
        for name in ("s0", "s1", "s0_d", "s1_d"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=float)
            object.__setattr__(self, name, v)
            if np.any(v < 0):
                raise ValueError(f"SliceState.{name} must be nonnegative")

    def det(self, i: int) -> np.ndarray:
        d = self.s0_d if i == 0 else self.s1_d
        return d if d is not None else self.est(i)

    def est(self, i: int) -> np.ndarray:
        return self.s0 if i == 0 else self.s1


@dataclass(frozen=True)
class SliceGradient:
    """Gradient of the pointwise objective, one block per slice field."""

    s0: np.ndarray
    s1: np.ndarray
    s0_d: np.ndarray | None = None
    s1_d: np.ndarray | None = None


def _dot(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.einsum("n,n...->...", v, s)


def _variance_bracket(mv: MomentVectors, s: np.ndarray) -> np.ndarray:
    """a's - (b's)^2 / (c's), with the 0/0 limit defined as 0."""
    cs = _dot(mv.c, s)
    bs = _dot(mv.b, s)
    as_ = _dot(mv.a, s)
    safe = np.where(cs > 0, cs, 1.0)
    return as_ - np.where(cs > 0, bs * bs / safe, 0.0)


def _posterior_ratio(mv: MomentVectors, s: np.ndarray) -> np.ndarray:
    """(b's) / (c's); 0 where the marginal vanishes."""
    cs = _dot(mv.c, s)
    bs = _dot(mv.b, s)
    return np.where(cs > 0, bs / np.where(cs > 0, cs, 1.0), 0.0)


def _accept_cost(i: int, est_i, det_other, mv: tuple[MomentVectors, MomentVectors],
                 cfg: ProblemConfig):
    lam = cfg.det_cost[1 - i]
    mu = cfg.est_cost[i]
    return (
        mu * cfg.prior(i) * _variance_bracket(mv[i], est_i)
        + lam * cfg.prior(1 - i) * _dot(mv[1 - i].c, det_other)
    )


def bayes_accept_cost(i: int, slices: SliceState,
                      mv: tuple[MomentVectors, MomentVectors],
                      cfg: ProblemConfig):
    """Cost of accepting hypothesis ``i`` in the single-collection form."""
    if i not in (0, 1):
        raise ValueError("hypothesis index must be 0 or 1")
    return _accept_cost(i, slices.est(i), slices.est(1 - i), mv, cfg)


def np_accept_cost(i: int, slices: SliceState,
                   mv: tuple[MomentVectors, MomentVectors],
                   cfg: ProblemConfig):
    """Cost of accepting hypothesis ``i`` with split detection/estimation
    collections."""
    if i not in (0, 1):
        raise ValueError("hypothesis index must be 0 or 1")
    return _accept_cost(i, slices.est(i), slices.det(1 - i), mv, cfg)


def accept_costs(slices: SliceState, mv, cfg: ProblemConfig):
    """Both acceptance costs, respecting the configured mode."""
    fn = np_accept_cost if cfg.mode == NP_MODE else bayes_accept_cost
    return fn(0, slices, mv, cfg), fn(1, slices, mv, cfg)


def softmin(d0, d1, xi: float):
    """Smooth lower surrogate of ``min(d0, d1)`` for positive arguments:
    ``xi / log(exp(xi/d0) + exp(xi/d1))``."""
    d0 = np.asarray(d0, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    if np.any(d0 <= 0) or np.any(d1 <= 0):
        raise ValueError("softmin needs strictly positive arguments")
    t0, t1 = xi / d0, xi / d1
    t_max = np.maximum(t0, t1)
    t_min = np.minimum(t0, t1)
    return xi / (t_max + np.log1p(np.exp(t_min - t_max)))


def softmin_weights(d0, d1, xi: float):
    """Partial derivatives of :func:`softmin` with respect to each argument."""
    d0 = np.asarray(d0, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    if np.any(d0 <= 0) or np.any(d1 <= 0):
        raise ValueError("softmin needs strictly positive arguments")
    t0, t1 = xi / d0, xi / d1
    t_max = np.maximum(t0, t1)
    t_min = np.minimum(t0, t1)
    sig = xi / (t_max + np.log1p(np.exp(t_min - t_max)))
    w_small = np.exp(t_min - t_max) / (1.0 + np.exp(t_min - t_max))
    w0 = np.where(t0 >= t1, 1.0 - w_small, w_small)
    return (sig / d0) ** 2 * w0, (sig / d1) ** 2 * (1.0 - w0)


def rho(slices: SliceState, mv, cfg: ProblemConfig, smoothing: str = HARD):
    """Pointwise objective: the (soft)minimum of the two acceptance costs."""
    d0, d1 = accept_costs(slices, mv, cfg)
    if smoothing == HARD:
        return np.minimum(d0, d1)
    if smoothing == SOFT:
        return softmin(d0, d1, cfg.softmin_xi)
    raise ValueError(f"unknown smoothing {smoothing!r}")


def _lift(v: np.ndarray, matrix_slices: bool) -> np.ndarray:
    # moment vectors broadcast against (N,) slices directly, (N, M) columnwise
    return v[:, None] if matrix_slices else v


def rho_gradient(slices: SliceState, mv, cfg: ProblemConfig,
                 smoothing: str = HARD) -> SliceGradient:
    """Gradient of :func:`rho` with respect to every slice entry.

    Hard smoothing follows the active branch (ties resolved toward the
    first hypothesis); soft smoothing blends the branch gradients with the
    softmin partial derivatives. In the split-collection mode the
    detection gradient of the active branch and the estimation gradient of
    the inactive branch are exact zeros.
    """
    d0, d1 = accept_costs(slices, mv, cfg)
    if smoothing == HARD:
        w0 = np.where(np.asarray(d0) <= np.asarray(d1), 1.0, 0.0)
        w1 = 1.0 - w0
    elif smoothing == SOFT:
        w0, w1 = softmin_weights(d0, d1, cfg.softmin_xi)
    else:
        raise ValueError(f"unknown smoothing {smoothing!r}")

    matrix = slices.s0.ndim == 2
    if matrix:
        w0 = np.asarray(w0)[None, :]
        w1 = np.asarray(w1)[None, :]

    # est block of D_i w.r.t. est(i); its est block w.r.t. est(1-i) is zero
    est_blocks = []
    for i in (0, 1):
        r = _posterior_ratio(mv[i], slices.est(i))
        if matrix:
            r = r[None, :]
        est_blocks.append(
            cfg.est_cost[i] * cfg.prior(i) * (
                _lift(mv[i].a, matrix)
                - 2.0 * r * _lift(mv[i].b, matrix)
                + (r * r) * _lift(mv[i].c, matrix)
            )
        )
    g_e0 = w0 * est_blocks[0]
    g_e1 = w1 * est_blocks[1]
    # det block of D_i w.r.t. det(1-i) is the constant lam*prior*c vector
    g_d0 = w1 * (cfg.det_cost[0] * cfg.prior(0)) * _lift(mv[0].c, matrix) \
        * np.ones_like(slices.det(0))
    g_d1 = w0 * (cfg.det_cost[1] * cfg.prior(1)) * _lift(mv[1].c, matrix) \
        * np.ones_like(slices.det(1))
    if cfg.mode == NP_MODE and slices.s0_d is not None:
        return SliceGradient(s0=g_e0, s1=g_e1, s0_d=g_d0, s1_d=g_d1)
    # single-collection form: detection and estimation blocks share arrays
    return SliceGradient(s0=g_e0 + g_d0, s1=g_e1 + g_d1)
