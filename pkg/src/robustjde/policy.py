"""Optimal decision rule and estimators for given density families, and
exact performance evaluation by quadrature."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import NP_MODE, ProblemConfig, SliceState, accept_costs
from .grids import MomentVectors, ObsGrid

__all__ = ["Policy", "Performance", "build_policy", "evaluate"]


@dataclass
class Policy:
    """Pointwise randomized decision rule with per-hypothesis posterior-mean
    estimators and posterior variances on the observation grid."""

    delta: np.ndarray
    estimator0: np.ndarray
    estimator1: np.ndarray
    posterior_var0: np.ndarray
    posterior_var1: np.ndarray
    tie_kappa: float = 1.0
    degenerate_cells: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.delta < 0) or np.any(self.delta > 1):
            raise ValueError("delta must lie in [0, 1]")
        if np.any(self.posterior_var0 < 0) or np.any(self.posterior_var1 < 0):
            raise ValueError("posterior variances must be nonnegative")

    def estimator(self, i: int) -> np.ndarray:
        return self.estimator0 if i == 0 else self.estimator1


@dataclass(frozen=True)
class Performance:
    """Error probabilities, estimation error levels and the assembled
    weighted objective."""

    alpha0: float
    alpha1: float
    mse0: float
    mse1: float
    j_value: float


def _posterior_stats(mv: MomentVectors, fam: np.ndarray, midpoint: float):
    """Posterior mean and variance per grid column; columns with vanishing
    marginal fall back to the parameter-range midpoint with zero variance."""
    cs = mv.c @ fam
    bs = mv.b @ fam
    as_ = mv.a @ fam
    ok = cs > 0
    safe = np.where(ok, cs, 1.0)
    mean = np.where(ok, bs / safe, midpoint)
    var = np.where(ok, as_ / safe - (bs / safe) ** 2, 0.0)
    return mean, np.maximum(var, 0.0), ok


def _param_midpoint(mv: MomentVectors) -> float:
    total = float(np.sum(mv.c))
    if total <= 0:
        return 0.0
    lo = float(np.min(np.where(mv.c > 0, mv.b / np.where(mv.c > 0, mv.c, 1.0), np.inf)))
    hi = float(np.max(np.where(mv.c > 0, mv.b / np.where(mv.c > 0, mv.c, 1.0), -np.inf)))
    return 0.5 * (lo + hi)


def build_policy(
    families: SliceState,
    mv: tuple[MomentVectors, MomentVectors],
    cfg: ProblemConfig,
    tie_kappa: float = 1.0,
) -> Policy:
    """Construct the cost-minimizing policy for the given families.

    The decision rule compares the two acceptance costs pointwise and
    randomizes with ``tie_kappa`` on exact ties; the estimators are the
    posterior means of the estimation families.
    """
    if not 0.0 <= tie_kappa <= 1.0:
        raise ValueError("tie_kappa must lie in [0, 1]")
    d0, d1 = accept_costs(families, mv, cfg)
    d0 = np.asarray(d0, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    delta = np.where(d0 > d1, 1.0, 0.0)
    ties = d0 == d1
    delta[ties] = tie_kappa
    est0, var0, ok0 = _posterior_stats(mv[0], families.est(0), _param_midpoint(mv[0]))
    est1, var1, ok1 = _posterior_stats(mv[1], families.est(1), _param_midpoint(mv[1]))
    degenerate = ~(ok0 & ok1)
    return Policy(
        delta=delta,
        estimator0=est0,
        estimator1=est1,
        posterior_var0=var0,
        posterior_var1=var1,
        tie_kappa=tie_kappa,
        degenerate_cells=degenerate if degenerate.any() else None,
    )


def evaluate(
    policy: Policy,
    eval_families: tuple[np.ndarray, np.ndarray],
    mv: tuple[MomentVectors, MomentVectors],
    cfg: ProblemConfig,
    obs: ObsGrid,
) -> Performance:
    """Quadrature of the performance measures under the given evaluation
    families (one density matrix per hypothesis).

    Estimation errors accrue only on correct decisions; the objective is
    the prior-weighted sum of the cost-scaled error probabilities and
    estimation error levels.
    """
    f0 = np.atleast_2d(np.asarray(eval_families[0], dtype=float))
    f1 = np.atleast_2d(np.asarray(eval_families[1], dtype=float))
    dx = obs.spacing
    delta = policy.delta
    m0 = mv[0].c @ f0
    m1 = mv[1].c @ f1
    alpha0 = float(np.sum(delta * m0) * dx)
    alpha1 = float(np.sum((1.0 - delta) * m1) * dx)

    def quad_err(i, fam, marg, weight):
        est = policy.estimator(i)
        quad = mv[i].a @ fam - 2.0 * est * (mv[i].b @ fam) + est**2 * marg
        return float(np.sum(weight * quad) * dx)

    mse0 = quad_err(0, f0, m0, 1.0 - delta)
    mse1 = quad_err(1, f1, m1, delta)
    lam0, lam1 = cfg.det_cost
    mu0, mu1 = cfg.est_cost
    j = (
        cfg.prior0 * (lam0 * alpha0 + mu0 * mse0)
        + cfg.prior1 * (lam1 * alpha1 + mu1 * mse1)
    )
    return Performance(alpha0=alpha0, alpha1=alpha1, mse0=mse0, mse1=mse1, j_value=j)
