"""Iterative computation of the least favorable density families.

The families that maximize the induced similarity are found by a
multiplicative proximal scheme: each step moves every density row along
the exponentiated objective gradient, scaled by an inverse weight, and
projects back into its band with a per-row normalization search. The
weight decays exponentially from a heavily regularized start down to a
floor, and the decay restarts whenever a step fails or would decrease the
objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bands import BandModel, DensityFamily, ProjectionError, clip_normalize_rows
from .costs import (
    HARD,
    NP_MODE,
    SOFT,
    ProblemConfig,
    SliceState,
    rho,
    rho_gradient,
)
from .grids import MomentVectors, ObsGrid

__all__ = ["SolverConfig", "LfdSolution", "eta_schedule", "proximal_step", "solve",
           "similarity_objective"]

log = logging.getLogger(__name__)

_EXP_CLIP = 500.0
_ACCEPT_SLACK = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Controls for the proximal iteration.

    The proximal weight follows ``eta0 * decay**(k - k_init)`` but never
    falls below ``eta_floor``; ``k_init`` is moved to the current
    iteration whenever the step becomes unstable, restarting the decay
    from the heavily regularized end.
    """

    eta0: float = 10.0
    decay: float = 0.97
    eta_floor: float = 0.05
    max_iters: int = 3000
    objective_tol: float = 1e-7
    patience: int = 10
    smoothing: str = SOFT

    def __post_init__(self):
        if self.eta0 < self.eta_floor or self.eta_floor <= 0:
            raise ValueError("need eta0 >= eta_floor > 0")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.max_iters < 1 or self.patience < 1:
            raise ValueError("max_iters and patience must be >= 1")
        if self.smoothing not in (HARD, SOFT):
            raise ValueError(f"unknown smoothing {self.smoothing!r}")


@dataclass
class LfdSolution:
    """Converged families plus the iteration record."""

    families: dict[str, DensityFamily]
    slices: SliceState
    objective_trace: np.ndarray
    eta_trace: np.ndarray
    reset_flags: np.ndarray
    iterations: int
    resets: int
    converged: bool
    message: str = ""
    objective: float = field(init=False)

    def __post_init__(self):
        self.objective = float(self.objective_trace[-1])


def eta_schedule(k: int, k_init: int, cfg: SolverConfig) -> float:
    """Exponentially decaying proximal weight, floored at ``eta_floor``."""
    if k < k_init:
        raise ValueError("need k >= k_init")
    return max(cfg.eta0 * cfg.decay ** (k - k_init), cfg.eta_floor)


def similarity_objective(
    slices: SliceState,
    mv: tuple[MomentVectors, MomentVectors],
    cfg: ProblemConfig,
    obs: ObsGrid,
    smoothing: str = HARD,
) -> float:
    """Quadrature of the pointwise objective over the observation grid."""
    return float(np.sum(rho(slices, mv, cfg, smoothing)) * obs.spacing)


def _step_block(cur: np.ndarray, grad: np.ndarray, band: BandModel,
                eta: float, dx: float) -> np.ndarray:
    candidate = cur * np.exp(np.clip(grad / eta, -_EXP_CLIP, _EXP_CLIP))
    return clip_normalize_rows(candidate, band.lower.values, band.upper.values, dx)


def proximal_step(
    current: SliceState,
    bands: tuple[BandModel, BandModel],
    mv: tuple[MomentVectors, MomentVectors],
    cfg: ProblemConfig,
    obs: ObsGrid,
    eta: float,
    smoothing: str = HARD,
) -> SliceState:
    """One multiplicative ascent step followed by the band projection.

    The candidate ``current * exp(grad / eta)`` solves the inner
    divergence-regularized subproblem up to its normalization constant,
    which the projection's per-row scale search supplies.
    """
    g = rho_gradient(current, mv, cfg, smoothing)
    dx = obs.spacing
    s0 = _step_block(current.s0, g.s0, bands[0], eta, dx)
    s1 = _step_block(current.s1, g.s1, bands[1], eta, dx)
    if cfg.mode == NP_MODE and current.s0_d is not None:
        s0_d = _step_block(current.s0_d, g.s0_d, bands[0], eta, dx)
        s1_d = _step_block(current.s1_d, g.s1_d, bands[1], eta, dx)
        return SliceState(s0=s0, s1=s1, s0_d=s0_d, s1_d=s1_d)
    return SliceState(s0=s0, s1=s1)


def _initial_slices(bands: tuple[BandModel, BandModel], cfg: ProblemConfig) -> SliceState:
    s0 = bands[0].nominal.values.copy()
    s1 = bands[1].nominal.values.copy()
    if cfg.mode == NP_MODE:
        return SliceState(s0=s0, s1=s1, s0_d=s0.copy(), s1_d=s1.copy())
    return SliceState(s0=s0, s1=s1)


def _same_slices(a: SliceState, b: SliceState) -> bool:
    if (a.s0_d is None) != (b.s0_d is None):
        return False
    pairs = [(a.s0, b.s0), (a.s1, b.s1)]
    if a.s0_d is not None:
        pairs += [(a.s0_d, b.s0_d), (a.s1_d, b.s1_d)]
    return all(np.array_equal(u, v) for u, v in pairs)


def _to_families(slices: SliceState, cfg: ProblemConfig) -> dict[str, DensityFamily]:
    if cfg.mode == NP_MODE and slices.s0_d is not None:
        return {
            "q0_d": DensityFamily(slices.s0_d, 0),
            "q1_d": DensityFamily(slices.s1_d, 1),
            "q0_e": DensityFamily(slices.s0, 0),
            "q1_e": DensityFamily(slices.s1, 1),
        }
    return {"q0": DensityFamily(slices.s0, 0), "q1": DensityFamily(slices.s1, 1)}


def solve(
    bands: tuple[BandModel, BandModel],
    mv: tuple[MomentVectors, MomentVectors],
    problem: ProblemConfig,
    cfg: SolverConfig,
    obs: ObsGrid,
    init: SliceState | None = None,
) -> LfdSolution:
    """Maximize the induced similarity over the band.

    Steps that fail to produce valid densities, or that would decrease
    the objective beyond round-off slack, are rejected: the iterate is
    kept and the weight decay restarts from ``eta0``. Convergence is
    declared once the relative objective change stays below
    ``objective_tol`` for ``patience`` consecutive iterations.
    """
    for band in bands:
        band.check_feasible(obs)
    cur = init if init is not None else _initial_slices(bands, problem)
    obj = similarity_objective(cur, mv, problem, obs, cfg.smoothing)
    if not np.isfinite(obj):
        raise ValueError("objective is not finite at the initial families")

    trace = [obj]
    etas: list[float] = []
    reset_flags: list[bool] = []
    k_init = 0
    resets = 0
    stall = 0
    converged = False
    message = ""
    k = 0
    for k in range(cfg.max_iters):
        eta = eta_schedule(k, k_init, cfg)
        etas.append(eta)
        try:
            nxt = proximal_step(cur, bands, mv, problem, obs, eta, cfg.smoothing)
            obj_new = similarity_objective(nxt, mv, problem, obs, cfg.smoothing)
            failed = not np.isfinite(obj_new)
        except ProjectionError as exc:
            obj_new = np.nan
            failed = True
            log.debug("projection failed at iteration %d: %s", k, exc)
        if failed or obj_new < obj - _ACCEPT_SLACK:
            k_init = k + 1
            resets += 1
            reset_flags.append(True)
            rel = abs(obj_new - obj) / max(abs(obj), 1e-30) if np.isfinite(obj_new) else np.inf
        else:
            reset_flags.append(False)
            rel = abs(obj_new - obj) / max(abs(obj), 1e-30)
            if _same_slices(nxt, cur):
                trace.append(obj_new)
                converged = True
                message = "fixed point reached"
                k += 1
                break
            cur = nxt
            obj = obj_new
            trace.append(obj)
        stall = stall + 1 if rel < cfg.objective_tol else 0
        if stall >= cfg.patience:
            converged = True
            message = f"objective change below {cfg.objective_tol:g} for {cfg.patience} iterations"
            k += 1
            break
    else:
        k = cfg.max_iters
        message = (
            f"no convergence in {cfg.max_iters} iterations "
            f"(last relative change {rel:.3e}, {resets} resets)"
        )
        log.warning("%s", message)

    return LfdSolution(
        families=_to_families(cur, problem),
        slices=cur,
        objective_trace=np.asarray(trace),
        eta_trace=np.asarray(etas),
        reset_flags=np.asarray(reset_flags, dtype=bool),
        iterations=k,
        resets=resets,
        converged=converged,
        message=message,
    )
