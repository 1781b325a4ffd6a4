"""Symmetric linear equilibrium under static linear pricing, by fixed point.

With price p(t) = q1'x(t) + q2'u(t) and every agent conjecturing the
symmetric feedback u(t) = F x(t), the one-shot deviation of agent
(l, tau) yields a best-response row; collecting rows defines a map whose
fixed points are the equilibrium gains.  Deadline rows are pinned to unit
rows.  The map is not a contraction, so iteration is damped; both a
Jacobi sweep (all rows from the current iterate) and a Gauss-Seidel sweep
(rows updated in place) are provided, and convergence is always declared
on the residual of the undamped map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FixedPointUnstableError,
    InvalidParamsError,
    NotConvergedError,
    SingularRowError,
)
from .statespace import FeedbackGain, StateSpace, _as_matrix, _spectral_radius


@dataclass(frozen=True)
class PricingRule:
    """Linear pricing p(t) = q1'x(t) + q2'u(t)."""

    q1: np.ndarray
    q2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q1", np.asarray(self.q1, float))
        object.__setattr__(self, "q2", np.asarray(self.q2, float))
        if not (np.all(np.isfinite(self.q1)) and np.all(np.isfinite(self.q2))):
            raise InvalidParamsError("pricing coefficients must be finite")

    def validated(self, ss: StateSpace) -> "PricingRule":
        if self.q1.shape != (ss.D_c,) or self.q2.shape != (ss.D_c,):
            raise InvalidParamsError(
                f"pricing vectors must have length D_c={ss.D_c}"
            )
        return self


def marginal_cost_pricing(ss: StateSpace) -> PricingRule:
    """p(t) = sum of demands: q1 = 0, q2 = ones."""
    return PricingRule(np.zeros(ss.D_c), np.ones(ss.D_c))


@dataclass(frozen=True)
class FixedPointConfig:
    tol: float = 1e-10
    max_iter: int = 2000
    damping: float = 0.5
    sweep: str = "jacobi"  # or "gauss-seidel"
    init: object = "even-split"  # or "br", or an explicit gain matrix

    def __post_init__(self):
        if self.tol <= 0.0:
            raise InvalidParamsError("tol must be positive")
        if self.max_iter < 1:
            raise InvalidParamsError("max_iter must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise InvalidParamsError("damping must lie in (0, 1]")
        if self.sweep not in ("jacobi", "gauss-seidel"):
            raise InvalidParamsError(f"unknown sweep {self.sweep!r}")


@dataclass
class MpeSolution:
    gain: FeedbackGain
    iterations: int
    residuals: list = field(repr=False)
    stability_margin: float = 0.0

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")


def even_split_gain(ss: StateSpace) -> np.ndarray:
    """Diagonal 1/tau on own backlog, unit deadline rows; stable by
    construction (the closed loop is strictly block upper-triangular)."""
    F = np.zeros((ss.D_c, ss.D_c))
    for i, (_, tau) in enumerate(ss.pairs):
        F[i, i] = 1.0 / tau
    return F


def _best_response_row(S: np.ndarray, q1, q2, ss: StateSpace, i: int, tau: int):
    """Best-response row of agent at slot i with tau periods left."""
    D = ss.D_c
    M = ss.R1 @ (np.eye(D) - S)
    w = q1 + S.T @ q2
    A = np.zeros((D, D))
    Mk = np.eye(D)
    l = ss.pairs[i][0]
    for k in range(1, tau):
        j = ss.position(l, tau - k)
        B = np.outer(w, S[j])
        A += Mk.T @ (B + B.T) @ Mk
        Mk = M @ Mk
    ri = ss.R1[:, i]
    left = ri @ A
    core = M + np.outer(ri, S[i])
    num = left @ core - (q1 + q2 @ S - q2[i] * S[i])
    den = float(ri @ A @ ri + 2.0 * q2[i])
    if abs(den) < 1e-12:
        raise SingularRowError(l, tau, den)
    return num / den


def f_map(F, pricing: PricingRule, ss: StateSpace, sweep: str = "jacobi") -> np.ndarray:
    """One sweep of the best-response map.

    Deadline rows are unit rows; each tau > 1 row is the exact one-shot
    best response against the conjectured gain.  "jacobi" evaluates every
    row against the input gain; "gauss-seidel" lets later rows see rows
    already updated in this sweep.
    """
    pricing = pricing.validated(ss)
    Fm = _as_matrix(F)
    if Fm.shape != (ss.D_c, ss.D_c):
        raise InvalidParamsError(f"gain must be {ss.D_c} x {ss.D_c}")
    q1, q2 = pricing.q1, pricing.q2
    out = Fm.copy() if sweep == "gauss-seidel" else np.zeros_like(Fm)
    src = out if sweep == "gauss-seidel" else Fm
    for i, (l, tau) in enumerate(ss.pairs):
        if tau == 1:
            row = np.zeros(ss.D_c)
            row[i] = 1.0
        else:
            row = _best_response_row(src, q1, q2, ss, i, tau)
        out[i] = row
    return out


def solve_mpe(
    pricing: PricingRule, ss: StateSpace, cfg: FixedPointConfig | None = None
) -> MpeSolution:
    """Iterate the best-response map to a symmetric equilibrium gain.

    Returns the gain with undamped residual at most ``cfg.tol`` in sup
    norm; raises NotConvergedError (with the residual trace) when the
    budget is exhausted and FixedPointUnstableError when a fixed point is
    reached whose closed loop is not stable.
    """
    cfg = cfg or FixedPointConfig()
    pricing = pricing.validated(ss)
    if isinstance(cfg.init, str):
        if cfg.init == "even-split":
            F = even_split_gain(ss)
        elif cfg.init == "br":
            from .statespace import make_f_br

            F = make_f_br(0.1, ss).F
        else:
            raise InvalidParamsError(f"unknown init {cfg.init!r}")
    else:
        F = _as_matrix(cfg.init).copy()

    residuals = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        Fn = f_map(F, pricing, ss, cfg.sweep)
        res = float(np.max(np.abs(Fn - F)))
        residuals.append(res)
        if res <= cfg.tol:
            converged = True
            break
        F = F + cfg.damping * (Fn - F)
        # deadline rows stay exactly unit under damping
        for i in range(ss.L):
            F[i, :] = 0.0
            F[i, i] = 1.0
        if not np.all(np.isfinite(F)):
            raise NotConvergedError(
                f"iteration diverged after {it} sweeps", residuals
            )
    if not converged:
        raise NotConvergedError(
            f"no fixed point within {cfg.max_iter} sweeps (tol {cfg.tol:g})",
            residuals,
        )
    sr = _spectral_radius(ss.R1 @ (np.eye(ss.D_c) - F))
    sol = MpeSolution(FeedbackGain(F, ss), it, residuals, 1.0 - sr)
    if sr >= 1.0:
        raise FixedPointUnstableError(
            f"fixed point reached but closed-loop spectral radius {sr:.6f} >= 1",
            sol,
        )
    return sol
