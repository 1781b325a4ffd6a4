"""Pareto-front synthesis for the (demand, backlog, mismatch) tradeoff.

For a weight triple alpha the scalarized objective is the squared H2 norm
of the weighted output of the plant

    A = R1,  B1 = R2,  B2 = -R1,
    C1  = [0; a2*e'; a3*e_L'],   D12 = [a1*e'; 0; -a3*e_L'],

under static feedback u = F x; equivalently J(F) = a1^2 z1sq + a2^2 z2sq +
a3^2 z3sq.  The optimum admits a convex (LMI) characterization; here the
equivalent smooth problem is solved by gradient descent on F with exact
gradients from the paired Lyapunov equations, with Armijo backtracking and
a hard spectral-radius guard.  The LMIs are kept as a feasibility audit.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rngstreams
from .errors import InvalidParamsError, NoStableInitError, UnstableError
from .fixed_point import even_split_gain
from .statespace import (
    FeedbackGain,
    H2Report,
    OutputWeights,
    StateSpace,
    _as_matrix,
    _solve_dlyap,
    _spectral_radius,
    h2_norms,
    solve_lyapunov,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthesisConfig:
    tol_grad: float = 1e-6
    max_iter: int = 5000
    shrink: float = 0.5
    stability_margin: float = 1e-6
    restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.tol_grad <= 0.0:
            raise InvalidParamsError("tol_grad must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise InvalidParamsError("shrink must lie in (0, 1)")


@dataclass(frozen=True)
class ParetoPoint:
    weights: OutputWeights
    gain: FeedbackGain
    report: H2Report
    objective: float


def _plant_outputs(weights: OutputWeights, ss: StateSpace):
    C1 = np.vstack(
        [np.zeros(ss.D_c), weights.alpha2 * ss.e, weights.alpha3 * ss.e_L]
    )
    D12 = np.vstack(
        [weights.alpha1 * ss.e, np.zeros(ss.D_c), -weights.alpha3 * ss.e_L]
    )
    return C1, D12


def objective_and_gradient(F, weights: OutputWeights, ss: StateSpace):
    """Scalarized H2 objective and its exact gradient in F.

    J = trace((C1 + D12 F) Q (C1 + D12 F)') with Q the closed-loop
    controllability Gramian; the gradient uses the adjoint Gramian P of the
    observability equation and reads 2 (D12'(C1 + D12 F) + B2' P M) Q with
    M = R1(I - F) and B2 = -R1.
    """
    Fm = _as_matrix(F)
    D = ss.D_c
    M = ss.R1 @ (np.eye(D) - Fm)
    if _spectral_radius(M) >= 1.0:
        raise UnstableError("gain does not stabilize the closed loop")
    Q = solve_lyapunov(Fm, ss)
    C1, D12 = _plant_outputs(weights, ss)
    C = C1 + D12 @ Fm
    J = float(np.trace(C @ Q @ C.T))
    P = _solve_dlyap(M.T, C.T @ C)
    B2 = -ss.R1
    G = 2.0 * (D12.T @ C + B2.T @ P @ M) @ Q
    return J, G


def _stable_enough(F, ss, margin):
    return _spectral_radius(ss.R1 @ (np.eye(ss.D_c) - F)) <= 1.0 - margin


def _descend(F0, weights, ss, cfg):
    F = F0.copy()
    J, G = objective_and_gradient(F, weights, ss)
    objectives = [J]
    t = 1.0 / (1.0 + float(np.linalg.norm(G)))
    for _ in range(cfg.max_iter):
        gnorm_inf = float(np.max(np.abs(G)))
        if gnorm_inf <= cfg.tol_grad:
            break
        gsq = float(np.sum(G * G))
        accepted = False
        while t >= 1e-18:
            Fn = F - t * G
            if _stable_enough(Fn, ss, cfg.stability_margin):
                try:
                    Jn, Gn = objective_and_gradient(Fn, weights, ss)
                except UnstableError:
                    Jn = np.inf
                if Jn <= J - 1e-4 * t * gsq:
                    # Barzilai-Borwein trial step for the next iteration
                    sF = Fn - F
                    sG = Gn - G
                    denom = float(np.sum(sF * sG))
                    t_next = float(np.sum(sF * sF)) / denom if denom > 0 else t * 2.0
                    F, J, G = Fn, Jn, Gn
                    t = min(max(t_next, 1e-12), 1e3)
                    accepted = True
                    objectives.append(J)
                    break
            t *= cfg.shrink
        if not accepted:
            break
    return F, J, G, objectives


def synthesize(weights: OutputWeights, ss: StateSpace, cfg: SynthesisConfig | None = None) -> ParetoPoint:
    """Minimize the scalarized H2 objective over static gains.

    Starts from the even-split gain plus ``cfg.restarts`` perturbed
    restarts (seeded deterministically) and keeps the best objective.
    """
    cfg = cfg or SynthesisConfig()
    base = even_split_gain(ss)
    inits = [base]
    for r in range(cfg.restarts):
        gen = rngstreams.stream(cfg.seed, r + 1)
        scale = 0.1
        for _ in range(30):
            cand = base + scale * gen.standard_normal(base.shape)
            if _stable_enough(cand, ss, cfg.stability_margin):
                inits.append(cand)
                break
            scale *= 0.5
    inits = [F0 for F0 in inits if _stable_enough(F0, ss, cfg.stability_margin)]
    if not inits:
        raise NoStableInitError("no stabilizing initial gain found")
    best = None
    for F0 in inits:
        F, J, _, objectives = _descend(F0, weights, ss, cfg)
        if np.any(np.diff(objectives) > 0):
            raise AssertionError("line search accepted an increasing step")
        if best is None or J < best[1]:
            best = (F, J)
    F, _ = best
    report = h2_norms(F, ss)
    objective = (
        weights.alpha1 ** 2 * report.z1sq
        + weights.alpha2 ** 2 * report.z2sq
        + weights.alpha3 ** 2 * report.z3sq
    )
    return ParetoPoint(weights, FeedbackGain(F, ss), report, float(objective))


def pareto_filter(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Drop points strictly dominated in all three coordinates."""
    kept = []
    for p in points:
        dominated = any(
            (q.report.z1sq < p.report.z1sq)
            and (q.report.z2sq < p.report.z2sq)
            and (q.report.z3sq < p.report.z3sq)
            for q in points
            if q is not p
        )
        if not dominated:
            kept.append(p)
    return kept


def trace_front(
    weights_list, ss: StateSpace, cfg: SynthesisConfig | None = None
) -> list[ParetoPoint]:
    """Synthesize each weight, filter dominated points, sort by (z3sq, z2sq).

    Individual synthesis failures are reported as warnings and skipped, so
    a partial front can still be returned.
    """
    if not weights_list:
        raise InvalidParamsError("weight grid must be nonempty")
    points = []
    for w in weights_list:
        try:
            points.append(synthesize(w, ss, cfg))
        except Exception as exc:  # noqa: BLE001 - partial fronts are allowed
            warnings.warn(f"synthesis failed for weights {w}: {exc}", stacklevel=2)
    points = pareto_filter(points)
    points.sort(key=lambda p: (p.report.z3sq, p.report.z2sq))
    return points


def default_weight_grid(
    ratios=(0.3, 1.0, 3.0, 10.0, 100.0),
    mixes=(0.1, 0.3, 0.5, 0.7, 0.9),
) -> list[OutputWeights]:
    """Grid of normalized weights: mismatch ratio x demand/backlog mix."""
    return [
        OutputWeights.normalized(m, 1.0 - m, r) for r in ratios for m in mixes
    ]


def lmi_feasibility_audit(F, weights: OutputWeights, ss: StateSpace, eps: float = 1e-9) -> dict:
    """Check the two strict LMIs near a synthesized gain.

    Uses the eps-inflated Gramian (driving term R2 R2' + eps I) with the
    gain-product variable P = F @ Q, so feasibility simultaneously verifies
    the gain-recovery orientation F = P Q^{-1}.  Returns the minimum
    eigenvalues of both block matrices and the audited trace bound.
    """
    Fm = _as_matrix(F)
    D = ss.D_c
    M = ss.R1 @ (np.eye(D) - Fm)
    if _spectral_radius(M) >= 1.0:
        raise UnstableError("gain does not stabilize the closed loop")
    W = ss.R2 @ ss.R2.T + eps * np.eye(D)
    Q = _solve_dlyap(M, W)
    P = Fm @ Q
    C1, D12 = _plant_outputs(weights, ss)
    AQ_B2P = ss.R1 @ Q - ss.R1 @ P
    blk1 = np.block([[Q, AQ_B2P.T], [AQ_B2P, Q - ss.R2 @ ss.R2.T]])
    CQ_DP = C1 @ Q + D12 @ P
    Mblk = CQ_DP @ np.linalg.solve(Q, CQ_DP.T) + eps * np.eye(3)
    blk2 = np.block([[Q, CQ_DP.T], [CQ_DP, Mblk]])
    min1 = float(np.min(np.linalg.eigvalsh(0.5 * (blk1 + blk1.T))))
    min2 = float(np.min(np.linalg.eigvalsh(0.5 * (blk2 + blk2.T))))
    return {
        "min_eig_stability_lmi": min1,
        "min_eig_performance_lmi": min2,
        "trace_bound": float(np.trace(Mblk)),
        "feasible": min1 >= 0.0 and min2 >= 0.0,
    }
