"""Closed-form linear scheduling strategies for the two-type market.

Every constructor returns the coefficients ``(a, b, g)`` of the rule

    u(x, d2) = -a*x + b*d2 + g

applied by the flexible (two-period) agent arriving in the current period;
agents at their deadline always consume their full backlog.  Covered market
setups: the non-cooperative equilibrium, the cooperative optimum, a market
with K coexisting flexible agents, risk-sensitive cooperative scheduling,
a congestion-fee market, and two fixed reference rules.

All functions are pure and thread-safe.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import (
    InvalidParamsError,
    MultipleStableRootsWarning,
    NoSolutionError,
    NoStableRootError,
)


@dataclass(frozen=True)
class MarketParamsL2:
    """Arrival rates and workload moments for the two agent types.

    q1, q2      Bernoulli arrival rates in [0, 1]
    mu1, mu2    mean workload per arrival (resource units)
    sigma1, sigma2  workload standard deviation, nonnegative
    """

    q1: float
    q2: float
    mu1: float = 0.0
    mu2: float = 0.0
    sigma1: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        for name in ("q1", "q2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParamsError(f"{name}={v!r} must lie in [0, 1]")
        for name in ("sigma1", "sigma2"):
            v = getattr(self, name)
            if v < 0.0:
                raise InvalidParamsError(f"{name}={v!r} must be nonnegative")


@dataclass(frozen=True)
class LinearStrategyL2:
    """Coefficients of u(x, d2) = -a*x + b*d2 + g."""

    a: float
    b: float
    g: float

    def __call__(self, x: float, d2: float) -> float:
        return -self.a * x + self.b * d2 + self.g


@dataclass(frozen=True)
class RiskSensitivity:
    """Risk parameter theta (negative = averse) and discount factor beta."""

    theta: float
    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise InvalidParamsError(f"beta={self.beta!r} must lie in (0, 1)")


@dataclass(frozen=True)
class RiskSensitiveCoeffs:
    """Coefficients of the recursive quadratic cost and induced strategy.

    ``from_fallback`` is set when the closed form failed its residual test
    and the coefficients were recovered from the implicit system directly;
    ``system_residual`` is the final residual of that system.
    """

    r1: float
    r2: float
    r3: float
    from_fallback: bool = False
    system_residual: float = 0.0


@dataclass(frozen=True)
class CoopValue:
    """Quadratic value-function coefficients and optimal per-period cost."""

    A_c: float
    B_c: float
    lambda_c: float


def mpe_strategy(p: MarketParamsL2) -> LinearStrategyL2:
    """Non-cooperative equilibrium strategy.

    a = 1/(2(1+s)), b = 1/(1+1/s), g = (q1*mu1 + q2*mu2/(1+s)) / (2(1+s))
    with s = sqrt(1 - q2/2).
    """
    s = math.sqrt(1.0 - p.q2 / 2.0)
    a = 1.0 / (2.0 * (1.0 + s))
    b = 1.0 / (1.0 + 1.0 / s)
    g = (p.q1 * p.mu1 + p.q2 * p.mu2 / (1.0 + s)) / (2.0 * (1.0 + s))
    return LinearStrategyL2(a, b, g)


def coop_strategy(p: MarketParamsL2) -> LinearStrategyL2:
    """Cooperative optimal stationary strategy.

    a = 1/(1+s), b = 1/(1+1/s), g = (q1*mu1 + q2*mu2/(1+s)) / (1+s) with
    s = sqrt(1 - q2).  At q2 = 1 the analytic limit (a=1, b=0,
    g=q1*mu1+q2*mu2) is returned rather than an error.
    """
    s = math.sqrt(1.0 - p.q2)
    a = 1.0 / (1.0 + s)
    b = 0.0 if p.q2 == 1.0 else 1.0 / (1.0 + 1.0 / s)
    g = (p.q1 * p.mu1 + p.q2 * p.mu2 / (1.0 + s)) / (1.0 + s)
    return LinearStrategyL2(a, b, g)


def coop_value(p: MarketParamsL2) -> CoopValue:
    """Value-function coefficients A_c, B_c and per-period cost lambda_c."""
    q = p.q2
    A = math.sqrt(1.0 - q)
    B = 2.0 * (1.0 - A) * (p.mu2 + p.mu1)
    lam = (
        A * p.sigma1 ** 2
        + A / (1.0 + A) * q * p.sigma2 ** 2
        + p.mu1 ** 2
        + (1.0 + A - A * A) / (1.0 + A) * q * p.mu1 ** 2
        + 2.0 * q * p.mu1 * p.mu2
    )
    return CoopValue(A, B, lam)


def k_agent_strategy(p: MarketParamsL2, K: int) -> LinearStrategyL2:
    """Equilibrium strategy when K flexible agents share each arrival.

    Uses the effective rate ratio K/(K+1); K=1 reproduces the
    non-cooperative strategy and K -> infinity approaches the cooperative
    one.
    """
    if K < 1:
        raise InvalidParamsError(f"K={K!r} must be a positive integer")
    r = K / (K + 1.0)
    s = math.sqrt(1.0 - r * p.q2)
    a = r / (1.0 + s)
    b = 1.0 / (1.0 + 1.0 / s) if s > 0.0 else 0.0
    g = r / (1.0 + s) * (p.q1 * p.mu1 + p.q2 * p.mu2 / (1.0 + s))
    return LinearStrategyL2(a, b, g)


def _rs_system_residual(r1, r2, q, beta, T, mu1, mu2):
    """Max abs residual of the implicit coefficient system."""
    den = 1.0 + T * r2
    if den <= 0.0 or r2 == 0.0:
        return math.inf
    w = 1.0 + beta * r2 / den
    res2 = r2 - (1.0 - q / w)
    res1 = r1 - (q / w) * beta * r2 * (2.0 * mu1 + 2.0 * mu2 + r1 / r2) / den
    return max(abs(res1), abs(res2))


def _rs_r2_closed_form(q, beta, T):
    c = 1.0 - beta - (1.0 - q) * T
    d = beta + T
    if d == 0.0 or c == 0.0:
        return None
    arg = 1.0 + 4.0 * (1.0 - q) * d / (c * c)
    if arg < 0.0:
        return None
    return c * (math.sqrt(arg) - 1.0) / (2.0 * d)


def _rs_r2_fallback(q, beta, T):
    # the implicit r2 equation reduces to (beta+T) r^2 + c r - (1-q) = 0
    c = 1.0 - beta - (1.0 - q) * T
    d = beta + T
    if abs(d) < 1e-300:
        roots = [] if c == 0.0 else [(1.0 - q) / c]
    else:
        disc = c * c + 4.0 * d * (1.0 - q)
        if disc < 0.0:
            roots = []
        else:
            sq = math.sqrt(disc)
            roots = [(-c - sq) / (2.0 * d), (-c + sq) / (2.0 * d)]
    admissible = sorted(r for r in roots if r > 0.0 and 1.0 + T * r > 0.0)
    if not admissible:
        raise NoSolutionError(
            f"no positive coefficient r2 exists for theta*sigma1^2={T!r}, "
            f"beta={beta!r}, q={q!r}"
        )
    return admissible[0]


def risk_sensitive_coeffs(p: MarketParamsL2, rs: RiskSensitivity) -> RiskSensitiveCoeffs:
    """Coefficients (r1, r2, r3) of the risk-sensitive cooperative problem.

    The closed forms are evaluated first and validated against the implicit
    coefficient system; on residual failure the system itself is solved
    (quadratic reduction) and the result is flagged.  Requires q1 = 1, the
    regime in which the recursion is derived.
    """
    if p.q1 != 1.0:
        raise InvalidParamsError("risk-sensitive coefficients require q1 = 1")
    q = p.q2
    beta = rs.beta
    T = rs.theta * p.sigma1 ** 2

    def _r1_closed(r2):
        den = 1.0 + T * r2 - beta * (1.0 - r2)
        if den == 0.0:
            return None
        return 2.0 * beta * r2 * (1.0 - r2) * (p.mu1 + p.mu2) / den

    from_fallback = False
    r2 = _rs_r2_closed_form(q, beta, T)
    r1 = _r1_closed(r2) if r2 is not None else None
    ok = (
        r2 is not None
        and r1 is not None
        and math.isfinite(r2)
        and math.isfinite(r1)
        and r2 > 0.0
        and 1.0 + T * r2 > 0.0
        and _rs_system_residual(r1, r2, q, beta, T, p.mu1, p.mu2) <= 1e-10
    )
    if not ok:
        from_fallback = True
        r2 = _rs_r2_fallback(q, beta, T)
        r3_tmp = beta * r2 / (1.0 + T * r2)
        den = 1.0 + r3_tmp - q * r3_tmp / r2
        if den == 0.0:
            raise NoSolutionError("degenerate linear equation for r1")
        r1 = 2.0 * q * r3_tmp * (p.mu1 + p.mu2) / den
        residual = _rs_system_residual(r1, r2, q, beta, T, p.mu1, p.mu2)
        if residual > 1e-10:
            raise NoSolutionError(
                f"implicit coefficient system not solvable to 1e-10 "
                f"(residual {residual:.3e})"
            )
    else:
        residual = _rs_system_residual(r1, r2, q, beta, T, p.mu1, p.mu2)
    r3 = beta * r2 / (1.0 + T * r2)
    return RiskSensitiveCoeffs(r1, r2, r3, from_fallback, residual)


def risk_sensitive_strategy(
    p: MarketParamsL2,
    rs: RiskSensitivity,
    constant_term: str = "recursion",
) -> LinearStrategyL2:
    """Risk-sensitive cooperative strategy a = 1/(1+r3), b = r3/(1+r3).

    Two conventions circulate for the constant term and they differ when
    mu1 != 0; the default "recursion" carries the 2*mu1 the cost-recursion
    solution produces, g = r3*(2*mu1 + r1/(2*r2))/(1+r3), while "headline"
    selects g = r3*(mu1 + r1/(2*r2))/(1+r3).  Neither is silently
    reconciled into the other.
    """
    if constant_term not in ("recursion", "headline"):
        raise InvalidParamsError(
            f"constant_term={constant_term!r} must be 'recursion' or 'headline'"
        )
    c = risk_sensitive_coeffs(p, rs)
    a = 1.0 / (1.0 + c.r3)
    b = c.r3 / (1.0 + c.r3)
    mu_term = 2.0 * p.mu1 if constant_term == "recursion" else p.mu1
    g = c.r3 * (mu_term + c.r1 / (2.0 * c.r2)) / (1.0 + c.r3)
    return LinearStrategyL2(a, b, g)


def _cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _real_cubic_roots(c3, c2, c1, c0):
    """Real roots of c3 x^3 + c2 x^2 + c1 x + c0, by Cardano/trig formulas."""
    if abs(c3) < 1e-14:
        if abs(c2) < 1e-14:
            if abs(c1) < 1e-14:
                return []
            return [-c0 / c1]
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return []
        sq = math.sqrt(disc)
        return [(-c1 - sq) / (2.0 * c2), (-c1 + sq) / (2.0 * c2)]
    A = c2 / c3
    B = c1 / c3
    C = c0 / c3
    # depressed form t^3 + pt + q with x = t - A/3
    pp = B - A * A / 3.0
    qq = 2.0 * A ** 3 / 27.0 - A * B / 3.0 + C
    shift = -A / 3.0
    disc = (qq / 2.0) ** 2 + (pp / 3.0) ** 3
    if disc > 0.0:
        sq = math.sqrt(disc)
        return [shift + _cbrt(-qq / 2.0 + sq) + _cbrt(-qq / 2.0 - sq)]
    if disc == 0.0:
        if pp == 0.0:
            return [shift]
        return [shift + 3.0 * qq / pp, shift - 3.0 * qq / (2.0 * pp)]
    # three distinct real roots
    r = math.sqrt(-(pp ** 3) / 27.0)
    phi = math.acos(min(1.0, max(-1.0, -qq / (2.0 * r))))
    m = 2.0 * math.sqrt(-pp / 3.0)
    return [shift + m * math.cos((phi + 2.0 * math.pi * k) / 3.0) for k in range(3)]


def congestion_strategy(p: MarketParamsL2, gamma: float) -> LinearStrategyL2:
    """Equilibrium strategy when agents pay a fee share gamma of others' cost.

    The backlog coefficient solves

        gamma*q*a^3 - (1+gamma)*q*a^2 + 2*a - (1+gamma)/2 = 0,   q = q2,

    restricted to the real roots in (0, 1) that keep the backlog recursion
    stationary (q*a^2 < 1); the smallest such root is selected and a warning
    is emitted if several qualify.  Then b = 1 - 2a/(1+gamma) and the
    constant term follows from the companion linear equation.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParamsError(f"gamma={gamma!r} must lie in [0, 1]")
    q = p.q2
    c3, c2, c1, c0 = gamma * q, -(1.0 + gamma) * q, 2.0, -(1.0 + gamma) / 2.0

    def _poly(a):
        return ((c3 * a + c2) * a + c1) * a + c0

    def _dpoly(a):
        return (3.0 * c3 * a + 2.0 * c2) * a + c1

    polished = []
    for a in _real_cubic_roots(c3, c2, c1, c0):
        d = _dpoly(a)
        if d != 0.0:
            a = a - _poly(a) / d
        polished.append(a)
    cands = sorted(
        a for a in polished if 0.0 < a < 1.0 and q * a * a < 1.0 and q * a < 1.0
    )
    # collapse near-duplicates produced by the multiple-root branches
    uniq = []
    for a in cands:
        if not uniq or a - uniq[-1] > 1e-9:
            uniq.append(a)
    if not uniq:
        raise NoStableRootError(
            f"no stable root in (0,1) for gamma={gamma!r}, q={q!r}"
        )
    if len(uniq) > 1:
        warnings.warn(
            f"{len(uniq)} stable roots for gamma={gamma!r}, q={q!r}; "
            f"selected the smallest",
            MultipleStableRootsWarning,
            stacklevel=2,
        )
    a = uniq[0]
    b = 1.0 - 2.0 * a / (1.0 + gamma)
    t = 2.0 * gamma * a - 1.0 - gamma
    num = ((1.0 - q) * (1.0 + gamma) - q * t * (1.0 - a)) * p.q1 * p.mu1 \
        - q * t * b * p.mu2
    den = q * t + (1.0 + gamma) / a
    g = num / den
    return LinearStrategyL2(a, b, g)


def baseline_strategies() -> tuple[LinearStrategyL2, LinearStrategyL2]:
    """Reference rules: even split u = d2/2 and immediate completion u = d2."""
    naive = LinearStrategyL2(0.0, 0.5, 0.0)
    none = LinearStrategyL2(0.0, 1.0, 0.0)
    return naive, none
