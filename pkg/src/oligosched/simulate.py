"""Monte Carlo simulation of the arrival-driven market.

Simulates the original nonlinear dynamics (Bernoulli arrivals, Gaussian
workloads) for the two-type market under a linear rule, and for general L
under a static feedback gain, producing stationary statistics with
batch-means standard errors, quantiles, tail probabilities, and spike
diagnostics.

Reproducibility contract: replication ``i`` draws from the Philox stream
keyed by ``mix64(seed, i)`` (see rngstreams), with a fixed draw order per
replication, so results are bit-identical for a given (seed, config) no
matter how many worker threads run.

For general L, a gain computed for the everyone-arrives world is applied to
the sparse-arrival world by masking: rows and columns of absent agents are
zeroed and existing deadline agents are forced to consume their backlog.
That masking rule is a modeling choice of this library; reports based on it
should say so.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

from . import rngstreams
from .errors import InsufficientSamplesError, InvalidParamsError, NonStationaryError
from .statespace import StateSpace, _as_matrix
from .strategies import LinearStrategyL2, MarketParamsL2

_DIVERGENCE_GUARD = 1e9


@dataclass(frozen=True)
class SimConfig:
    """Simulation run shape and output selection."""

    horizon: int
    burn_in: int = 0
    replications: int = 1
    seed: int = 0
    nonneg_demand: bool = False
    tail_thresholds: tuple = ()
    quantile_levels: tuple = (0.5, 0.95, 0.999)
    keep_series: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.horizon <= 0:
            raise InvalidParamsError("horizon must be positive")
        if not 0 <= self.burn_in < self.horizon:
            raise InvalidParamsError("burn_in must satisfy 0 <= burn_in < horizon")
        if self.replications < 1:
            raise InvalidParamsError("replications must be >= 1")
        if any(not 0.0 < q < 1.0 for q in self.quantile_levels):
            raise InvalidParamsError("quantile levels must lie strictly in (0, 1)")
        if self.threads < 1:
            raise InvalidParamsError("threads must be >= 1")


@dataclass(frozen=True)
class ConditionalTailReport:
    """Tail of U conditioned on flexible-arrival presence and backlog level."""

    threshold: float
    p_spike_absent: float
    p_spike_present: float
    p_spike_high_backlog: float
    p_spike_low_backlog: float
    n_absent: int
    n_present: int
    stderr_absent: float
    stderr_present: float
    stderr_high_backlog: float
    stderr_low_backlog: float


@dataclass(frozen=True)
class PathStats:
    """Pooled stationary statistics of a simulation run.

    ``mc_stderr`` maps statistic names (mean_u, second_u, var_u, mean_x,
    second_x, quantile_<level>, tail_<M>) to batch-means standard errors;
    extreme-quantile entries are NaN when batches are too short to resolve
    them.
    """

    mean_u: float
    var_u: float
    second_u: float
    mean_x: float
    second_x: float
    quantiles: dict
    tail_probs: dict
    mc_stderr: dict
    n_samples: int
    conditional: ConditionalTailReport | None = None
    series: dict | None = field(default=None, repr=False)


@njit(cache=True, nogil=True)
def _l2_kernel(h1, h2, d1, d2, a, b, g, clamp, guard):
    n = h1.shape[0]
    U = np.empty(n)
    X = np.empty(n)
    carry = 0.0
    bad = -1
    for t in range(n):
        x = carry
        if h1[t]:
            x += d1[t]
        if h2[t]:
            u = -a * x + b * d2[t] + g
            if clamp and u < 0.0:
                u = 0.0
            carry = d2[t] - u
        else:
            u = 0.0
            carry = 0.0
        U[t] = x + u
        X[t] = x
        if x > guard or x < -guard:
            bad = t
            break
    return U, X, bad


@njit(cache=True, nogil=True)
def _general_kernel(R1, R2, F, h, d, L, clamp, guard):
    n = h.shape[0]
    D = R1.shape[0]
    U = np.empty(n)
    Z2 = np.empty(n)
    x = np.zeros(D)
    o = np.zeros(D)
    u = np.zeros(D)
    bad = -1
    for t in range(n):
        x = R1 @ (x - u) + R2 @ (h[t] * d[t])
        o = R1 @ o + R2 @ h[t]
        u = F @ x
        for i in range(D):
            if o[i] == 0.0:
                u[i] = 0.0
        for i in range(L):
            u[i] = x[i] if o[i] != 0.0 else 0.0
        if clamp:
            for i in range(L, D):
                if u[i] < 0.0:
                    u[i] = 0.0
        s_u = 0.0
        s_x = 0.0
        for i in range(D):
            s_u += u[i]
            s_x += x[i]
        U[t] = s_u
        Z2[t] = s_x
        if s_x > guard or s_x < -guard:
            bad = t
            break
    return U, Z2, bad


def _run_replications(worker, replications, threads):
    """Run replication workers, preserving index order in the output."""
    if threads <= 1 or replications == 1:
        return [worker(i) for i in range(replications)]
    out = [None] * replications
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(worker, i): i for i in range(replications)}
        for fut in concurrent.futures.as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


def _batch_values(series: np.ndarray, batch_len: int, fn) -> np.ndarray:
    nb = series.size // batch_len
    if nb < 2:
        return np.array([])
    trimmed = series[: nb * batch_len].reshape(nb, batch_len)
    return np.array([fn(row) for row in trimmed])


def _stderr(vals: np.ndarray) -> float:
    if vals.size < 2:
        return float("nan")
    return float(np.std(vals, ddof=1) / np.sqrt(vals.size))


def _assemble_stats(U, X, flex, cfg: SimConfig, flags=None) -> PathStats:
    n = U.size
    mean_u = float(np.mean(U))
    second_u = float(np.mean(U * U))
    var_u = second_u - mean_u ** 2
    mean_x = float(np.mean(X))
    second_x = float(np.mean(X * X))

    batch_len = max(200, n // (64 * cfg.replications))
    stderr = {
        "mean_u": _stderr(_batch_values(U, batch_len, np.mean)),
        "second_u": _stderr(_batch_values(U * U, batch_len, np.mean)),
        "var_u": _stderr(_batch_values(U, batch_len, lambda r: np.var(r))),
        "mean_x": _stderr(_batch_values(X, batch_len, np.mean)),
        "second_x": _stderr(_batch_values(X * X, batch_len, np.mean)),
    }
    quantiles = {}
    for lv in cfg.quantile_levels:
        quantiles[lv] = float(np.quantile(U, lv))
        vals = (
            _batch_values(U, batch_len, lambda r, lv=lv: np.quantile(r, lv))
            if (1.0 - lv) * batch_len >= 20
            else np.array([])
        )
        stderr[f"quantile_{lv:g}"] = _stderr(vals)
    tails = {}
    for M in cfg.tail_thresholds:
        ind = (U > M).astype(float)
        tails[M] = float(np.mean(ind))
        stderr[f"tail_{M:g}"] = _stderr(_batch_values(ind, batch_len, np.mean))

    conditional = None
    if flex is not None:
        thr = max(cfg.tail_thresholds) if cfg.tail_thresholds else \
            mean_u + 4.0 * np.sqrt(max(var_u, 0.0))
        try:
            conditional = conditional_tail_report(U, flex, X, thr)
        except InsufficientSamplesError:
            conditional = None

    series = None
    if cfg.keep_series:
        series = {"t": np.arange(n), "U": U, "x_sum": X}
        if flags is not None:
            series["o_flags"] = flags
    return PathStats(
        mean_u=mean_u,
        var_u=var_u,
        second_u=second_u,
        mean_x=mean_x,
        second_x=second_x,
        quantiles=quantiles,
        tail_probs=tails,
        mc_stderr=stderr,
        n_samples=n,
        conditional=conditional,
        series=series,
    )


def simulate_l2(s: LinearStrategyL2, p: MarketParamsL2, c: SimConfig) -> PathStats:
    """Simulate the two-type market under linear rule ``s``.

    Per period: arrivals realize, the backlog x(t) is the fresh inflexible
    load plus the previous flexible agent's leftover, deadline agents
    consume their full backlog, and a present flexible agent demands
    u(x, d2) (clamped at zero when ``nonneg_demand``, with the shortfall
    carried; the deadline consumption is never clamped).  Aggregate demand
    is U(t) = x(t) + u.
    """

    def worker(rep):
        gen = rngstreams.stream(c.seed, rep)
        h1 = rngstreams.bernoulli(gen, p.q1, c.horizon)
        h2 = rngstreams.bernoulli(gen, p.q2, c.horizon)
        d1 = p.mu1 + p.sigma1 * rngstreams.standard_normals(gen, c.horizon)
        d2 = p.mu2 + p.sigma2 * rngstreams.standard_normals(gen, c.horizon)
        U, X, bad = _l2_kernel(
            h1, h2, d1, d2, s.a, s.b, s.g, c.nonneg_demand, _DIVERGENCE_GUARD
        )
        if bad >= 0:
            raise NonStationaryError(
                f"|x| exceeded {_DIVERGENCE_GUARD:g} at period {bad} "
                f"(replication {rep}); the strategy does not stabilize the market"
            )
        sl = slice(c.burn_in, None)
        flags = (h1[sl] | (h2[sl] << 1)).astype(np.uint8)
        return U[sl], X[sl], h2[sl].astype(bool), flags

    parts = _run_replications(worker, c.replications, c.threads)
    U = np.concatenate([pt[0] for pt in parts])
    X = np.concatenate([pt[1] for pt in parts])
    flex = np.concatenate([pt[2] for pt in parts])
    flags = np.concatenate([pt[3] for pt in parts])
    return _assemble_stats(U, X, flex, c, flags)


@dataclass(frozen=True)
class ArrivalSpec:
    """Per-type arrival rates and load moments for the general simulator."""

    q: tuple
    mu: tuple | None = None
    sigma: tuple | None = None

    def resolved(self, L: int):
        q = np.broadcast_to(np.asarray(self.q, float), (L,)).copy()
        mu = np.zeros(L) if self.mu is None else \
            np.broadcast_to(np.asarray(self.mu, float), (L,)).copy()
        sg = np.ones(L) if self.sigma is None else \
            np.broadcast_to(np.asarray(self.sigma, float), (L,)).copy()
        if np.any((q < 0) | (q > 1)) or np.any(sg < 0):
            raise InvalidParamsError("arrival rates must be in [0,1], sigmas >= 0")
        return q, mu, sg


def simulate_general(F, ss: StateSpace, arrival: ArrivalSpec, c: SimConfig) -> PathStats:
    """Simulate the L-type market under static feedback ``F``.

    The gain is masked by the existence state each period (absent agents
    demand and receive nothing) and present deadline agents consume their
    backlog regardless of F.  mean_x/second_x refer to the aggregate
    backlog sum.
    """
    Fm = np.ascontiguousarray(_as_matrix(F))
    q, mu, sg = arrival.resolved(ss.L)
    R1 = np.ascontiguousarray(ss.R1)
    R2 = np.ascontiguousarray(ss.R2)

    def worker(rep):
        gen = rngstreams.stream(c.seed, rep)
        h = np.empty((c.horizon, ss.L))
        d = np.empty((c.horizon, ss.L))
        for l in range(ss.L):
            h[:, l] = rngstreams.bernoulli(gen, q[l], c.horizon)
        for l in range(ss.L):
            d[:, l] = mu[l] + sg[l] * rngstreams.standard_normals(gen, c.horizon)
        U, Z2, bad = _general_kernel(
            R1, R2, Fm, h, d, ss.L, c.nonneg_demand, _DIVERGENCE_GUARD
        )
        if bad >= 0:
            raise NonStationaryError(
                f"|sum x| exceeded {_DIVERGENCE_GUARD:g} at period {bad} "
                f"(replication {rep}); the gain does not stabilize the market"
            )
        sl = slice(c.burn_in, None)
        return U[sl], Z2[sl]

    parts = _run_replications(worker, c.replications, c.threads)
    U = np.concatenate([pt[0] for pt in parts])
    Z2 = np.concatenate([pt[1] for pt in parts])
    return _assemble_stats(U, Z2, None, c)


def conditional_tail_report(
    u: np.ndarray, flex_present: np.ndarray, x: np.ndarray, threshold: float
) -> ConditionalTailReport:
    """Tail Pr(U > threshold) split by flexible presence and backlog level.

    Backlog conditioning splits at the empirical median of x.  Raises
    InsufficientSamplesError when any conditioning cell holds fewer than
    100 samples.  Cell standard errors are binomial (spike events at high
    thresholds are nearly independent).
    """
    u = np.asarray(u, float)
    flex = np.asarray(flex_present, bool)
    x = np.asarray(x, float)
    spike = u > threshold
    med = np.median(x)
    cells = {
        "absent": ~flex,
        "present": flex,
        "high": x > med,
        "low": x <= med,
    }
    probs = {}
    errs = {}
    counts = {}
    for name, mask in cells.items():
        n = int(mask.sum())
        if n < 100:
            raise InsufficientSamplesError(
                f"conditioning cell {name!r} has only {n} samples (< 100)"
            )
        ph = float(spike[mask].mean())
        probs[name] = ph
        errs[name] = float(np.sqrt(ph * (1.0 - ph) / n))
        counts[name] = n
    return ConditionalTailReport(
        threshold=float(threshold),
        p_spike_absent=probs["absent"],
        p_spike_present=probs["present"],
        p_spike_high_backlog=probs["high"],
        p_spike_low_backlog=probs["low"],
        n_absent=counts["absent"],
        n_present=counts["present"],
        stderr_absent=errs["absent"],
        stderr_present=errs["present"],
        stderr_high_backlog=errs["high"],
        stderr_low_backlog=errs["low"],
    )


def series_rows(stats: PathStats):
    """Yield (t, U, x_sum, o_flags) rows from a kept series."""
    if stats.series is None:
        raise InvalidParamsError("simulation was run without keep_series")
    s = stats.series
    flags = s.get("o_flags")
    for i in range(len(s["t"])):
        yield (
            int(s["t"][i]),
            float(s["U"][i]),
            float(s["x_sum"][i]),
            int(flags[i]) if flags is not None else 0,
        )
