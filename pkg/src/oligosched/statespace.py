"""General-L state space, discrete Lyapunov solvers, and H2 performance.

The market with L agent types is tracked by a backlog vector of dimension
D_c = L(L+1)/2, one slot per (type l, periods-left tau) pair, ordered by
tau-blocks:

    (1,1), (2,1), ..., (L,1), (2,2), ..., (L,2), ..., (L,L)

The shift matrix R1 moves slot (l, tau+1) to (l, tau) each period and drops
the deadline block; the injection matrix R2 places the type-l arrival into
slot (l, l).  Under a static feedback u(t) = F x(t) and unit-variance loads
the stationary covariance Q_F solves

    R1 (I-F) Q_F (I-F)' R1' - Q_F + R2 R2' = 0

and the three performance measures are quadratic forms in Q_F: aggregate
demand e'F Q F'e, aggregate backlog e'Q e, and deadline mismatch
(e_L'(I-F)) Q (e_L'(I-F))'.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParamsError, UnstableError

# Kronecker vectorization is used up to this state dimension; beyond it the
# doubling form of the geometric series is used instead.
_KRON_LIMIT = 60


@dataclass(frozen=True)
class StateSpace:
    """Index map and constant matrices of the L-type backlog system."""

    L: int
    D_c: int
    R1: np.ndarray
    R2: np.ndarray
    e: np.ndarray
    e_L: np.ndarray
    pairs: tuple = field(repr=False)

    def position(self, l: int, tau: int) -> int:
        """0-based slot of agent (type l, tau periods left).

        The 1-based position is sum_{j<tau}(L-j+1) + (l-tau+1).
        """
        if not (1 <= tau <= l <= self.L):
            raise InvalidParamsError(f"no slot for (l={l}, tau={tau}) with L={self.L}")
        off = (tau - 1) * (2 * self.L - tau + 2) // 2
        return off + (l - tau)


def build_state_space(L: int) -> StateSpace:
    """Construct the slot ordering and the shift/injection matrices."""
    if L < 1:
        raise InvalidParamsError(f"L={L!r} must be a positive integer")
    D = L * (L + 1) // 2
    pairs = tuple((l, tau) for tau in range(1, L + 1) for l in range(tau, L + 1))
    pos = {p: i for i, p in enumerate(pairs)}
    R1 = np.zeros((D, D))
    for (l, tau), i in pos.items():
        if tau >= 2:
            R1[pos[(l, tau - 1)], i] = 1.0
    R2 = np.zeros((D, L))
    for l in range(1, L + 1):
        R2[pos[(l, l)], l - 1] = 1.0
    e = np.ones(D)
    e_L = np.zeros(D)
    e_L[:L] = 1.0
    return StateSpace(L, D, R1, R2, e, e_L, pairs)


def _as_matrix(F) -> np.ndarray:
    if isinstance(F, FeedbackGain):
        return F.F
    return np.asarray(F, dtype=float)


@dataclass
class FeedbackGain:
    """Static feedback u(t) = F x(t); stability is recomputed on access."""

    F: np.ndarray
    ss: StateSpace

    @property
    def closed_loop(self) -> np.ndarray:
        return self.ss.R1 @ (np.eye(self.ss.D_c) - self.F)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.closed_loop))))

    @property
    def stable(self) -> bool:
        return self.spectral_radius < 1.0


@dataclass(frozen=True)
class OutputWeights:
    """Nonnegative weights on (demand, backlog, mismatch), unit norm."""

    alpha1: float
    alpha2: float
    alpha3: float

    def __post_init__(self):
        a = (self.alpha1, self.alpha2, self.alpha3)
        if any(x < 0.0 for x in a):
            raise InvalidParamsError(f"weights {a!r} must be nonnegative")
        n = a[0] ** 2 + a[1] ** 2 + a[2] ** 2
        if abs(n - 1.0) > 1e-12:
            raise InvalidParamsError(f"weights {a!r} must have unit norm")

    @classmethod
    def normalized(cls, a1: float, a2: float, a3: float) -> "OutputWeights":
        n = float(np.sqrt(a1 * a1 + a2 * a2 + a3 * a3))
        if n == 0.0:
            raise InvalidParamsError("weights must not all be zero")
        return cls(a1 / n, a2 / n, a3 / n)


@dataclass(frozen=True)
class H2Report:
    """Squared H2 norms of demand (z1), backlog (z2), mismatch (z3)."""

    z1sq: float
    z2sq: float
    z3sq: float


def _spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _solve_dlyap(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve M X M' - X + W = 0 for stable M.

    Kronecker vectorization for small systems, doubling accumulation of the
    geometric series above _KRON_LIMIT.
    """
    n = M.shape[0]
    if n <= _KRON_LIMIT:
        A = np.eye(n * n) - np.kron(M, M)
        X = np.linalg.solve(A, W.reshape(-1)).reshape(n, n)
    else:
        X = W.copy()
        P = M.copy()
        for _ in range(128):
            X = X + P @ X @ P.T
            P = P @ P
            if np.max(np.abs(P)) < 1e-300:
                break
            if not np.all(np.isfinite(P)):
                raise UnstableError("geometric series diverged in Lyapunov solve")
    return 0.5 * (X + X.T)


def solve_lyapunov(F, ss: StateSpace) -> np.ndarray:
    """Stationary covariance Q_F of the closed loop driven by unit loads.

    Raises UnstableError when the closed-loop spectral radius is not below
    one (with a 1e-9 guard band).  The returned matrix satisfies the
    equation to a relative Frobenius residual of 1e-10.
    """
    Fm = _as_matrix(F)
    M = ss.R1 @ (np.eye(ss.D_c) - Fm)
    if _spectral_radius(M) >= 1.0 - 1e-9:
        raise UnstableError(
            f"closed-loop spectral radius {_spectral_radius(M):.6f} >= 1 - 1e-9"
        )
    W = ss.R2 @ ss.R2.T
    Q = _solve_dlyap(M, W)
    res = np.linalg.norm(M @ Q @ M.T - Q + W) / (1.0 + np.linalg.norm(Q))
    if res > 1e-10:
        raise UnstableError(f"Lyapunov residual {res:.3e} exceeds 1e-10")
    return Q


def _series_quadratic_form(M: np.ndarray, R2: np.ndarray, v: np.ndarray,
                           rel_tol: float = 1e-14, max_terms: int = 500000) -> float:
    """v' Q v for the Gramian of (M, R2), summed term by term.

    Each term costs one matrix-vector product, which keeps very large state
    dimensions tractable when only a quadratic form is needed.
    """
    cur = v.astype(float).copy()
    total = 0.0
    prev_norm = None
    for _ in range(max_terms):
        t = R2.T @ cur
        total += float(t @ t)
        cur = M.T @ cur
        nrm = float(np.linalg.norm(cur))
        if nrm == 0.0:
            return total
        if prev_norm is not None and nrm < prev_norm:
            r2 = (nrm / prev_norm) ** 2
            tail = (np.linalg.norm(R2.T) * nrm) ** 2 / max(1e-300, 1.0 - r2)
            if tail <= rel_tol * max(total, 1e-300):
                return total
        if not np.isfinite(nrm) or nrm > 1e200:
            raise UnstableError("quadratic-form series diverged; gain is unstable")
        prev_norm = nrm
    raise UnstableError("quadratic-form series failed to converge")


def h2_norms(F, ss: StateSpace, mismatch_form: str = "deadline") -> H2Report:
    """Squared H2 norms of the three outputs under feedback F.

    ``mismatch_form`` selects the mismatch row vector: "deadline" (default)
    uses e_L'(I - F), measuring unconsumed backlog of exiting agents; the
    alternative "unmasked" uses (e' - e_L' F) and is retained only so the
    two conventions can be compared side by side.
    """
    if mismatch_form not in ("deadline", "unmasked"):
        raise InvalidParamsError(f"unknown mismatch_form {mismatch_form!r}")
    Fm = _as_matrix(F)
    D = ss.D_c
    M = ss.R1 @ (np.eye(D) - Fm)
    v3 = (np.eye(D) - Fm).T @ ss.e_L if mismatch_form == "deadline" \
        else ss.e - Fm.T @ ss.e_L
    if D <= _KRON_LIMIT:
        Q = solve_lyapunov(Fm, ss)
        z1 = float(ss.e @ Fm @ Q @ Fm.T @ ss.e)
        z2 = float(ss.e @ Q @ ss.e)
        z3 = float(v3 @ Q @ v3)
    else:
        z1 = _series_quadratic_form(M, ss.R2, Fm.T @ ss.e)
        z2 = _series_quadratic_form(M, ss.R2, ss.e)
        z3 = _series_quadratic_form(M, ss.R2, v3)
    return H2Report(max(z1, 0.0), max(z2, 0.0), max(z3, 0.0))


def make_f_dl_projection(F, ss: StateSpace) -> FeedbackGain:
    """Copy of F with every deadline row replaced by its own unit row."""
    Fm = _as_matrix(F).copy()
    for i in range(ss.L):
        Fm[i, :] = 0.0
        Fm[i, i] = 1.0
    return FeedbackGain(Fm, ss)


def make_f_alpha(alpha: float, ss: StateSpace, pattern: np.ndarray | None = None) -> FeedbackGain:
    """Member of the cross-response class: unit diagonal, negative
    off-diagonal entries whose magnitudes sum to ``alpha`` per row.

    ``pattern`` supplies nonnegative off-diagonal weights (row-normalized
    internally); uniform weights are used by default.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParamsError(f"alpha={alpha!r} must lie in [0, 1]")
    D = ss.D_c
    if pattern is None:
        pattern = np.ones((D, D))
    pattern = np.asarray(pattern, dtype=float)
    if pattern.shape != (D, D) or np.any(pattern < 0.0):
        raise InvalidParamsError("pattern must be a nonnegative D_c x D_c array")
    F = np.zeros((D, D))
    for i in range(D):
        w = pattern[i].copy()
        w[i] = 0.0
        tot = w.sum()
        if tot > 0.0:
            F[i] = -alpha * w / tot
        F[i, i] = 1.0
    return FeedbackGain(F, ss)


def make_f_br(delta: float, ss: StateSpace) -> FeedbackGain:
    """Boundedly-rational gain: unit deadline rows; other rows have
    diagonal 1-delta and uniform off-diagonal entries -delta/(D_c-1).

    delta in [0, 0.5]; the upper bound keeps the closed loop stable for
    every L.
    """
    if not 0.0 <= delta <= 0.5:
        raise InvalidParamsError(f"delta={delta!r} must lie in [0, 0.5]")
    D = ss.D_c
    F = np.full((D, D), -delta / (D - 1) if D > 1 else 0.0)
    np.fill_diagonal(F, 1.0 - delta)
    for i in range(ss.L):
        F[i, :] = 0.0
        F[i, i] = 1.0
    return FeedbackGain(F, ss)


def br_demand_volatility_approx(delta: float, L: int) -> float:
    """Large-L expansion of the demand volatility of the BR class:
    4L((delta-1/2)^2 + (delta-2/3)^2 delta^2)."""
    return 4.0 * L * ((delta - 0.5) ** 2 + (delta - 2.0 / 3.0) ** 2 * delta ** 2)


# ---------------------------------------------------------------------------
# matrix import/export


def save_matrix_csv(path, mat: np.ndarray, ss: StateSpace) -> None:
    """Row-major CSV with a leading "D_c,L" header line."""
    mat = np.asarray(mat, dtype=float)
    lines = ["D_c,L", f"{ss.D_c},{ss.L}"]
    for row in np.atleast_2d(mat):
        lines.append(",".join(format(v, ".17g") for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix_csv(path) -> tuple[np.ndarray, int, int]:
    """Read a matrix CSV; returns (matrix, D_c, L)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "D_c,L":
        raise InvalidParamsError(f"{path}: missing 'D_c,L' header")
    D, L = (int(v) for v in lines[1].split(","))
    mat = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    if mat.shape[0] != D:
        raise InvalidParamsError(
            f"{path}: expected {D} rows, found {mat.shape[0]}"
        )
    return mat, D, L


def state_space_to_json(ss: StateSpace) -> str:
    return json.dumps(
        {
            "L": ss.L,
            "D_c": ss.D_c,
            "R1": ss.R1.astype(int).tolist(),
            "R2": ss.R2.astype(int).tolist(),
        },
        indent=2,
    )


def state_space_from_json(text: str) -> StateSpace:
    data = json.loads(text)
    ss = build_state_space(int(data["L"]))
    for key, have in (("R1", ss.R1), ("R2", ss.R2)):
        if key in data and not np.array_equal(np.asarray(data[key], float), have):
            raise InvalidParamsError(f"stored {key} disagrees with the construction")
    return ss
