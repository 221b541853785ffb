"""Lattice computation rates, integer coefficient search, and baselines.

The central quantity is the achievable rate of the lattice scheme for
decoding the integer equation ``a`` over channel row ``h`` at power ``P``:

    R(h, P, a) = 1/2 log2(1 + P ||h||^2) - 1/2 log2(loss(h, P, a))
    loss(h, P, a) = ||a||^2 + P (||h||^2 ||a||^2 - (h . a)^2)

clamped at zero. All logarithms here are base 2 and powers are linear
(``P = 10^(dB/10)``).

Coefficient optimization is exact: the search space is the integer ball
``1 <= ||a||^2 <= ceil(||h||^2 P)``, enumerated either exhaustively (any K,
budget-limited) or, for K = 2, through a per-coordinate reduction that
visits every candidate able to enter the requested top-n ranking. Both
paths score candidates with the same loss expression, so they agree bit
for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError

DB_LOG_BASE = 10.0

# default ceiling on the number of enumerated lattice points in exhaustive mode
DEFAULT_SEARCH_BUDGET = 1 << 24

# default number of per-receiver candidates combined in the sum-rate search
DEFAULT_TOP_N = 16


def db_to_linear(db):
    """dB to linear power, P = 10^(dB/10)."""
    return 10.0 ** (np.asarray(db, dtype=float) / DB_LOG_BASE)


@dataclass
class ChannelMatrix:
    """Real K x K channel gains h[m, k] (receiver m, transmitter k)."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise InvalidArgumentError("channel matrix must be square")
        if not np.all(np.isfinite(self.entries)):
            raise InvalidArgumentError("channel gains must be finite")

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def row(self, m: int) -> np.ndarray:
        return self.entries[m]

    def is_generic(self, degree: int = 2, rel_tol: float = 1e-9) -> bool:
        """No zero entries and pairwise-distinct monomials up to ``degree``."""
        from . import diophantine

        if np.any(self.entries == 0.0):
            return False
        mset = diophantine.build_monomial_set(self.entries, degree)
        return diophantine.check_unique_factorization(mset, rel_tol)


def _as_channel(H) -> np.ndarray:
    if isinstance(H, ChannelMatrix):
        return H.entries
    return ChannelMatrix(np.asarray(H, dtype=float)).entries


def _check_vec(h, a, power) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=float)
    a = np.asarray(a)
    if not np.all(np.isfinite(h)):
        raise InvalidArgumentError("h must be finite")
    if not np.all(np.isfinite(power)) or np.any(np.asarray(power) <= 0):
        raise InvalidArgumentError("power must be positive and finite")
    if a.shape != h.shape:
        raise InvalidArgumentError("h and a must have the same length")
    if not np.any(a):
        raise InvalidArgumentError("coefficient vector must be nonzero")
    return h, a.astype(float)


def loss_term(h, power, a) -> float:
    """Rate-loss argument ||a||^2 + P(||h||^2 ||a||^2 - (h.a)^2).

    Always >= ||a||^2 (Cauchy-Schwarz); the P-term vanishes iff a is
    collinear with h.
    """
    h, a = _check_vec(h, a, power)
    n2 = float(a @ a)
    gap = float(h @ h) * n2 - float(h @ a) ** 2
    return n2 + float(power) * gap


def lattice_rate_single(h, power, a) -> float:
    """Achievable lattice rate for one equation, clamped at zero bits."""
    h, a = _check_vec(h, a, power)
    loss = loss_term(h, power, a)
    rate = 0.5 * np.log2(1.0 + float(power) * float(h @ h)) - 0.5 * np.log2(loss)
    return float(max(0.0, rate))


def _canonical_sign(a: np.ndarray) -> np.ndarray:
    nz = np.nonzero(a)[0]
    if nz.size and a[nz[0]] < 0:
        return -a
    return a


def _loss_values(h: np.ndarray, power: float, A: np.ndarray) -> np.ndarray:
    """Vectorized canonical loss for candidate rows of A."""
    n2 = np.einsum("ij,ij->i", A, A)
    dot = A @ h
    return n2 + power * ((h @ h) * n2 - dot * dot)


def _search_bound(h: np.ndarray, power: float) -> float:
    hn2 = float(h @ h)
    if hn2 <= 0.0:
        raise InvalidArgumentError("channel row must be nonzero")
    return float(np.ceil(hn2 * power))


def _enumerate_ball(h: np.ndarray, power: float, budget: int) -> np.ndarray:
    """All sign-canonical integer vectors with 1 <= ||a||^2 <= bound."""
    bound = _search_bound(h, power)
    k = h.size
    amax = int(np.floor(np.sqrt(bound)))
    count = float(2 * amax + 1) ** k
    if count > budget:
        raise ResourceLimitError(
            f"exhaustive coefficient search needs {count:.3g} points for "
            f"||a||^2 <= {bound:.6g} (budget {budget}); use reduced mode (K=2) "
            "or lower the power"
        )
    axes = [np.arange(-amax, amax + 1)] * k
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    n2 = np.einsum("ij,ij->i", grid, grid)
    grid = grid[(n2 >= 1) & (n2 <= bound)]
    # keep one representative per +-pair: first nonzero entry positive
    first = grid[np.arange(len(grid)), np.argmax(grid != 0, axis=1)]
    return grid[first > 0]


def _reduced_candidates_k2(h: np.ndarray, power: float, n: int) -> np.ndarray:
    """Candidate pool provably containing the n best vectors for K = 2.

    For fixed a1 the canonical loss is a strictly convex quadratic in a2,
    so its integer minimizer sits next to the real vertex and the loss
    grows monotonically outward. Walking a2 away from the vertex while
    the loss stays within the running n-th-best bound therefore collects
    every vector that can enter the top n; a1 values are visited in order
    of their per-a1 minimum so the scan stops as soon as no a1 can
    compete. All losses are the same canonical expression the exhaustive
    path evaluates, so rankings agree exactly.
    """
    h1, h2 = float(h[0]), float(h[1])
    if h1 == 0.0:
        if h2 == 0.0:
            raise InvalidArgumentError("channel row must be nonzero")
        # roles swap: a2 is the driving coordinate
        sw = _reduced_candidates_k2(h[::-1], power, n)
        return _canonicalize_rows(sw[:, ::-1])
    bound = _search_bound(h, power)
    hn2 = float(h @ h)  # same accumulated value the bulk scorer uses
    amax = int(np.floor(np.sqrt(bound)))
    a1 = np.arange(0, amax + 1, dtype=float)
    s = np.floor(np.sqrt(np.maximum(bound - a1 * a1, 0.0)))
    vertex = power * h1 * h2 * a1 / (1.0 + power * h1 * h1)

    def loss_pair(aa1, a2):
        n2 = aa1 * aa1 + a2 * a2
        dot = aa1 * h1 + a2 * h2
        return n2 + power * (hn2 * n2 - dot * dot)

    # integer argmin per a1 (floor or ceil of the vertex, clipped): the
    # loss grows monotonically on both sides of it, so outward walks can
    # stop at the first candidate past the bound
    floor_c = np.clip(np.floor(vertex), -s, s)
    ceil_c = np.clip(np.floor(vertex) + 1.0, -s, s)
    best_per = np.full(a1.size, np.inf)
    center = floor_c.copy()
    for a2 in (floor_c, ceil_c):
        n2 = a1 * a1 + a2 * a2
        dot = a1 * h1 + a2 * h2
        loss = n2 + power * (hn2 * n2 - dot * dot)
        ok = (n2 >= 1.0) & (n2 <= bound)
        loss = np.where(ok, loss, np.inf)
        center = np.where(loss < best_per, a2, center)
        best_per = np.minimum(best_per, loss)
    order = np.argsort(best_per, kind="stable")
    rows = []
    kept = []  # losses of collected candidates, for the running bound

    def nth_bound():
        if len(kept) < n:
            return np.inf
        return float(np.partition(np.array(kept), n - 1)[n - 1])

    for i in order:
        cut = nth_bound()
        if best_per[i] > cut:
            break
        aa1 = a1[i]
        lo, hi = -s[i], s[i]
        if aa1 == 0.0:
            lo = 1.0  # a2 < 0 would duplicate the canonical (0, |a2|) vector
        for direction in (1, -1):
            a2 = center[i] if direction == 1 else center[i] - 1.0
            while lo <= a2 <= hi:
                if aa1 != 0.0 or a2 != 0.0:
                    loss = loss_pair(aa1, a2)
                    if loss > nth_bound():
                        break
                    rows.append((aa1, a2))
                    kept.append(loss)
                a2 += direction
    if not rows:
        raise InvalidArgumentError("empty search region")
    return _canonicalize_rows(np.array(rows, dtype=float))


def _canonicalize_rows(A: np.ndarray) -> np.ndarray:
    first = A[np.arange(len(A)), np.argmax(A != 0, axis=1)]
    A = np.where((first < 0)[:, None], -A, A)
    return np.unique(A, axis=0)


def _ranked_candidates(h, power, mode, budget, n) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise InvalidArgumentError("h must be finite")
    if power <= 0 or not np.isfinite(power):
        raise InvalidArgumentError("power must be positive and finite")
    if mode == "auto":
        mode = "reduced" if h.size == 2 else "exhaustive"
    if mode == "reduced":
        if h.size != 2:
            raise InvalidArgumentError("reduced search mode is K=2 only")
        A = _reduced_candidates_k2(h, power, n)
    elif mode == "exhaustive":
        A = _enumerate_ball(h, power, budget)
    else:
        raise InvalidArgumentError(f"unknown search mode {mode!r}")
    loss = _loss_values(h, float(power), A)
    n2 = np.einsum("ij,ij->i", A, A)
    order = np.lexsort(tuple(A.T[::-1]) + (n2, loss))
    return A[order].astype(int)


def best_coefficient_vector(
    h, power, mode: str = "auto", budget: int = DEFAULT_SEARCH_BUDGET
):
    """Argmax of the single-equation rate over the integer ball.

    Ties are broken by smallest squared norm, then lexicographic order;
    the result has its first nonzero entry positive. ``mode`` is one of
    ``auto`` (reduced for K=2, exhaustive otherwise), ``exhaustive``
    (raises ResourceLimitError past the budget) or ``reduced``.

    Returns ``(a, rate_bits)``.
    """
    ranked = _ranked_candidates(h, power, mode, budget, 1)
    a = ranked[0]
    return a, lattice_rate_single(np.asarray(h, dtype=float), power, a)


def top_coefficient_vectors(
    h, power, n: int, mode: str = "auto", budget: int = DEFAULT_SEARCH_BUDGET
) -> list[np.ndarray]:
    """The n best candidate vectors of the coefficient search, ranked."""
    ranked = _ranked_candidates(h, power, mode, budget, n)
    return [ranked[i] for i in range(min(n, len(ranked)))]


def evaluate_sum_rate(H, power, A) -> float:
    """Sum rate of a full coefficient matrix: per message stream k, the
    minimum over receivers that use it (a[m, k] != 0)."""
    H = _as_channel(H)
    A = np.asarray(A)
    k = H.shape[0]
    rates = [lattice_rate_single(H[m], power, A[m]) for m in range(k)]
    total = 0.0
    for col in range(k):
        users = [m for m in range(k) if A[m, col] != 0]
        if not users:
            return 0.0
        total += min(rates[m] for m in users)
    return total


def _rank_exact(A: np.ndarray) -> int:
    """Rank of an integer matrix, exact over the rationals (Fraction pivots)."""
    from fractions import Fraction

    M = [[Fraction(int(x)) for x in row] for row in A]
    rows, cols = len(M), len(M[0])
    rank = 0
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if M[r][c] != 0), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        inv = Fraction(1, 1) / M[rank][c]
        M[rank] = [x * inv for x in M[rank]]
        for r in range(rows):
            if r != rank and M[r][c] != 0:
                f = M[r][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[rank])]
        rank += 1
        if rank == min(rows, cols):
            break
    return rank


@dataclass
class SumRateResult:
    coefficients: np.ndarray
    rate_bits: float
    fallback: bool = False  # identity fallback, no full-rank candidate tuple


def lattice_sum_rate(
    H,
    power,
    top_n: int = DEFAULT_TOP_N,
    mode: str = "auto",
    budget: int = DEFAULT_SEARCH_BUDGET,
    exhaustive_limit: int = 3,
) -> SumRateResult:
    """Best full-rank integer coefficient matrix over candidate tuples.

    Per receiver the ``top_n`` best vectors of the coefficient search are
    combined exhaustively; rank is checked exactly over the rationals.
    Falls back to the identity matrix (flagged) if no combination has
    full rank.
    """
    H = _as_channel(H)
    k = H.shape[0]
    if k > exhaustive_limit:
        raise ResourceLimitError(
            f"K={k} exceeds the exhaustive sum-rate limit {exhaustive_limit}"
        )
    cands = [top_coefficient_vectors(H[m], power, top_n, mode, budget) for m in range(k)]
    best_rate = -1.0
    best_A = None
    import itertools

    for combo in itertools.product(*cands):
        A = np.stack(combo)
        if _rank_exact(A) < k:
            continue
        r = evaluate_sum_rate(H, power, A)
        if r > best_rate:
            best_rate, best_A = r, A
    if best_A is None:
        eye = np.eye(k, dtype=int)
        return SumRateResult(eye, evaluate_sum_rate(H, power, eye), fallback=True)
    return SumRateResult(best_A, best_rate)


def time_sharing_rate(H, power) -> float:
    """Sum rate of round-robin single-user transmission at boosted power."""
    H = _as_channel(H)
    if power <= 0:
        raise InvalidArgumentError("power must be positive")
    k = H.shape[0]
    diag = np.diag(H)
    return float(np.sum(np.log2(1.0 + k * power * diag**2)) / (2.0 * k))


def ia_baseline(k: int, power) -> float:
    """Interference-alignment reference line (K/4) log2 P, plot-only."""
    if power <= 1:
        raise InvalidArgumentError("power must exceed 1")
    return 0.25 * k * float(np.log2(power))


def mimo_upper_bound(H, power, rel_tol: float = 1e-10) -> float:
    """Cooperative MIMO bound: max over tr(Q) <= K P of 1/2 log2 det(I + HQH^T).

    Solved by water-filling across the squared singular values of H; the
    water level is found by bisection to ``rel_tol`` relative accuracy.
    """
    H = _as_channel(H)
    if power <= 0:
        raise InvalidArgumentError("power must be positive")
    k = H.shape[0]
    s2 = np.linalg.svd(H, compute_uv=False) ** 2
    s2 = s2[s2 > 0.0]
    if s2.size == 0:
        return 0.0
    total = k * float(power)

    def allocated(mu):
        return float(np.sum(np.maximum(0.0, mu - 1.0 / s2)))

    lo, hi = 0.0, total + float(1.0 / s2.min())
    while hi - lo > rel_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if allocated(mid) < total:
            lo = mid
        else:
            hi = mid
    q = np.maximum(0.0, 0.5 * (lo + hi) - 1.0 / s2)
    return float(np.sum(0.5 * np.log2(1.0 + s2 * q)))


@dataclass
class TradeoffReport:
    q: float
    psi: float
    loss: float
    lower_bound: float
    holds: bool


def loss_tradeoff_check(h, power, a) -> TradeoffReport:
    """Check loss >= q + (4/pi^2) P ||h||^2 q psi(q)^2.

    ``q = ||a||^2`` and ``psi(q) = max_{k<K} |h_k/||h|| - a_k/sqrt(q)|``
    over the first K-1 coordinates. The bound is stated for the sign of
    ``a`` with nonnegative inner product against ``h`` (the rate is
    invariant under a -> -a), so ``a`` is reoriented first.
    """
    h, a = _check_vec(h, a, power)
    if float(h @ a) < 0.0:
        a = -a
    q = float(a @ a)
    hn = float(np.linalg.norm(h))
    if h.size > 1:
        psi = float(np.max(np.abs(h[:-1] / hn - a[:-1] / np.sqrt(q))))
    else:
        psi = 0.0
    loss = loss_term(h, power, a)
    bound = q + (4.0 / np.pi**2) * float(power) * hn**2 * q * psi**2
    return TradeoffReport(q, psi, loss, bound, loss >= bound * (1.0 - 1e-12))


@dataclass
class SweepRow:
    h2: float
    snr_db: float
    coefficients: tuple
    normalized_rate: float


def normalized_rate_sweep(h2_grid, snr_db_list, mode: str = "auto") -> list[SweepRow]:
    """Best-equation rate for h = (1, h2), normalized by 1/2 log2(1 + (1+h2^2) P).

    Row order follows the (h2, snr) grid deterministically.
    """
    h2_grid = list(h2_grid)
    snr_db_list = list(snr_db_list)
    if not h2_grid or not snr_db_list:
        raise InvalidArgumentError("sweep grids must be nonempty")
    if any(db <= 0 for db in snr_db_list):
        raise InvalidArgumentError("SNRs must be positive in dB")
    rows = []
    for h2 in h2_grid:
        h = np.array([1.0, float(h2)])
        for db in snr_db_list:
            power = float(db_to_linear(db))
            a, rate = best_coefficient_vector(h, power, mode=mode)
            cap = 0.5 * np.log2(1.0 + (1.0 + h2 * h2) * power)
            rows.append(SweepRow(float(h2), float(db), tuple(int(x) for x in a), float(rate / cap)))
    return rows


def dof_slope(rate_bits, powers_db) -> float:
    """Least-squares slope of rate versus (1/2) log2(P): the empirical DoF."""
    rate_bits = np.asarray(rate_bits, dtype=float)
    powers_db = np.asarray(powers_db, dtype=float)
    if rate_bits.size < 3 or rate_bits.size != powers_db.size:
        raise InvalidArgumentError("need at least 3 matched samples")
    if np.any(np.diff(powers_db) <= 0):
        raise InvalidArgumentError("powers must be strictly increasing")
    x = 0.5 * np.log2(db_to_linear(powers_db))
    if np.ptp(x) == 0.0:
        raise InvalidArgumentError("degenerate regression: constant abscissa")
    return float(np.polyfit(x, rate_bits, 1)[0])
