"""Prime-field arithmetic and the shared linear outer code.

Every transmitter encodes every submessage with one common generator matrix
S over F_p, so integer sums performed by the channel commute with encoding:
sum of codewords = codeword of the summed message (mod p). Codes are found
by seeded random search against the Gilbert-Varshamov rate target and
verified by exhaustive minimum-distance enumeration; decoding is exhaustive
minimum Hamming distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError, SearchFailureError
from .seeding import child_rng

DECODE_BUDGET = 1 << 20


def is_prime(n: int) -> bool:
    """Trial division."""
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


class PrimeField:
    """Arithmetic mod a prime p; works on ints and integer arrays."""

    def __init__(self, p: int):
        if not is_prime(int(p)):
            raise InvalidArgumentError(f"{p} is not prime")
        self.p = int(p)

    def add(self, a, b):
        return (np.asarray(a) + np.asarray(b)) % self.p

    def sub(self, a, b):
        return (np.asarray(a) - np.asarray(b)) % self.p

    def mul(self, a, b):
        return (np.asarray(a) * np.asarray(b)) % self.p

    def inv(self, a: int) -> int:
        a = int(a) % self.p
        if a == 0:
            raise InvalidArgumentError("zero has no inverse")
        # extended Euclid
        r0, r1 = self.p, a
        s0, s1 = 0, 1
        while r1:
            q, (r0, r1) = r0 // r1, (r1, r0 - (r0 // r1) * r1)
            s0, s1 = s1, s0 - q * s1
        return s0 % self.p

    def __repr__(self):
        return f"PrimeField({self.p})"


@dataclass
class GeneratorMatrix:
    """Shared linear map S in F_p^(T x message_len), codeword = S w."""

    p: int
    entries: np.ndarray
    attempts: int | None = None  # random-search attempts that produced it

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.int64) % self.p
        if self.entries.ndim != 2:
            raise InvalidArgumentError("generator matrix must be 2-D")
        if self.message_len > self.t:
            raise InvalidArgumentError("message length exceeds block length")

    @property
    def t(self) -> int:
        return self.entries.shape[0]

    @property
    def message_len(self) -> int:
        return self.entries.shape[1]

    def to_text(self) -> str:
        lines = [f"{self.p} {self.t} {self.message_len}"]
        for row in self.entries:
            lines.append(" ".join(str(int(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GeneratorMatrix":
        tokens = text.split()
        p, t, k = int(tokens[0]), int(tokens[1]), int(tokens[2])
        body = np.array([int(x) for x in tokens[3 : 3 + t * k]], dtype=np.int64)
        if body.size != t * k:
            raise InvalidArgumentError("truncated generator matrix text")
        return cls(p, body.reshape(t, k))


def encode(S: GeneratorMatrix, w) -> np.ndarray:
    """Codeword S w over F_p; w may be a vector or a (message_len, n) batch."""
    w = np.asarray(w, dtype=np.int64)
    if w.shape[0] != S.message_len:
        raise InvalidArgumentError(
            f"message length {w.shape[0]} != {S.message_len}"
        )
    return (S.entries @ w) % S.p


def all_messages(p: int, k: int) -> np.ndarray:
    """All p^k messages as rows, lexicographic (first symbol most significant)."""
    idx = np.arange(p**k)
    out = np.empty((p**k, k), dtype=np.int64)
    for j in range(k - 1, -1, -1):
        out[:, j] = idx % p
        idx //= p
    return out


def min_distance(S: GeneratorMatrix, budget: int = DECODE_BUDGET) -> int:
    """Minimum Hamming weight over nonzero codewords (exhaustive)."""
    count = S.p**S.message_len
    if count > budget:
        raise ResourceLimitError(
            f"minimum-distance enumeration of {count} messages exceeds budget {budget}"
        )
    msgs = all_messages(S.p, S.message_len)[1:]
    words = encode(S, msgs.T)
    return int(np.min(np.count_nonzero(words, axis=0)))


def p_ary_entropy(p: int, x: float) -> float:
    """H_p(x) = (x log2(p-1) - x log2 x - (1-x) log2(1-x)) / log2 p."""
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError("entropy argument must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return math.log2(p - 1) / math.log2(p) if p > 2 else 0.0
    h = x * math.log2(p - 1) - x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)
    return h / math.log2(p)


def gv_rate_bound(p: int, t: int, d: int) -> float:
    """Gilbert-Varshamov rate guarantee (1 - H_p((d-1)/T)) log2 p, bits/symbol."""
    if not 2 <= d <= t / 2:
        raise InvalidArgumentError("need 2 <= d <= T/2")
    return (1.0 - p_ary_entropy(p, (d - 1) / t)) * math.log2(p)


def gv_message_len(p: int, t: int, d: int) -> int:
    """Message length meeting the GV rate bound (ceil of T * rate / log2 p)."""
    return max(1, math.ceil(t * (1.0 - p_ary_entropy(p, (d - 1) / t))))


def gv_search(
    p: int,
    t: int,
    d: int,
    max_attempts: int = 2000,
    seed: int = 0,
    message_len: int | None = None,
    budget: int = DECODE_BUDGET,
) -> GeneratorMatrix:
    """Random generator matrices until one meets min_distance >= d.

    ``message_len`` defaults to the GV-bound target. The returned matrix
    carries the number of attempts used; distance is verified exhaustively.
    """
    if not is_prime(p):
        raise InvalidArgumentError(f"{p} is not prime")
    if not 2 <= d <= t / 2:
        raise InvalidArgumentError("need 2 <= d <= T/2")
    k = gv_message_len(p, t, d) if message_len is None else int(message_len)
    for attempt in range(1, max_attempts + 1):
        rng = child_rng(seed, attempt)
        S = GeneratorMatrix(p, rng.integers(0, p, size=(t, k)), attempts=attempt)
        if min_distance(S, budget=budget) >= d:
            return S
    raise SearchFailureError(
        f"no [{t},{k}] code over F_{p} with distance >= {d} in {max_attempts} attempts; "
        "consider lowering message_len by 1"
    )


@dataclass
class DecodeResult:
    message: np.ndarray
    corrections: int
    ambiguous: bool


def md_decode(S: GeneratorMatrix, received, budget: int = DECODE_BUDGET) -> DecodeResult:
    """Exhaustive minimum-Hamming-distance decoding.

    Guaranteed correct for error weight <= floor((d-1)/2). Ties are
    reported ambiguous and resolved to the lexicographically smallest
    message.
    """
    received = np.asarray(received, dtype=np.int64)
    if received.shape != (S.t,):
        raise InvalidArgumentError("received word has wrong length")
    count = S.p**S.message_len
    if count > budget:
        raise ResourceLimitError(
            f"decode enumeration of {count} messages exceeds budget {budget}"
        )
    msgs = all_messages(S.p, S.message_len)
    words = encode(S, msgs.T)
    dists = np.count_nonzero(words != received[:, None], axis=0)
    best = int(np.argmin(dists))  # first occurrence = lexicographically smallest
    ambiguous = int(np.count_nonzero(dists == dists[best])) > 1
    return DecodeResult(msgs[best].copy(), int(dists[best]), ambiguous)
