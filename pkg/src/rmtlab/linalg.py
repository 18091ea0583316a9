"""Exact integer linear algebra, enumeration oracles, and a few numeric routines.

Singularity is always decided exactly.  Single matrices go through
fraction-free (Bareiss) elimination on Python integers.  Stacks of matrices
use a vectorized int64 Bareiss when the Hadamard bound proves the
intermediates fit in a machine word; otherwise they are screened by
elimination modulo a prime (a nonzero determinant mod p certifies
invertibility) and only the matrices that look singular mod p are re-checked
with big integers.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .model import BudgetExceeded, ParameterError, as_real_vector, parse_probability

_INT64_SAFE = 2 ** 62
_PRIME = 2_147_483_647  # 2**31 - 1

ENUMERATION_MAX_N = 5
ENUMERATION_CHUNK = 1 << 18


# ---------------------------------------------------------------------------
# exact elimination on Python integers

def _bareiss_echelon(rows: Sequence[Sequence[int]]):
    """Fraction-free row echelon form; returns ``(echelon_rows, pivot_columns)``."""
    A = [list(map(int, r)) for r in rows]
    m = len(A)
    n = len(A[0]) if m else 0
    prev = 1
    r = 0
    pivots = []
    for c in range(n):
        if r == m:
            break
        piv = next((i for i in range(r, m) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        pv = A[r][c]
        top = A[r]
        for i in range(r + 1, m):
            row = A[i]
            f = row[c]
            for j in range(c + 1, n):
                row[j] = (row[j] * pv - f * top[j]) // prev
            row[c] = 0
        prev = pv
        pivots.append(c)
        r += 1
    return A[:r], pivots


def exact_rank(M) -> int:
    """Rank over the rationals of an integer matrix."""
    a = np.asarray(M)
    if a.ndim != 2:
        raise ParameterError("expected a 2-D matrix")
    if a.size == 0:
        return 0
    _, pivots = _bareiss_echelon(a.tolist())
    return len(pivots)


def is_singular(M) -> bool:
    a = np.asarray(M)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"is_singular needs a square matrix, got shape {a.shape}")
    return exact_rank(a) < a.shape[0]


def exact_det(M) -> int:
    """Determinant of a square integer matrix (Bareiss with row-swap sign tracking)."""
    A = [list(map(int, r)) for r in np.asarray(M).tolist()]
    n = len(A)
    sign, prev = 1, 1
    for k in range(n - 1):
        piv = next((i for i in range(k, n) if A[i][k] != 0), None)
        if piv is None:
            return 0
        if piv != k:
            A[k], A[piv] = A[piv], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1] if n else 1


# ---------------------------------------------------------------------------
# batched singularity tests

def hadamard_01_bound(k: int) -> float:
    """Upper bound on |det| of a k x k {0,1} matrix: (k+1)^((k+1)/2) / 2^k."""
    return (k + 1) ** ((k + 1) / 2) / 2 ** k


def int64_bareiss_safe(n: int) -> bool:
    """True when every Bareiss intermediate of an n x n {0,1} matrix fits in int64."""
    b = hadamard_01_bound(n)
    return 2 * b * b < _INT64_SAFE


def _batch_bareiss_singular(A: np.ndarray) -> np.ndarray:
    """In-place int64 Bareiss on a (T, n, n) stack; returns singular flags."""
    T, n, _ = A.shape
    singular = np.zeros(T, dtype=bool)
    prev = np.ones(T, dtype=np.int64)
    rows = np.arange(T)
    eye = np.eye(n, dtype=np.int64)
    for k in range(n):
        nz = A[:, k:, k] != 0
        has = nz.any(axis=1)
        dead = ~has & ~singular
        if dead.any():
            # no pivot: singular; park the matrix on the identity so it stays finite
            singular |= dead
            A[dead] = eye
            prev[dead] = 1
        rel = nz.argmax(axis=1)
        swap = has & (rel > 0)
        if swap.any():
            idx = rows[swap]
            src = k + rel[swap]
            tmp = A[idx, k, :].copy()
            A[idx, k, :] = A[idx, src, :]
            A[idx, src, :] = tmp
        piv = A[:, k, k].copy()
        if k + 1 < n:
            sub = A[:, k + 1:, k + 1:]
            sub *= piv[:, None, None]
            sub -= A[:, k + 1:, k:k + 1] * A[:, k:k + 1, k + 1:]
            sub //= prev[:, None, None]
        prev = np.where(singular, 1, piv)
    return singular


def _modpow(base: np.ndarray, exp: int, mod: int) -> np.ndarray:
    result = np.ones_like(base)
    b = base % mod
    while exp:
        if exp & 1:
            result = result * b % mod
        b = b * b % mod
        exp >>= 1
    return result


def _batch_singular_mod_p(A: np.ndarray, prime: int = _PRIME) -> np.ndarray:
    """Flags matrices whose determinant vanishes modulo ``prime`` (in-place)."""
    T, n, _ = A.shape
    A %= prime
    singular = np.zeros(T, dtype=bool)
    rows = np.arange(T)
    eye = np.eye(n, dtype=np.int64)
    for k in range(n):
        nz = A[:, k:, k] != 0
        has = nz.any(axis=1)
        dead = ~has & ~singular
        if dead.any():
            singular |= dead
            A[dead] = eye
        rel = nz.argmax(axis=1)
        swap = has & (rel > 0)
        if swap.any():
            idx = rows[swap]
            src = k + rel[swap]
            tmp = A[idx, k, :].copy()
            A[idx, k, :] = A[idx, src, :]
            A[idx, src, :] = tmp
        if k + 1 < n:
            inv = _modpow(A[:, k, k], prime - 2, prime)
            factor = A[:, k + 1:, k] * inv[:, None] % prime
            A[:, k + 1:, k + 1:] -= factor[:, :, None] * A[:, k:k + 1, k + 1:] % prime
            A[:, k + 1:, k + 1:] %= prime
    return singular


def batch_is_singular(stack) -> np.ndarray:
    """Exact singularity flags for a (T, n, n) stack of {0,1} (or small integer) matrices."""
    S = np.asarray(stack)
    if S.ndim != 3 or S.shape[1] != S.shape[2]:
        raise ParameterError(f"expected a (T, n, n) stack, got shape {S.shape}")
    T, n, _ = S.shape
    out = np.zeros(T, dtype=bool)
    if T == 0:
        return out
    zero_line = ~S.any(axis=2).all(axis=1) | ~S.any(axis=1).all(axis=1)
    out |= zero_line
    todo = np.flatnonzero(~zero_line)
    if todo.size == 0:
        return out
    is01 = bool(np.all((S == 0) | (S == 1)))
    A = S[todo].astype(np.int64)
    if is01 and int64_bareiss_safe(n):
        out[todo] = _batch_bareiss_singular(A)
        return out
    suspect = _batch_singular_mod_p(A)
    for i in todo[suspect]:
        out[i] = is_singular(S[i])
    return out


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class KernelVector:
    """Unit right-kernel vector with its exact primitive integer direction.

    ``degenerate`` is set when the kernel has dimension above one, in which
    case the vector is one valid kernel element rather than the canonical one.
    """

    vector: np.ndarray
    exact: tuple
    degenerate: bool


def exact_kernel(H) -> tuple[tuple, bool]:
    """A primitive integer vector spanning (part of) the right kernel of H.

    The first free column is set to one and the others to zero.  The sign is
    fixed so the first nonzero coordinate is positive.  Returns ``(vector,
    degenerate)`` with ``degenerate`` true if the kernel dimension exceeds 1.
    """
    a = np.asarray(H)
    m, n = a.shape
    U, pivots = _bareiss_echelon(a.tolist())
    free = [c for c in range(n) if c not in set(pivots)]
    if not free:
        raise ParameterError("matrix has trivial right kernel")
    f0 = free[0]
    x = [Fraction(0)] * n
    x[f0] = Fraction(1)
    for r in range(len(pivots) - 1, -1, -1):
        c = pivots[r]
        s = sum((U[r][j] * x[j] for j in range(c + 1, n) if x[j]), Fraction(0))
        x[c] = -s / U[r][c]
    den = math.lcm(*(q.denominator for q in x))
    ints = [int(q * den) for q in x]
    g = math.gcd(*ints)
    ints = [v // g for v in ints]
    first = next(v for v in ints if v != 0)
    if first < 0:
        ints = [-v for v in ints]
    return tuple(ints), len(free) > 1


def kernel_vector(H) -> KernelVector:
    """Canonical unit vector in the right kernel of an (n-1) x n matrix."""
    a = np.asarray(H)
    if a.ndim != 2 or a.shape[1] != a.shape[0] + 1:
        raise ParameterError(f"kernel_vector needs an (n-1) x n matrix, got shape {a.shape}")
    ints, degenerate = exact_kernel(a)
    norm = math.sqrt(sum(v * v for v in ints))
    vec = np.array([v / norm for v in ints], dtype=np.float64)
    return KernelVector(vec, ints, degenerate)


# ---------------------------------------------------------------------------
# exhaustive oracles

@dataclass(frozen=True)
class SingularityPolynomial:
    """``counts[k]`` = number of singular n x n {0,1} matrices with exactly k ones."""

    n: int
    counts: tuple

    def evaluate(self, p):
        """Singularity probability at p; exact when p is a Fraction or string."""
        p = parse_probability(p)
        N = self.n * self.n
        return sum(c * p ** k * (1 - p) ** (N - k) for k, c in enumerate(self.counts) if c)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "counts": [str(c) for c in self.counts]})

    @classmethod
    def from_json(cls, text: str) -> "SingularityPolynomial":
        d = json.loads(text)
        return cls(int(d["n"]), tuple(int(c) for c in d["counts"]))


def _decode_matrices(codes: np.ndarray, n: int) -> np.ndarray:
    bits = (codes[:, None] >> np.arange(n * n, dtype=np.int64)) & 1
    return bits.reshape(-1, n, n)


def _count_chunk(args) -> np.ndarray:
    n, lo, hi = args
    codes = np.arange(lo, hi, dtype=np.int64)
    mats = _decode_matrices(codes, n)
    sing = batch_is_singular(mats)
    ones = mats.reshape(len(codes), -1).sum(axis=1)
    return np.bincount(ones[sing], minlength=n * n + 1).astype(np.int64)


def singularity_polynomial(n: int, workers: int = 1,
                           max_n: int = ENUMERATION_MAX_N) -> SingularityPolynomial:
    """Count singular n x n {0,1} matrices by number of ones, by exhaustive enumeration.

    The 2^(n^2) codes are split into fixed chunks (shards) that are counted
    independently and summed, so the result does not depend on ``workers``.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    total = 2 ** (n * n)
    if n > max_n:
        raise BudgetExceeded(f"exhaustive enumeration for n={n}", total, 2 ** (max_n * max_n))
    shards = [(n, lo, min(lo + ENUMERATION_CHUNK, total))
              for lo in range(0, total, ENUMERATION_CHUNK)]
    counts = np.zeros(n * n + 1, dtype=np.int64)
    if workers > 1 and len(shards) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for c in pool.map(_count_chunk, shards):
                counts += c
    else:
        for s in shards:
            counts += _count_chunk(s)
    return SingularityPolynomial(n, tuple(int(c) for c in counts))


class ZeroLineProbability(NamedTuple):
    probability: object
    first_order: object


def zero_line_probability(n: int, p) -> ZeroLineProbability:
    """P[B_n(p) has a zero row or a zero column], by inclusion-exclusion.

    ``first_order`` is ``2 n (1-p)^n``.  Both are exact when p is rational.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    p = parse_probability(p)
    if not 0 < p < 1:
        raise ParameterError(f"p must lie in (0,1), got {p}")
    q = 1 - p
    no_zero_line = 0
    for i in range(n + 1):
        for j in range(n + 1):
            term = math.comb(n, i) * math.comb(n, j) * q ** (i * n + j * n - i * j)
            no_zero_line += term if (i + j) % 2 == 0 else -term
    return ZeroLineProbability(1 - no_zero_line, 2 * n * q ** n)


def slice_vectors(n: int, m: int) -> np.ndarray:
    """All vectors of {0,1}^n with exactly m ones, in lexicographic order of supports."""
    out = np.zeros((math.comb(n, m), n), dtype=np.int8)
    for r, support in enumerate(itertools.combinations(range(n), m)):
        out[r, list(support)] = 1
    return out


def qn_singular_count(n: int, budget: int = 10 ** 7) -> tuple[int, int]:
    """Exact ``(singular, total)`` over all row tuples from the central slice."""
    rows = slice_vectors(n, n // 2)
    r = len(rows)
    total = r ** n
    if total > budget:
        raise BudgetExceeded(f"Q_n enumeration for n={n}", total, budget)
    singular = 0
    chunk = max(1, ENUMERATION_CHUNK // n)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        digits = np.empty((codes.size, n), dtype=np.int64)
        c = codes.copy()
        for i in range(n):
            digits[:, i] = c % r
            c //= r
        singular += int(batch_is_singular(rows[digits]).sum())
    return singular, total


# ---------------------------------------------------------------------------
# numeric routines

def _finite_matrix(M) -> np.ndarray:
    a = np.asarray(M, dtype=np.float64)
    if a.ndim != 2:
        raise ParameterError("expected a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ParameterError("matrix has non-finite entries")
    return a


def least_singular_value(M) -> float:
    """Smallest singular value of a square matrix (LAPACK divide-and-conquer SVD)."""
    a = _finite_matrix(M)
    if a.shape[0] != a.shape[1]:
        raise ParameterError("least_singular_value needs a square matrix")
    return float(np.linalg.svd(a, compute_uv=False)[-1])


def operator_norm(M) -> float:
    """Spectral norm, i.e. the largest singular value."""
    a = _finite_matrix(M)
    return float(np.linalg.svd(a, compute_uv=False)[0]) if a.size else 0.0


def dist_to_rowspan(v, rows, tol: float = 1e-10) -> float:
    """Euclidean distance from ``v`` to the linear span of ``rows``.

    Uses a column-pivoted QR of the spanning vectors; directions whose
    diagonal entry falls below ``tol`` times the largest are discarded.
    """
    v = as_real_vector(v)
    R = np.asarray(rows, dtype=np.float64)
    if R.size == 0:
        return float(np.linalg.norm(v))
    R = np.atleast_2d(R)
    if R.shape[1] != v.size:
        raise ParameterError(f"rows have length {R.shape[1]}, vector has length {v.size}")
    Q, Rf, _ = scipy.linalg.qr(R.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rf))
    if diag.size == 0 or diag[0] == 0:
        return float(np.linalg.norm(v))
    rank = int(np.sum(diag > tol * diag[0]))
    Q = Q[:, :rank]
    resid = v - Q @ (Q.T @ v)
    # one refinement pass against cancellation
    resid = resid - Q @ (Q.T @ resid)
    return float(np.linalg.norm(resid))
