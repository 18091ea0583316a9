"""Admissible product sets and slice-averaged densities.

For a density ``f`` on the integers and integer steps ``X_1..X_n``,

    f_{s,l}(t) = average of f(t + v_1 X_1 + ... + v_l X_l) over v in {0,1}^l with s ones.

The module evaluates these averages directly and through the one-step
recursion, builds the greedy backward path (step record) through the
recursion, and checks the exact product identity such a path satisfies.
All arithmetic is exact when ``f`` has Fraction masses.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .anticoncentration import build_atoms, enumeration_cost, levy_exact, levy_mc
from .model import BudgetExceeded, DiscreteDensity, ParameterError, SliceWindow
from .rng import RandomSource, derive_seed

DIRECT_BUDGET = 10 ** 7


# ---------------------------------------------------------------------------
# integer sets and admissible products

@dataclass(frozen=True)
class Interval:
    """Integers ``lo..hi`` inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ParameterError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def element(self, k: int) -> int:
        return self.lo + k

    def contains(self, a: int) -> bool:
        return self.lo <= a <= self.hi

    def max_abs(self) -> int:
        return max(abs(self.lo), abs(self.hi))

    def min_abs(self) -> int:
        return 0 if self.lo <= 0 <= self.hi else min(abs(self.lo), abs(self.hi))

    def parts(self):
        return (self,)


@dataclass(frozen=True)
class TwoIntervals:
    """Union of ``lo1..hi1`` and ``lo2..hi2`` with ``hi1 < lo2``."""

    lo1: int
    hi1: int
    lo2: int
    hi2: int

    def __post_init__(self):
        if not (self.lo1 <= self.hi1 < self.lo2 <= self.hi2):
            raise ParameterError("TwoIntervals needs lo1 <= hi1 < lo2 <= hi2")

    @classmethod
    def symmetric(cls, inner: int, outer: int) -> "TwoIntervals":
        """``{inner..outer}`` together with its negation."""
        return cls(-outer, -inner, inner, outer)

    @property
    def size(self) -> int:
        return (self.hi1 - self.lo1 + 1) + (self.hi2 - self.lo2 + 1)

    def element(self, k: int) -> int:
        first = self.hi1 - self.lo1 + 1
        return self.lo1 + k if k < first else self.lo2 + (k - first)

    def contains(self, a: int) -> bool:
        return self.lo1 <= a <= self.hi1 or self.lo2 <= a <= self.hi2

    def max_abs(self) -> int:
        return max(abs(self.lo1), abs(self.hi2))

    def min_abs(self) -> int:
        return min(Interval(self.lo1, self.hi1).min_abs(), Interval(self.lo2, self.hi2).min_abs())

    def parts(self):
        return (Interval(self.lo1, self.hi1), Interval(self.lo2, self.hi2))

    def is_symmetric(self) -> bool:
        return self.lo1 == -self.hi2 and self.hi1 == -self.lo2


IntegerSet = Union[Interval, TwoIntervals]


@dataclass(frozen=True)
class AdmissibleSet:
    """A product ``A_1 x ... x A_n`` of integer sets with its structural parameters."""

    N: int
    n: int
    K1: float
    K2: float
    K3: float
    delta: float
    variant: str
    coordinate_sets: tuple

    @property
    def early_pairs(self) -> int:
        """Number of indices i (1-based) with i <= delta*n."""
        return math.floor(self.delta * self.n + 1e-9)

    def log_size(self) -> float:
        return sum(math.log(s.size) for s in self.coordinate_sets)


def _within(s: IntegerSet, lo: float, hi: float) -> bool:
    parts = s.parts()
    return all(lo <= p.lo and p.hi <= hi for p in parts)


def validate_admissible(A: AdmissibleSet) -> list[str]:
    """All violated conditions, each naming its clause and (1-based) coordinate."""
    out = []
    N, n = A.N, A.n
    if N < 1 or n < 1:
        out.append("parameters: N and n must be positive")
    if not (A.K3 > A.K2 > A.K1 > 1):
        out.append("parameters: need K3 > K2 > K1 > 1")
    if not 0 < A.delta < 0.25:
        out.append("parameters: delta must lie in (0, 1/4)")
    if A.variant not in ("P", "Q"):
        out.append(f"parameters: unknown variant {A.variant!r}")
    sets = A.coordinate_sets
    if len(sets) != n:
        out.append(f"product: {len(sets)} coordinate sets for n={n}")
        return out
    if out:
        return out
    if A.log_size() > n * math.log(A.K3 * N) + 1e-12:
        out.append("size: |A_1|...|A_n| exceeds (K3 N)^n")
    for i, s in enumerate(sets, 1):
        if s.max_abs() > n * N:
            out.append(f"magnitude: A_{i} has an element above n*N in absolute value")
    for i, s in enumerate(sets, 1):
        if i > 2 * A.delta * n and not (isinstance(s, Interval) and s.size >= 2 * N + 1):
            out.append(f"bulk: A_{i} must be an integer interval of size >= 2N+1")
    for i in range(1, A.early_pairs + 1):
        even, odd = sets[2 * i - 1], sets[2 * i - 2]
        if A.variant == "P":
            if not (isinstance(even, Interval) and even.size >= 2 * N + 1
                    and _within(even, -A.K1 * N, A.K1 * N)):
                out.append(f"P1: A_{2 * i} must be an interval of size >= 2N+1 inside [-K1 N, K1 N]")
            if not (isinstance(odd, TwoIntervals) and odd.is_symmetric() and odd.size >= 2 * N
                    and odd.min_abs() > A.K2 * N):
                out.append(f"P2: A_{2 * i - 1} must be a symmetric union of two intervals of "
                           "total size >= 2N avoiding [-K2 N, K2 N]")
        else:
            if not (isinstance(even, Interval) and even.size >= 2 * N + 1
                    and _within(even, A.K1 * N, A.K2 * N)):
                out.append(f"Q1: A_{2 * i} must be an interval of size >= 2N+1 inside [K1 N, K2 N]")
            if not (isinstance(odd, Interval) and odd.size >= 2 * N + 1
                    and _within(odd, -A.K2 * N, -A.K1 * N)):
                out.append(f"Q2: A_{2 * i - 1} must be an interval of size >= 2N+1 inside [-K2 N, -K1 N]")
    return out


def admissible_from_witness(witness, n: int, N: int, delta: float) -> AdmissibleSet:
    """Admissible set modelled on a decomposition witness.

    The witness scales are rescaled so that the small block sits in
    ``[-K1 N, K1 N]`` with ``K1 = 2`` and the separated block starts past
    ``K2 N`` with ``K2 = 2 (kappa + nu') / kappa``; a Q witness maps its
    positive and negative blocks to ``[K1 N, K2 N]`` and ``[-K2 N, -K1 N]``
    with ``K2 = max(2 kappa' / kappa, 4)``.  Early pairs number ``floor(delta n)``.
    """
    if witness.case not in ("P", "Q"):
        raise ParameterError("almost-constant vectors have no admissible set")
    k, kp, nup = witness.kappa, witness.kappa_prime, witness.nu_prime
    base = Interval(-N, N)
    pairs = math.floor(delta * n + 1e-9)
    if witness.case == "P":
        K1 = 2.0
        K2 = 2.0 * (k + nup) / k
        inner = math.floor(K2 * N) + 1
        odd = TwoIntervals.symmetric(inner, inner + N - 1)
        even = Interval(-math.floor(K1 * N), math.floor(K1 * N))
        K3 = 2 * K1 + 2
    else:
        K1 = 2.0
        K2 = max(2.0 * kp / k, 4.0)
        lo = math.ceil(K1 * N)
        even = Interval(lo, lo + 2 * N)
        odd = Interval(-lo - 2 * N, -lo)
        K3 = (2 * N + 1) / N
    K3 = max(K3, K2 + 1)
    sets = [base] * n
    for i in range(1, pairs + 1):
        sets[2 * i - 1] = even
        sets[2 * i - 2] = odd
    return AdmissibleSet(N, n, K1, K2, K3, delta, witness.case, tuple(sets))


# ---------------------------------------------------------------------------
# slice averages

def _sparse(f) -> dict:
    if isinstance(f, DiscreteDensity):
        return f.as_dict()
    if isinstance(f, dict):
        return {int(t): v for t, v in f.items() if v}
    raise TypeError("f must be a DiscreteDensity or a dict")


def _value(f, t):
    if isinstance(f, DiscreteDensity):
        return f(t)
    return f.get(t, 0)


def _check_args(X, s: int, ell: int):
    if not 0 <= s <= ell <= len(X):
        raise ParameterError(f"need 0 <= s <= ell <= len(X), got s={s}, ell={ell}, len(X)={len(X)}")


def eval_f_direct(f, X: Sequence[int], s: int, ell: int, t: int):
    """The literal average of ``f(t + sum_{j in S} X_j)`` over s-subsets S of the first ell steps."""
    _check_args(X, s, ell)
    count = math.comb(ell, s)
    if count > DIRECT_BUDGET:
        raise BudgetExceeded("direct slice average", count, DIRECT_BUDGET)
    X = [int(v) for v in X[:ell]]
    total = sum(_value(f, t + sum(X[j] for j in S)) for S in itertools.combinations(range(ell), s))
    return Fraction(total, count) if isinstance(total, (int, Fraction)) else total / count


def direct_table(f, X: Sequence[int], s: int, ell: int) -> dict:
    """All nonzero values of ``f_{s,ell}`` computed from the subset sum, one subset at a time."""
    _check_args(X, s, ell)
    count = math.comb(ell, s)
    if count > DIRECT_BUDGET:
        raise BudgetExceeded("direct slice average", count, DIRECT_BUDGET)
    fs = _sparse(f)
    X = [int(v) for v in X[:ell]]
    out: dict = {}
    for S in itertools.combinations(range(ell), s):
        shift = sum(X[j] for j in S)
        for u, m in fs.items():
            out[u - shift] = out.get(u - shift, 0) + m
    exact = all(isinstance(m, Fraction) for m in fs.values())
    scale = Fraction(1, count) if exact else 1.0 / count
    return {t: v * scale for t, v in out.items() if v}


class AverageTable:
    """Sparse tables of ``f_{s',l'}`` for all ``0 <= s' <= min(s, l') <= l' <= ell``."""

    def __init__(self, tables: dict, X: tuple, s: int, ell: int, exact: bool):
        self.tables = tables
        self.X = X
        self.s = s
        self.ell = ell
        self.exact = exact

    def defined(self, s: int, ell: int) -> bool:
        return (s, ell) in self.tables

    def table(self, s: int, ell: int) -> dict:
        return self.tables[(s, ell)]

    def __call__(self, s: int, ell: int, t: int):
        return self.tables[(s, ell)].get(t, Fraction(0) if self.exact else 0.0)


def eval_f_recursive(f, X: Sequence[int], s: int, ell: int) -> AverageTable:
    """Tables of the slice averages by the one-step recursion

        f_{s,l}(t) = (1 - s/l) f_{s,l-1}(t) + (s/l) f_{s-1,l-1}(t + X_l),

    skipping the term whose coefficient is zero when s is 0 or l.
    """
    _check_args(X, s, ell)
    fs = _sparse(f)
    exact = all(isinstance(m, Fraction) for m in fs.values())
    X = tuple(int(v) for v in X[:ell])
    tables = {(0, l): fs for l in range(ell + 1)}
    for l in range(1, ell + 1):
        x = X[l - 1]
        for sp in range(1, min(s, l) + 1):
            c = Fraction(sp, l) if exact else sp / l
            row: dict = {}
            if sp < l:
                for t, v in tables[(sp, l - 1)].items():
                    row[t] = (1 - c) * v
            for t, v in tables[(sp - 1, l - 1)].items():
                row[t - x] = row.get(t - x, 0) + c * v
            tables[(sp, l)] = {t: v for t, v in row.items() if v}
    return AverageTable(tables, X, s, ell, exact)


# ---------------------------------------------------------------------------
# step records

@dataclass(frozen=True)
class StepRecord:
    """Backward greedy path through the recursion.

    ``t_seq[i]``, ``h_seq[i]`` for i = 0..ell and ``w_seq[i-1]`` = w_i for
    i = 1..ell, with ``h_i = f_{W_i, i}(t_i)`` and ``W_i = w_1 + ... + w_i``.
    """

    ell: int
    s: int
    t_seq: tuple
    w_seq: tuple
    h_seq: tuple

    def W(self, i: int) -> int:
        return sum(self.w_seq[:i])

    def W_bar(self, i: int) -> Fraction:
        return Fraction(self.W(i), i)


def build_step_record(f, X: Sequence[int], s: int, ell: int, t: int,
                      table: AverageTable | None = None) -> StepRecord:
    """Walk from ``(s, ell, t)`` down to level 0, preferring the term that keeps s."""
    if table is None:
        table = eval_f_recursive(f, X, s, ell)
    h = table(s, ell, t)
    if not h > 0:
        raise ParameterError(f"f_(s,ell) vanishes at t={t}; no step record")
    ts, hs, ws = [t], [h], []
    cur_s, cur_t = s, t
    for i in range(ell, 0, -1):
        former_ok = cur_s < i and table(cur_s, i - 1, cur_t) >= hs[-1]
        w = 0 if former_ok else 1
        cur_t = cur_t + w * table.X[i - 1]
        cur_s -= w
        ws.append(w)
        ts.append(cur_t)
        hs.append(table(cur_s, i - 1, cur_t))
    ts.reverse()
    hs.reverse()
    ws.reverse()
    rec = StepRecord(ell, s, tuple(ts), tuple(ws), tuple(hs))
    if rec.W(ell) != s or any(b < a for a, b in zip(hs[1:], hs)):
        raise AssertionError("step record violates its defining relations")
    return rec


def product_identity_check(record: StepRecord) -> tuple[Fraction, Fraction]:
    """``prod_i (1 - Wbar_i)^(1-w_i) Wbar_i^(w_i)`` and ``1 / C(ell, s)``."""
    lhs = Fraction(1)
    for i in range(1, record.ell + 1):
        wb = record.W_bar(i)
        lhs *= wb if record.w_seq[i - 1] else 1 - wb
    return lhs, Fraction(1, math.comb(record.ell, record.s))


@dataclass(frozen=True)
class StepFlags:
    robust: bool
    drop: bool


def classify_steps(record: StepRecord, lam: float, R: float, N: int, f, X: Sequence[int],
                   n: int | None = None, table: AverageTable | None = None) -> list[StepFlags]:
    """Robustness (``lam < Wbar_i < 1 - lam``) and R-drop flags for each step i = 1..ell.

    A drop needs ``f_{W_i - y, i-1}(t_{i-1} + z X_i) <= R / (N sqrt(n))`` for
    y in {0,1}, z in {-1,1}.  Probes with ``W_i - y`` outside ``[0, i-1]``
    name an undefined average and do not block a drop.
    """
    n = len(X) if n is None else n
    if table is None:
        table = eval_f_recursive(f, X, record.s, record.ell)
    bound = R / (N * math.sqrt(n))
    out = []
    for i in range(1, record.ell + 1):
        wb = record.W_bar(i)
        robust = lam < wb < 1 - lam
        Wi = record.W(i)
        drop = True
        for y in (0, 1):
            sp = Wi - y
            if not 0 <= sp <= i - 1:
                continue
            for z in (-1, 1):
                if table(sp, i - 1, record.t_seq[i - 1] + z * table.X[i - 1]) > bound:
                    drop = False
        out.append(StepFlags(robust, drop))
    return out


# ---------------------------------------------------------------------------
# concentration of sums with steps drawn from an admissible set

@dataclass(frozen=True)
class InversionSample:
    sample_id: int
    levy_value: float
    method: str
    exceeds_threshold: bool


@dataclass(frozen=True)
class InversionResult:
    fraction: float
    ci_halfwidth: float
    rows: tuple

    def to_csv(self) -> str:
        lines = ["sample_id,levy_value,method,exceeds_threshold"]
        for r in self.rows:
            lines.append(f"{r.sample_id},{r.levy_value!r},{r.method},{int(r.exceeds_threshold)}")
        return "\n".join(lines) + "\n"


def inversion_experiment(A: AdmissibleSet, p, gamma, L: float, samples: int, rng: RandomSource,
                         atom_budget: int = 2 * 10 ** 6, mc_trials: int = 10 ** 4,
                         ci_z: float = 3.0, check: bool = True) -> InversionResult:
    """Fraction of points x of A with ``Lev(sum b_i x_i, sqrt(n)) >= L / N`` under SliceWindow(p, gamma).

    Points are uniform on A; the concentration is exact when the atom count
    fits ``atom_budget`` and Monte Carlo otherwise.  ``check=False`` skips the
    admissibility check, which lets degenerate products such as singletons through.
    """
    from .sampling import sample_admissible_point

    if samples < 1:
        raise ParameterError("samples must be positive")
    model = SliceWindow(p, gamma)
    seed = derive_seed(rng.seed, "inversion", rng.stream_id)
    exact = enumeration_cost(A.n, model) <= atom_budget
    r = math.sqrt(A.n)
    rows = []
    for k in range(samples):
        x = sample_admissible_point(A, RandomSource(seed, k), check).astype(np.float64)
        if exact:
            est = levy_exact(build_atoms(x, model, exact=False, budget=atom_budget), r)
        else:
            est = levy_mc(x, r, model, mc_trials, RandomSource(seed, samples + k), ci_z)
        v = float(est.value)
        rows.append(InversionSample(k, v, est.method, v >= L / A.N))
    frac = sum(r.exceeds_threshold for r in rows) / samples
    half = ci_z * math.sqrt(max(frac * (1 - frac), 1.0 / samples) / samples)
    return InversionResult(frac, half, tuple(rows))
