"""Lévy concentration of weighted Boolean sums.

The exact routines enumerate the law of ``sum_i b_i x_i`` as a sorted list of
atoms.  For a closed window of half-width r the supremum over centers is
attained with the window's left end on an atom, so the concentration value is
a sweep over atoms with a binary search for each right end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import (BudgetExceeded, IidBernoulli, ParameterError, Slice, SliceWindow,
                    WeightModel, as_real_vector, as_unit_vector, sum_weights)
from .rng import RandomSource, derive_seed
from .sampling import sample_weight_vectors

MERGE_TOL = 1e-12
DEFAULT_BUDGET = 10 ** 8
IID_MAX_N = 26


class DegenerateInput(ParameterError):
    """The requested quantity is undefined for this input (e.g. a zero denominator)."""


@dataclass(frozen=True)
class AtomSet:
    """Law of ``sum b_i x_i``: strictly increasing ``values`` with their ``masses``.

    ``masses`` is a float array, or a tuple of Fractions for exact sets.
    """

    values: np.ndarray
    masses: object
    model: WeightModel | None
    n: int

    @property
    def exact(self) -> bool:
        return isinstance(self.masses, tuple)

    def float_masses(self) -> np.ndarray:
        return np.array([float(m) for m in self.masses]) if self.exact else self.masses

    def to_text(self) -> str:
        """Two whitespace-separated columns, value then mass, one atom per line."""
        lines = []
        for v, m in zip(self.values, self.masses):
            mass = f"{m.numerator}/{m.denominator}" if isinstance(m, Fraction) else repr(float(m))
            lines.append(f"{float(v)!r} {mass}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ConcentrationEstimate:
    value: float
    radius: float
    method: str
    trials: int
    ci_halfwidth: float
    model: WeightModel | None

    def __post_init__(self):
        if self.method == "exact" and self.ci_halfwidth != 0:
            raise ValueError("exact estimates carry no confidence interval")


def enumeration_cost(n: int, model: WeightModel) -> int:
    return sum(math.comb(n, k) for k in model.allowed_sums(n))


def _enumerate_sums(x: np.ndarray, ks: range):
    """All sums over {0,1}^n vectors whose weight lies in ``ks``, with their weights."""
    n = x.size
    sums = np.zeros(1)
    kk = np.zeros(1, dtype=np.int16)
    for i, xi in enumerate(x):
        sums = np.concatenate([sums, sums + xi])
        kk = np.concatenate([kk, kk + 1])
        left = n - i - 1
        keep = (kk <= ks.stop - 1) & (kk + left >= ks.start)
        if not keep.all():
            sums, kk = sums[keep], kk[keep]
    return sums, kk


def _merge_groups(sorted_vals: np.ndarray) -> np.ndarray:
    """Group ids for sorted values, chaining neighbours closer than MERGE_TOL."""
    if sorted_vals.size == 0:
        return np.zeros(0, dtype=np.int64)
    new = np.empty(sorted_vals.size, dtype=bool)
    new[0] = True
    new[1:] = np.diff(sorted_vals) > MERGE_TOL
    return np.cumsum(new) - 1


def build_atoms(x, model: WeightModel, exact: bool | None = None,
                budget: int = DEFAULT_BUDGET) -> AtomSet:
    """Exact law of ``sum b_i x_i`` with ``b`` drawn from ``model``.

    ``exact`` defaults to True when every vector weight is a Fraction (slice
    models, or Fraction probabilities).  Atoms closer than 1e-12 are merged.
    """
    x = as_real_vector(x)
    n = x.size
    if isinstance(model, IidBernoulli) and n > IID_MAX_N:
        raise BudgetExceeded(f"iid enumeration with n={n}", 2.0 ** n, 2.0 ** IID_MAX_N)
    cost = enumeration_cost(n, model)
    if cost > budget:
        raise BudgetExceeded(f"atom enumeration for {type(model).__name__} with n={n}",
                             cost, budget)
    ks = model.allowed_sums(n)
    weights = sum_weights(model, n)
    if exact is None:
        exact = all(isinstance(w, Fraction) for w in weights.values())
    sums, kk = _enumerate_sums(x, ks)
    order = np.argsort(sums, kind="stable")
    sums, kk = sums[order], kk[order]
    groups = _merge_groups(sums)
    n_groups = int(groups[-1]) + 1
    starts = np.flatnonzero(np.r_[True, np.diff(groups) > 0])
    values = sums[starts]
    if exact:
        k_list = sorted(weights)
        counts = np.zeros((n_groups, len(k_list)), dtype=np.int64)
        np.add.at(counts, (groups, kk - k_list[0]), 1)
        wv = [Fraction(weights[k]) for k in k_list]
        masses = tuple(sum((int(c) * w for c, w in zip(row, wv) if c), Fraction(0))
                       for row in counts)
    else:
        w_arr = np.zeros(n + 1)
        for k, w in weights.items():
            w_arr[k] = float(w)
        masses = np.bincount(groups, weights=w_arr[kk], minlength=n_groups)
    return AtomSet(values, masses, model, n)


def atoms_from_samples(samples) -> AtomSet:
    """Empirical law of a sample: each draw carries mass 1/len(samples)."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    groups = _merge_groups(s)
    starts = np.flatnonzero(np.r_[True, np.diff(groups) > 0])
    masses = np.bincount(groups).astype(np.float64) / s.size
    return AtomSet(s[starts], masses, None, 0)


def _window_max(values: np.ndarray, cum, width: float, closed: bool = True):
    """Largest mass of atoms in any window ``[a_i, a_i + width]`` (or half-open).

    ``cum`` is the prefix-sum array of masses (length K+1).
    """
    if closed:
        ends = np.searchsorted(values, values + width + MERGE_TOL, side="right")
    else:
        ends = np.searchsorted(values, values + width - MERGE_TOL, side="left")
    if isinstance(cum, np.ndarray):
        return float(np.max(cum[ends] - cum[:-1]))
    return max(cum[e] - cum[i] for i, e in enumerate(ends.tolist()))


def _prefix(masses):
    if isinstance(masses, tuple):
        out = [Fraction(0)]
        for m in masses:
            out.append(out[-1] + m)
        return out
    return np.concatenate([[0.0], np.cumsum(masses)])


def levy_exact(atoms: AtomSet, r: float) -> ConcentrationEstimate:
    """``sup_z P[|S - z| <= r]`` for the atom law S, exactly."""
    if r < 0:
        raise ParameterError("radius must be nonnegative")
    value = _window_max(atoms.values, _prefix(atoms.masses), 2.0 * r)
    if isinstance(value, Fraction):
        value = min(value, Fraction(1))
    else:
        value = min(float(value), 1.0)
    return ConcentrationEstimate(value, float(r), "exact", 0, 0.0, atoms.model)


def sample_sums(x, model: WeightModel, trials: int, rng: RandomSource,
                chunk: int = 1 << 16) -> np.ndarray:
    """``trials`` independent draws of ``sum b_i x_i``; trial t uses stream t of a derived seed."""
    x = as_real_vector(x)
    seed = derive_seed(rng.seed, "sums", rng.stream_id)
    out = np.empty(trials)
    for lo in range(0, trials, chunk):
        idx = np.arange(lo, min(lo + chunk, trials))
        b = sample_weight_vectors(x.size, model, seed, idx)
        out[lo:lo + idx.size] = b @ x
    return out


def levy_mc(x, r: float, model: WeightModel, trials: int, rng: RandomSource,
            ci_z: float = 3.0) -> ConcentrationEstimate:
    """Monte Carlo concentration: the exact supremum over windows of the empirical law."""
    if trials < 1000:
        raise ParameterError("levy_mc needs at least 1000 trials")
    if r < 0:
        raise ParameterError("radius must be nonnegative")
    s = np.sort(sample_sums(x, model, trials, rng))
    ends = np.searchsorted(s, s + 2.0 * r + MERGE_TOL, side="right")
    count = int(np.max(ends - np.arange(s.size)))
    v = count / trials
    half = ci_z * math.sqrt(max(v * (1 - v), 1.0 / trials) / trials)
    return ConcentrationEstimate(v, float(r), "mc", trials, half, model)


# ---------------------------------------------------------------------------
# threshold function

def threshold_from_atoms(atoms: AtomSet, L: float, max_iter: int = 1_000_000) -> float:
    """``sup{t in (0,1): Lev(t) > L t}`` for the step function ``Lev`` of ``atoms``.

    Start from ``u = min(1, 1/L)``, above which the condition cannot hold.
    Let ``v`` be the left limit of ``Lev`` at ``u``.  If ``v >= L u`` the
    condition holds on an interval ending at ``u`` and the supremum is ``u``.
    Otherwise it fails on ``[v/L, u)`` as well, so continue from ``u = v/L``.
    The values of ``v`` come from a finite set, so the loop terminates.
    Returns 0 when the set is empty, which happens only for ``L = inf``.
    """
    if not L > 0:
        raise ParameterError("L must be positive")
    if math.isinf(L):
        return 0.0
    values = atoms.values
    cum = _prefix(atoms.float_masses())
    u = min(1.0, 1.0 / L)
    for _ in range(max_iter):
        v = _window_max(values, cum, 2.0 * u, closed=False)
        if v >= L * u * (1 - 1e-12):
            return u
        nxt = v / L
        if nxt <= 0:
            return 0.0
        if nxt >= u:
            return u
        u = nxt
    raise RuntimeError("threshold iteration did not converge")


def threshold(x, L: float, p, gamma, budget: int = DEFAULT_BUDGET,
              trials: int | None = None, rng: RandomSource | None = None) -> float:
    """Threshold T_{p,gamma}(x, L) of a unit vector.

    Exact by atom enumeration when ``trials`` is None, else from the
    empirical law of ``trials`` Monte Carlo draws.
    """
    x = as_unit_vector(x)
    model = SliceWindow(p, gamma)
    if trials is None:
        atoms = build_atoms(x, model, exact=False, budget=budget)
    else:
        if rng is None:
            raise ParameterError("Monte Carlo threshold needs a RandomSource")
        atoms = atoms_from_samples(sample_sums(x, model, trials, rng))
    return threshold_from_atoms(atoms, L)


# ---------------------------------------------------------------------------
# Kolmogorov-Levy-Rogozin

def lkr_bound(levy_terms: Sequence[tuple[float, float]], r: float, C: float = 1.0) -> float:
    """``C r / sqrt(sum_i (1 - L_i) r_i^2)`` for pairs ``(L_i, r_i)``."""
    if C <= 0:
        raise ParameterError("C must be positive")
    if not levy_terms:
        raise DegenerateInput("no terms")
    if any(ri <= 0 for _, ri in levy_terms):
        raise ParameterError("radii r_i must be positive")
    if r < max(ri for _, ri in levy_terms):
        raise ParameterError("r must be at least max r_i")
    denom = sum((1 - li) * ri * ri for li, ri in levy_terms)
    if denom <= 0:
        raise DegenerateInput("every term is fully concentrated; the bound is undefined")
    return C * r / math.sqrt(denom)


def bernoulli_term_levy(xi: float, p: float, ri: float) -> float:
    """L(b x_i, r_i) for b ~ Ber(p): the two atoms 0 and x_i share a window iff |x_i| <= 2 r_i."""
    if abs(xi) <= 2 * ri:
        return 1.0
    return max(float(p), 1 - float(p))


def lkr_ratio(x, p, r: float, radii=None) -> tuple[float, float]:
    """Exact ``L(sum b_i x_i, r)`` under iid Ber(p) and the C=1 bound; their ratio fits C."""
    x = as_real_vector(x)
    if radii is None:
        radii = np.full(x.size, r)
    terms = [(bernoulli_term_levy(xi, p, ri), ri) for xi, ri in zip(x, radii)]
    bound = lkr_bound(terms, r, 1.0)
    lev = float(levy_exact(build_atoms(x, IidBernoulli(p), exact=False), r).value)
    return lev, bound
