"""Almost-constant and almost-elementary unit vectors.

``cons_membership`` decides whether most coordinates of a unit vector sit in a
short window; ``nonconstant_decompose`` turns a failure of that test into one
of two quantitative spread patterns, which is what admissible sets encode.
All witnesses are re-checked before they are returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ParameterError, as_real_vector

COUNT_TOL = 1e-9
VALUE_TOL = 1e-12


@dataclass(frozen=True)
class ConsParams:
    delta: float
    rho: float

    def __post_init__(self):
        if not (0 < self.delta < 1 and 0 < self.rho < 1):
            raise ParameterError(f"delta and rho must lie in (0,1), got {self.delta}, {self.rho}")


def _required(fraction: float, n: int) -> int:
    """Smallest integer count that is at least ``fraction * n``."""
    return max(0, math.ceil(fraction * n - COUNT_TOL))


def cons_membership(x, params: ConsParams) -> tuple[bool, Optional[float]]:
    """Is some lambda within rho/sqrt(n) of at least (1-delta)n coordinates?

    Slides a window of width 2 rho/sqrt(n) over the sorted coordinates.  The
    witness is the midpoint of the leftmost feasible run of coordinates.
    """
    x = as_real_vector(x)
    n = x.size
    need = max(1, _required(1 - params.delta, n))
    xs = np.sort(x)
    width = 2 * params.rho / math.sqrt(n)
    spans = xs[need - 1:] - xs[:n - need + 1]
    ok = np.flatnonzero(spans <= width + VALUE_TOL)
    if ok.size == 0:
        return False, None
    i = int(ok[0])
    return True, float((xs[i] + xs[i + need - 1]) / 2)


def coord_membership(x, delta: float) -> Optional[int]:
    """Smallest (0-based) i with ||x - e_i||_2 <= delta, or None."""
    x = as_real_vector(x)
    d2 = float(x @ x) - 2 * x + 1
    hits = np.flatnonzero(d2 <= delta * delta + VALUE_TOL)
    return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class DecompositionWitness:
    """Outcome of the non-constant decomposition.

    ``case`` is ``"P"`` (a small-coordinate block plus a separated block),
    ``"Q"`` (a positive block plus a negative block) or ``"AlmostConstant"``.
    Thresholds are in units of 1/sqrt(n).  ``grid`` lists the candidate
    scales the construction drew ``kappa`` and ``kappa_prime`` from.
    """

    case: str
    kappa: Optional[float]
    kappa_prime: Optional[float]
    nu: Optional[float]
    nu_prime: Optional[float]
    index_set_1: tuple
    index_set_2: tuple
    lam: Optional[float] = None
    branch: str = ""
    grid: tuple = field(default=())

    def violations(self, x) -> list[str]:
        x = as_real_vector(x)
        n = x.size
        y = x * math.sqrt(n)
        if self.case == "AlmostConstant":
            return []
        out = []
        s1, s2 = np.asarray(self.index_set_1, dtype=int), np.asarray(self.index_set_2, dtype=int)
        for name, s in (("index_set_1", s1), ("index_set_2", s2)):
            if s.size < self.nu * n - COUNT_TOL or s.size == 0:
                out.append(f"{name} has {s.size} < nu*n indices")
        k, kp, nup = self.kappa, self.kappa_prime, self.nu_prime
        if not (k > 0 and kp > 0 and self.nu > 0 and nup > 0):
            out.append("parameters must be positive")
        if self.case == "P":
            if np.any(np.abs(y[s1]) > k + VALUE_TOL):
                out.append("index_set_1 has |x_i| > kappa/sqrt(n)")
            a2 = np.abs(y[s2])
            if np.any(a2 <= k + nup) or np.any(a2 > kp + VALUE_TOL):
                out.append("index_set_2 leaves ((kappa+nu')/sqrt(n), kappa'/sqrt(n)]")
        elif self.case == "Q":
            if np.any(y[s1] <= k) or np.any(y[s1] >= kp):
                out.append("index_set_1 leaves (kappa/sqrt(n), kappa'/sqrt(n))")
            if np.any(y[s2] >= -k) or np.any(y[s2] <= -kp):
                out.append("index_set_2 leaves (-kappa'/sqrt(n), -kappa/sqrt(n))")
        else:
            out.append(f"unknown case {self.case!r}")
        return out


def _p_witness(y, kappa, kappa_prime, nu_prime, branch, grid):
    s1 = np.flatnonzero(np.abs(y) <= kappa)
    a = np.abs(y)
    s2 = np.flatnonzero((a > kappa + nu_prime) & (a <= kappa_prime))
    nu = min(s1.size, s2.size) / y.size
    return DecompositionWitness("P", kappa, kappa_prime, nu, nu_prime,
                                tuple(s1.tolist()), tuple(s2.tolist()), branch=branch, grid=grid)


def nonconstant_decompose(x, params: ConsParams) -> DecompositionWitness:
    """Split a unit vector that is not almost constant into one of two spread patterns.

    With ``y = sqrt(n) x``, ``a = rho/10`` and the bulk ``I0 = {|y| <= 4/sqrt(delta)}``:

    * many bulk coordinates below ``a`` -> pattern P around zero;
    * otherwise, many bulk coordinates on both sides of ``+-a`` -> pattern Q;
    * otherwise almost all bulk coordinates share a sign (flip to positive);
      the first multiple ``l0*a`` capturing delta*n/16 of the values in
      ``[0, l0*a)`` gives pattern P with ``kappa = l0*a``.
    """
    if not (0 < params.delta < 0.25 and 0 < params.rho < 0.25):
        raise ParameterError("decomposition needs delta, rho in (0, 1/4)")
    x = as_real_vector(x)
    member, lam = cons_membership(x, params)
    if member:
        near = np.flatnonzero(np.abs(x - lam) <= params.rho / math.sqrt(x.size) + VALUE_TOL)
        return DecompositionWitness("AlmostConstant", None, None, None, None,
                                    tuple(near.tolist()), (), lam=lam)
    n = x.size
    delta, rho = params.delta, params.rho
    y = x * math.sqrt(n)
    a = rho / 10
    bulk_edge = 4 / math.sqrt(delta)
    bulk = np.abs(y) <= bulk_edge
    quota = delta * n / 16
    small = int(np.sum(bulk & (np.abs(y) < a)))
    pos = bulk & (y >= a)
    neg = bulk & (y <= -a)
    if small >= quota:
        w = _p_witness(y, a, bulk_edge, rho / 2, "small-bulk", (a, bulk_edge))
    elif pos.sum() >= quota and neg.sum() >= quota:
        grid = (a / 2, 2 * bulk_edge)
        s1, s2 = np.flatnonzero(pos), np.flatnonzero(neg)
        w = DecompositionWitness("Q", a / 2, 2 * bulk_edge, min(s1.size, s2.size) / n, a,
                                 tuple(s1.tolist()), tuple(s2.tolist()),
                                 branch="two-signed", grid=grid)
    else:
        sign = 1.0 if pos.sum() >= neg.sum() else -1.0
        z = sign * y
        l_max = math.ceil(bulk_edge / a) + 1
        l0 = next(l for l in range(1, l_max + 1)
                  if np.sum((z >= 0) & (z < l * a)) >= quota)
        grid = tuple(l * a for l in range(1, l_max + 1)) + (bulk_edge,)
        w = _p_witness(y, l0 * a, bulk_edge, a, "one-signed" + ("" if sign > 0 else "-flipped"), grid)
    problems = w.violations(x)
    if problems:
        raise AssertionError("decomposition witness failed its own check: " + "; ".join(problems))
    return w
