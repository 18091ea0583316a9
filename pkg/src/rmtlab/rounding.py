"""Randomized rounding of a real vector to the integer lattice.

Each coordinate is rounded down or up independently, up with probability
equal to its fractional part.  Attempts are resampled until the checkable
clauses hold:

* R1: ``||y - y'||_inf <= 1`` (true by construction);
* R2: ``P[|sum b_i y'_i - lam| <= t] <= C mu t`` for all ``t >= sqrt(n)``;
* R3: ``Lev(sum b_i y'_i, sqrt n) >= c Lev(sum b_i y_i, sqrt n)``;
* R4: ``|sum y_i - sum y'_i| <= C sqrt(n)``.

R2 and R3 need the exact law of the sums and are skipped when it is too
large to enumerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .anticoncentration import AtomSet, build_atoms, enumeration_cost, levy_exact
from .model import (BudgetExceeded, ConstantsConfig, IidBernoulli, ParameterError, WeightModel,
                    as_real_vector)
from .rng import RandomSource, derive_seed

DEFAULT_MAX_ATTEMPTS = 64
DEFAULT_ATOM_BUDGET = 1 << 20


@dataclass(frozen=True)
class RoundingResult:
    """``checks`` maps r1..r4 to True/False, or None when the clause was skipped."""

    y_prime: np.ndarray
    attempts: int
    checks: dict
    mu: float
    lam: float
    success: bool = True
    failed: tuple = field(default=())

    def __post_init__(self):
        if not self.checks.get("r1"):
            raise AssertionError("rounding output violates R1")


def round_once(y, rng: RandomSource) -> np.ndarray:
    """``floor(y_i) + Ber(frac(y_i))`` independently; coordinate i uses uniform i of ``rng``."""
    y = as_real_vector(y)
    base = np.floor(y)
    frac = y - base
    up = rng.uniforms(y.size) < frac
    return (base + up).astype(np.int64)


def small_ball_ratio(atoms: AtomSet, lam: float, t_min: float) -> float:
    """``sup_{t >= t_min} P[|S - lam| <= t] / t`` for the atom law of S.

    The ratio only increases at jumps of the numerator, so it suffices to
    evaluate it at ``t_min`` and at every distance ``|a - lam| >= t_min``.
    """
    d = np.abs(atoms.values - lam)
    order = np.argsort(d, kind="stable")
    d = d[order]
    m = atoms.float_masses()[order]
    cum = np.cumsum(m)
    best = float(cum[np.searchsorted(d, t_min, side="right") - 1]) / t_min if d[0] <= t_min else 0.0
    # distances at which the cumulative mass is complete for that distance
    last = np.r_[d[1:] != d[:-1], True]
    sel = last & (d >= t_min)
    if sel.any():
        best = max(best, float(np.max(cum[sel] / d[sel])))
    return best


def randomized_round(y, lam: float, model: WeightModel, mu: float,
                     constants: Optional[ConstantsConfig] = None,
                     rng: Optional[RandomSource] = None,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                     atom_budget: int = DEFAULT_ATOM_BUDGET) -> RoundingResult:
    """Round ``y`` to an integer vector satisfying R1-R4 with the configured constants.

    Attempt k draws from stream k of a seed derived from ``rng``.  Returns
    the first attempt passing every evaluated clause; if none does, returns
    the attempt failing the fewest clauses with ``success=False``.
    """
    y = as_real_vector(y)
    if mu <= 0:
        raise ParameterError("mu must be positive")
    if max_attempts < 1:
        raise ParameterError("max_attempts must be positive")
    constants = constants or ConstantsConfig()
    rng = rng or RandomSource(0)
    n = y.size
    root = math.sqrt(n)
    C, c = constants.C_round, constants.c_round
    exact_ok = enumeration_cost(n, model) <= atom_budget and not (
        isinstance(model, IidBernoulli) and n > 26)
    lev_y = None
    if exact_ok:
        lev_y = float(levy_exact(build_atoms(y, model, exact=False, budget=atom_budget), root).value)
    seed = derive_seed(rng.seed, "round", rng.stream_id)
    best = None
    for k in range(max_attempts):
        yp = round_once(y, RandomSource(seed, k))
        checks = {"r1": bool(np.max(np.abs(y - yp), initial=0.0) <= 1.0),
                  "r4": bool(abs(y.sum() - yp.sum()) <= C * root),
                  "r2": None, "r3": None}
        if exact_ok:
            try:
                atoms = build_atoms(yp.astype(np.float64), model, exact=False, budget=atom_budget)
            except BudgetExceeded:
                atoms = None
            if atoms is not None:
                checks["r2"] = small_ball_ratio(atoms, lam, root) <= C * mu * (1 + 1e-12)
                checks["r3"] = float(levy_exact(atoms, root).value) >= c * lev_y * (1 - 1e-12)
        failed = tuple(key for key in ("r1", "r2", "r3", "r4") if checks[key] is False)
        if not failed:
            return RoundingResult(yp, k + 1, checks, mu, lam, True, ())
        if best is None or len(failed) < len(best[2]):
            best = (yp, checks, failed)
    return RoundingResult(best[0], max_attempts, best[1], mu, lam, False, best[2])
