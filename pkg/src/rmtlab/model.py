"""Shared domain types and the configuration file format."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Mapping, Sequence, Union

import numpy as np

from .rng import RandomSource, derive_stream  # noqa: F401  (re-exported)

Probability = Union[Fraction, float]

UNIT_NORM_TOL = 1e-12


class ParameterError(ValueError):
    """An argument is outside the domain of the operation."""


class BudgetExceeded(RuntimeError):
    """An exact enumeration would cost more than the allowed budget."""

    def __init__(self, what: str, cost: float, budget: float):
        super().__init__(f"{what}: estimated cost {cost:.3g} exceeds budget {budget:.3g}")
        self.cost = cost
        self.budget = budget


# ---------------------------------------------------------------------------
# matrices and vectors

def as_matrix01(a, square: bool = False) -> np.ndarray:
    """Validate a {0,1} matrix and return it as a 2-D int64 array."""
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ParameterError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ParameterError("matrix entries must be 0 or 1")
    if square and m.shape[0] != m.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {m.shape}")
    return m.astype(np.int64)


def as_real_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise ParameterError("vector has non-finite coordinates")
    return v


def as_unit_vector(x, tol: float = UNIT_NORM_TOL) -> np.ndarray:
    v = as_real_vector(x)
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ParameterError(f"not a unit vector: norm {np.linalg.norm(v)!r}")
    return v


def normalize(x) -> np.ndarray:
    v = as_real_vector(x)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ParameterError("cannot normalize the zero vector")
    return v / nrm


# ---------------------------------------------------------------------------
# probabilities and weight models

def parse_probability(p) -> Probability:
    """Accept a float, an int, a Fraction, or a string like ``"3/10"``."""
    if isinstance(p, str):
        p = Fraction(p)
    elif isinstance(p, int) and not isinstance(p, bool):
        p = Fraction(p)
    if isinstance(p, Fraction):
        return p
    return float(p)


def _prob_to_json(p: Probability):
    return f"{p.numerator}/{p.denominator}" if isinstance(p, Fraction) else float(p)


def check_probability(p, open_interval: bool = True) -> None:
    if open_interval and not 0 < p < 1:
        raise ParameterError(f"probability must lie in (0,1), got {p}")
    if not open_interval and not 0 <= p <= 1:
        raise ParameterError(f"probability must lie in [0,1], got {p}")


@dataclass(frozen=True)
class IidBernoulli:
    """Independent Ber(p) coordinates."""

    p: Probability

    def __post_init__(self):
        object.__setattr__(self, "p", parse_probability(self.p))
        check_probability(self.p)

    def allowed_sums(self, n: int) -> range:
        return range(0, n + 1)


@dataclass(frozen=True)
class Slice:
    """Uniform on the vectors of {0,1}^n with exactly ``m`` ones."""

    m: int

    def __post_init__(self):
        if self.m < 0:
            raise ParameterError(f"slice level must be nonnegative, got {self.m}")

    def allowed_sums(self, n: int) -> range:
        if self.m > n:
            raise ParameterError(f"slice level {self.m} exceeds dimension {n}")
        return range(self.m, self.m + 1)


@dataclass(frozen=True)
class SliceWindow:
    """Ber(p) coordinates conditioned on the sum lying in ``[pn - gamma n, pn + gamma n]``."""

    p: Probability
    gamma: Probability

    def __post_init__(self):
        object.__setattr__(self, "p", parse_probability(self.p))
        object.__setattr__(self, "gamma", parse_probability(self.gamma))
        check_probability(self.p)
        if not 0 < self.gamma <= self.p:
            raise ParameterError(f"gamma must lie in (0, p], got {self.gamma}")

    def allowed_sums(self, n: int) -> range:
        lo = self.p * n - self.gamma * n
        hi = self.p * n + self.gamma * n
        if isinstance(lo, Fraction) and isinstance(hi, Fraction):
            kmin, kmax = math.ceil(lo), math.floor(hi)
        else:
            # floating endpoints: snap values within 1e-9 of an integer
            kmin, kmax = math.ceil(float(lo) - 1e-9), math.floor(float(hi) + 1e-9)
        kmin, kmax = max(kmin, 0), min(kmax, n)
        if kmin > kmax:
            raise ParameterError(f"window [{lo}, {hi}] contains no integer sum for n={n}")
        return range(kmin, kmax + 1)


WeightModel = Union[IidBernoulli, Slice, SliceWindow]


def model_to_dict(model: WeightModel) -> dict:
    if isinstance(model, IidBernoulli):
        return {"kind": "iid", "p": _prob_to_json(model.p)}
    if isinstance(model, Slice):
        return {"kind": "slice", "m": model.m}
    if isinstance(model, SliceWindow):
        return {"kind": "slice_window", "p": _prob_to_json(model.p),
                "gamma": _prob_to_json(model.gamma)}
    raise TypeError(f"not a weight model: {model!r}")


def model_from_dict(d: Mapping) -> WeightModel:
    kind = d["kind"]
    if kind == "iid":
        return IidBernoulli(d["p"])
    if kind == "slice":
        return Slice(int(d["m"]))
    if kind == "slice_window":
        return SliceWindow(d["p"], d["gamma"])
    raise ParameterError(f"unknown weight model kind {kind!r}")


def sum_weights(model: WeightModel, n: int) -> dict:
    """Probability of each allowed number of ones, as ``{k: weight of one vector with k ones}``.

    Every vector with ``k`` ones has the returned weight; weights are exact
    Fractions when the model's parameters are Fractions.
    """
    ks = model.allowed_sums(n)
    if isinstance(model, Slice):
        return {model.m: Fraction(1, math.comb(n, model.m))}
    p = model.p
    raw = {k: p ** k * (1 - p) ** (n - k) for k in ks}
    if isinstance(model, IidBernoulli):
        return raw
    total = sum(math.comb(n, k) * w for k, w in raw.items())
    return {k: w / total for k, w in raw.items()}


# ---------------------------------------------------------------------------
# constants and configuration

@dataclass(frozen=True)
class Tolerances:
    rank_zero_tol: float = 1e-8
    unit_norm_tol: float = 1e-12
    ci_z: float = 3.0


@dataclass(frozen=True)
class ConstantsConfig:
    """Absolute constants that the theory leaves unspecified.

    None of the defaults is a derived value; they are knobs for the
    experiments and are echoed into every report.
    """

    C_lkr: float = 1.0
    L_threshold: float = 16.0
    C_round: float = 5.0
    c_round: float = 0.05
    K_opnorm: float = 4.0
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        for name in ("C_lkr", "L_threshold", "C_round", "c_round", "K_opnorm"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.c_round > 1:
            raise ParameterError("c_round must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConstantsConfig":
        d = dict(d)
        tol = Tolerances(**d.pop("tolerances", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown constants: {sorted(unknown)}")
        return cls(tolerances=tol, **{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class Config:
    """Top-level configuration document: ``{seed, constants, experiment}``."""

    seed: int = 0
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    experiment: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "constants": self.constants.to_dict(),
                "experiment": self.experiment}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Config":
        unknown = set(d) - {"seed", "constants", "experiment"}
        if unknown:
            raise ParameterError(f"unknown top-level config keys: {sorted(unknown)}")
        return cls(seed=int(d.get("seed", 0)),
                   constants=ConstantsConfig.from_dict(d.get("constants", {})),
                   experiment=dict(d.get("experiment", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Config":
        return cls.from_dict(json.loads(text))


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return Config.loads(fh.read())


def save_config(config: Config, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config.dumps())


# ---------------------------------------------------------------------------
# discrete densities

@dataclass(frozen=True)
class DiscreteDensity:
    """A nonnegative unit-mass function on the integers with contiguous support.

    ``masses[k]`` is the value at ``support_offset + k``.  In exact mode the
    masses are Fractions and must sum to exactly one.
    """

    support_offset: int
    masses: tuple
    exact: bool = True
    lipschitz_eta: float | None = None

    def __post_init__(self):
        masses = tuple(Fraction(m) if self.exact else float(m) for m in self.masses)
        object.__setattr__(self, "masses", masses)
        if not masses:
            raise ParameterError("density must have nonempty support")
        if any(m < 0 for m in masses):
            raise ParameterError("density has a negative mass")
        total = sum(masses)
        if self.exact and total != 1:
            raise ParameterError(f"exact density has total mass {total}, not 1")
        if not self.exact and abs(total - 1.0) > 1e-12:
            raise ParameterError(f"density has total mass {total!r}, not 1")
        if self.lipschitz_eta is not None and not self.is_log_lipschitz(self.lipschitz_eta):
            raise ParameterError(f"log2 of the density is not {self.lipschitz_eta}-Lipschitz")

    def __call__(self, t: int):
        k = t - self.support_offset
        if 0 <= k < len(self.masses):
            return self.masses[k]
        return Fraction(0) if self.exact else 0.0

    def items(self):
        for k, m in enumerate(self.masses):
            if m:
                yield self.support_offset + k, m

    def as_dict(self) -> dict:
        return dict(self.items())

    def is_log_lipschitz(self, eta: float, tol: float = 1e-12) -> bool:
        if any(m == 0 for m in self.masses):
            return False
        logs = [math.log2(m) for m in self.masses]
        return all(abs(b - a) <= eta + tol for a, b in zip(logs, logs[1:]))

    @classmethod
    def point_mass(cls, t: int = 0) -> "DiscreteDensity":
        return cls(t, (Fraction(1),))

    @classmethod
    def from_weights(cls, offset: int, weights: Sequence, exact: bool = True) -> "DiscreteDensity":
        """Normalize arbitrary nonnegative weights into a density."""
        if exact:
            w = [Fraction(x) for x in weights]
        else:
            w = [float(x) for x in weights]
        total = sum(w)
        if total <= 0:
            raise ParameterError("weights must have positive total")
        return cls(offset, tuple(x / total for x in w), exact=exact)

    @classmethod
    def two_sided_geometric(cls, n: int, tail: float = 1e-18) -> "DiscreteDensity":
        """``t -> 2**(-|t|/sqrt(n)) / iota`` truncated where the tail mass drops below ``tail``.

        log2 of this density is (1/sqrt(n))-Lipschitz, and the instance
        carries that eta.
        """
        rate = 1.0 / math.sqrt(n)
        # tail beyond T is ~ 2 * 2^(-T rate) / (1 - 2^-rate)
        T = math.ceil((math.log2(2.0 / (1 - 2 ** -rate)) - math.log2(tail)) / rate)
        ts = np.arange(-T, T + 1)
        w = np.exp2(-np.abs(ts) * rate)
        w /= w.sum()
        return cls(-T, tuple(w.tolist()), exact=False, lipschitz_eta=rate)
