"""Exact samplers for the random objects used throughout the package.

Each sampler has a single-trial form taking a :class:`RandomSource` and a
batched form taking ``(seed, trial_indices)``.  Row ``i`` of a batched draw
is identical to the single-trial draw with ``derive_stream(seed,
trial_indices[i])``, so campaigns may use either.

Stream layout (word positions within a trial's stream):

* Bernoulli matrix: word ``i*n_cols + j`` decides entry ``(i, j)``.
* slice vector: words ``0..m-1`` drive a partial Fisher-Yates shuffle.
* Q_n matrix: row ``i`` uses words ``i*h .. i*h + h - 1`` with ``h = n // 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (IidBernoulli, ParameterError, Slice, SliceWindow, WeightModel,
                    check_probability)
from .rng import RandomSource, bernoulli_threshold, bounded, stream_words

__all__ = [
    "sample_bernoulli_matrix", "sample_bernoulli_matrices",
    "sample_slice_vector", "sample_slice_vectors", "sample_paired_slice",
    "sample_qn_matrix", "sample_qn_matrices", "sample_weight_vectors",
    "sample_admissible_point", "PairedSlice",
]


def _bernoulli_from_words(words: np.ndarray, p) -> np.ndarray:
    return (words < np.uint64(bernoulli_threshold(p))).astype(np.int8)


def sample_bernoulli_matrix(n: int, p, rng: RandomSource, n_cols: int | None = None) -> np.ndarray:
    """n x n_cols matrix (default square) with independent Ber(p) entries."""
    return sample_bernoulli_matrices(n, p, rng.seed, [rng.stream_id], n_cols)[0]


def sample_bernoulli_matrices(n: int, p, seed: int, trials: Sequence[int],
                              n_cols: int | None = None) -> np.ndarray:
    n_cols = n if n_cols is None else n_cols
    if n < 1 or n_cols < 1:
        raise ParameterError("matrix dimensions must be positive")
    check_probability(p, open_interval=False)
    words = stream_words(seed, trials, n * n_cols)
    return _bernoulli_from_words(words, p).reshape(-1, n, n_cols)


def _fisher_yates_select(words: np.ndarray, n: int, m: int) -> np.ndarray:
    """Rows of ``words`` (shape (T, >=m)) -> 0/1 rows with exactly m ones."""
    T = words.shape[0]
    perm = np.tile(np.arange(n), (T, 1))
    rows = np.arange(T)
    for i in range(m):
        j = i + bounded(words[:, i], n - i)
        a = perm[rows, i].copy()
        perm[rows, i] = perm[rows, j]
        perm[rows, j] = a
    out = np.zeros((T, n), dtype=np.int8)
    if m:
        out[rows[:, None], perm[:, :m]] = 1
    return out


def sample_slice_vector(n: int, m: int, rng: RandomSource) -> np.ndarray:
    """Uniform vector of {0,1}^n with exactly m ones."""
    return sample_slice_vectors(n, m, rng.seed, [rng.stream_id])[0]


def sample_slice_vectors(n: int, m: int, seed: int, trials: Sequence[int]) -> np.ndarray:
    if not 0 <= m <= n:
        raise ParameterError(f"slice level m={m} outside [0, {n}]")
    words = stream_words(seed, trials, m)
    return _fisher_yates_select(words, n, m)


@dataclass(frozen=True)
class PairedSlice:
    """A slice sample written as a base vector plus fair swap bits on disjoint pairs.

    Pair ``j`` is positions ``(2j, 2j+1)``; ``vector`` is ``base`` with the
    two entries of pair ``j`` exchanged whenever ``flags[j] == 1``.
    """

    vector: np.ndarray
    base: np.ndarray
    flags: np.ndarray


def sample_paired_slice(n: int, m: int, sigma_n: int, rng: RandomSource) -> PairedSlice:
    """Slice sample re-randomized by independent Ber(1/2) swaps on ``sigma_n`` pairs.

    The swap preserves the uniform law on the slice, so ``vector`` has the
    same distribution as :func:`sample_slice_vector`.  Words ``0..m-1`` give
    the base; words ``m..m+sigma_n-1`` give the swap bits.
    """
    if sigma_n < 0 or 2 * sigma_n > n:
        raise ParameterError(f"cannot place {sigma_n} disjoint pairs among {n} positions")
    base = sample_slice_vector(n, m, rng)
    flags = (rng.words(sigma_n, start=m) >> np.uint64(31)).astype(np.int8)
    vec = base.copy()
    for j in np.flatnonzero(flags):
        vec[2 * j], vec[2 * j + 1] = base[2 * j + 1], base[2 * j]
    return PairedSlice(vec, base, flags)


def sample_qn_matrix(n: int, rng: RandomSource) -> np.ndarray:
    """n x n matrix with independent rows uniform on the central slice (sum ``n // 2``)."""
    return sample_qn_matrices(n, rng.seed, [rng.stream_id])[0]


def sample_qn_matrices(n: int, seed: int, trials: Sequence[int]) -> np.ndarray:
    if n < 1:
        raise ParameterError("n must be positive")
    h = n // 2
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    words = stream_words(seed, trials, n * h).reshape(trials.size * n, h)
    return _fisher_yates_select(words, n, h).reshape(trials.size, n, n)


def sample_weight_vectors(n: int, model: WeightModel, seed: int, trials: Sequence[int],
                          max_rounds: int = 10_000) -> np.ndarray:
    """One {0,1}^n vector per trial under a weight model.

    SliceWindow draws iid Ber(p) vectors and rejects until the sum lands in
    the window; round ``r`` of a trial uses words ``r*n .. r*n + n - 1``.
    """
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    if isinstance(model, IidBernoulli):
        return _bernoulli_from_words(stream_words(seed, trials, n), model.p)
    if isinstance(model, Slice):
        return sample_slice_vectors(n, model.allowed_sums(n)[0], seed, trials)
    if isinstance(model, SliceWindow):
        ks = model.allowed_sums(n)
        p = float(model.p)
        acceptance = sum(math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                                  + k * math.log(p) + (n - k) * math.log1p(-p)) for k in ks)
        if acceptance < 1e-3:
            raise ParameterError(f"window acceptance probability {acceptance:.2e} is below 1e-3")
        out = np.empty((trials.size, n), dtype=np.int8)
        pending = np.arange(trials.size)
        for r in range(max_rounds):
            if pending.size == 0:
                return out
            b = _bernoulli_from_words(stream_words(seed, trials[pending], n, start=r * n), model.p)
            s = b.sum(axis=1)
            ok = (s >= ks.start) & (s < ks.stop)
            out[pending[ok]] = b[ok]
            pending = pending[~ok]
        raise ParameterError("rejection sampler did not terminate; window too narrow")
    raise TypeError(f"not a weight model: {model!r}")


def sample_admissible_point(A, rng: RandomSource, check: bool = True) -> np.ndarray:
    """Uniform point of a product set; coordinate i uses word i."""
    from .smoothing import validate_admissible

    problems = validate_admissible(A) if check else []
    if problems:
        raise ParameterError("invalid admissible set: " + "; ".join(problems))
    sizes = np.array([s.size for s in A.coordinate_sets], dtype=np.uint64)
    idx = bounded(rng.words(len(sizes)), sizes)
    return np.array([s.element(int(k)) for s, k in zip(A.coordinate_sets, idx)], dtype=np.int64)
