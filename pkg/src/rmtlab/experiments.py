"""Reproducible Monte Carlo campaigns and their reports.

Every campaign is a pure function of its :class:`Config`.  Trial ``t`` of a
campaign point draws from stream ``t`` of a seed derived from the config
seed and the point's labels, so splitting trials into chunks and farming
the chunks out to any number of worker processes cannot change a result.

CSV schema, version 1 (one row per estimate, columns in this order):
``experiment, n, p, trials, estimate, ci_halfwidth, baseline_exact,
baseline_formula, seed, wall_ms``.  Empty cells mean "not applicable".
Exact rationals are written as ``a/b``; floats use Python's shortest
round-tripping repr.  ``wall_ms`` is filled only when timing is requested,
so that untimed reports are byte-for-byte reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from .anticoncentration import threshold_from_atoms, build_atoms
from .linalg import (batch_is_singular, exact_rank, dist_to_rowspan, kernel_vector,
                     qn_singular_count, singularity_polynomial, zero_line_probability)
from .model import (BudgetExceeded, Config, ParameterError, SliceWindow, parse_probability)
from .rng import RandomSource, derive_seed
from .sampling import (sample_bernoulli_matrices, sample_bernoulli_matrix, sample_qn_matrices)
from .structured import ConsParams, cons_membership

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("experiment", "n", "p", "trials", "estimate", "ci_halfwidth",
               "baseline_exact", "baseline_formula", "seed", "wall_ms")
DEFAULT_CHUNK = 2048
CHECKPOINT_EVERY = 10 ** 6
MAX_N = 64
MAX_TRIALS = 10 ** 7
EXACT_BERNOULLI_MAX_N = 4
EXACT_QN_MAX_N = 5


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class EstimateRow:
    experiment: str
    n: int
    p: object
    trials: int
    estimate: Optional[float]
    ci_halfwidth: Optional[float]
    baseline_exact: object = None
    baseline_formula: Optional[float] = None
    wall_ms: Optional[float] = None


@dataclass(frozen=True)
class CampaignReport:
    """``params`` echoes the config; ``details`` holds per-sample rows and summaries."""

    experiment: str
    params: dict
    rows: tuple
    seed: int
    details: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_num(s: str):
    if s == "":
        return None
    if "/" in s:
        return Fraction(s)
    try:
        return int(s)
    except ValueError:
        return float(s)


def _parse_float(s: str):
    v = _parse_num(s)
    return None if v is None else float(v)


def _row_cells(row: EstimateRow, seed: int) -> list[str]:
    p = row.p
    return [row.experiment, _fmt(row.n), _fmt(p), _fmt(row.trials), _fmt(row.estimate),
            _fmt(row.ci_halfwidth), _fmt(row.baseline_exact), _fmt(row.baseline_formula),
            _fmt(seed), _fmt(row.wall_ms)]


def _row_from_cells(cells: Sequence[str]) -> tuple[EstimateRow, int]:
    d = dict(zip(CSV_COLUMNS, cells))
    p = _parse_num(d["p"])
    row = EstimateRow(d["experiment"], int(d["n"]), p, int(d["trials"]),
                      _parse_float(d["estimate"]), _parse_float(d["ci_halfwidth"]),
                      _parse_num(d["baseline_exact"]), _parse_float(d["baseline_formula"]),
                      _parse_float(d["wall_ms"]))
    return row, int(d["seed"])


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return {"fraction": f"{obj.numerator}/{obj.denominator}"}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return {"float": repr(obj)}
    return obj


def _unjson(obj):
    if isinstance(obj, dict):
        if set(obj) == {"fraction"}:
            return Fraction(obj["fraction"])
        if set(obj) == {"float"}:
            return float(obj["float"])
        return {k: _unjson(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unjson(v) for v in obj]
    return obj


def emit_report(report: CampaignReport, fmt: str = "csv") -> str:
    """Render a report; ``csv`` is the fixed schema above, ``text`` is a full JSON document."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report.rows:
            w.writerow(_row_cells(row, report.seed))
        return buf.getvalue()
    if fmt == "text":
        doc = {"experiment": report.experiment, "seed": report.seed,
               "params": _jsonable(report.params),
               "columns": list(CSV_COLUMNS[:-2]) + ["wall_ms"],
               "rows": [[_fmt(v) for v in (r.experiment, r.n, r.p, r.trials, r.estimate,
                                           r.ci_halfwidth, r.baseline_exact,
                                           r.baseline_formula, r.wall_ms)]
                        for r in report.rows],
               "details": _jsonable(report.details)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ParameterError(f"unknown report format {fmt!r}")


def parse_report(text: str, fmt: str = "csv") -> CampaignReport:
    """Inverse of :func:`emit_report`.  CSV carries no params or details."""
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ParameterError("CSV header does not match the report schema")
        rows, seeds = [], set()
        for cells in reader:
            row, seed = _row_from_cells(cells)
            rows.append(row)
            seeds.add(seed)
        if len(seeds) > 1:
            raise ParameterError("CSV mixes several seeds")
        experiment = rows[0].experiment.split("[")[0] if rows else ""
        return CampaignReport(experiment, {}, tuple(rows), seeds.pop() if seeds else 0)
    if fmt == "text":
        doc = json.loads(text)
        rows = []
        for cells in doc["rows"]:
            exp, n, p, trials, est, ci, bx, bf, wall = cells
            rows.append(EstimateRow(exp, int(n), _parse_num(p), int(trials), _parse_float(est),
                                    _parse_float(ci), _parse_num(bx), _parse_float(bf),
                                    _parse_float(wall)))
        return CampaignReport(doc["experiment"], _unjson(doc["params"]), tuple(rows),
                              int(doc["seed"]), _unjson(doc["details"]))
    raise ParameterError(f"unknown report format {fmt!r}")


def write_report(report: CampaignReport, path: Optional[str], fmt: str = "csv") -> str:
    text = emit_report(report, fmt)
    if path is None or path == "-":
        return text
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


# ---------------------------------------------------------------------------
# execution helpers

def config_hash(config: Config) -> str:
    return hashlib.sha256(config.dumps().encode("utf-8")).hexdigest()[:16]


def _map_chunks(fn: Callable, chunks: Sequence[tuple[int, int]], workers: int) -> list:
    """``[fn(lo, hi) for lo, hi in chunks]``, optionally in worker processes."""
    if workers <= 1 or len(chunks) <= 1:
        return [fn(lo, hi) for lo, hi in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [c[0] for c in chunks], [c[1] for c in chunks]))


def _chunks(lo: int, hi: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, hi)) for a in range(lo, hi, size)]


class Checkpoint:
    """Sidecar JSON of partial counts, keyed by (seed, config hash).

    A file written for a different seed or config is ignored and replaced.
    """

    def __init__(self, path: Optional[str], seed: int, chash: str):
        self.path = path
        self.key = {"seed": seed, "config_hash": chash}
        self.points: dict = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
            if doc.get("key") == self.key:
                self.points = doc.get("points", {})

    def get(self, point: str) -> tuple[int, int]:
        d = self.points.get(point, {"done": 0, "count": 0})
        return int(d["done"]), int(d["count"])

    def put(self, point: str, done: int, count: int) -> None:
        self.points[point] = {"done": done, "count": count}
        if self.path:
            tmp = self.path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump({"key": self.key, "points": self.points}, fh, sort_keys=True)
            os.replace(tmp, self.path)


def _run_count(point: str, trials: int, fn: Callable, workers: int, chunk: int,
               ckpt: Checkpoint, every: int = CHECKPOINT_EVERY) -> int:
    """Sum ``fn(lo, hi)`` over all trials, flushing the running count every ``every`` trials."""
    done, count = ckpt.get(point)
    while done < trials:
        hi = min(trials, done + every)
        count += sum(_map_chunks(fn, _chunks(done, hi, chunk), workers))
        done = hi
        ckpt.put(point, done, count)
    return count


def _proportion(k: int, trials: int, z: float) -> tuple[float, float]:
    q = k / trials
    return q, z * math.sqrt(q * (1 - q) / trials)


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _check_budget(n: int, trials: int):
    if not 1 <= n <= MAX_N:
        raise BudgetExceeded(f"matrix size n={n}", n, MAX_N)
    if not 1 <= trials <= MAX_TRIALS:
        raise BudgetExceeded(f"{trials} trials per point", trials, MAX_TRIALS)


def _p_label(p) -> str:
    p = parse_probability(p)
    return f"{p.numerator}/{p.denominator}" if isinstance(p, Fraction) else repr(float(p))


# ---------------------------------------------------------------------------
# chunk kernels (module level so worker processes can import them)

def count_singular_chunk(n: int, p, seed: int, lo: int, hi: int) -> int:
    idx = np.arange(lo, hi, dtype=np.uint64)
    return int(batch_is_singular(sample_bernoulli_matrices(n, p, seed, idx)).sum())


def count_qn_chunk(n: int, seed: int, lo: int, hi: int) -> int:
    idx = np.arange(lo, hi, dtype=np.uint64)
    return int(batch_is_singular(sample_qn_matrices(n, seed, idx)).sum())


def residual_chunk(n: int, p, seed: int, lo: int, hi: int) -> list[tuple[float, bool]]:
    """Distance from the all-ones vector to the column span, and exact membership when tiny."""
    v = np.ones(n)
    out = []
    for t in range(lo, hi):
        A = sample_bernoulli_matrix(n, p, RandomSource(seed, t), n_cols=n - 1)
        d = dist_to_rowspan(v, A.T)
        in_span = False
        if d <= 2.0 ** (-n / 4):
            aug = np.concatenate([A, np.ones((n, 1), dtype=A.dtype)], axis=1)
            in_span = exact_rank(aug) == exact_rank(A)
        out.append((float(d), bool(in_span)))
    return out


@dataclass(frozen=True)
class KernelClassification:
    sample_id: int
    n: int
    degenerate: bool
    cons_flag: Optional[bool]
    T_value: Optional[float]
    T_scaled: Optional[float]

    def as_dict(self) -> dict:
        return {"sample_id": self.sample_id, "n": self.n, "degenerate": self.degenerate,
                "cons_flag": self.cons_flag, "T_value": self.T_value, "T_scaled": self.T_scaled}


def classify_kernel(H, sample_id: int, params: ConsParams, p, gamma, L: float,
                    budget: int = 10 ** 8) -> KernelClassification:
    """Kernel direction of H: degenerate, almost constant, or spread with its threshold."""
    n = np.asarray(H).shape[1]
    kv = kernel_vector(H) if np.asarray(H).shape[0] == n - 1 else None
    if kv is None:
        raise ParameterError("classify_kernel needs an (n-1) x n matrix")
    if kv.degenerate:
        return KernelClassification(sample_id, n, True, None, None, None)
    member, _ = cons_membership(kv.vector, params)
    if member:
        return KernelClassification(sample_id, n, False, True, None, None)
    atoms = build_atoms(kv.vector, SliceWindow(p, gamma), exact=False, budget=budget)
    T = threshold_from_atoms(atoms, L)
    return KernelClassification(sample_id, n, False, False, T, T * math.sqrt(n))


def structure_chunk(n: int, p, seed: int, delta: float, rho: float, gamma, L: float,
                    lo: int, hi: int) -> list[dict]:
    out = []
    params = ConsParams(delta, rho)
    for k in range(lo, hi):
        try:
            H = sample_bernoulli_matrix(n - 1, p, RandomSource(seed, k), n_cols=n)
            out.append(classify_kernel(H, k, params, p, gamma, L).as_dict())
        except ParameterError:
            # H has full row rank or worse only in degenerate corner cases
            out.append(KernelClassification(k, n, True, None, None, None).as_dict())
    return out


# ---------------------------------------------------------------------------
# campaigns

def _timer(timing: bool):
    start = time.perf_counter()
    return lambda: (time.perf_counter() - start) * 1000.0 if timing else None


def run_singularity_campaign(config: Config, workers: int = 1, checkpoint: Optional[str] = None,
                             timing: bool = False) -> CampaignReport:
    """Estimate P[B_n(p) singular] for each (n, p) in the experiment block.

    Experiment keys: ``n`` (int or list), ``p`` (number, ``"a/b"``, or list),
    ``trials``, optional ``chunk``.  Exact baselines come from the
    exhaustive singularity polynomial for n <= 4; ``baseline_formula`` is
    ``2 n (1-p)^n``.  The zero row/column probability goes in ``details``.
    """
    ex = config.experiment
    trials = int(ex.get("trials", 10 ** 5))
    chunk = int(ex.get("chunk", DEFAULT_CHUNK))
    z = config.constants.tolerances.ci_z
    ckpt = Checkpoint(checkpoint, config.seed, config_hash(config))
    rows, zero_lines = [], []
    for n in (int(v) for v in _as_list(ex.get("n", [2]))):
        for p_raw in _as_list(ex.get("p", ["1/2"])):
            p = parse_probability(p_raw)
            if not 0 < p < 1:
                raise ParameterError(f"p must lie in (0,1), got {p}")
            _check_budget(n, trials)
            clock = _timer(timing)
            seed = derive_seed(config.seed, "singularity", n, _p_label(p))
            fn = partial(count_singular_chunk, n, p, seed)
            k = _run_count(f"singularity:{n}:{_p_label(p)}", trials, fn, workers, chunk, ckpt)
            est, ci = _proportion(k, trials, z)
            exact = singularity_polynomial(n).evaluate(p) if n <= EXACT_BERNOULLI_MAX_N else None
            zl = zero_line_probability(n, p)
            zero_lines.append({"n": n, "p": _p_label(p), "zero_line": float(zl.probability),
                               "ratio": est / float(zl.probability)})
            rows.append(EstimateRow("singularity", n, p, trials, est, ci, exact,
                                    float(zl.first_order), clock()))
    return CampaignReport("singularity", config.to_dict(), tuple(rows), config.seed,
                          {"zero_line": zero_lines})


def run_qn_campaign(config: Config, workers: int = 1, checkpoint: Optional[str] = None,
                    timing: bool = False) -> CampaignReport:
    """Estimate P[Q_n singular] (rows uniform on the central slice).

    Exact baselines by exhaustive enumeration for n <= 5.  ``details``
    carries ``log(estimate)/n`` for each n.
    """
    ex = config.experiment
    trials = int(ex.get("trials", 10 ** 5))
    chunk = int(ex.get("chunk", DEFAULT_CHUNK))
    z = config.constants.tolerances.ci_z
    ckpt = Checkpoint(checkpoint, config.seed, config_hash(config))
    rows, trend = [], []
    for n in (int(v) for v in _as_list(ex.get("n", [4]))):
        _check_budget(n, trials)
        clock = _timer(timing)
        seed = derive_seed(config.seed, "qn", n)
        k = _run_count(f"qn:{n}", trials, partial(count_qn_chunk, n, seed), workers, chunk, ckpt)
        est, ci = _proportion(k, trials, z)
        exact = None
        if n <= EXACT_QN_MAX_N:
            s, tot = qn_singular_count(n)
            exact = Fraction(s, tot)
        trend.append({"n": n, "log_p_over_n": math.log(est) / n if est > 0 else None})
        rows.append(EstimateRow("qn", n, None, trials, est, ci, exact, None, clock()))
    return CampaignReport("qn", config.to_dict(), tuple(rows), config.seed, {"trend": trend})


def run_structure_experiment(config: Config, workers: int = 1,
                             timing: bool = False) -> CampaignReport:
    """Classify kernel directions of random (n-1) x n Bernoulli matrices.

    Experiment keys: ``n`` list, ``p``, ``samples``, ``delta``, ``rho``,
    ``gamma``; the threshold slope L is ``constants.L_threshold``.  One row
    per n with ``estimate`` = max of ``T sqrt(n)`` over spread kernels.
    """
    ex = config.experiment
    samples = int(ex.get("samples", 200))
    p = parse_probability(ex.get("p", 0.3))
    delta = float(ex.get("delta", 0.1))
    rho = float(ex.get("rho", 0.05))
    gamma = parse_probability(ex.get("gamma", 0.05))
    L = config.constants.L_threshold
    chunk = int(ex.get("chunk", 8))
    rows, details = [], {"samples": [], "summary": []}
    for n in (int(v) for v in _as_list(ex.get("n", [16]))):
        if n > 24:
            raise BudgetExceeded(f"exact conditional Levy at n={n}", n, 24)
        clock = _timer(timing)
        seed = derive_seed(config.seed, "structure", n, _p_label(p))
        fn = partial(structure_chunk, n, p, seed, delta, rho, gamma, L)
        recs = [r for part in _map_chunks(fn, _chunks(0, samples, chunk), workers) for r in part]
        spread = [r["T_scaled"] for r in recs if r["cons_flag"] is False]
        summary = {"n": n, "samples": samples,
                   "degenerate": sum(r["degenerate"] for r in recs),
                   "almost_constant": sum(r["cons_flag"] is True for r in recs),
                   "spread": len(spread),
                   "unclassified": samples - len(recs),
                   "max_T_sqrt_n": max(spread) if spread else None}
        details["samples"].extend(recs)
        details["summary"].append(summary)
        rows.append(EstimateRow("structure", n, p, samples, summary["max_T_sqrt_n"], None,
                                None, None, clock()))
    return CampaignReport("structure", config.to_dict(), tuple(rows), config.seed, details)


def run_block_residual_experiment(config: Config, workers: int = 1,
                                  timing: bool = False) -> CampaignReport:
    """Frequency with which ``min_x ||A x - 1||`` is tiny for an n x (n-1) Bernoulli A.

    One row per (n, threshold) for thresholds ``2^(-n/4)`` and ``2^(-n/2)``;
    ``baseline_exact`` is the frequency of trials where the all-ones vector
    lies exactly in the column span (checked by exact rank on flagged trials).
    """
    ex = config.experiment
    trials = int(ex.get("trials", 10 ** 4))
    p = parse_probability(ex.get("p", 0.3))
    chunk = int(ex.get("chunk", 256))
    z = config.constants.tolerances.ci_z
    rows = []
    for n in (int(v) for v in _as_list(ex.get("n", [20]))):
        if n < 2:
            raise ParameterError("block residual needs n >= 2")
        _check_budget(n, trials)
        clock = _timer(timing)
        seed = derive_seed(config.seed, "block-residual", n, _p_label(p))
        res = [r for part in _map_chunks(partial(residual_chunk, n, p, seed),
                                         _chunks(0, trials, chunk), workers) for r in part]
        d = np.array([r[0] for r in res])
        in_span = sum(r[1] for r in res)
        ms = clock()
        for label, thr in (("2^-n/4", 2.0 ** (-n / 4)), ("2^-n/2", 2.0 ** (-n / 2))):
            est, ci = _proportion(int(np.sum(d <= thr)), trials, z)
            rows.append(EstimateRow(f"block-residual[t={label}]", n, p, trials, est, ci,
                                    Fraction(in_span, trials), None, ms))
    return CampaignReport("block-residual", config.to_dict(), tuple(rows), config.seed, {})
