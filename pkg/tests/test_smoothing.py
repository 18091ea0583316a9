import dataclasses
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmtlab.model import DiscreteDensity, ParameterError
from rmtlab.rng import RandomSource
from rmtlab.smoothing import (AdmissibleSet, Interval, StepRecord, TwoIntervals,
                              admissible_from_witness, build_step_record, classify_steps,
                              direct_table, eval_f_direct, eval_f_recursive, inversion_experiment,
                              product_identity_check, validate_admissible)
from rmtlab.structured import ConsParams, nonconstant_decompose


def random_instance(rng, ell, span=4, width=6):
    X = [int(v) for v in rng.integers(-span, span + 1, size=ell)]
    weights = [int(v) for v in rng.integers(0, 5, size=width)]
    weights[0] += 1
    f = DiscreteDensity.from_weights(int(rng.integers(-3, 3)), weights)
    return f, X


def literal_average(f, X, s, ell, t):
    vs = [v for v in itertools.product((0, 1), repeat=ell) if sum(v) == s]
    return sum((f(t + sum(a * b for a, b in zip(v, X))) for v in vs), Fraction(0)) / len(vs)


# --- admissible sets -------------------------------------------------------

def plain_set(n=10, N=4, variant="P", delta=0.04):
    return AdmissibleSet(N, n, 1.5, 2.0, 3.0, delta, variant, (Interval(-N, N),) * n)


def test_all_base_intervals_valid():
    assert validate_admissible(plain_set()) == []


def test_size_violation_named():
    A = dataclasses.replace(plain_set(), K1=1.1, K2=1.5, K3=1.9)
    problems = validate_admissible(A)
    assert problems and all(p.startswith("size:") for p in problems)


def test_q_wrong_sign_named():
    N, n = 4, 20
    sets = [Interval(-N, N)] * n
    sets[0] = Interval(2 * N, 4 * N)            # odd early set with the wrong sign
    sets[1] = Interval(2 * N, 4 * N)
    A = AdmissibleSet(N, n, 2.0, 4.0, 5.0, 0.05, "Q", tuple(sets))
    problems = validate_admissible(A)
    assert problems and all(p.startswith("Q2:") for p in problems)
    assert "A_1" in problems[0]


def test_integer_sets():
    s = TwoIntervals.symmetric(3, 5)
    assert s.size == 6 and s.is_symmetric() and s.min_abs() == 3 and s.max_abs() == 5
    assert sorted(s.element(k) for k in range(6)) == [-5, -4, -3, 3, 4, 5]
    assert Interval(2, 4).size == 3 and Interval(2, 4).contains(3)
    with pytest.raises(ParameterError):
        Interval(3, 2)


def _witness_sets():
    rng = np.random.default_rng(11)
    params = ConsParams(0.2, 0.1)
    out = []
    for n in range(16, 25):
        for _ in range(20):
            x = rng.normal(size=n)
            x /= np.linalg.norm(x)
            w = nonconstant_decompose(x, params)
            if w.case != "AlmostConstant":
                out.append((w.case, admissible_from_witness(w, n, 8, 0.2)))
    return out


def test_witness_sets_valid():
    cases = set()
    for case, A in _witness_sets():
        assert validate_admissible(A) == []
        cases.add(case)
    assert cases == {"P", "Q"}


def _mutations(A):
    N, n, sets = A.N, A.n, list(A.coordinate_sets)
    yield "parameters:", dataclasses.replace(A, K1=0.5)
    yield "size:", dataclasses.replace(A, K3=A.K2 + 1e-9, K2=A.K2, K1=A.K1) \
        if A.log_size() > n * math.log((A.K2 + 1e-9) * N) else None
    big = list(sets)
    big[-1] = Interval(n * N - 2 * N, n * N + 1)
    yield "magnitude:", dataclasses.replace(A, coordinate_sets=tuple(big))
    small = list(sets)
    small[-1] = Interval(-N + 1, N)
    yield "bulk:", dataclasses.replace(A, coordinate_sets=tuple(small))
    if A.variant == "P":
        m = list(sets)
        m[1] = Interval(-N + 1, N)
        yield "P1:", dataclasses.replace(A, coordinate_sets=tuple(m))
        m = list(sets)
        m[0] = TwoIntervals(-sets[0].hi2, -sets[0].lo2, sets[0].lo2, sets[0].hi2 - 1)
        yield "P2:", dataclasses.replace(A, coordinate_sets=tuple(m))
    else:
        m = list(sets)
        m[1] = Interval(-sets[1].hi, -sets[1].lo)
        yield "Q1:", dataclasses.replace(A, coordinate_sets=tuple(m))
        m = list(sets)
        m[0] = Interval(-sets[1].hi, -sets[1].lo + 1 + 2 * N)
        yield "Q2:", dataclasses.replace(A, coordinate_sets=tuple(m))


def test_single_clause_mutations_rejected():
    seen = set()
    sets = _witness_sets()
    picked = [A for c, A in sets if c == "P"][:6] + [A for c, A in sets if c == "Q"][:6]
    for A in picked:
        for clause, B in _mutations(A):
            if B is None:
                continue
            problems = validate_admissible(B)
            assert problems, clause
            assert all(p.startswith(clause) for p in problems), (clause, problems)
            seen.add(clause)
    assert {"parameters:", "magnitude:", "bulk:", "P1:", "P2:", "Q1:", "Q2:"} <= seen


# --- slice averages --------------------------------------------------------

def test_direct_examples():
    f = DiscreteDensity.point_mass(0)
    assert eval_f_direct(f, [1, 2], 1, 2, -1) == Fraction(1, 2)
    g = DiscreteDensity.from_weights(-1, [1, 2, 1])
    assert all(eval_f_direct(g, [3, 5], 0, 2, t) == g(t) for t in range(-3, 3))
    assert eval_f_direct(g, [3, 5], 2, 2, -9) == g(-1)
    with pytest.raises(ParameterError):
        eval_f_direct(g, [1, 2], 3, 2, 0)


def test_direct_budget():
    from rmtlab.model import BudgetExceeded
    with pytest.raises(BudgetExceeded):
        eval_f_direct(DiscreteDensity.point_mass(0), [1] * 30, 15, 30, 0)


def test_recursion_examples():
    f = DiscreteDensity.point_mass(0)
    tab = eval_f_recursive(f, [5], 1, 1)
    assert tab.table(1, 1) == {-5: 1}
    g = DiscreteDensity.from_weights(0, [1, 3])
    tab = eval_f_recursive(g, [2, -1, 4], 0, 3)
    assert tab.table(0, 3) == g.as_dict()


@pytest.mark.parametrize("seed", range(100))
def test_recursion_matches_direct(seed):
    rng = np.random.default_rng(seed)
    ell = int(rng.integers(1, 13))
    s = int(rng.integers(0, ell + 1))
    f, X = random_instance(rng, ell)
    tab = eval_f_recursive(f, X, s, ell)
    for l2 in range(ell + 1):
        for s2 in range(max(0, s - (ell - l2)), min(s, l2) + 1):
            assert tab.table(s2, l2) == direct_table(f, X, s2, l2)


def test_direct_matches_literal_average():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f, X = random_instance(rng, 6)
        s = int(rng.integers(0, 7))
        for t in range(-8, 8):
            assert eval_f_direct(f, X, s, 6, t) == literal_average(f, X, s, 6, t)


# --- step records -----------------------------------------------------------

def test_step_record_examples():
    rec = build_step_record(DiscreteDensity.point_mass(0), [5], 1, 1, -5)
    assert rec.w_seq == (1,) and rec.t_seq == (0, -5) and rec.h_seq == (1, 1)
    g = DiscreteDensity.from_weights(0, [1, 3])
    rec = build_step_record(g, [2, 7], 0, 2, 1)
    assert rec.w_seq == (0, 0) and rec.t_seq == (1, 1, 1) and set(rec.h_seq) == {Fraction(3, 4)}
    with pytest.raises(ParameterError):
        build_step_record(DiscreteDensity.point_mass(0), [5], 1, 1, 0)


def test_product_identity_examples():
    assert product_identity_check(StepRecord(4, 2, (0,) * 5, (0, 1, 0, 1), (1,) * 5)) == \
        (Fraction(1, 6), Fraction(1, 6))
    for w in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        lhs, rhs = product_identity_check(StepRecord(3, 1, (0,) * 4, w, (1,) * 4))
        assert lhs == rhs == Fraction(1, 3)
    assert product_identity_check(StepRecord(5, 0, (0,) * 6, (0,) * 5, (1,) * 6)) == (1, 1)


def _check_record(f, X, s, ell, t, tab):
    rec = build_step_record(f, X, s, ell, t, tab)
    lhs, rhs = product_identity_check(rec)
    assert lhs == rhs
    assert rec.h_seq[-1] == tab(s, ell, t)
    assert all(a >= b for a, b in zip(rec.h_seq, rec.h_seq[1:]))
    for i in range(1, ell + 1):
        assert rec.t_seq[i - 1] - rec.t_seq[i] in {0, X[i - 1]}
        if rec.w_seq[i - 1] == 0:
            assert rec.t_seq[i - 1] == rec.t_seq[i]
    assert sum(rec.w_seq) == s
    return rec


@pytest.mark.slow
def test_step_records_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        ell = int(rng.integers(1, 17))
        s = int(rng.integers(0, ell + 1))
        f, X = random_instance(rng, ell, span=3, width=4)
        tab = eval_f_recursive(f, X, s, ell)
        support = list(tab.table(s, ell))
        t = support[int(rng.integers(len(support)))]
        _check_record(f, X, s, ell, t, tab)


@given(st.integers(0, 2**32 - 1))
def test_step_record_property(seed):
    rng = np.random.default_rng(seed)
    ell = int(rng.integers(1, 9))
    s = int(rng.integers(0, ell + 1))
    f, X = random_instance(rng, ell)
    tab = eval_f_recursive(f, X, s, ell)
    t = max(tab.table(s, ell), key=tab.table(s, ell).get)
    _check_record(f, X, s, ell, t, tab)


def test_classify_examples():
    g = DiscreteDensity.from_weights(0, [1, 3])
    rec = build_step_record(g, [2, 7], 0, 2, 1)
    flags = classify_steps(rec, 0.1, 1.0, 1, g, [2, 7])
    assert [fl.robust for fl in flags] == [False, False]
    rec = StepRecord(2, 1, (0, 0, 0), (1, 0), (1, 1, 1))
    f = DiscreteDensity.point_mass(0)
    flags = classify_steps(rec, 0.3, 1.0, 1, f, [1, 1])
    assert flags[1].robust
    # a path far from the support of f: every probe reads zero
    rec = StepRecord(3, 1, (500, 500, 500, 500), (0, 0, 1), (1, 1, 1, 1))
    assert all(fl.drop for fl in classify_steps(rec, 0.1, 1e-9, 1, f, [1, 1, 1]))


# --- inversion experiment --------------------------------------------------

def test_inversion_singletons_uniform():
    n = 8
    A = AdmissibleSet(1, n, 1.5, 2.0, 3.0, 0.1, "P", (Interval(1, 1),) * n)
    res = inversion_experiment(A, 0.5, 0.25, 0.5, 20, RandomSource(1), check=False)
    assert res.fraction in (0.0, 1.0)
    assert len({r.levy_value for r in res.rows}) == 1


def test_inversion_large_L_gives_zero():
    n, N = 14, 8
    A = AdmissibleSet(N, n, 1.5, 2.0, 3.0, 0.05, "P", (Interval(-N, N),) * n)
    res = inversion_experiment(A, 0.5, 0.25, 64.0, 1000, RandomSource(2))
    assert res.fraction == 0.0
    assert all(r.method == "exact" for r in res.rows)


def test_inversion_monotone_in_L_and_csv():
    n, N = 10, 4
    A = AdmissibleSet(N, n, 1.5, 2.0, 3.0, 0.05, "P", (Interval(-N, N),) * n)
    fr = [inversion_experiment(A, 0.5, 0.25, L, 200, RandomSource(3)).fraction
          for L in (0.5, 1.0, 2.0, 4.0)]
    assert fr == sorted(fr, reverse=True)
    csv = inversion_experiment(A, 0.5, 0.25, 1.0, 5, RandomSource(3)).to_csv().splitlines()
    assert csv[0] == "sample_id,levy_value,method,exceeds_threshold" and len(csv) == 6
