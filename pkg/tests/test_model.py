import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmtlab.model import (Config, ConstantsConfig, DiscreteDensity, IidBernoulli, ParameterError,
                          Slice, SliceWindow, as_matrix01, as_unit_vector, load_config,
                          model_from_dict, model_to_dict, parse_probability, save_config,
                          sum_weights)


def test_parse_probability():
    assert parse_probability("3/10") == Fraction(3, 10)
    assert isinstance(parse_probability(0.3), float)
    assert parse_probability(1) == Fraction(1)


def test_model_validation():
    with pytest.raises(ParameterError):
        IidBernoulli(0)
    with pytest.raises(ParameterError):
        IidBernoulli(1.0)
    with pytest.raises(ParameterError):
        SliceWindow("1/4", "1/3")
    with pytest.raises(ParameterError):
        Slice(-1)
    with pytest.raises(ParameterError):
        Slice(5).allowed_sums(4)


def test_slice_window_sums():
    assert list(SliceWindow("3/10", "1/20").allowed_sums(20)) == [5, 6, 7]
    assert list(SliceWindow(0.3, 0.05).allowed_sums(20)) == [5, 6, 7]
    assert list(SliceWindow("1/2", "1/2").allowed_sums(4)) == [0, 1, 2, 3, 4]
    with pytest.raises(ParameterError):
        SliceWindow("1/2", "1/100").allowed_sums(3)


@given(st.integers(1, 30), st.fractions(min_value=Fraction(1, 50), max_value=Fraction(49, 50)))
def test_weights_are_a_distribution(n, p):
    for model in (IidBernoulli(p), Slice(n // 2)):
        w = sum_weights(model, n)
        assert sum(math.comb(n, k) * v for k, v in w.items()) == 1


def test_window_weights_renormalized():
    w = sum_weights(SliceWindow("3/10", "1/10"), 10)
    assert set(w) == {2, 3, 4}
    assert sum(math.comb(10, k) * v for k, v in w.items()) == 1
    # ratio of neighbouring weights is p/(1-p)
    assert w[3] / w[2] == Fraction(3, 7)


@pytest.mark.parametrize("m", [IidBernoulli("1/3"), Slice(4), SliceWindow(0.3, 0.1)])
def test_model_dict_roundtrip(m):
    assert model_from_dict(model_to_dict(m)) == m


def test_config_roundtrip_bit_exact(tmp_path):
    cfg = Config(seed=2**63 + 5, constants=ConstantsConfig(C_lkr=1.25, L_threshold=8.0),
                 experiment={"name": "singularity", "n": [12, 16], "p": ["7/20"], "trials": 1000})
    text = cfg.dumps()
    assert Config.loads(text) == cfg
    assert Config.loads(text).dumps() == text
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_constants_validation():
    with pytest.raises(ParameterError):
        ConstantsConfig(c_round=2.0)
    with pytest.raises(ParameterError):
        ConstantsConfig.from_dict({"bogus": 1})
    with pytest.raises(ParameterError):
        Config.from_dict({"seed": 1, "extra": 2})


def test_vector_and_matrix_checks():
    with pytest.raises(ParameterError):
        as_matrix01([[0, 2]])
    with pytest.raises(ParameterError):
        as_unit_vector([1, 1])
    assert np.allclose(as_unit_vector([0.6, 0.8]), [0.6, 0.8])


def test_discrete_density():
    f = DiscreteDensity.from_weights(-1, [1, 2, 1])
    assert f(0) == Fraction(1, 2) and f(5) == 0
    assert f.as_dict() == {-1: Fraction(1, 4), 0: Fraction(1, 2), 1: Fraction(1, 4)}
    assert f.is_log_lipschitz(1.0) and not f.is_log_lipschitz(0.5)
    with pytest.raises(ParameterError):
        DiscreteDensity(0, (Fraction(1, 2),))
    with pytest.raises(ParameterError):
        DiscreteDensity(0, (Fraction(3, 2), Fraction(-1, 2)))


def test_geometric_family_is_log_lipschitz():
    f = DiscreteDensity.two_sided_geometric(16)
    assert f.lipschitz_eta == 0.25
    assert abs(sum(f.masses) - 1) < 1e-12
    assert f(0) == max(f.masses)
    assert f(4) / f(0) == pytest.approx(0.5)
