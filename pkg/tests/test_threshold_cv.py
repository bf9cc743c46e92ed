import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from ensvs.data import Dataset
from ensvs.errors import ValidationError
from ensvs.simulation import apply_mcar
from ensvs.threshold_cv import ThresholdCvConfig, nested_models, tune_threshold


def _one_signal(seed, n=150, p=10):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    return Dataset(x, x[:, 0] + rng.standard_normal(n))


def test_equal_ratios_pick_largest_grid_value():
    d = _one_signal(0)
    t, curve = tune_threshold(d, np.ones(d.p), ThresholdCvConfig(grid=(0.5, 0.7, 0.9)))
    assert t == 0.9
    assert len({round(m, 12) for _, m, _ in curve}) == 1


def test_one_signal_prefers_high_threshold():
    ratios = np.array([0.99] + [0.3] * 9)
    picks = [tune_threshold(_one_signal(s), ratios, ThresholdCvConfig(grid=(0.5, 0.95), seed=s))[0]
             for s in range(100)]
    assert np.mean(np.array(picks) == 0.95) > 0.5


def test_noise_variables_dropped_by_cv():
    rng = np.random.default_rng(1)
    ratios = np.concatenate([[1.0], rng.uniform(0.2, 0.8, 9)])
    picks = [tune_threshold(_one_signal(s), ratios, ThresholdCvConfig(seed=s))[0] for s in range(30)]
    assert np.median(picks) >= 0.95


def test_curve_is_sorted_and_finite():
    d = _one_signal(2)
    ratios = np.linspace(0.1, 1.0, d.p)
    t, curve = tune_threshold(d, ratios)
    ts = [c[0] for c in curve]
    assert ts == sorted(ts)
    assert t in ts
    assert all(np.isfinite(c[1]) and np.isfinite(c[2]) for c in curve)


def test_min_rule_never_sparser_than_one_sd():
    d = _one_signal(3)
    ratios = np.linspace(0.1, 1.0, d.p)[::-1]
    t_sd, _ = tune_threshold(d, ratios, ThresholdCvConfig(rule="one_sd", seed=1))
    t_min, _ = tune_threshold(d, ratios, ThresholdCvConfig(rule="min", seed=1))
    assert t_min <= t_sd


def test_screening_in_high_dimension():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((40, 80))
    d = Dataset(x, x[:, 0] + 0.5 * rng.standard_normal(40))
    ratios = np.full(80, 0.6)
    ratios[0] = 1.0
    t, curve = tune_threshold(d, ratios)
    assert t == 1.0
    assert curve


def test_all_infeasible_raises():
    rng = np.random.default_rng(5)
    d = Dataset(rng.standard_normal((12, 20)), rng.standard_normal(12))
    with pytest.raises(ValidationError):
        tune_threshold(d, np.ones(20), ThresholdCvConfig(grid=(0.5,), screen_size=20))


def test_incomplete_data_joint_imputation():
    d = apply_mcar(_one_signal(6), 0.2, seed=7)
    ratios = np.array([1.0] + [0.4] * 9)
    t1, c1 = tune_threshold(d, ratios, ThresholdCvConfig(seed=3))
    t2, c2 = tune_threshold(d, ratios, ThresholdCvConfig(seed=3))
    assert t1 == t2 and c1 == c2
    assert t1 >= 0.95


def test_validation():
    d = _one_signal(0)
    with pytest.raises(ValidationError):
        tune_threshold(d, np.ones(3))
    with pytest.raises(ValidationError):
        ThresholdCvConfig(folds=1)
    with pytest.raises(ValidationError):
        ThresholdCvConfig(grid=(0.0, 0.5))


@settings(max_examples=60, deadline=None)
@given(ratios=hnp.arrays(float, 12, elements=st.floats(0, 1)),
       grid=st.lists(st.floats(0.01, 1), min_size=2, max_size=6, unique=True))
def test_nested_models_are_nested(ratios, grid):
    grid = sorted(grid)
    models = nested_models(ratios, grid)
    for small, big in zip(models[1:], models[:-1]):
        assert set(small) <= set(big)
    for t, mdl in zip(grid, models):
        assert set(mdl) == set(np.flatnonzero(ratios >= t))
