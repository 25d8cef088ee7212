import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpfl.bound import bound_report, hoeffding_term, scalar_weights, weighted_risk
from cpfl.data import LabelDistribution, LabeledDataset
from cpfl.errors import InvalidInputError
from cpfl.nn import MlpModel, evaluate, init_model
from cpfl.sim import CohortModelBundle


def decimal_hoeffding(n, k, delta, m):
    getcontext().prec = 50
    return float((Decimal(2 * n * k) / Decimal(delta)).ln() / Decimal(2 * m)) ** 0.5


def test_closed_form_value():
    assert hoeffding_term(1, 1, 0.5, 2) == pytest.approx(math.sqrt(math.log(4) / 4), abs=1e-12)
    assert hoeffding_term(1, 1, 0.5, 2) == pytest.approx(0.58871, abs=5e-6)


def test_vanishes_with_many_samples():
    assert hoeffding_term(4, 16, 0.05, 10**12) < 1e-5


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0])
def test_rejects_delta_outside_unit_interval(delta):
    with pytest.raises(InvalidInputError):
        hoeffding_term(1, 1, delta, 1)


@settings(max_examples=100)
@given(n=st.integers(1, 500), k=st.integers(1, 500), delta=st.floats(1e-6, 0.999), m=st.integers(1, 10**6))
def test_matches_independent_evaluation_and_grows_with_nk(n, k, delta, m):
    assert hoeffding_term(n, k, delta, m) == pytest.approx(decimal_hoeffding(n, k, delta, m), abs=1e-12)
    assert hoeffding_term(2 * n, k, delta, m) > hoeffding_term(n, k, delta, m)


def test_weighted_risk_hand_example():
    assert weighted_risk([[1.0, 3.0], [2.0, 2.0]], [0.5, 0.5]) == 2.0
    assert weighted_risk([[0.7]], [1.0]) == 0.7
    assert weighted_risk([[0.0, 0.0], [0.0]], [0.3, 0.7]) == 0.0


def test_scalar_weights_from_matrix():
    p = np.array([[0.75, 0.25], [0.25, 0.75]])
    assert scalar_weights(p, [30, 10]).tolist() == [0.625, 0.375]


def test_risk_is_invariant_to_ordering():
    losses = [[0.1, 0.9, 0.4], [2.0], [0.5, 0.25]]
    weights = [0.2, 0.5, 0.3]
    base = weighted_risk(losses, weights)
    reordered = weighted_risk([losses[2][::-1], losses[0][::-1], losses[1]], [0.3, 0.2, 0.5])
    assert reordered == pytest.approx(base, rel=1e-15)


def perfect_setup():
    # logits x * [[40, -40]] put all mass on class 0 for positive inputs
    model = MlpModel([1, 2], [np.array([[40.0, -40.0]])], [np.zeros(2)])
    ds = LabeledDataset(np.ones((4, 1)), np.zeros(4, dtype=int), 2)
    return CohortModelBundle(0, model, LabelDistribution([4, 0]), 1.0, 1), ds


def test_bound_report_single_client_and_note():
    rng = np.random.default_rng(0)
    model = init_model([3, 2], rng)
    ds = LabeledDataset(rng.normal(size=(6, 3)), np.array([0, 1, 0, 1, 1, 0]), 2)
    bundle = CohortModelBundle(0, model, LabelDistribution([3, 3]), 1.0, 1)
    report = bound_report([bundle], [[ds]], np.ones((1, 2)), 0.1)
    assert report.risk_term == evaluate(model, ds)[1]
    assert report.hoeffding_term == hoeffding_term(1, 1, 0.1, 6)
    assert "omitted" in report.note


def test_bound_report_near_zero_for_perfect_teacher():
    bundle, ds = perfect_setup()
    report = bound_report([bundle], [[ds, ds]], [1.0], 0.05)
    assert report.risk_term < 1e-30


def test_bound_report_misalignment():
    bundle, ds = perfect_setup()
    with pytest.raises(InvalidInputError):
        bound_report([bundle], [[ds], [ds]], [1.0], 0.05)
    with pytest.raises(InvalidInputError):
        bound_report([bundle], [[ds]], [0.5, 0.5], 0.05)
