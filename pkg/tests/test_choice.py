import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evsiting._validation import ValidationError
from evsiting.choice import (
    ChoiceCoefficients,
    EmptyChoiceSetError,
    EvAgent,
    ProviderConfig,
    UtilityTable,
    charging_demand,
    choice_probabilities,
    choice_probability_price_gradient,
    nest_shares,
)
from evsiting.synthetic import random_utility_table
from oracles import gev_choice_frequencies, mnl


@st.composite
def tables(draw, max_agents=4):
    n_nests = draw(st.integers(1, 3))
    sizes = [draw(st.integers(1, 5)) for _ in range(n_nests)]
    nest = np.repeat(np.arange(n_nests), sizes)
    n = draw(st.integers(1, max_agents))
    U = draw(arrays(float, (n, nest.size), elements=st.floats(-30, 30)))
    sigma = np.array([draw(st.floats(0.05, 1.0)) for _ in range(n_nests)])
    slope = draw(arrays(float, (n,), elements=st.floats(-5, -0.01)))
    return UtilityTable(U, nest, sigma, slope, draw(st.booleans()))


@settings(max_examples=200, deadline=None)
@given(tables())
def test_probabilities_form_a_distribution(table):
    probs, outside = choice_probabilities(table)
    assert np.all(probs >= 0) and np.all(outside >= 0)
    np.testing.assert_allclose(probs.sum(axis=1) + outside, 1.0, atol=1e-12)
    if not table.outside_good:
        assert np.all(outside == 0)


@settings(max_examples=100, deadline=None)
@given(tables())
def test_within_nest_ratio_follows_scaled_utility(table):
    probs, _ = choice_probabilities(table)
    for k, s in enumerate(table.sigma):
        cols = np.flatnonzero(table.nest == k)
        a, b = cols[0], cols[-1]
        mask = (probs[:, a] > 1e-200) & (probs[:, b] > 1e-200)
        lhs = np.log(probs[mask, a]) - np.log(probs[mask, b])
        rhs = (table.utilities[mask, a] - table.utilities[mask, b]) / s
        np.testing.assert_allclose(lhs, rhs, atol=1e-8 * max(1.0, np.abs(rhs).max(initial=0)))


@settings(max_examples=100, deadline=None)
@given(tables(), st.floats(-50, 50))
def test_common_shift_without_outside_good_is_invisible(table, c):
    table = UtilityTable(table.utilities, table.nest, table.sigma, table.price_slope, False)
    shifted = UtilityTable(table.utilities + c, table.nest, table.sigma, table.price_slope, False)
    np.testing.assert_allclose(choice_probabilities(table)[0], choice_probabilities(shifted)[0], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(tables())
def test_unit_sigma_is_multinomial_logit(table):
    flat = UtilityTable(table.utilities, table.nest, np.ones_like(table.sigma), table.price_slope, table.outside_good)
    probs, outside = choice_probabilities(flat)
    for i, u in enumerate(table.utilities):
        ref, ref_out = mnl(u, table.outside_good)
        np.testing.assert_allclose(probs[i], ref, atol=1e-12)
        assert outside[i] == pytest.approx(ref_out, abs=1e-12)


@pytest.mark.parametrize("u", [-8.0, -1.0, 0.0, 0.3, 4.0])
@pytest.mark.parametrize("sigma", [0.2, 0.7, 1.0])
def test_single_site_is_logistic(u, sigma):
    probs, outside = choice_probabilities(UtilityTable([[u]], [0], [sigma], [-1.0], True))
    assert probs[0, 0] == pytest.approx(1.0 / (1.0 + np.exp(-u)), abs=1e-15)
    assert outside[0] == pytest.approx(1.0 / (1.0 + np.exp(u)), abs=1e-15)


def test_extreme_utilities_stay_finite():
    table = UtilityTable([[800.0, -800.0, 0.0], [-900.0, -900.0, -900.0]], [0, 0, 1], [0.05, 1.0], [-1, -1], True)
    probs, outside = choice_probabilities(table)
    assert np.all(np.isfinite(probs)) and np.all(np.isfinite(outside))
    assert probs[0, 0] == pytest.approx(1.0)
    assert outside[1] == pytest.approx(1.0)


def test_empty_choice_set_without_outside_good():
    table = UtilityTable(np.zeros((2, 0)), [], [0.5, 0.5], [-1, -1], False)
    with pytest.raises(EmptyChoiceSetError):
        choice_probabilities(table)
    probs, outside = choice_probabilities(UtilityTable(np.zeros((2, 0)), [], [0.5], [-1, -1], True))
    assert probs.shape == (2, 0) and np.all(outside == 1.0)


def test_empty_nest_gets_zero_share():
    shares = nest_shares(UtilityTable([[0.0, 1.0]], [0, 0], [0.5, 0.5, 0.5], [-1], True))
    assert shares[0, 1] == 0.0 and shares[0, 2] == 0.0


@pytest.mark.parametrize("sigma", [[0.0], [1.5], [-0.3]])
def test_sigma_outside_unit_interval_rejected(sigma):
    with pytest.raises(ValidationError):
        UtilityTable([[0.0]], [0], sigma, [-1], True)


def test_coefficient_problems_reported():
    bad = ChoiceCoefficients(-1.0, 1.0, (0,), (0,), (0,), (0,), (0,), (2.0,))
    text = " ".join(bad.problems())
    assert "alpha" in text and "beta" in text and "sigma" in text


def test_gev_simulation_agrees():
    rng = np.random.default_rng(11)
    for i in range(6):
        table = random_utility_table(rng, outside_good=bool(i % 2))
        probs, outside = choice_probabilities(table)
        freq, freq_out = gev_choice_frequencies(table.utilities[0], table.nest, table.sigma, table.outside_good, 200_000, rng)
        assert np.max(np.abs(freq - probs[0])) < 5e-3
        assert abs(freq_out - outside[0]) < 5e-3


def _fd_gradient(table, provider, h=1e-6):
    up, _ = choice_probabilities(table.shifted(provider, h))
    dn, _ = choice_probabilities(table.shifted(provider, -h))
    return (up - dn) / (2 * h)


@settings(max_examples=100, deadline=None)
@given(tables(), st.data())
def test_price_gradient_matches_finite_differences(table, data):
    table = UtilityTable(np.clip(table.utilities, -5, 5), table.nest, np.maximum(table.sigma, 0.2), table.price_slope, table.outside_good)
    k = data.draw(st.integers(0, table.sigma.size - 1))
    g = choice_probability_price_gradient(table, k)
    fd = _fd_gradient(table, k)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd) + 1e-9


@settings(max_examples=100, deadline=None)
@given(tables())
def test_own_price_lowers_own_share(table):
    for k in range(table.sigma.size):
        g = choice_probability_price_gradient(table, k)
        own = g[:, table.nest == k].sum(axis=1)
        assert np.all(own <= 1e-15)


def test_demand_is_probability_weighted_energy():
    agents = [EvAgent(0, 0, 0, 50.0, 10.0), EvAgent(1, 0, 0, 60.0, 20.0)]
    probs = np.array([[0.2, 0.3], [0.5, 0.1]])
    np.testing.assert_allclose(charging_demand(probs, agents), [12.0, 5.0])
    with pytest.raises(ValidationError):
        charging_demand(probs[:1], agents)


def test_provider_power_defaults_from_rating():
    assert ProviderConfig(1, 17.0).power_kw == pytest.approx(120 * 12 / 1000)
    assert ProviderConfig(3, 0.5).power_kw == pytest.approx(600 * 400 / 1000)
    assert ProviderConfig(2, 5.0, power_kw=7.0).power_kw == 7.0
