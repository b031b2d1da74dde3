import numpy as np
import pytest

from evsiting.choice import choice_probabilities
from evsiting.market import NO_PRICE, Market, golden_section_minimize, profit, revenue, utility
from helpers import full_placement, permuted_scenario, symmetric_scenario

PLACEMENTS = [
    [[1, 1, 1], [1, 1, 1], [1, 1, 1]],
    [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    [[1, 0, 1], [0, 1, 1], [1, 1, 0]],
    [[0, 0, 1], [1, 1, 1], [0, 0, 0]],
]


@pytest.fixture(scope="module")
def market(toy):
    return Market(toy, toy.stage_population(100))


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_equilibrium_satisfies_first_order_conditions(market, placement):
    eq = market.equilibrium(placement)
    assert eq.converged
    assert np.max(np.abs(eq.residuals)) < 1e-8
    np.testing.assert_array_equal(market.foc_residuals(placement, np.array(eq.prices)), eq.residuals)


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_foc_is_the_profit_derivative(market, placement):
    p = np.array(market.equilibrium(placement).prices) + np.array([0.05, -0.02, 0.1])
    F = market.foc_residuals(placement, p)
    h = 1e-6
    for k in range(3):
        if not np.any(placement[k]):
            continue
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        fd = (market.profit_at(k, up, placement) - market.profit_at(k, dn, placement)) / (2 * h)
        assert F[k] == pytest.approx(fd, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_jacobian_matches_finite_differences(market, placement):
    placement = np.array(placement, bool)
    p = np.array(market.equilibrium(placement).prices) + 0.03
    J = market.foc_jacobian(placement, p)
    h = 1e-6
    active = placement.any(axis=1)
    for l in np.flatnonzero(active):
        up, dn = p.copy(), p.copy()
        up[l] += h
        dn[l] -= h
        col = (market.foc_residuals(placement, up) - market.foc_residuals(placement, dn)) / (2 * h)
        assert np.linalg.norm(J[active, l] - col[active]) <= 1e-6 * np.linalg.norm(col[active]) + 1e-8


def test_symmetric_providers_charge_equal_prices():
    sc = symmetric_scenario()
    m = Market(sc, sc.stage_population(100))
    eq = m.equilibrium(full_placement(sc))
    assert eq.converged
    assert max(eq.prices) - min(eq.prices) < 1e-8


def test_equilibrium_prices_are_best_responses(market):
    placement = np.array(PLACEMENTS[2], bool)
    p = np.array(market.equilibrium(placement).prices)
    for k in range(3):
        c = market.bracket(k, placement)[0]
        grid = c + np.arange(0, 2.0 + 1e-12, 1e-3)
        best = -np.inf
        for x in grid:
            trial = p.copy()
            trial[k] = x
            best = max(best, market.profit_at(k, trial, placement))
        assert market.profit_at(k, p, placement) >= best - 1e-9 * max(1.0, abs(best))


def test_monopoly_markup_formula(toy):
    agent = toy.agents[0]
    m = Market(toy, [agent])
    placement = np.zeros((3, toy.n_sites), bool)
    placement[1, 0] = True
    eq = m.equilibrium(placement)
    price = eq.prices[1]
    table, _ = m.table(placement, np.array(eq.prices))
    P = choice_probabilities(table)[0][0, 0]
    c = toy.lmp_matrix()[1, 0]
    # profit (p - c) q P(p) with dP/dp = (beta / income) P (1 - P)
    assert price - c == pytest.approx(agent.income / (-toy.coefficients.beta * (1 - P)), rel=1e-9)
    assert eq.prices[0] == NO_PRICE and eq.prices[2] == NO_PRICE


def test_permuting_providers_permutes_prices(toy):
    perm = (2, 0, 1)
    other = permuted_scenario(toy, perm)
    base = np.array(PLACEMENTS[2], bool)
    m1 = Market(toy, toy.stage_population(100))
    m2 = Market(other, other.stage_population(100))
    p1 = np.array(m1.equilibrium(base).prices)
    p2 = np.array(m2.equilibrium(base[list(perm)]).prices)
    np.testing.assert_allclose(p2, p1[list(perm)], atol=1e-8)


def test_provider_without_sites_earns_nothing(market):
    placement = np.array(PLACEMENTS[3], bool)
    out = market.outcome(placement)
    assert out.equilibrium.prices[2] == NO_PRICE
    assert out.revenue[2] == 0.0 and out.disturbance[2] == 0.0
    assert np.all(out.demand[2] == 0.0)


def test_empty_placement():
    from evsiting.synthetic import toy_scenario

    sc = toy_scenario()
    m = Market(sc, sc.stage_population(50))
    out = m.outcome(np.zeros((3, sc.n_sites), bool))
    assert out.equilibrium.converged and out.equilibrium.prices == (0.0, 0.0, 0.0)
    assert np.all(out.revenue == 0.0) and np.all(out.disturbance == 0.0)


def test_disturbance_is_positive_with_demand(market):
    out = market.outcome(full_placement(market.scenario))
    assert np.all(out.disturbance > 0)


def test_revenue_and_utility_helpers(market):
    placement = full_placement(market.scenario)
    out = market.outcome(placement)
    p = np.array(out.prices)
    for k in range(3):
        assert revenue(k, p, placement, market) == pytest.approx(out.revenue[k])
        assert revenue(k, p, placement, market) == pytest.approx(market.profit_at(k, p, placement))
    assert profit(10.0, [1.0, 2.0], [1, 0]) == 9.0
    assert utility(9.0, 0.5, 4.0) == 7.0


def test_precompute_is_thread_independent(toy):
    placements = [np.array(p, bool) for p in PLACEMENTS]
    a = Market(toy, toy.stage_population(100))
    b = Market(toy, toy.stage_population(100))
    a.precompute(placements, threads=1)
    b.precompute(placements, threads=4)
    for pl in placements:
        oa, ob = a.outcome(pl), b.outcome(pl)
        assert oa.equilibrium == ob.equilibrium
        assert np.array_equal(oa.revenue, ob.revenue) and np.array_equal(oa.disturbance, ob.disturbance)


def test_golden_section_finds_parabola_minimum():
    assert golden_section_minimize(lambda x: (x - 0.3) ** 2, -1.0, 2.0) == pytest.approx(0.3, abs=1e-8)


def test_best_response_fallback_reaches_the_same_equilibrium(market):
    placement = np.array(PLACEMENTS[1], bool)
    eq = market.equilibrium(placement)
    active = placement.any(axis=1)
    start = np.where(active, np.array(eq.prices) + 0.5, 0.0)
    br = market._best_response_iteration(placement, start, active)
    np.testing.assert_allclose(br, eq.prices, atol=1e-6)
