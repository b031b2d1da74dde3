import itertools
from dataclasses import replace

import numpy as np
import pytest

from evsiting.game import (
    MAX_ENUM_SITES,
    BernoulliBelief,
    InfeasibleError,
    PlanningError,
    PointBelief,
    PolicyCapError,
    StageGame,
    draw_types,
    enumerate_policies,
    expected_utility,
    hypervolume_member,
    plan_multistage,
    solve_stage,
)
from evsiting.market import Market
from evsiting.synthetic import toy_scenario
from oracles import exhaustive_best_policy


def test_policy_enumeration_order_and_size():
    pols = enumerate_policies(3)
    assert pols == sorted(itertools.product((0, 1), repeat=3))
    assert enumerate_policies(4, carried=[0, 1, 0, 1]) == [
        (0, 1, 0, 1),
        (0, 1, 1, 1),
        (1, 1, 0, 1),
        (1, 1, 1, 1),
    ]
    assert enumerate_policies(3, allowed=[1, 0, 1]) == [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)]


def test_policy_cap():
    with pytest.raises(PolicyCapError):
        enumerate_policies(MAX_ENUM_SITES + 1)


@pytest.mark.parametrize("p", [0.5, 0.2])
def test_bernoulli_support_is_a_distribution(p):
    carried = np.zeros((3, 3), bool)
    carried[1, 2] = True
    allowed = np.ones((3, 3), bool)
    allowed[2, 0] = False
    sup = BernoulliBelief(p).support(0, carried, allowed)
    assert len(sup) == 2**4  # rival bits minus one carried and one forbidden
    assert sum(w for w, _ in sup) == pytest.approx(1.0)
    for _, joint in sup:
        assert not joint[0].any() and joint[1, 2] and not joint[2, 0]


def test_point_belief():
    joint = np.eye(3, dtype=bool)
    ((w, rivals),) = PointBelief(joint).support(1, None, None)
    assert w == 1.0 and not rivals[1].any() and rivals[0, 0] and rivals[2, 2]


def test_monte_carlo_belief_requires_rng():
    from evsiting._validation import ValidationError

    big = np.ones((3, 9), bool)
    with pytest.raises(ValidationError):
        BernoulliBelief().support(0, np.zeros((3, 9), bool), big)
    sup = BernoulliBelief().support(0, np.zeros((3, 9), bool), big, np.random.default_rng(0), 50)
    assert len(sup) == 50 and sum(w for w, _ in sup) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def game(toy):
    market = Market(toy, toy.stage_population(100))
    g = StageGame(toy, market, np.zeros((3, toy.n_sites), bool), seed=toy.seed)
    g.precompute()
    return g


def test_best_response_matches_exhaustive_search(game, toy):
    rng = np.random.default_rng(123)
    for _ in range(15):
        theta = rng.uniform(0.0, 120.0, toy.n_sites)
        for k in range(3):
            best, _ = exhaustive_best_policy(k, theta, game.market, game.carried, game.allowed, toy.planner.w)
            assert game.best_response(k, theta, qos_filter=False) == best


def test_hypervolume_membership_identifies_the_best_response(game, toy):
    rng = np.random.default_rng(321)
    w = toy.planner.w
    for _ in range(15):
        theta = rng.uniform(0.0, 120.0, toy.n_sites)
        for k in range(3):
            S, ER, B = game.decision_table(k)
            best = game.best_response(k, theta, qos_filter=False)
            members = [hypervolume_member(theta, l, S, ER, B, w) for l in range(len(S))]
            assert members == [tuple(s) == best for s in S]


def test_hypervolume_by_hand():
    S = [[0], [1]]
    # building earns 10 and costs theta: build iff theta < 10
    assert hypervolume_member([4.0], 1, S, [0.0, 10.0], [0.0, 0.0], 0.0)
    assert not hypervolume_member([12.0], 1, S, [0.0, 10.0], [0.0, 0.0], 0.0)
    # a disturbance of 1 at weight 3 shifts the threshold to 7
    assert hypervolume_member([8.0], 0, S, [0.0, 10.0], [0.0, 1.0], 3.0)


def test_expected_utility_matches_value_table(game, toy):
    theta = np.array([10.0, 20.0, 30.0])
    for pol in game.policies(1):
        v = game.value(1, pol)
        u = v.expected_revenue - float(np.dot(theta, pol)) - toy.planner.w * v.expected_disturbance
        assert game.expected_utility(1, pol, theta) == pytest.approx(u)
    assert expected_utility(1, (1, 0, 1), BernoulliBelief(), toy, market=game.market, theta=theta) == pytest.approx(
        game.expected_utility(1, (1, 0, 1), theta)
    )


def _one_site(theta, w=0.0):
    sc = toy_scenario(site_nodes=(12,))
    planner = replace(sc.planner, w=w, theta_lower=theta, theta_upper=theta, qos_filter=False)
    return sc.replace(planner=planner).validate()


def test_rigged_single_site_game():
    cheap = solve_stage(_one_site(0.0), 0)
    assert cheap.station_counts == (1, 1, 1)
    dear = solve_stage(_one_site(1e6), 0)
    assert dear.station_counts == (0, 0, 0)
    assert dear.expected_utilities == (0.0, 0.0, 0.0)


def test_carried_sites_are_kept_and_cost_nothing(toy):
    carried = np.zeros((3, toy.n_sites), bool)
    carried[0, 0] = True
    market = Market(toy, toy.stage_population(50))
    g = StageGame(toy, market, carried, seed=toy.seed)
    assert all(p[0] == 1 for p in g.policies(0))
    assert g.placement_cost(0, (1, 1, 0), np.array([100.0, 5.0, 7.0])) == 5.0
    res = solve_stage(toy, 0, carried)
    assert res.policies[0][0] == 1
    assert 1 not in res.new_sites[0]


def test_types_are_reproducible_and_in_range(toy):
    a = draw_types(toy, 2)
    assert np.array_equal(a, draw_types(toy, 2))
    assert not np.array_equal(a, draw_types(toy, 1))
    assert np.all((a >= toy.planner.theta_lower) & (a <= toy.planner.theta_upper))


def test_unreachable_coverage_is_infeasible(toy):
    sc = toy.replace(planner=replace(toy.planner, coverage_min=1e9)).validate()
    with pytest.raises(InfeasibleError) as err:
        solve_stage(sc, 0)
    assert err.value.providers == [0, 1, 2]
    with pytest.raises(PlanningError) as perr:
        plan_multistage(sc)
    assert perr.value.stage_index == 0 and perr.value.results == []


def test_qos_filter_excludes_policies(toy):
    market = Market(toy, toy.stage_population(100))
    g = StageGame(toy, market, np.zeros((3, toy.n_sites), bool), seed=toy.seed)
    theta = np.zeros(toy.n_sites)
    chosen = g.best_response(2, theta, qos_filter=True)
    assert g.qos_ok(2, chosen)
    for pol in g.policies(2):
        if g.expected_utility(2, pol, theta) > g.expected_utility(2, chosen, theta):
            assert not g.qos_ok(2, pol)


def test_stage_is_deterministic_across_threads(toy):
    a = solve_stage(toy, 1, threads=1)
    b = solve_stage(toy, 1, threads=4)
    assert a == b


def test_plan_builds_monotonically(toy):
    results = plan_multistage(toy)
    assert len(results) == len(toy.stages)
    prev = np.zeros((3, toy.n_sites), int)
    for r in results:
        pol = np.array(r.policies)
        assert np.all(pol >= prev)
        prev = pol
    counts = [r.station_counts for r in results]
    assert all(all(b >= a for a, b in zip(x, y)) for x, y in zip(counts, counts[1:]))
