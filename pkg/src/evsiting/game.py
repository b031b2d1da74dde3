"""Bayesian placement game, one stage at a time, and the multi-stage loop.

Every provider knows its own placement-cost vector and holds a belief over
the rivals' joint placement. It picks the build vector with the highest
expected utility among those meeting the QoS thresholds. Stations built in
earlier stages stay built.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, derive_seed, make_rng, placement_key
from .market import Market
from .results import QosEstimate, StageResult
from .traffic import estimate_qos

MAX_ENUM_SITES = 20
EXACT_SUPPORT_LIMIT = 2**16


class PolicyCapError(ValueError):
    """Too many free sites to enumerate every build vector."""


class InfeasibleError(RuntimeError):
    """No candidate policy meets the QoS thresholds."""

    def __init__(self, providers, message=None):
        self.providers = list(providers)
        super().__init__(message or f"no QoS-feasible placement for providers {self.providers}")


class PlanningError(RuntimeError):
    """A stage failed; ``results`` holds the stages completed before it."""

    def __init__(self, stage_index, cause, results):
        self.stage_index = stage_index
        self.cause = cause
        self.results = list(results)
        super().__init__(f"stage {stage_index + 1} failed: {cause}")


def enumerate_policies(n_sites, carried=None, allowed=None):
    """All 0/1 build vectors that keep ``carried`` sites, in lexicographic order.

    Sites outside ``allowed`` are held at their carried value.
    """
    carried = np.zeros(n_sites, dtype=bool) if carried is None else np.asarray(carried, dtype=bool)
    allowed = np.ones(n_sites, dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool)
    free = [j for j in range(n_sites) if allowed[j] and not carried[j]]
    if n_sites > MAX_ENUM_SITES or len(free) > MAX_ENUM_SITES:
        raise PolicyCapError(f"{n_sites} candidate sites exceed the enumeration cap of {MAX_ENUM_SITES}")
    out = []
    for bits in itertools.product((0, 1), repeat=len(free)):
        p = carried.astype(int).copy()
        p[free] = bits
        out.append(tuple(int(b) for b in p))
    return out


class BernoulliBelief:
    """Each undecided rival bit is built independently with probability ``p``.

    Bits carried from earlier stages are known to be built; bits a rival may
    not build are known to be empty.
    """

    def __init__(self, p=0.5):
        self.p = float(p)

    def support(self, k, carried, allowed, rng=None, n_draws=1000):
        """List of ``(probability, rivals)`` where ``rivals`` is the joint
        placement with row ``k`` zeroed."""
        carried = np.asarray(carried, dtype=bool)
        base = carried.copy()
        base[k] = False
        free = np.argwhere(np.asarray(allowed, bool) & ~carried)
        free = [tuple(ix) for ix in free if ix[0] != k]
        if 2 ** len(free) <= EXACT_SUPPORT_LIMIT:
            out = []
            for bits in itertools.product((0, 1), repeat=len(free)):
                joint = base.copy()
                ones = sum(bits)
                for (r, c), b in zip(free, bits):
                    joint[r, c] = bool(b)
                out.append((self.p**ones * (1 - self.p) ** (len(bits) - ones), joint))
            return out
        if rng is None:
            raise ValidationError("a seeded generator is required for Monte-Carlo beliefs")
        out = []
        for _ in range(n_draws):
            joint = base.copy()
            draws = rng.random(len(free)) < self.p
            for (r, c), b in zip(free, draws):
                joint[r, c] = bool(b)
            out.append((1.0 / n_draws, joint))
        return out


class PointBelief:
    """Rivals' placement is known exactly."""

    def __init__(self, joint):
        self.joint = np.asarray(joint, dtype=bool)

    def support(self, k, carried, allowed, rng=None, n_draws=1000):
        joint = self.joint.copy()
        joint[k] = False
        return [(1.0, joint)]


def hypervolume_member(theta, l, policies, expected_revenue, expected_disturbance, w):
    """True iff the cost vector ``theta`` lies in the decision region of policy ``l``.

    ``policies`` is the (n_policies, L) table; ``l`` indexes into it.
    """
    S = np.asarray(policies, dtype=float)
    ER = np.asarray(expected_revenue, dtype=float)
    B = np.asarray(expected_disturbance, dtype=float)
    theta = np.asarray(theta, dtype=float)
    margin = (S - S[l]) @ theta - (ER - ER[l]) + w * (B - B[l])
    margin = np.delete(margin, l)
    return bool(np.all(margin > 0))


@dataclass(frozen=True)
class PolicyValue:
    policy: tuple
    expected_revenue: float
    expected_disturbance: float
    converged: bool


class StageGame:
    """Expected payoffs and QoS of candidate policies at one stage.

    Market outcomes and QoS estimates are memoised per joint placement.
    """

    def __init__(self, scenario, market: Market, carried, *, belief=None, seed=0, stage_index=0, threads=1, qos_runs=None):
        self.scenario = scenario
        self.market = market
        self.carried = np.asarray(carried, dtype=bool)
        self.allowed = scenario.allowed_mask() | self.carried
        self.belief = belief or BernoulliBelief(scenario.planner.belief_p)
        self.seed = seed
        self.stage_index = stage_index
        self.threads = threads
        self.qos_runs = scenario.planner.monte_carlo_runs if qos_runs is None else qos_runs
        self._support = {}
        self._values = {}
        self._qos = {}
        self._qos_draw_cache = {}
        self._lock = threading.Lock()

    @property
    def n_providers(self):
        return self.carried.shape[0]

    def policies(self, k):
        return enumerate_policies(self.carried.shape[1], self.carried[k], self.allowed[k])

    def opponent_support(self, k):
        if k not in self._support:
            rng = make_rng(self.seed, "belief", self.stage_index, k)
            self._support[k] = self.belief.support(
                k, self.carried, self.allowed, rng, self.scenario.planner.belief_mc_draws
            )
        return self._support[k]

    def _joint(self, k, policy, rivals):
        joint = rivals.copy()
        joint[k] = np.asarray(policy, dtype=bool)
        return joint

    def joints_needed(self, k):
        return [self._joint(k, pol, rivals) for pol in self.policies(k) for _, rivals in self.opponent_support(k)]

    def value(self, k, policy) -> PolicyValue:
        key = (k, tuple(policy))
        hit = self._values.get(key)
        if hit is not None:
            return hit
        er = eb = 0.0
        ok = True
        for prob, rivals in self.opponent_support(k):
            out = self.market.outcome(self._joint(k, policy, rivals))
            er += prob * out.revenue[k]
            eb += prob * out.disturbance[k]
            ok = ok and out.equilibrium.converged
        val = PolicyValue(tuple(policy), er, eb, ok)
        with self._lock:
            return self._values.setdefault(key, val)

    def placement_cost(self, k, policy, theta):
        new = np.asarray(policy, bool) & ~self.carried[k]
        return float(np.dot(theta, new))

    def expected_utility(self, k, policy, theta, w=None):
        w = self.scenario.planner.w if w is None else w
        v = self.value(k, policy)
        return v.expected_revenue - self.placement_cost(k, policy, theta) - w * v.expected_disturbance

    # -- QoS -----------------------------------------------------------------

    def joint_qos(self, joint) -> QosEstimate:
        key = placement_key(joint)
        hit = self._qos.get(key)
        if hit is not None:
            return hit
        out = self.market.outcome(joint)
        q = estimate_qos(
            self.scenario,
            joint,
            out.prices,
            self.qos_runs,
            derive_seed(self.seed, "qos", self.stage_index),
            population=self.market.population,
            outside_good=self.market.outside_good,
            cache=self._qos_draw_cache,
        )
        with self._lock:
            return self._qos.setdefault(key, q)

    def qos_support(self, k):
        support = self.opponent_support(k)
        n = self.scenario.planner.qos_draws
        if len(support) <= n:
            return support
        rng = make_rng(self.seed, "qos-rivals", self.stage_index, k)
        probs = np.array([p for p, _ in support])
        picks = rng.choice(len(support), size=n, replace=True, p=probs / probs.sum())
        return [(1.0 / n, support[i][1]) for i in picks]

    def policy_qos(self, k, policy):
        """Belief-averaged (delay, coverage) of provider ``k`` under ``policy``."""
        delay = cover = 0.0
        for prob, rivals in self.qos_support(k):
            q = self.joint_qos(self._joint(k, policy, rivals))
            delay += prob * q.delay[k]
            cover += prob * q.coverage[k]
        return delay, cover

    def qos_ok(self, k, policy):
        planner = self.scenario.planner
        delay, cover = self.policy_qos(k, policy)
        if delay > planner.delay_max:
            return False
        if planner.coverage_sense == "<=":
            return cover <= planner.coverage_min
        return cover >= planner.coverage_min

    # -- decisions -----------------------------------------------------------

    def best_response(self, k, theta, qos_filter=None, w=None):
        planner = self.scenario.planner
        qos_filter = planner.qos_filter if qos_filter is None else qos_filter
        best_key, best = None, None
        for pol in self.policies(k):
            if qos_filter and not self.qos_ok(k, pol):
                continue
            u = self.expected_utility(k, pol, theta, w)
            key = (-u, sum(pol), pol)
            if best_key is None or key < best_key:
                best_key, best = key, pol
        if best is None:
            raise InfeasibleError([k])
        return best

    def decision_table(self, k):
        """Policies with expected revenue and disturbance, as arrays."""
        pols = self.policies(k)
        vals = [self.value(k, p) for p in pols]
        return (
            np.array(pols, dtype=int),
            np.array([v.expected_revenue for v in vals]),
            np.array([v.expected_disturbance for v in vals]),
        )

    def precompute(self):
        joints = {}
        for k in range(self.n_providers):
            for j in self.joints_needed(k):
                joints.setdefault(placement_key(j), j)
        self.market.precompute(list(joints.values()), self.threads)


def expected_utility(k, policy, belief, scenario, w=None, *, market, theta=None, carried=None, seed=0):
    """Belief-weighted utility of provider ``k`` building ``policy``."""
    carried = np.zeros((scenario.n_providers, scenario.n_sites), bool) if carried is None else carried
    game = StageGame(scenario, market, carried, belief=belief, seed=seed)
    theta = np.zeros(scenario.n_sites) if theta is None else theta
    return game.expected_utility(k, policy, theta, w)


def draw_types(scenario, stage_index):
    """Each provider's placement-cost vector for a stage."""
    lo, hi = scenario.planner.theta_lower, scenario.planner.theta_upper
    return np.array(
        [make_rng(scenario.seed, "types", stage_index, k).uniform(lo, hi, scenario.n_sites) for k in range(scenario.n_providers)]
    )


def solve_stage(scenario, stage_index, carried=None, *, ev_count=None, threads=1, belief=None, qos_filter=None, label=None):
    """Play one stage: draw types, best-respond, price the joint placement, measure QoS."""
    K, L = scenario.n_providers, scenario.n_sites
    carried = np.zeros((K, L), dtype=bool) if carried is None else np.asarray(carried, dtype=bool)
    stage = scenario.stages[stage_index] if stage_index < len(scenario.stages) else None
    ev_count = stage.ev_count if ev_count is None else ev_count
    label = label or (stage.label if stage and stage.label else f"stage {stage_index + 1}")
    population = scenario.stage_population(ev_count)
    market = Market(scenario, population)
    game = StageGame(scenario, market, carried, belief=belief, seed=scenario.seed, stage_index=stage_index, threads=threads)
    game.precompute()
    thetas = draw_types(scenario, stage_index)
    policies, failed = [], []
    for k in range(K):
        try:
            policies.append(game.best_response(k, thetas[k], qos_filter))
        except InfeasibleError:
            failed.append(k)
    if failed:
        raise InfeasibleError(failed)
    joint = np.array(policies, dtype=bool)
    outcome = market.outcome(joint)
    qos = estimate_qos(
        scenario,
        joint,
        outcome.prices,
        scenario.planner.monte_carlo_runs,
        derive_seed(scenario.seed, "stage-qos", stage_index),
        population=population,
        threads=threads,
    )
    ids = [s.id for s in scenario.sites]
    new = joint & ~carried
    return StageResult(
        label=label,
        policies=joint.astype(int),
        prices=outcome.prices,
        expected_utilities=[game.expected_utility(k, policies[k], thetas[k]) for k in range(K)],
        qos=qos,
        new_sites=[[ids[j] for j in np.flatnonzero(new[k])] for k in range(K)],
        site_ids=ids,
        converged=outcome.equilibrium.converged,
    )


def plan_multistage(scenario, *, threads=1, belief=None, qos_filter=None):
    """Run every configured stage in order, carrying built stations forward."""
    results = []
    carried = np.zeros((scenario.n_providers, scenario.n_sites), dtype=bool)
    for i, _ in enumerate(scenario.stages):
        try:
            res = solve_stage(scenario, i, carried, threads=threads, belief=belief, qos_filter=qos_filter)
        except (InfeasibleError, PolicyCapError) as exc:
            raise PlanningError(i, exc, results) from exc
        results.append(res)
        carried = np.array(res.policies, dtype=bool)
    return results
