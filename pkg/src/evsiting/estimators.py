"""scikit-learn style front-ends.

The solvers are plain functions; these wrappers give them ``get_params`` /
``set_params`` / ``clone`` support and the usual fit-then-query flow.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_nonnegative, check_placement, check_probability
from .choice import UtilityTable, choice_probabilities, choice_probability_price_gradient
from .game import plan_multistage
from .grid import MAX_ITER, TOLERANCE, solve_power_flow
from .market import Market


def apply_overrides(scenario, **overrides):
    """Copy of ``scenario`` with planner fields (and ``seed``) replaced; ``None`` values are ignored."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    seed = overrides.pop("seed", None)
    planner = replace(scenario.planner, **overrides) if overrides else scenario.planner
    changes = {"planner": planner}
    if seed is not None:
        changes["seed"] = int(seed)
    return scenario.replace(**changes).validate()


class NestedLogitChoice(BaseEstimator):
    """Nested-logit choice probabilities for a :class:`UtilityTable`.

    Parameters
    ----------
    sigma : array-like or None
        Nest dissimilarities; ``None`` keeps those stored in the table.
    outside_good : bool or None
        Overrides the table's outside-good flag when not ``None``.
    """

    def __init__(self, sigma=None, outside_good=None):
        self.sigma = sigma
        self.outside_good = outside_good

    def _table(self, table):
        if not isinstance(table, UtilityTable):
            raise ValidationError("expected a UtilityTable")
        sigma = table.sigma if self.sigma is None else np.asarray(self.sigma, float)
        og = table.outside_good if self.outside_good is None else bool(self.outside_good)
        return UtilityTable(table.utilities, table.nest, sigma, table.price_slope, og)

    def fit(self, table, y=None):
        t = self._table(table)
        self.n_nests_ = t.sigma.size
        self.n_alternatives_ = t.n_alts
        return self

    def predict_proba(self, table):
        """Probabilities with the outside share as the last column when enabled."""
        check_is_fitted(self, "n_nests_")
        t = self._table(table)
        probs, outside = choice_probabilities(t)
        return np.column_stack([probs, outside]) if t.outside_good else probs

    def predict(self, table):
        """Most likely alternative per agent; ``-1`` means the outside good."""
        proba = self.predict_proba(table)
        best = proba.argmax(axis=1)
        if self._table(table).outside_good:
            best[best == proba.shape[1] - 1] = -1
        return best

    def price_gradient(self, table, provider):
        check_is_fitted(self, "n_nests_")
        return choice_probability_price_gradient(self._table(table), provider)


class ACPowerFlow(BaseEstimator):
    """Newton-Raphson power flow; ``fit`` solves the case."""

    def __init__(self, tol=TOLERANCE, max_iter=MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, case, extra_load=None):
        check_nonnegative(self.tol, "tol")
        sol = solve_power_flow(case, extra_load, tol=self.tol, max_iter=self.max_iter)
        self.solution_ = sol
        self.vm_, self.va_ = sol.vm, sol.va
        self.gen_p_, self.gen_q_ = sol.gen_p, sol.gen_q
        self.converged_ = sol.converged
        self.n_iter_ = sol.iterations
        return self


class BertrandPricer(BaseEstimator):
    """Equilibrium retail prices for joint placements at one stage."""

    def __init__(self, ev_count=None, outside_good=None):
        self.ev_count = ev_count
        self.outside_good = outside_good

    def fit(self, scenario, y=None):
        n = scenario.stages[0].ev_count if self.ev_count is None else self.ev_count
        self.market_ = Market(scenario, scenario.stage_population(n), outside_good=self.outside_good)
        return self

    def predict(self, placement):
        check_is_fitted(self, "market_")
        pl = check_placement(placement, self.market_.n_providers, self.market_.n_sites)
        return np.array(self.market_.equilibrium(pl).prices)

    def equilibrium(self, placement):
        check_is_fitted(self, "market_")
        return self.market_.equilibrium(placement)


class MultiStagePlanner(BaseEstimator):
    """Run the staged placement game on a scenario.

    Every parameter left at ``None`` falls back to the scenario's planner
    configuration. After ``fit``, ``stage_results_`` holds one
    :class:`~evsiting.results.StageResult` per stage and ``placement_`` the
    final (providers x sites) build matrix.
    """

    def __init__(
        self,
        w=None,
        delay_max=None,
        coverage_min=None,
        d_th_km=None,
        monte_carlo_runs=None,
        outside_good=None,
        qos_filter=None,
        seed=None,
        threads=1,
    ):
        self.w = w
        self.delay_max = delay_max
        self.coverage_min = coverage_min
        self.d_th_km = d_th_km
        self.monte_carlo_runs = monte_carlo_runs
        self.outside_good = outside_good
        self.qos_filter = qos_filter
        self.seed = seed
        self.threads = threads

    def _scenario(self, scenario):
        if self.delay_max is not None:
            check_probability(self.delay_max, "delay_max")
        return apply_overrides(
            scenario,
            w=self.w,
            delay_max=self.delay_max,
            coverage_min=self.coverage_min,
            d_th_km=self.d_th_km,
            monte_carlo_runs=self.monte_carlo_runs,
            outside_good=self.outside_good,
            qos_filter=self.qos_filter,
            seed=self.seed,
        )

    def fit(self, scenario, y=None):
        sc = self._scenario(scenario)
        self.stage_results_ = plan_multistage(sc, threads=self.threads)
        self.placement_ = np.array(self.stage_results_[-1].policies, dtype=int)
        self.prices_ = np.array(self.stage_results_[-1].prices)
        return self

    def predict(self, scenario=None):
        """Final build matrix (the scenario argument is accepted for API symmetry)."""
        check_is_fitted(self, "placement_")
        return self.placement_.copy()
