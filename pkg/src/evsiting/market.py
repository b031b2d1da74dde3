"""Provider revenue, profit and utility, and the Bertrand price equilibrium.

Each provider sets one price for all of its stations. Equilibrium prices
solve the providers' first-order conditions simultaneously.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_placement, placement_key
from .choice import ChoiceFeatures, choice_probabilities
from .grid import dispatch_with_ev, disturbance as grid_disturbance, solve_power_flow

FOC_TOL = 1e-8
MAX_NEWTON = 100
# price reported for a provider with no built station
NO_PRICE = 0.0

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PriceEquilibrium:
    prices: tuple
    residuals: tuple
    converged: bool
    method: str = "newton"
    iterations: int = 0


@dataclass(frozen=True)
class MarketOutcome:
    """Everything the planner needs about one joint placement."""

    key: str
    equilibrium: PriceEquilibrium
    revenue: np.ndarray  # (K,)
    demand: np.ndarray  # (K, L) kWh
    disturbance: np.ndarray  # (K,)

    @property
    def prices(self):
        return self.equilibrium.prices


class Market:
    """Demand, pricing and grid penalty for one EV population.

    Price equilibria and outcomes are memoised per joint placement; the
    cache is safe to fill from several threads.
    """

    def __init__(self, scenario, population, *, outside_good=None):
        self.scenario = scenario
        self.population = list(population)
        planner = scenario.planner
        self.outside_good = planner.outside_good if outside_good is None else bool(outside_good)
        self.coeffs = scenario.coefficients
        self.providers = scenario.providers
        self.features = ChoiceFeatures.for_agents(
            self.coeffs, scenario.sites, self.population, scenario.network, planner.d_th_km
        )
        self.lmp = scenario.lmp_matrix()
        self.n_providers, self.n_sites = self.lmp.shape
        self._outcomes = {}
        self._lock = threading.Lock()
        self._base_dispatch = None

    # -- demand --------------------------------------------------------------

    def table(self, placement, prices):
        return self.features.table(self.coeffs, self.providers, placement, prices, self.outside_good)

    def demand(self, placement, prices):
        """(K, L) predicted kWh at every built (provider, site)."""
        placement = check_placement(placement, self.n_providers, self.n_sites)
        psi = np.zeros((self.n_providers, self.n_sites))
        if not placement.any() or not self.population:
            return psi
        table, alts = self.table(placement, prices)
        probs, _ = choice_probabilities(table)
        per_alt = self.features.demand @ probs
        for (k, j), v in zip(alts, per_alt):
            psi[k, j] = v
        return psi

    # -- first-order conditions ----------------------------------------------

    def _foc_terms(self, placement, prices):
        table, alts = self.table(placement, prices)
        probs, _ = choice_probabilities(table)
        K = self.n_providers
        n = table.n_agents
        P = np.zeros((n, K))
        M = np.zeros((n, K))
        for a, (k, j) in enumerate(alts):
            P[:, k] += probs[:, a]
            M[:, k] += (prices[k] - self.lmp[k, j]) * probs[:, a]
        return P, M, table.price_slope, self.features.demand

    def foc_residuals(self, placement, prices):
        """d(profit_k)/d(p_k) for every provider (zero for providers without stations)."""
        placement = np.asarray(placement, dtype=bool)
        if not placement.any() or not self.population:
            return np.zeros(self.n_providers)
        P, M, a, q = self._foc_terms(placement, np.asarray(prices, float))
        F = q @ (P + a[:, None] * (1.0 - P) * M)
        F[~placement.any(axis=1)] = 0.0
        return F

    def foc_jacobian(self, placement, prices):
        """Analytic Jacobian of :meth:`foc_residuals` with respect to the prices."""
        placement = np.asarray(placement, dtype=bool)
        K = self.n_providers
        if not placement.any() or not self.population:
            return np.zeros((K, K))
        P, M, a, q = self._foc_terms(placement, np.asarray(prices, float))
        eye = np.eye(K)
        # dP[n, k, l] = a P_k (delta_kl - P_l); dM likewise plus the margin term
        dP = a[:, None, None] * P[:, :, None] * (eye[None] - P[:, None, :])
        dM = eye[None] * P[:, :, None] + a[:, None, None] * M[:, :, None] * (eye[None] - P[:, None, :])
        term = (1.0 - a[:, None] * M)[:, :, None] * dP + (a[:, None] * (1.0 - P))[:, :, None] * dM
        return np.einsum("n,nkl->kl", q, term)

    def profit_at(self, k, prices, placement):
        """Operating profit of provider ``k`` (revenue net of energy cost)."""
        psi = self.demand(placement, prices)
        return float(np.sum(np.asarray(placement, bool)[k] * (prices[k] - self.lmp[k]) * psi[k]))

    # -- equilibrium ---------------------------------------------------------

    def bracket(self, k, placement):
        built = np.asarray(placement, bool)[k]
        lo = float(self.lmp[k, built].min())
        hi = float(self.lmp[k, built].max()) + self.scenario.planner.price_span
        return lo, hi

    def equilibrium(self, placement, *, tol=FOC_TOL, max_iter=MAX_NEWTON):
        placement = check_placement(placement, self.n_providers, self.n_sites)
        active = placement.any(axis=1)
        prices = np.full(self.n_providers, NO_PRICE)
        if not active.any():
            return PriceEquilibrium(tuple(prices), tuple(np.zeros(self.n_providers)), True, "none", 0)
        floors = np.array([self.bracket(k, placement)[0] if active[k] else 0.0 for k in range(self.n_providers)])
        income = self.features.income
        typical = float(np.mean(income)) / -self.coeffs.beta if income.size else 0.0
        prices[active] = floors[active] + typical
        prices, F, it, ok = self._newton(placement, prices, floors, active, tol, max_iter)
        method = "newton"
        if not ok:
            prices = self._best_response_iteration(placement, prices, active)
            prices, F, it2, ok = self._newton(placement, prices, floors, active, tol, max_iter)
            it += it2
            method = "best-response"
        return PriceEquilibrium(tuple(float(p) for p in prices), tuple(float(f) for f in F), bool(ok), method, it)

    def _newton(self, placement, prices, floors, active, tol, max_iter):
        idx = np.flatnonzero(active)
        p = prices.copy()
        F = self.foc_residuals(placement, p)
        err = np.max(np.abs(F[idx]))
        it = 0
        while err >= tol and it < max_iter:
            J = self.foc_jacobian(placement, p)[np.ix_(idx, idx)]
            try:
                step = np.linalg.solve(J, -F[idx])
            except np.linalg.LinAlgError:
                break
            lam = 1.0
            while True:
                trial = p.copy()
                trial[idx] = np.maximum(p[idx] + lam * step, floors[idx])
                Ft = self.foc_residuals(placement, trial)
                et = np.max(np.abs(Ft[idx]))
                if et < err or lam < 1e-6:
                    break
                lam *= 0.5
            it += 1
            if not np.isfinite(et) or (et >= err and np.allclose(trial, p, rtol=0, atol=1e-15)):
                break
            p, F, err = trial, Ft, et
        return p, F, it, bool(err < tol)

    def _best_response_iteration(self, placement, prices, active, rounds=200):
        p = prices.copy()
        for _ in range(rounds):
            prev = p.copy()
            for k in np.flatnonzero(active):
                lo, hi = self.bracket(k, placement)

                def neg_profit(x, k=k):
                    trial = p.copy()
                    trial[k] = x
                    return -self.profit_at(k, trial, placement)

                p[k] = golden_section_minimize(neg_profit, lo, hi, tol=1e-10)
            # a maximiser is only located to ~sqrt(eps); Newton polishes afterwards
            if np.max(np.abs(p - prev)) < 1e-7:
                break
        return p

    # -- grid penalty --------------------------------------------------------

    def base_dispatch(self):
        if self._base_dispatch is None:
            sol = solve_power_flow(self.scenario.grid)
            self._base_dispatch = (sol.gen_p, sol.gen_q)
        return self._base_dispatch

    def station_disturbance(self, psi_row):
        """Disturbance from superposing one provider's station energy on the base load."""
        if not np.any(psi_row):
            return 0.0
        load = {}
        for site, kwh in zip(self.scenario.sites, psi_row):
            if kwh:
                load[site.bus] = load.get(site.bus, 0.0) + float(kwh)
        planner = self.scenario.planner
        gp, gq, _ = dispatch_with_ev(self.scenario.grid, load, planner.horizon_h, power_factor=planner.ev_power_factor)
        return grid_disturbance(self.base_dispatch(), (gp, gq))

    # -- cached outcome ------------------------------------------------------

    def outcome(self, placement) -> MarketOutcome:
        placement = check_placement(placement, self.n_providers, self.n_sites)
        key = placement_key(placement)
        hit = self._outcomes.get(key)
        if hit is not None:
            return hit
        eq = self.equilibrium(placement)
        prices = np.array(eq.prices)
        psi = self.demand(placement, prices)
        rev = np.array([revenue(k, prices, placement, self, demand=psi) for k in range(self.n_providers)])
        dist = np.array([self.station_disturbance(psi[k]) for k in range(self.n_providers)])
        out = MarketOutcome(key, eq, rev, psi, dist)
        with self._lock:
            return self._outcomes.setdefault(key, out)

    def precompute(self, placements, threads=1):
        """Fill the outcome cache; results do not depend on ``threads``."""
        placements = list(placements)
        if threads <= 1:
            for pl in placements:
                self.outcome(pl)
            return
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(self.outcome, placements))


def golden_section_minimize(f, lo, hi, tol=1e-12, max_iter=200):
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def revenue(k, prices, placement, market: Market, demand=None):
    """Sales minus wholesale energy cost over provider ``k``'s built sites."""
    placement = np.asarray(placement, dtype=bool)
    if not placement[k].any():
        return 0.0
    psi = market.demand(placement, prices) if demand is None else demand
    return float(np.sum(placement[k] * (prices[k] - market.lmp[k]) * psi[k]))


def profit(revenue_k, theta, policy):
    """Revenue less placement cost of the built sites."""
    return float(revenue_k) - float(np.dot(np.asarray(theta, float), np.asarray(policy, float)))


def utility(profit_k, disturbance_k, w):
    return float(profit_k) - w * float(disturbance_k)


def solve_price_equilibrium(placement, market: Market) -> PriceEquilibrium:
    return market.equilibrium(placement)
