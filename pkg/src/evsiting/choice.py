"""Nested-logit station choice and aggregated charging demand.

Alternatives are (site, provider) pairs that are currently built. Each
provider is one nest; home charging is an optional outside good whose
observable utility is fixed at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._validation import ValidationError
from .road import deviating_distance, destination_indicator

# nominal supply voltage (V) and max current (A) of the three charging levels
LEVEL_RATINGS = {1: (120.0, 12.0), 2: (240.0, 32.0), 3: (600.0, 400.0)}


class EmptyChoiceSetError(ValueError):
    """No built site and no outside good: the choice set is empty."""


@dataclass(frozen=True)
class ChoiceCoefficients:
    """Utility weights. ``mu`` .. ``sigma`` hold one entry per nest (provider)."""

    alpha: float
    beta: float
    mu: tuple
    eta: tuple
    gamma: tuple
    lam: tuple
    delta: tuple
    sigma: tuple

    def __post_init__(self):
        for name in ("mu", "eta", "gamma", "lam", "delta", "sigma"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @property
    def n_nests(self):
        return len(self.sigma)

    def problems(self):
        out = []
        if not self.alpha > 0:
            out.append(f"alpha must be > 0, got {self.alpha}")
        if not self.beta < 0:
            out.append(f"beta must be < 0, got {self.beta}")
        for name in ("mu", "eta", "gamma", "lam", "delta"):
            if len(getattr(self, name)) != self.n_nests:
                out.append(f"{name} must have one entry per nest ({self.n_nests})")
        for k, s in enumerate(self.sigma):
            if not 0 < s <= 1:
                out.append(f"sigma[{k}] must lie in (0, 1], got {s}")
        return out


@dataclass(frozen=True)
class ProviderConfig:
    """One charging service provider (one charging level).

    ``charge_time_h`` is the mean charging time entering the nest utility;
    ``power_kw`` converts energy into service time in the queueing model and
    defaults to voltage x current of the level's electrical rating.
    ``plugs_per_station`` may be ``inf`` for an uncapacitated station.
    """

    level: int
    charge_time_h: float
    plugs_per_station: float = 1
    power_kw: float | None = None

    def __post_init__(self):
        if self.power_kw is None and self.level in LEVEL_RATINGS:
            v, a = LEVEL_RATINGS[self.level]
            object.__setattr__(self, "power_kw", v * a / 1000.0)

    def problems(self):
        out = []
        if not self.charge_time_h > 0:
            out.append(f"provider level {self.level}: charge_time_h must be > 0")
        if not self.plugs_per_station >= 1:
            out.append(f"provider level {self.level}: plugs_per_station must be >= 1")
        if self.power_kw is None or not self.power_kw > 0:
            out.append(f"provider level {self.level}: power_kw must be > 0")
        return out


@dataclass(frozen=True)
class EvAgent:
    id: int
    home: int
    destination: int
    income: float
    demand_kwh: float


@dataclass
class UtilityTable:
    """Observable utilities of every agent for every built alternative.

    utilities : (n_agents, n_alts) array
    nest : (n_alts,) provider index of each alternative
    sigma : (n_nests,) nest dissimilarity parameters
    price_slope : (n_agents,) derivative of every utility w.r.t. its own
        provider's price, i.e. ``beta / income``
    outside_good : whether home charging (utility 0) is available
    """

    utilities: np.ndarray
    nest: np.ndarray
    sigma: np.ndarray
    price_slope: np.ndarray
    outside_good: bool = True

    def __post_init__(self):
        self.utilities = np.atleast_2d(np.asarray(self.utilities, dtype=float))
        self.nest = np.asarray(self.nest, dtype=int).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        n_agents = self.utilities.shape[0]
        self.price_slope = np.broadcast_to(np.asarray(self.price_slope, dtype=float), (n_agents,)).copy()
        if self.utilities.shape[1] != self.nest.size:
            raise ValidationError("utilities and nest labels disagree on the number of alternatives")
        if self.nest.size and (self.nest.min() < 0 or self.nest.max() >= self.sigma.size):
            raise ValidationError("nest label out of range")
        if np.any(self.sigma <= 0) or np.any(self.sigma > 1):
            raise ValidationError("every sigma must lie in (0, 1]")
        if not np.all(np.isfinite(self.utilities)):
            raise ValidationError("utilities must be finite")

    @property
    def n_agents(self):
        return self.utilities.shape[0]

    @property
    def n_alts(self):
        return self.utilities.shape[1]

    def shifted(self, provider, amount):
        """Copy with ``amount`` added to the price of ``provider``."""
        u = self.utilities.copy()
        cols = self.nest == provider
        u[:, cols] += self.price_slope[:, None] * amount
        return UtilityTable(u, self.nest, self.sigma, self.price_slope, self.outside_good)


def nest_utility(coeffs: ChoiceCoefficients, provider: ProviderConfig, price, income):
    """Provider-level utility: alpha / t_k + beta * p_k / i_n (vectorised over income)."""
    return coeffs.alpha / provider.charge_time_h + coeffs.beta * np.asarray(price) / np.asarray(income)


def station_utility(coeffs: ChoiceCoefficients, site, agent: EvAgent, net, k, d_th):
    """Site-level utility of ``site`` for ``agent`` inside nest ``k``."""
    d = deviating_distance(net, agent.home, agent.destination, site)
    z = destination_indicator(net, agent.destination, site, d_th)
    r, g, m = site.amenities
    return coeffs.mu[k] * d + coeffs.eta[k] * z + coeffs.gamma[k] * r + coeffs.lam[k] * g + coeffs.delta[k] * m


def _nest_terms(table: UtilityTable):
    """Per-agent log inclusive values and log denominators.

    Returns ``(log_within, log_nest_share, log_outside)`` where
    ``log_within[:, a]`` is log P(alt | its nest), ``log_nest_share[:, k]`` is
    log P(nest k) (``-inf`` for empty nests) and ``log_outside`` is the log
    outside share (``-inf`` when disabled).
    """
    U = table.utilities
    n, n_nests = table.n_agents, table.sigma.size
    log_incl = np.full((n, n_nests), -np.inf)
    log_within = np.empty_like(U)
    for k in range(n_nests):
        cols = table.nest == k
        if not cols.any():
            continue
        scaled = U[:, cols] / table.sigma[k]
        lk = logsumexp(scaled, axis=1)
        log_incl[:, k] = lk
        log_within[:, cols] = scaled - lk[:, None]
    top = table.sigma[None, :] * log_incl
    if table.outside_good:
        top = np.concatenate([top, np.zeros((n, 1))], axis=1)
    if not np.isfinite(top).any(axis=1).all():
        raise EmptyChoiceSetError("no built site and the outside good is disabled")
    log_den = logsumexp(top, axis=1)
    log_nest_share = top[:, :n_nests] - log_den[:, None]
    log_outside = -log_den if table.outside_good else np.full(n, -np.inf)
    return log_within, log_nest_share, log_outside


def choice_probabilities(table: UtilityTable):
    """Nested-logit choice probabilities.

    Returns ``(probs, outside)``: ``probs`` has shape (n_agents, n_alts) and
    ``outside`` holds each agent's home-charging share (zeros when the
    outside good is disabled). Rows of ``probs`` plus ``outside`` sum to 1.
    """
    log_within, log_nest_share, log_outside = _nest_terms(table)
    if table.n_alts:
        probs = np.exp(log_within + log_nest_share[:, table.nest])
    else:
        probs = np.zeros((table.n_agents, 0))
    return probs, np.exp(log_outside)


def nest_shares(table: UtilityTable):
    _, log_nest_share, _ = _nest_terms(table)
    return np.exp(log_nest_share)


def choice_probability_price_gradient(table: UtilityTable, provider):
    """Analytic derivative of every choice probability w.r.t. ``provider``'s price.

    A uniform price moves every utility in the provider's nest by
    ``beta / income``, leaving within-nest shares unchanged, so
    dPhi_a/dp_k = slope * Phi_a * (1[a in k] - P_k).
    """
    probs, outside = choice_probabilities(table)
    cols = table.nest == provider
    share = probs[:, cols].sum(axis=1)
    # 1 - P_k summed directly so it is exactly zero when nothing lies outside the nest
    rest = probs[:, ~cols].sum(axis=1) + outside
    factor = np.where(cols[None, :], rest[:, None], -share[:, None])
    return table.price_slope[:, None] * probs * factor


def charging_demand(probs, agents):
    """Expected kWh drawn at each alternative: sum_n q_n * Phi_n."""
    q = np.array([a.demand_kwh if isinstance(a, EvAgent) else a for a in agents], dtype=float)
    probs = np.asarray(probs, dtype=float)
    if probs.shape[0] != q.size:
        raise ValidationError(f"{probs.shape[0]} probability rows for {q.size} agents")
    return q @ probs


@dataclass
class ChoiceFeatures:
    """Price-independent utility pieces for a population, over all candidate sites.

    ``site_utility[n, j, k]`` is the station utility of site ``j`` in nest
    ``k`` for agent ``n``.
    """

    site_utility: np.ndarray
    income: np.ndarray
    demand: np.ndarray

    @classmethod
    def build(cls, coeffs, sites, origins, destinations, incomes, demands, net, d_th):
        sites = list(sites)
        origins = list(origins)
        destinations = list(destinations)
        n, L = len(origins), len(sites)
        site_nodes = [s.road_node for s in sites]
        if n and L:
            from_site_o = net.distance_matrix(site_nodes, origins).T  # (n, L)
            from_site_d = net.distance_matrix(site_nodes, destinations).T
            direct = np.array([net.distance(o, d) for o, d in zip(origins, destinations)])
            if not (np.isfinite(from_site_o).all() and np.isfinite(from_site_d).all() and np.isfinite(direct).all()):
                from .road import NoPathError

                raise NoPathError("some trip cannot reach some candidate site")
            detour = np.maximum(0.0, from_site_o + from_site_d - direct[:, None])
            near = (from_site_d <= d_th).astype(float)
        else:
            detour = np.zeros((n, L))
            near = np.zeros((n, L))
        amen = np.array([s.amenities for s in sites], dtype=float).reshape(L, 3)
        mu, eta = np.array(coeffs.mu), np.array(coeffs.eta)
        amen_w = np.stack([coeffs.gamma, coeffs.lam, coeffs.delta], axis=0)  # (3, K)
        site_util = (
            detour[:, :, None] * mu[None, None, :]
            + near[:, :, None] * eta[None, None, :]
            + (amen @ amen_w)[None, :, :]
        )
        return cls(site_util, np.asarray(incomes, dtype=float), np.asarray(demands, dtype=float))

    @classmethod
    def for_agents(cls, coeffs, sites, agents, net, d_th):
        return cls.build(
            coeffs,
            sites,
            [a.home for a in agents],
            [a.destination for a in agents],
            [a.income for a in agents],
            [a.demand_kwh for a in agents],
            net,
            d_th,
        )

    def table(self, coeffs, providers, placement, prices, outside_good=True, rows=None):
        """UtilityTable for a joint ``placement`` (providers x sites) and ``prices``.

        Alternatives are ordered provider-major, then by site index; the
        second return value lists the matching ``(k, j)`` pairs.
        """
        placement = np.asarray(placement, dtype=bool)
        income = self.income if rows is None else self.income[rows]
        site_util = self.site_utility if rows is None else self.site_utility[rows]
        alts = [(k, j) for k in range(placement.shape[0]) for j in np.flatnonzero(placement[k])]
        cols = []
        for k, j in alts:
            w = nest_utility(coeffs, providers[k], prices[k], income)
            cols.append(w + site_util[:, j, k])
        U = np.column_stack(cols) if cols else np.zeros((income.size, 0))
        nest = np.array([k for k, _ in alts], dtype=int)
        table = UtilityTable(U, nest, np.array(coeffs.sigma), coeffs.beta / income, outside_good)
        return table, alts
