"""Scenario builders shared by several test modules."""

from dataclasses import replace

import numpy as np

from evsiting.choice import ChoiceCoefficients, ProviderConfig
from evsiting.synthetic import toy_scenario


def symmetric_scenario(**kw):
    """Three identical providers competing on shared sites."""
    sc = toy_scenario(**kw)
    c = sc.coefficients
    same = ChoiceCoefficients(
        c.alpha, c.beta, (-0.3,) * 3, (0.5,) * 3, (0.2,) * 3, (0.2,) * 3, (0.1,) * 3, (0.8,) * 3
    )
    return sc.replace(providers=(ProviderConfig(2, 5.5, 2),) * 3, coefficients=same).validate()


def permuted_scenario(sc, perm):
    c = sc.coefficients

    def pick(v):
        return tuple(v[i] for i in perm)

    coeffs = replace(c, mu=pick(c.mu), eta=pick(c.eta), gamma=pick(c.gamma), lam=pick(c.lam), delta=pick(c.delta), sigma=pick(c.sigma))
    return sc.replace(providers=pick(sc.providers), coefficients=coeffs).validate()


def full_placement(sc):
    return np.ones((sc.n_providers, sc.n_sites), dtype=bool)
