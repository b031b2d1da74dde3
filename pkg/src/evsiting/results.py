"""Result records shared by the simulator, the planner and the file writers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class QosEstimate:
    """Monte-Carlo quality-of-service estimate, one entry per provider.

    ``delay`` is the average service delay probability, ``coverage`` the
    average number of the provider's stations reachable along a route.
    """

    delay: tuple
    coverage: tuple
    runs: int
    delay_se: tuple = ()
    coverage_se: tuple = ()

    def __post_init__(self):
        for name in ("delay", "coverage", "delay_se", "coverage_se"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not self.delay_se:
            object.__setattr__(self, "delay_se", tuple(0.0 for _ in self.delay))
        if not self.coverage_se:
            object.__setattr__(self, "coverage_se", tuple(0.0 for _ in self.coverage))


@dataclass(frozen=True)
class StageResult:
    """Outcome of one planning stage.

    ``policies[k]`` is provider ``k``'s cumulative build vector over the
    candidate sites; ``new_sites[k]`` lists the ids of sites first built in
    this stage.
    """

    label: str
    policies: tuple
    prices: tuple
    expected_utilities: tuple
    qos: QosEstimate
    new_sites: tuple
    site_ids: tuple = field(default=())
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(tuple(int(b) for b in row) for row in self.policies))
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        object.__setattr__(self, "expected_utilities", tuple(float(u) for u in self.expected_utilities))
        object.__setattr__(self, "new_sites", tuple(tuple(int(s) for s in row) for row in self.new_sites))
        object.__setattr__(self, "site_ids", tuple(int(s) for s in self.site_ids))

    @property
    def station_counts(self):
        return tuple(sum(row) for row in self.policies)
