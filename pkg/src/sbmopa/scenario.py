"""Policies, variable rankings and policy-order scenarios."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .delta_sbm import DmuPanel
from .hybrid import Policy, PolicyRankingSet

MAX_ENUMERATED_POLICIES = 6


class ScenarioValidationError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyDefinition:
    name: str
    anchor: str | None = None
    fixed_ranks: Mapping[str, int] = field(default_factory=dict)
    note: str = ""
    label: str = ""


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    order: tuple[str, ...]

    @property
    def policy_ranks(self) -> dict[str, int]:
        return {name: i + 1 for i, name in enumerate(self.order)}

    def label(self) -> str:
        return " > ".join(self.order)


@dataclass(frozen=True)
class Correlation:
    variable: str
    coefficient: float
    p_value: float


def pearson_table(panel: DmuPanel, anchor: str, variables: Sequence[str] | None = None) -> list[Correlation]:
    """Pearson coefficient and two-sided p-value of each variable against ``anchor``."""
    ref = panel.column(anchor)
    if panel.n < 2 or np.ptp(ref) == 0:
        raise ScenarioValidationError(f"anchor column {anchor!r} has zero variance")
    out = []
    for var in variables if variables is not None else panel.variables:
        if var == anchor:
            continue
        col = panel.column(var)
        if np.ptp(col) == 0:
            raise ScenarioValidationError(f"column {var!r} has zero variance")
        if panel.n < 3:
            rho = float(np.corrcoef(ref, col)[0, 1])
            out.append(Correlation(var, rho, math.nan))
            continue
        res = stats.pearsonr(ref, col)
        out.append(Correlation(var, float(res.statistic), float(res.pvalue)))
    return out


def rank_by_pearson(panel: DmuPanel, policy: PolicyDefinition, absolute: bool = False) -> dict[str, int]:
    """Variable ranks for one policy.

    Fixed ranks are kept as given. The remaining rank values go, in
    increasing order, first to the anchor and then to the other free
    variables by decreasing correlation with the anchor. Equal coefficients
    share a rank and skip the following value.
    """
    variables = panel.variables
    n = len(variables)
    fixed = dict(policy.fixed_ranks)
    unknown = sorted(set(fixed) - set(variables))
    if unknown:
        raise ScenarioValidationError(f"policy {policy.name!r}: fixed ranks name unknown variables {unknown}")
    for var, r in fixed.items():
        if int(r) != r or not 1 <= r <= n:
            raise ScenarioValidationError(f"policy {policy.name!r}: fixed rank of {var!r} must be in 1..{n}")
    free = [v for v in variables if v not in fixed]
    if not free:
        return {v: int(fixed[v]) for v in variables}
    if policy.anchor is None or policy.anchor not in variables:
        raise ScenarioValidationError(
            f"policy {policy.name!r}: anchor {policy.anchor!r} is not a panel variable and fixed ranks are incomplete"
        )

    groups: list[list[str]] = []
    if policy.anchor in free:
        groups.append([policy.anchor])
    others = [v for v in free if v != policy.anchor]
    if others:
        table = pearson_table(panel, policy.anchor, others)
        keyed = [(abs(c.coefficient) if absolute else c.coefficient, c.variable) for c in table]
        order = {v: i for i, v in enumerate(others)}
        keyed.sort(key=lambda kv: (-round(kv[0], 12), order[kv[1]]))
        for key, grp in itertools.groupby(keyed, key=lambda kv: round(kv[0], 12)):
            groups.append([v for _, v in grp])

    slots = sorted(set(range(1, n + 1)) - set(int(r) for r in fixed.values()))
    ranks = {v: int(r) for v, r in fixed.items()}
    pos = 0
    for grp in groups:
        if pos >= len(slots):
            raise ScenarioValidationError(f"policy {policy.name!r}: fixed ranks leave no room for {grp}")
        for v in grp:
            ranks[v] = slots[pos]
        pos += len(grp)
    return {v: ranks[v] for v in variables}


def enumerate_scenarios(policies: Sequence[str]) -> list[ScenarioSpec]:
    """All orderings of the policies, lexicographic in declaration order, ids S1..S(p!)."""
    names = list(policies)
    if not names:
        raise ScenarioValidationError("at least one policy is required")
    if len(set(names)) != len(names):
        raise ScenarioValidationError("duplicate policy names")
    if len(names) > MAX_ENUMERATED_POLICIES:
        raise ScenarioValidationError(
            f"refusing to enumerate {math.factorial(len(names))} scenarios for {len(names)} policies; "
            "list the scenarios explicitly instead"
        )
    return [ScenarioSpec(f"S{i + 1}", perm) for i, perm in enumerate(itertools.permutations(names))]


def explicit_scenarios(orders: Sequence[tuple[str, Sequence[str]]], policies: Sequence[str]) -> list[ScenarioSpec]:
    declared = sorted(policies)
    out = []
    for sid, order in orders:
        if sorted(order) != declared:
            raise ScenarioValidationError(f"scenario {sid!r} order {list(order)} is not a permutation of {declared}")
        out.append(ScenarioSpec(sid, tuple(order)))
    if len({s.id for s in out}) != len(out):
        raise ScenarioValidationError("duplicate scenario ids")
    return out


def to_ranking_set(
    scenario: ScenarioSpec, policy_ranks: Mapping[str, Mapping[str, int]], variables: Sequence[str]
) -> PolicyRankingSet:
    """Attach the scenario's policy ranks to each policy's variable ranks."""
    policies = []
    for name, ranks in policy_ranks.items():
        missing = [v for v in variables if v not in ranks]
        if missing:
            raise ScenarioValidationError(f"policy {name!r} has no rank for {missing}")
        policies.append(Policy(name, {v: int(ranks[v]) for v in variables}))
    if sorted(scenario.order) != sorted(policy_ranks):
        raise ScenarioValidationError(f"scenario {scenario.id!r} does not order exactly the declared policies")
    return PolicyRankingSet(tuple(policies), scenario.policy_ranks, scenario.id)
