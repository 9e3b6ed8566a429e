"""Ordinal Priority Approach: cardinal weights from ordinal rankings.

Each expert ``k`` has a seniority rank ``s_k`` and ranks every item. The LP
maximizes ``Z`` subject to ``s_k * r * (w_j - w_next) >= Z`` along each
expert's ranking chain, ``s_k * r * w_last >= Z`` for the last items, and a
total weight of one.

Ties: tied items share a rank value; each tied item is chained to every item
holding the next *distinct* rank, using its own (shared) rank value as the
coefficient. With complete rankings this reduces to the textbook model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import lp_core
from .lp_core import Constraint, LpProblem, Variable


class OpaValidationError(ValueError):
    pass


class OpaInternalError(RuntimeError):
    """The OPA LP failed on input that passed validation; carries the LP dump."""

    def __init__(self, message: str, dump: str):
        super().__init__(message)
        self.dump = dump


@dataclass(frozen=True)
class Expert:
    rank: int
    item_ranks: Mapping[str, int]
    name: str = ""


@dataclass(frozen=True)
class RankingInstance:
    experts: tuple[Expert, ...]

    def __post_init__(self):
        object.__setattr__(self, "experts", tuple(self.experts))
        if not self.experts:
            raise OpaValidationError("ranking instance has no experts")
        if min(e.rank for e in self.experts) != 1:
            # the [0, 1] bound on Z* relies on a most-senior expert holding rank 1
            raise OpaValidationError("no expert holds expert rank 1")
        items = set(self.experts[0].item_ranks)
        if not items:
            raise OpaValidationError("ranking instance has no items")
        n = len(items)
        for k, e in enumerate(self.experts):
            label = e.name or f"expert {k + 1}"
            if int(e.rank) != e.rank or e.rank < 1:
                raise OpaValidationError(f"{label}: expert rank must be a positive integer, got {e.rank!r}")
            if set(e.item_ranks) != items:
                raise OpaValidationError(f"{label}: ranks a different item set than expert 1")
            for item, r in e.item_ranks.items():
                if int(r) != r or not 1 <= r <= n:
                    raise OpaValidationError(f"{label}: rank of {item!r} must be an integer in 1..{n}, got {r!r}")
            if min(e.item_ranks.values()) != 1:
                raise OpaValidationError(f"{label}: no item holds rank 1")

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(self.experts[0].item_ranks)

    @property
    def expert_names(self) -> tuple[str, ...]:
        return tuple(e.name or f"E{k + 1}" for k, e in enumerate(self.experts))

    @classmethod
    def from_dict(cls, data: Mapping) -> "RankingInstance":
        try:
            experts = [
                Expert(int(e["rank"]), {str(k): int(v) for k, v in e["item_ranks"].items()}, str(e.get("name", "")))
                for e in data["experts"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise OpaValidationError(f"malformed ranking JSON: {exc}") from exc
        return cls(tuple(experts))

    @classmethod
    def from_json(cls, path: str | Path) -> "RankingInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class OpaSolution:
    items: tuple[str, ...]
    expert_names: tuple[str, ...]
    weights: np.ndarray  # (experts, items)
    objective: float

    def expert_weights(self, k: int) -> dict[str, float]:
        return dict(zip(self.items, self.weights[k].tolist()))


def chain_constraints(
    item_ranks: Mapping[str, int],
    seniority: float,
    weight_var: Callable[[str], str],
    z_var: str,
    prefix: str,
) -> list[Constraint]:
    """Ranking-chain rows ``s*r*(w_j - w_next) - Z >= 0`` for one expert/policy."""
    distinct = sorted(set(item_ranks.values()))
    following = {r: distinct[i + 1] if i + 1 < len(distinct) else None for i, r in enumerate(distinct)}
    rows = []
    for item, r in item_ranks.items():
        coef = float(seniority * r)
        nxt = following[r]
        if nxt is None:
            rows.append(Constraint({weight_var(item): coef, z_var: -1.0}, ">=", 0.0, f"{prefix}:{item}:last"))
            continue
        for other, r2 in item_ranks.items():
            if r2 == nxt:
                rows.append(
                    Constraint(
                        {weight_var(item): coef, weight_var(other): -coef, z_var: -1.0},
                        ">=",
                        0.0,
                        f"{prefix}:{item}>{other}",
                    )
                )
    return rows


def build_problem(instance: RankingInstance) -> LpProblem:
    items = instance.items
    names = instance.expert_names
    variables = [Variable(f"w[{j}|{k}]") for k in names for j in items]
    variables.append(Variable("Z", -lp_core.INF, lp_core.INF))
    rows: list[Constraint] = []
    for k, e in zip(names, instance.experts):
        rows += chain_constraints(e.item_ranks, e.rank, lambda j, k=k: f"w[{j}|{k}]", "Z", k)
    rows.append(Constraint({f"w[{j}|{k}]": 1.0 for k in names for j in items}, "==", 1.0, "normalization"))
    return LpProblem(variables, rows, {"Z": 1.0}, maximize=True, name="opa")


def solve_opa(instance: RankingInstance) -> OpaSolution:
    problem = build_problem(instance)
    sol = lp_core.solve(problem)
    if not sol.optimal:
        raise OpaInternalError(f"OPA LP returned {sol.status.value}", problem.dump())
    names = instance.expert_names
    W = np.array([[sol[f"w[{j}|{k}]"] for j in instance.items] for k in names])
    return OpaSolution(instance.items, names, W, sol["Z"])


def aggregate_weights(solution: OpaSolution) -> dict[str, float]:
    totals = solution.weights.sum(axis=0)
    return dict(zip(solution.items, totals.tolist()))


def closed_form_single_expert(n: int) -> tuple[np.ndarray, float]:
    """Weights ``w_r = (1/n) * sum_{h=r..n} 1/h`` and ``Z* = 1/n`` for one complete ranking."""
    if n < 1:
        raise OpaValidationError("item count must be at least 1")
    tails = [sum(Fraction(1, h) for h in range(r, n + 1)) / n for r in range(1, n + 1)]
    return np.array([float(t) for t in tails]), 1.0 / n


def closed_form(expert_ranks: Sequence[int], n: int) -> tuple[np.ndarray, float]:
    """Optimal weights for ``m`` experts who each give a complete tie-free ranking.

    Row ``k`` holds the weight expert ``k`` assigns to its rank-1..n items.
    ``Z* = 1 / (n * sum_k 1/s_k)``; every chain row is tight at the optimum.
    """
    if n < 1 or not expert_ranks:
        raise OpaValidationError("need at least one expert and one item")
    z = Fraction(1, n) / sum(Fraction(1, s) for s in expert_ranks)
    rows = []
    for s in expert_ranks:
        rows.append([float(z / s * sum(Fraction(1, h) for h in range(r, n + 1))) for r in range(1, n + 1)])
    return np.array(rows), float(z)
