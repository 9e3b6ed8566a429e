"""Policy-constrained delta-SBM: the delta-SBM dual fused with OPA rows.

Per DMU and scenario, one LP carries the dual multipliers of delta-SBM, the
per-policy OPA weights ``w[j|k]`` and the OPA objective ``Z``. The two
objectives (the dual objective ``f`` to minimize, ``Z`` to maximize) are
combined by weighted max-min: maximize ``xi`` subject to
``xi <= U_S * f_trans`` and ``xi <= U_P * Z``, where ``f_trans`` rescales
``f`` with payoff-table bounds. An objective whose weight is zero is left
out of the min.

Efficiency scores are recovered by re-solving the delta-SBM primal with the
weights implied by the aggregated policy weights.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lp_core
from .delta_sbm import (
    DmuPanel,
    SbmAssessment,
    VariableWeights,
    assess,
    dual_objective,
    dual_variables,
    frontier_rows,
)
from .lp_core import Constraint, LpProblem, Variable
from .opa import chain_constraints

log = logging.getLogger(__name__)


class HybridValidationError(ValueError):
    pass


class HybridSolveError(RuntimeError):
    def __init__(self, message: str, dmu: str, scenario: str):
        super().__init__(f"{message} (DMU {dmu!r}, scenario {scenario!r})")
        self.dmu = dmu
        self.scenario = scenario


@dataclass(frozen=True)
class Policy:
    name: str
    ranks: Mapping[str, int]


@dataclass(frozen=True)
class PolicyRankingSet:
    """Policies with their variable ranks and the scenario's policy ranks."""

    policies: tuple[Policy, ...]
    policy_ranks: Mapping[str, int]
    scenario_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if not self.policies:
            raise HybridValidationError("no policies")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise HybridValidationError("duplicate policy names")
        for p in self.policies:
            t = self.policy_ranks.get(p.name)
            if t is None or int(t) != t or t < 1:
                raise HybridValidationError(f"policy {p.name!r} needs a positive integer policy rank")
        if min(self.policy_ranks[p.name] for p in self.policies) != 1:
            raise HybridValidationError("no policy holds policy rank 1")

    def validate_for(self, panel: DmuPanel) -> None:
        variables = set(panel.variables)
        n = len(variables)
        for p in self.policies:
            if set(p.ranks) != variables:
                missing = sorted(variables - set(p.ranks))
                extra = sorted(set(p.ranks) - variables)
                raise HybridValidationError(
                    f"policy {p.name!r} must rank exactly the panel variables (missing {missing}, unknown {extra})"
                )
            for var, r in p.ranks.items():
                if int(r) != r or not 1 <= r <= n:
                    raise HybridValidationError(f"policy {p.name!r}: rank of {var!r} must be in 1..{n}, got {r!r}")
            if min(p.ranks.values()) != 1:
                raise HybridValidationError(f"policy {p.name!r}: no variable holds rank 1")


@dataclass(frozen=True)
class ObjectiveScaling:
    f_min: float
    f_max: float
    z_max: float
    degenerate: bool

    def transform(self, f: float) -> float:
        if self.degenerate:
            return 1.0
        return (self.f_max - f) / (self.f_max - self.f_min)


@dataclass
class HybridSolution:
    dmu: str
    scenario: str
    variables: tuple[str, ...]
    policies: tuple[str, ...]
    v: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    policy_weights: np.ndarray  # (policies, variables)
    Z: float
    xi: float
    f: float
    f_trans: float
    scaling: ObjectiveScaling
    sbm_weights: VariableWeights
    assessment: SbmAssessment
    u_s: float
    u_p: float
    epsilon: float
    warnings: list[str] = field(default_factory=list)

    @property
    def aggregated_weights(self) -> np.ndarray:
        return self.policy_weights.sum(axis=0)

    def weight_map(self) -> dict[str, float]:
        return dict(zip(self.variables, self.aggregated_weights.tolist()))


def _wvar(var: str, policy: str) -> str:
    return f"w[{var}|{policy}]"


def _base_model(panel: DmuPanel, rankings: PolicyRankingSet) -> tuple[list[Variable], list[Constraint]]:
    """Variables and rows shared by the payoff LPs and the max-min LP."""
    variables = dual_variables(panel, sign_restricted=True)
    names = [p.name for p in rankings.policies]
    variables += [Variable(_wvar(j, k)) for k in names for j in panel.variables]
    variables.append(Variable("Z", 0.0))

    rows = frontier_rows(panel)
    xmax = panel.X.max(axis=0)
    ymin = panel.Y.min(axis=0)
    for j, var in enumerate(panel.inputs):
        coeffs = {f"v[{j}]": 1.0, f"th[{j}]": 1.0}
        coeffs.update({_wvar(var, k): -1.0 / xmax[j] for k in names})
        rows.append(Constraint(coeffs, ">=", 0.0, f"input_weight[{var}]"))
    for j, var in enumerate(panel.outputs):
        coeffs = {f"u[{j}]": 1.0, f"sg[{j}]": 1.0}
        coeffs.update({_wvar(var, k): -1.0 / ymin[j] for k in names})
        rows.append(Constraint(coeffs, ">=", 0.0, f"output_weight[{var}]"))
    for p in rankings.policies:
        t_k = rankings.policy_ranks[p.name]
        rows += chain_constraints(p.ranks, t_k, lambda j, k=p.name: _wvar(j, k), "Z", f"opa[{p.name}]")
    rows.append(Constraint({_wvar(j, k): 1.0 for k in names for j in panel.variables}, "==", 1.0, "normalization"))
    return variables, rows


def _check_weights(u_s: float, u_p: float) -> None:
    if u_s < 0 or u_p < 0 or not math.isclose(u_s + u_p, 1.0, rel_tol=0, abs_tol=1e-12):
        raise HybridValidationError(f"U_S and U_P must be non-negative and sum to 1 (got {u_s}, {u_p})")


def payoff_table(
    panel: DmuPanel, rankings: PolicyRankingSet, epsilon: float, dmu: str | int
) -> ObjectiveScaling:
    """Bounds of the dual objective over the shared constraint set.

    ``f_min`` minimizes the dual objective alone. ``f_max`` is its value at
    the OPA optimum: ``Z`` is maximized first, then the dual objective is
    minimized with ``Z`` held at that optimum.
    """
    l = panel.index(dmu)
    rankings.validate_for(panel)
    sid = rankings.scenario_id
    variables, rows = _base_model(panel, rankings)
    f = dual_objective(panel, epsilon, l)

    lo = lp_core.solve(LpProblem(variables, rows, f, maximize=False, name="payoff_fmin"))
    if not lo.optimal:
        raise HybridSolveError(f"payoff f-min LP is {lo.status.value}", panel.dmu_ids[l], sid)
    zmax = lp_core.solve(LpProblem(variables, rows, {"Z": 1.0}, maximize=True, name="payoff_zmax"))
    if not zmax.optimal:
        raise HybridSolveError(f"payoff Z-max LP is {zmax.status.value}", panel.dmu_ids[l], sid)
    z_star = zmax.objective
    pinned = rows + [Constraint({"Z": 1.0}, ">=", z_star - 1e-10 * max(1.0, abs(z_star)), "z_pin")]
    hi = lp_core.solve(LpProblem(variables, pinned, f, maximize=False, name="payoff_fmax"))
    if not hi.optimal:
        raise HybridSolveError(f"payoff f-max LP is {hi.status.value}", panel.dmu_ids[l], sid)
    f_min, f_max = lo.objective, max(hi.objective, lo.objective)
    degenerate = f_max - f_min <= lp_core.settings.tolerance * max(1.0, abs(f_max))
    return ObjectiveScaling(f_min, f_max, z_star, degenerate)


def build_problem(
    panel: DmuPanel,
    rankings: PolicyRankingSet,
    epsilon: float,
    u_s: float,
    u_p: float,
    l: int,
    scaling: ObjectiveScaling,
) -> LpProblem:
    variables, rows = _base_model(panel, rankings)
    variables.append(Variable("xi", -lp_core.INF, lp_core.INF))
    if u_s > 0:
        if scaling.degenerate:
            rows.append(Constraint({"xi": -1.0}, ">=", -u_s, "sbm_objective"))
        else:
            span = scaling.f_max - scaling.f_min
            coeffs = {k: -u_s * c / span for k, c in dual_objective(panel, epsilon, l).items()}
            coeffs["xi"] = -1.0
            rows.append(Constraint(coeffs, ">=", -u_s * scaling.f_max / span, "sbm_objective"))
    if u_p > 0:
        rows.append(Constraint({"Z": u_p, "xi": -1.0}, ">=", 0.0, "opa_objective"))
    return LpProblem(variables, rows, {"xi": 1.0}, maximize=True, name=f"hybrid[{panel.dmu_ids[l]}]")


def derived_weights(panel: DmuPanel, aggregated: np.ndarray) -> VariableWeights:
    """SBM weights implied by aggregated policy weights: ``W_j / max x_j`` and ``W_j / min y_j``."""
    r = len(panel.inputs)
    w = np.maximum(np.asarray(aggregated, dtype=float), 0.0)
    return VariableWeights(w[:r] / panel.X.max(axis=0), w[r:] / panel.Y.min(axis=0), "hybrid-derived")


def solve_hybrid(
    panel: DmuPanel,
    rankings: PolicyRankingSet,
    epsilon: float = 0.01,
    u_s: float = 0.5,
    u_p: float = 0.5,
    dmu: str | int = 0,
) -> HybridSolution:
    _check_weights(u_s, u_p)
    l = panel.index(dmu)
    dmu_id = panel.dmu_ids[l]
    sid = rankings.scenario_id
    scaling = payoff_table(panel, rankings, epsilon, l)
    warnings = []
    if scaling.degenerate and u_s > 0:
        msg = f"degenerate objective scaling (f_min == f_max == {scaling.f_max:.6g}); using f_trans = 1"
        log.warning("%s for DMU %s, scenario %s", msg, dmu_id, sid)
        warnings.append(msg)
    problem = build_problem(panel, rankings, epsilon, u_s, u_p, l, scaling)
    sol = lp_core.solve(problem)
    if not sol.optimal:
        raise HybridSolveError(f"hybrid LP is {sol.status.value}", dmu_id, sid)

    r, s = len(panel.inputs), len(panel.outputs)
    names = tuple(p.name for p in rankings.policies)
    W = np.array([[sol[_wvar(j, k)] for j in panel.variables] for k in names])
    fcoef = dual_objective(panel, epsilon, l)
    f = math.fsum(c * sol[k] for k, c in fcoef.items())
    weights = derived_weights(panel, W.sum(axis=0))
    assessment = assess(panel, weights, epsilon, l)
    return HybridSolution(
        dmu=dmu_id,
        scenario=sid,
        variables=panel.variables,
        policies=names,
        v=np.array([sol[f"v[{j}]"] for j in range(r)]),
        theta=np.array([sol[f"th[{j}]"] for j in range(r)]),
        u=np.array([sol[f"u[{j}]"] for j in range(s)]),
        sigma=np.array([sol[f"sg[{j}]"] for j in range(s)]),
        policy_weights=W,
        Z=sol["Z"],
        xi=sol["xi"],
        f=f,
        f_trans=scaling.transform(f),
        scaling=scaling,
        sbm_weights=weights,
        assessment=assessment,
        u_s=u_s,
        u_p=u_p,
        epsilon=epsilon,
        warnings=warnings,
    )


def replay_constraints(panel: DmuPanel, rankings: PolicyRankingSet, solution: HybridSolution) -> dict[str, float]:
    """Worst violation per constraint family, recomputed from the raw data.

    Independent of the LP layer: every row is evaluated directly with numpy
    from the panel, the rankings and the returned point.
    """
    l = panel.index(solution.dmu)
    x, y = panel.X[l], panel.Y[l]
    eps = solution.epsilon
    v, th, u, sg = solution.v, solution.theta, solution.u, solution.sigma
    Wk = solution.policy_weights
    W = Wk.sum(axis=0)
    r = len(panel.inputs)
    out = {}
    out["sign"] = max(
        0.0,
        -float(np.min(np.concatenate([v, th, u, Wk.ravel(), [solution.Z]]))),
        float(np.max(sg, initial=0.0)),
    )
    out["frontier"] = max(0.0, -float(np.min(panel.X @ v - panel.Y @ u)))
    out["input_weight"] = max(0.0, -float(np.min(v + th - W[:r] / panel.X.max(axis=0))))
    out["output_weight"] = max(0.0, -float(np.min(u + sg - W[r:] / panel.Y.min(axis=0))))
    out["normalization"] = abs(float(Wk.sum()) - 1.0)
    worst = 0.0
    idx = {j: i for i, j in enumerate(panel.variables)}
    for k, p in enumerate(rankings.policies):
        t_k = rankings.policy_ranks[p.name]
        distinct = sorted(set(p.ranks.values()))
        for var, rk in p.ranks.items():
            later = [d for d in distinct if d > rk]
            wj = Wk[k, idx[var]]
            if not later:
                worst = max(worst, solution.Z - t_k * rk * wj)
            else:
                for other, r2 in p.ranks.items():
                    if r2 == later[0]:
                        worst = max(worst, solution.Z - t_k * rk * (wj - Wk[k, idx[other]]))
    out["opa_chain"] = max(0.0, worst)
    f = (
        float((x * (1 + eps)) @ v)
        + float(x @ th)
        - float((y * (1 + eps)) @ u)
        - float((y * (1 - 2 * eps)) @ sg)
    )
    out["sbm_objective"] = (
        max(0.0, solution.xi - solution.u_s * solution.scaling.transform(f)) if solution.u_s > 0 else 0.0
    )
    out["opa_objective"] = max(0.0, solution.xi - solution.u_p * solution.Z) if solution.u_p > 0 else 0.0
    return out


@dataclass
class ScenarioAssessment:
    scenario: str
    solutions: list[HybridSolution]
    failures: dict[str, str]


def assess_scenario(
    panel: DmuPanel,
    rankings: PolicyRankingSet,
    epsilon: float = 0.01,
    u_s: float = 0.5,
    u_p: float = 0.5,
    jobs: int = 1,
    dmus: Sequence[str] | None = None,
) -> ScenarioAssessment:
    """Solve every DMU; failures are recorded per DMU and do not abort the batch."""
    _check_weights(u_s, u_p)
    rankings.validate_for(panel)
    ids = sorted(dmus if dmus is not None else panel.dmu_ids)

    def one(d):
        try:
            return d, solve_hybrid(panel, rankings, epsilon, u_s, u_p, d), None
        except (HybridSolveError, RuntimeError, ValueError) as exc:
            return d, None, f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, ids))
    else:
        results = [one(d) for d in ids]
    solutions = [s for _, s, _ in results if s is not None]
    failures = {d: err for d, _, err in results if err is not None}
    return ScenarioAssessment(rankings.scenario_id, solutions, failures)
