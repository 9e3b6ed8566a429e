"""delta-SBM: slack-based efficiency with a tolerance band around the frontier.

For DMU ``l`` the allowed errors are proportional to its own data,
``eps_in_j = eps * x_lj`` and ``eps_out_j = eps * y_lj``. The primal LP
maximizes the weighted slack sum; the best target, score, the two edges of
the efficiency tape and the sensitivity are read off the optimal slacks.

Sensitivity is reported as the favorable-edge efficiency ratio over the
unfavorable-edge one, so it is >= 1 and equals 1 when ``eps == 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp_core
from .lp_core import Constraint, LpProblem, Variable

WEIGHT_RULES = ("min", "max", "avg")


class PanelValidationError(ValueError):
    pass


class SbmInfeasibleError(RuntimeError):
    def __init__(self, dmu: str, epsilon: float, status: str):
        super().__init__(f"delta-SBM LP for DMU {dmu!r} at epsilon={epsilon} is {status}; epsilon may be too large")
        self.dmu = dmu
        self.epsilon = epsilon
        self.status = status


@dataclass(frozen=True)
class DmuPanel:
    dmu_ids: tuple[str, ...]
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    X: np.ndarray
    Y: np.ndarray
    units: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        object.__setattr__(self, "dmu_ids", tuple(str(d) for d in self.dmu_ids))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        n, r, s = len(self.dmu_ids), len(self.inputs), len(self.outputs)
        if n < 1 or r < 1 or s < 1:
            raise PanelValidationError(f"panel needs n, r, s >= 1 (got n={n}, r={r}, s={s})")
        if len(set(self.dmu_ids)) != n:
            raise PanelValidationError("duplicate DMU ids")
        names = self.inputs + self.outputs
        if len(set(names)) != len(names):
            raise PanelValidationError("duplicate variable names")
        if X.shape != (n, r) or Y.shape != (n, s):
            raise PanelValidationError(f"data shapes {X.shape}, {Y.shape} do not match ({n},{r}), ({n},{s})")
        for mat, cols in ((X, self.inputs), (Y, self.outputs)):
            bad = np.argwhere(~np.isfinite(mat) | (mat <= 0))
            if len(bad):
                i, j = bad[0]
                raise PanelValidationError(
                    f"data must be finite and strictly positive: DMU {self.dmu_ids[i]!r}, "
                    f"column {cols[j]!r} = {mat[i, j]!r} ({len(bad)} offending cell(s))"
                )
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return len(self.dmu_ids)

    @property
    def variables(self) -> tuple[str, ...]:
        return self.inputs + self.outputs

    def index(self, dmu: str | int) -> int:
        if isinstance(dmu, (int, np.integer)):
            if not 0 <= dmu < self.n:
                raise IndexError(f"DMU index {dmu} out of range")
            return int(dmu)
        try:
            return self.dmu_ids.index(dmu)
        except ValueError:
            raise KeyError(f"unknown DMU {dmu!r}") from None

    def column(self, name: str) -> np.ndarray:
        if name in self.inputs:
            return self.X[:, self.inputs.index(name)]
        if name in self.outputs:
            return self.Y[:, self.outputs.index(name)]
        raise KeyError(f"unknown variable {name!r}")

    def with_reciprocal_outputs(self, names: Sequence[str]) -> "DmuPanel":
        """Copy with the named (undesirable) outputs replaced by their reciprocals."""
        Y = self.Y.copy()
        for name in names:
            if name not in self.outputs:
                raise KeyError(f"{name!r} is not an output")
            j = self.outputs.index(name)
            Y[:, j] = 1.0 / Y[:, j]
        return DmuPanel(self.dmu_ids, self.inputs, self.outputs, self.X.copy(), Y, dict(self.units))

    def subset(self, ids: Sequence[str]) -> "DmuPanel":
        rows = [self.index(d) for d in ids]
        return DmuPanel(tuple(ids), self.inputs, self.outputs, self.X[rows], self.Y[rows], dict(self.units))


@dataclass(frozen=True)
class VariableWeights:
    inputs: np.ndarray
    outputs: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        w_in = np.asarray(self.inputs, dtype=float)
        w_out = np.asarray(self.outputs, dtype=float)
        for w in (w_in, w_out):
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("variable weights must be finite and non-negative")
        object.__setattr__(self, "inputs", w_in)
        object.__setattr__(self, "outputs", w_out)

    @classmethod
    def unit(cls, panel: DmuPanel) -> "VariableWeights":
        return cls(np.ones(len(panel.inputs)), np.ones(len(panel.outputs)), "unit")


def default_weights(panel: DmuPanel, rule: str = "max") -> VariableWeights:
    """Reciprocal of the column min, max or mean for every variable."""
    agg = {"min": np.min, "max": np.max, "avg": np.mean}.get(rule)
    if agg is None:
        raise ValueError(f"unknown weight rule {rule!r}; expected one of {WEIGHT_RULES}")

    def recip(mat, names):
        out = []
        for j, name in enumerate(names):
            a = float(agg(mat[:, j]))
            if a == 0.0:
                raise ZeroDivisionError(f"column {name!r} aggregates to zero under rule {rule!r}")
            out.append(1.0 / a)
        return np.array(out)

    return VariableWeights(recip(panel.X, panel.inputs), recip(panel.Y, panel.outputs), rule)


@dataclass(frozen=True)
class SbmAssessment:
    dmu: str
    epsilon: float
    objective: float
    lambdas: np.ndarray
    input_slacks: np.ndarray
    output_slacks: np.ndarray
    target_inputs: np.ndarray
    target_outputs: np.ndarray
    score: float
    # unfavorable edge of the tape (inputs raised, outputs lowered by 2*eps)
    outer_inputs: np.ndarray
    outer_outputs: np.ndarray
    # favorable edge (frontier projection without the error band)
    inner_inputs: np.ndarray
    inner_outputs: np.ndarray
    sensitivity: float


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return math.inf if num > 0 else math.nan
    return num / den


def allowed_errors(panel: DmuPanel, epsilon: float, l: int) -> tuple[np.ndarray, np.ndarray]:
    return epsilon * panel.X[l], epsilon * panel.Y[l]


def build_primal(panel: DmuPanel, weights: VariableWeights, epsilon: float, l: int) -> LpProblem:
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon!r}")
    if weights.inputs.shape != (len(panel.inputs),) or weights.outputs.shape != (len(panel.outputs),):
        raise ValueError("weight vector lengths do not match the panel")
    e_in, e_out = allowed_errors(panel, epsilon, l)
    n = panel.n
    variables = [Variable(f"lam[{i}]") for i in range(n)]
    variables += [Variable(f"s_in[{j}]") for j in range(len(panel.inputs))]
    variables += [Variable(f"s_out[{j}]") for j in range(len(panel.outputs))]
    rows = []
    for j in range(len(panel.inputs)):
        coeffs = {f"lam[{i}]": panel.X[i, j] for i in range(n)}
        coeffs[f"s_in[{j}]"] = 1.0
        rows.append(Constraint(coeffs, "==", panel.X[l, j] + e_in[j], f"input[{j}]"))
    for j in range(len(panel.outputs)):
        coeffs = {f"lam[{i}]": panel.Y[i, j] for i in range(n)}
        coeffs[f"s_out[{j}]"] = -1.0
        rows.append(Constraint(coeffs, "==", panel.Y[l, j] + e_out[j], f"output[{j}]"))
    for j in range(len(panel.inputs)):
        rows.append(Constraint({f"s_in[{j}]": 1.0}, "<=", panel.X[l, j], f"input_cap[{j}]"))
    for j in range(len(panel.outputs)):
        rows.append(Constraint({f"s_out[{j}]": 1.0}, ">=", 2 * e_out[j] - panel.Y[l, j], f"output_floor[{j}]"))
    objective = {f"s_in[{j}]": w for j, w in enumerate(weights.inputs)}
    objective.update({f"s_out[{j}]": w for j, w in enumerate(weights.outputs)})
    return LpProblem(variables, rows, objective, maximize=True, name=f"delta_sbm[{panel.dmu_ids[l]}]")


def assess(panel: DmuPanel, weights: VariableWeights, epsilon: float, dmu: str | int) -> SbmAssessment:
    l = panel.index(dmu)
    problem = build_primal(panel, weights, epsilon, l)
    sol = lp_core.solve(problem)
    if not sol.optimal:
        raise SbmInfeasibleError(panel.dmu_ids[l], epsilon, sol.status.value)
    lam = np.array([sol[f"lam[{i}]"] for i in range(panel.n)])
    s_in = np.array([sol[f"s_in[{j}]"] for j in range(len(panel.inputs))])
    s_out = np.array([sol[f"s_out[{j}]"] for j in range(len(panel.outputs))])
    x, y = panel.X[l], panel.Y[l]
    e_in, e_out = allowed_errors(panel, epsilon, l)
    w_in, w_out = weights.inputs, weights.outputs

    x_star, y_star = x - s_in + e_in, y + s_out - e_out
    x_outer, y_outer = x - s_in + 2 * e_in, y + s_out - 2 * e_out
    x_inner, y_inner = x - s_in, y + s_out

    def eff(xv, yv):
        return _ratio(float(w_out @ yv), float(w_in @ xv))

    score = _ratio(eff(x, y), eff(x_star, y_star))
    if epsilon == 0.0:
        sensitivity = 1.0
    else:
        sensitivity = _ratio(eff(x_inner, y_inner), eff(x_outer, y_outer))
    return SbmAssessment(
        dmu=panel.dmu_ids[l],
        epsilon=epsilon,
        objective=sol.objective,
        lambdas=lam,
        input_slacks=s_in,
        output_slacks=s_out,
        target_inputs=x_star,
        target_outputs=y_star,
        score=score,
        outer_inputs=x_outer,
        outer_outputs=y_outer,
        inner_inputs=x_inner,
        inner_outputs=y_inner,
        sensitivity=sensitivity,
    )


# ---------------------------------------------------------------------------
# dual


@dataclass(frozen=True)
class DualSolution:
    dmu: str
    epsilon: float
    v: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    objective: float


def dual_variables(panel: DmuPanel, sign_restricted: bool = True) -> list[Variable]:
    lo_v = 0.0 if sign_restricted else -lp_core.INF
    out = [Variable(f"v[{j}]", lo_v) for j in range(len(panel.inputs))]
    out += [Variable(f"th[{j}]") for j in range(len(panel.inputs))]
    out += [Variable(f"u[{j}]") for j in range(len(panel.outputs))]
    out += [Variable(f"sg[{j}]", -lp_core.INF, 0.0) for j in range(len(panel.outputs))]
    return out


def dual_objective(panel: DmuPanel, epsilon: float, l: int) -> dict[str, float]:
    """Coefficients of the dual objective (to be minimized) for DMU ``l``."""
    x, y = panel.X[l], panel.Y[l]
    e_in, e_out = allowed_errors(panel, epsilon, l)
    coeffs = {}
    for j in range(len(panel.inputs)):
        coeffs[f"v[{j}]"] = x[j] + e_in[j]
        coeffs[f"th[{j}]"] = x[j]
    for j in range(len(panel.outputs)):
        coeffs[f"u[{j}]"] = -(y[j] + e_out[j])
        coeffs[f"sg[{j}]"] = -(y[j] - 2 * e_out[j])
    return coeffs


def frontier_rows(panel: DmuPanel) -> list[Constraint]:
    """``sum_j x_ij v_j - sum_j y_ij u_j >= 0`` for every DMU ``i``."""
    rows = []
    for i in range(panel.n):
        coeffs = {f"v[{j}]": panel.X[i, j] for j in range(len(panel.inputs))}
        coeffs.update({f"u[{j}]": -panel.Y[i, j] for j in range(len(panel.outputs))})
        rows.append(Constraint(coeffs, ">=", 0.0, f"frontier[{panel.dmu_ids[i]}]"))
    return rows


def solve_dual(
    panel: DmuPanel,
    weights: VariableWeights,
    epsilon: float,
    dmu: str | int,
    sign_restricted: bool = False,
) -> DualSolution:
    """Minimize the dual of the delta-SBM primal for one DMU.

    The exact LP dual leaves the input multipliers ``v`` free in sign. With
    ``sign_restricted=True`` they are forced non-negative as well; that form
    agrees with the primal at ``epsilon == 0`` but can exceed it when
    ``epsilon > 0`` and an input-cap row is active.
    """
    l = panel.index(dmu)
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon!r}")
    rows = frontier_rows(panel)
    for j, w in enumerate(weights.inputs):
        rows.append(Constraint({f"v[{j}]": 1.0, f"th[{j}]": 1.0}, ">=", float(w), f"input_weight[{j}]"))
    for j, w in enumerate(weights.outputs):
        rows.append(Constraint({f"u[{j}]": 1.0, f"sg[{j}]": 1.0}, ">=", float(w), f"output_weight[{j}]"))
    problem = LpProblem(
        dual_variables(panel, sign_restricted),
        rows,
        dual_objective(panel, epsilon, l),
        maximize=False,
        name=f"delta_sbm_dual[{panel.dmu_ids[l]}]",
    )
    sol = lp_core.solve(problem)
    if not sol.optimal:
        raise SbmInfeasibleError(panel.dmu_ids[l], epsilon, sol.status.value)

    def vec(prefix, k):
        return np.array([sol[f"{prefix}[{j}]"] for j in range(k)])

    r, s = len(panel.inputs), len(panel.outputs)
    return DualSolution(
        panel.dmu_ids[l], epsilon, vec("v", r), vec("th", r), vec("u", s), vec("sg", s), sol.objective
    )
