"""Small dense linear-programming layer shared by every model in the package.

Problems are stated with named variables and sparse constraint rows, then
converted to standard form ``min c'z, Az = b, z >= 0`` and solved with a
two-phase revised simplex. Pricing is Dantzig's rule until a fixed iteration
budget is spent, after which Bland's rule takes over to rule out cycling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import lu_factor, lu_solve


class Settings:
    """Process-wide numerical settings.

    ``tolerance`` is the feasibility/optimality tolerance that every
    certification and downstream assertion refers to.
    """

    tolerance: float = 1e-7
    pivot_tolerance: float = 1e-11
    pricing_tolerance: float = 1e-9


settings = Settings()

INF = math.inf


class LpValidationError(ValueError):
    """Raised for malformed problems (undeclared variables, NaN data, bad bounds)."""


class LpSolveError(RuntimeError):
    """Raised when the simplex fails for numerical reasons or hits the hard cap."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


_SENSES = {"<=", ">=", "=="}


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = INF


@dataclass(frozen=True)
class Constraint:
    coeffs: Mapping[str, float]
    sense: str
    rhs: float
    name: str = ""

    def activity(self, values: Mapping[str, float]) -> float:
        return math.fsum(c * values[v] for v, c in self.coeffs.items())

    def violation(self, values: Mapping[str, float]) -> float:
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass(frozen=True)
class LpProblem:
    """An immutable LP: named bounded variables, linear rows, one objective."""

    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: Mapping[str, float]
    maximize: bool = False
    name: str = "lp"

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise LpValidationError(f"{self.name}: duplicate variable names")
        declared = set(names)
        for v in self.variables:
            if math.isnan(v.lower) or math.isnan(v.upper):
                raise LpValidationError(f"{self.name}: NaN bound on variable {v.name!r}")
            if v.lower > v.upper:
                raise LpValidationError(
                    f"{self.name}: variable {v.name!r} has lower bound {v.lower} > upper bound {v.upper}"
                )
            if v.lower == INF or v.upper == -INF:
                raise LpValidationError(f"{self.name}: variable {v.name!r} has an empty domain")
        for i, con in enumerate(self.constraints):
            label = con.name or f"row {i}"
            if con.sense not in _SENSES:
                raise LpValidationError(f"{self.name}: constraint {label} has unknown sense {con.sense!r}")
            if not math.isfinite(con.rhs):
                raise LpValidationError(f"{self.name}: constraint {label} has non-finite rhs")
            for var, c in con.coeffs.items():
                if var not in declared:
                    raise LpValidationError(f"{self.name}: constraint {label} references undeclared variable {var!r}")
                if not math.isfinite(c):
                    raise LpValidationError(f"{self.name}: constraint {label} has non-finite coefficient on {var!r}")
        for var, c in self.objective.items():
            if var not in declared:
                raise LpValidationError(f"{self.name}: objective references undeclared variable {var!r}")
            if not math.isfinite(c):
                raise LpValidationError(f"{self.name}: objective has non-finite coefficient on {var!r}")

    def evaluate(self, values: Mapping[str, float]) -> float:
        return math.fsum(c * values[v] for v, c in self.objective.items())

    def dump(self) -> str:
        """Human-readable listing for bug reports."""
        lines = [f"\\ {self.name}", "maximize" if self.maximize else "minimize"]
        lines.append("  " + _format_row(self.objective))
        lines.append("subject to")
        for i, con in enumerate(self.constraints):
            label = con.name or f"r{i}"
            lines.append(f"  {label}: {_format_row(con.coeffs)} {con.sense} {con.rhs!r}")
        lines.append("bounds")
        for v in self.variables:
            lines.append(f"  {v.lower!r} <= {v.name} <= {v.upper!r}")
        return "\n".join(lines)


def _format_row(coeffs: Mapping[str, float]) -> str:
    if not coeffs:
        return "0"
    return " ".join(f"{c:+.17g} {v}" for v, c in coeffs.items())


@dataclass
class LpSolution:
    status: Status
    objective: float = math.nan
    values: dict[str, float] = field(default_factory=dict)
    duals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.values[name]


# ---------------------------------------------------------------------------
# standard-form conversion


@dataclass
class _StandardForm:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    const: float
    # original variable -> (offset, [(column, coefficient)])
    var_map: list[tuple[float, list[tuple[int, float]]]]
    row_sign: np.ndarray
    n_user_rows: int


def _to_standard_form(problem: LpProblem) -> _StandardForm:
    index = {v.name: i for i, v in enumerate(problem.variables)}
    n_orig = len(problem.variables)
    var_map: list[tuple[float, list[tuple[int, float]]]] = []
    ncols = 0
    extra_rows: list[tuple[int, float]] = []  # (column, bound) for z_col <= bound
    for v in problem.variables:
        lo, hi = v.lower, v.upper
        if math.isfinite(lo):
            var_map.append((lo, [(ncols, 1.0)]))
            if math.isfinite(hi):
                extra_rows.append((ncols, hi - lo))
            ncols += 1
        elif math.isfinite(hi):
            var_map.append((hi, [(ncols, -1.0)]))
            ncols += 1
        else:
            var_map.append((0.0, [(ncols, 1.0), (ncols + 1, -1.0)]))
            ncols += 2

    # dense original matrix
    m_user = len(problem.constraints)
    A0 = np.zeros((m_user, n_orig))
    b0 = np.zeros(m_user)
    senses = []
    for i, con in enumerate(problem.constraints):
        for var, c in con.coeffs.items():
            A0[i, index[var]] += c
        b0[i] = con.rhs
        senses.append(con.sense)
    c0 = np.zeros(n_orig)
    for var, c in problem.objective.items():
        c0[index[var]] += c
    if problem.maximize:
        c0 = -c0

    # substitute x = offset + T z
    T = np.zeros((n_orig, ncols))
    offset = np.zeros(n_orig)
    for j, (off, cols) in enumerate(var_map):
        offset[j] = off
        for col, coef in cols:
            T[j, col] = coef
    A1 = A0 @ T
    b1 = b0 - A0 @ offset
    c1 = c0 @ T
    const = float(c0 @ offset)

    rows = []
    rhs = []
    slack_sign = []
    for i in range(m_user):
        rows.append(A1[i])
        rhs.append(b1[i])
        slack_sign.append({"<=": 1.0, ">=": -1.0, "==": 0.0}[senses[i]])
    for col, bound in extra_rows:
        row = np.zeros(ncols)
        row[col] = 1.0
        rows.append(row)
        rhs.append(bound)
        slack_sign.append(1.0)

    m = len(rows)
    n_slack = sum(1 for s in slack_sign if s != 0.0)
    A = np.zeros((m, ncols + n_slack))
    if m:
        A[:, :ncols] = np.vstack(rows)
    k = ncols
    for i, s in enumerate(slack_sign):
        if s != 0.0:
            A[i, k] = s
            k += 1
    b = np.array(rhs, dtype=float)
    c = np.concatenate([c1, np.zeros(n_slack)])
    row_sign = np.where(b < 0, -1.0, 1.0)
    A = A * row_sign[:, None]
    b = b * row_sign
    return _StandardForm(A, b, c, const, var_map, row_sign, m_user)


# ---------------------------------------------------------------------------
# revised simplex on min c'z, Az = b, z >= 0, b >= 0


class _Unbounded(Exception):
    pass


class _Simplex:
    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.iterations = 0
        self.bland_after = 10 * (self.m + self.n) + 50
        self.hard_cap = 200 * (self.m + self.n) + 1000

    def factor(self, basis):
        self.lu = lu_factor(self.A[:, basis], check_finite=False)
        self.xB = lu_solve(self.lu, self.b, check_finite=False)

    def run(self, c: np.ndarray, basis: list[int], eligible: np.ndarray) -> list[int]:
        ptol = settings.pivot_tolerance
        dtol = settings.pricing_tolerance * max(1.0, float(np.abs(c).max(initial=0.0)))
        self.factor(basis)
        while True:
            if self.iterations > self.hard_cap:
                raise LpSolveError("simplex iteration cap exceeded")
            y = lu_solve(self.lu, c[basis], trans=1, check_finite=False)
            d = c - self.A.T @ y
            in_basis = np.zeros(self.n, dtype=bool)
            in_basis[basis] = True
            cand = eligible & ~in_basis & (d < -dtol)
            if not cand.any():
                return basis
            bland = self.iterations >= self.bland_after
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                masked = np.where(cand, d, np.inf)
                q = int(np.argmin(masked))
            col = lu_solve(self.lu, self.A[:, q], check_finite=False)
            pos = col > ptol
            if not pos.any():
                raise _Unbounded()
            ratios = np.full(self.m, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / col[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, abs(rmin)))
            if bland:
                p = int(min(ties, key=lambda i: basis[i]))
            else:
                # largest pivot element among ties, then lowest basis index
                p = int(min(ties, key=lambda i: (-col[i], basis[i])))
            basis[p] = q
            self.iterations += 1
            self.factor(basis)


def solve(problem: LpProblem) -> LpSolution:
    """Solve ``problem`` and return an :class:`LpSolution`.

    Deterministic for identical input. Constraint duals are reported as the
    sensitivity of the reported objective to each constraint's right-hand
    side and are only present for optimal solutions.
    """
    sf = _to_standard_form(problem)
    A, b, c = sf.A, sf.b, sf.c
    m, n = A.shape
    tol = settings.tolerance

    if m == 0:
        # only nonnegativity; optimum at z = 0 unless some cost is negative
        if (c < -settings.pricing_tolerance).any():
            return LpSolution(Status.UNBOUNDED)
        z = np.zeros(n)
        return _finish(problem, sf, z, np.zeros(0), 0)

    # equilibrate rows then columns
    rscale = np.abs(A).max(axis=1)
    rscale[rscale == 0] = 1.0
    As = A / rscale[:, None]
    bs = b / rscale
    cscale = np.abs(As).max(axis=0)
    cscale[cscale == 0] = 1.0
    As = As / cscale[None, :]
    cs = c / cscale

    # phase 1 with one artificial per row
    Aph = np.hstack([As, np.eye(m)])
    simplex = _Simplex(Aph, bs)
    basis = list(range(n, n + m))
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    eligible = np.ones(n + m, dtype=bool)
    try:
        basis = simplex.run(c1, basis, eligible)
    except _Unbounded:  # pragma: no cover - phase 1 is bounded below by 0
        raise LpSolveError("phase 1 reported unbounded")
    infeas = float(np.sum(simplex.xB[[i for i, j in enumerate(basis) if j >= n]])) if basis else 0.0
    if infeas > tol * max(1.0, float(np.abs(bs).max())):
        return LpSolution(Status.INFEASIBLE, iterations=simplex.iterations)

    # drive artificials out of the basis; rows where that fails are redundant
    keep_rows = list(range(m))
    for p in range(m):
        j = basis[p]
        if j < n:
            continue
        row = lu_solve(simplex.lu, np.eye(m)[:, p], trans=1, check_finite=False)
        alpha = row @ Aph[:, :n]
        in_basis = set(basis)
        cands = [q for q in np.flatnonzero(np.abs(alpha) > 1e-9) if q not in in_basis]
        if cands:
            q = max(cands, key=lambda q: (abs(alpha[q]), -q))
            basis[p] = int(q)
            simplex.factor(basis)
    redundant = [p for p in range(m) if basis[p] >= n]
    if redundant:
        keep_rows = [p for p in range(m) if p not in redundant]
        keep_basis = [basis[p] for p in keep_rows]
        As2, bs2 = As[keep_rows], bs[keep_rows]
        basis = keep_basis
    else:
        As2, bs2 = As, bs

    simplex2 = _Simplex(As2, bs2)
    simplex2.iterations = simplex.iterations
    eligible2 = np.ones(n, dtype=bool)
    try:
        basis = simplex2.run(cs, basis, eligible2)
    except _Unbounded:
        return LpSolution(Status.UNBOUNDED, iterations=simplex2.iterations)

    zs = np.zeros(n)
    zs[basis] = np.maximum(simplex2.xB, 0.0)
    z = zs / cscale
    ys_kept = lu_solve(simplex2.lu, cs[basis], trans=1, check_finite=False)
    ys = np.zeros(m)
    ys[keep_rows] = ys_kept
    y = ys / rscale
    return _finish(problem, sf, z, y, simplex2.iterations)


def _finish(problem: LpProblem, sf: _StandardForm, z: np.ndarray, y: np.ndarray, iterations: int) -> LpSolution:
    values = {}
    for v, (off, cols) in zip(problem.variables, sf.var_map):
        x = off + sum(coef * z[col] for col, coef in cols)
        # clip tiny bound excursions from round-off
        x = min(max(x, v.lower), v.upper)
        values[v.name] = float(x)
    obj = problem.evaluate(values)
    duals = {}
    sign = -1.0 if problem.maximize else 1.0
    for i, con in enumerate(problem.constraints):
        key = con.name or f"r{i}"
        duals[key] = float(sign * sf.row_sign[i] * y[i]) if i < len(y) else 0.0
    return LpSolution(Status.OPTIMAL, obj, values, duals, iterations)


def max_violation(problem: LpProblem, values: Mapping[str, float]) -> float:
    """Largest constraint or bound violation of ``values`` (0 when feasible)."""
    worst = 0.0
    for con in problem.constraints:
        worst = max(worst, con.violation(values))
    for v in problem.variables:
        x = values[v.name]
        worst = max(worst, v.lower - x, x - v.upper)
    return worst
