import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import highs, vertices_2d
from sbmopa import lp_core
from sbmopa.lp_core import INF, Constraint, LpProblem, LpValidationError, Status, Variable, max_violation, solve

TOL = lp_core.settings.tolerance


def two_var():
    return LpProblem(
        [Variable("x"), Variable("y")],
        [Constraint({"x": 1, "y": 2}, "<=", 4, "a"), Constraint({"x": 3, "y": 1}, "<=", 6, "b")],
        {"x": 1, "y": 1},
        maximize=True,
    )


def random_lp(rng, m, n, free_frac=0.2):
    variables = []
    for j in range(n):
        kind = rng.random()
        if kind < free_frac:
            variables.append(Variable(f"z{j}", -INF, INF))
        elif kind < free_frac + 0.2:
            variables.append(Variable(f"z{j}", float(rng.uniform(-3, 0)), float(rng.uniform(0.5, 5))))
        else:
            variables.append(Variable(f"z{j}"))
    rows = []
    for i in range(m):
        coeffs = {f"z{j}": float(rng.integers(-5, 6)) for j in range(n) if rng.random() < 0.7}
        sense = rng.choice(["<=", ">=", "=="], p=[0.5, 0.3, 0.2])
        rows.append(Constraint(coeffs, str(sense), float(rng.integers(-10, 11)), f"c{i}"))
    obj = {f"z{j}": float(rng.integers(-5, 6)) for j in range(n)}
    return LpProblem(variables, rows, obj, maximize=bool(rng.random() < 0.5))


# --- examples -------------------------------------------------------------


def test_single_active_bound():
    p = LpProblem([Variable("x")], [Constraint({"x": 1}, "<=", 3)], {"x": 1}, maximize=True)
    sol = solve(p)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(3)
    assert sol["x"] == pytest.approx(3)


def test_unbounded_ray():
    p = LpProblem([Variable("x")], [Constraint({"x": 1}, ">=", 0)], {"x": 1}, maximize=True)
    assert solve(p).status is Status.UNBOUNDED


def test_two_variable_example_matches_vertex_enumeration():
    A = np.array([[1, 2], [3, 1], [-1, 0], [0, -1]], float)
    b = np.array([4, 6, 0, 0], float)
    best = max(vertices_2d(A, b), key=lambda z: z.sum())
    assert best == pytest.approx([1.6, 1.2])
    sol = solve(two_var())
    assert sol.objective == pytest.approx(best.sum(), abs=1e-9)
    assert (sol["x"], sol["y"]) == pytest.approx((1.6, 1.2), abs=1e-9)


def test_infeasible():
    p = LpProblem([Variable("x")], [Constraint({"x": 1}, ">=", 2), Constraint({"x": 1}, "<=", 1)], {"x": 1})
    assert solve(p).status is Status.INFEASIBLE


def test_free_and_bounded_variables():
    p = LpProblem(
        [Variable("x", -INF, INF), Variable("y", -2, 3)],
        [Constraint({"x": 1, "y": 1}, "==", 1)],
        {"x": 1, "y": 2},
        maximize=False,
    )
    sol = solve(p)
    assert sol.optimal
    assert sol["y"] == pytest.approx(-2)
    assert sol["x"] == pytest.approx(3)


def test_empty_constraint_set():
    p = LpProblem([Variable("x", 1, 4)], [], {"x": -1})
    sol = solve(p)
    assert sol.optimal and sol["x"] == pytest.approx(4)


def test_duals_are_rhs_sensitivities():
    base = solve(two_var())
    h = 1e-4
    for name, row in (("a", 0), ("b", 1)):
        cons = list(two_var().constraints)
        cons[row] = Constraint(cons[row].coeffs, "<=", cons[row].rhs + h, name)
        bumped = solve(LpProblem(two_var().variables, cons, two_var().objective, maximize=True))
        assert base.duals[name] == pytest.approx((bumped.objective - base.objective) / h, abs=1e-6)


def test_degenerate_instance_terminates():
    # Beale's classic cycling example under textbook Dantzig pricing
    p = LpProblem(
        [Variable(f"x{i}") for i in range(4)],
        [
            Constraint({"x0": 0.25, "x1": -60, "x2": -0.04, "x3": 9}, "<=", 0),
            Constraint({"x0": 0.5, "x1": -90, "x2": -0.02, "x3": 3}, "<=", 0),
            Constraint({"x2": 1}, "<=", 1),
        ],
        {"x0": 0.75, "x1": -150, "x2": 0.02, "x3": -6},
        maximize=True,
    )
    sol = solve(p)
    assert sol.optimal
    assert sol.objective == pytest.approx(0.05)


# --- validation -----------------------------------------------------------


@pytest.mark.parametrize(
    "build",
    [
        lambda: LpProblem([Variable("x")], [Constraint({"y": 1}, "<=", 1)], {"x": 1}),
        lambda: LpProblem([Variable("x")], [Constraint({"x": float("nan")}, "<=", 1)], {"x": 1}),
        lambda: LpProblem([Variable("x")], [Constraint({"x": 1}, "<", 1)], {"x": 1}),
        lambda: LpProblem([Variable("x", 2, 1)], [], {"x": 1}),
        lambda: LpProblem([Variable("x")], [], {"y": 1}),
        lambda: LpProblem([Variable("x"), Variable("x")], [], {}),
        lambda: LpProblem([Variable("x")], [Constraint({"x": 1}, "<=", float("inf"))], {}),
    ],
)
def test_malformed_problems_raise_validation_error(build):
    with pytest.raises(LpValidationError):
        build()


def test_dump_is_readable():
    text = two_var().dump()
    assert "maximize" in text and "a:" in text and "<=" in text


# --- properties -----------------------------------------------------------


def test_agrees_with_highs_on_random_problems():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(300):
        p = random_lp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        status, obj, _ = highs(p)
        if status not in (0, 2, 3):
            continue
        sol = solve(p)
        expected = {0: Status.OPTIMAL, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}[status]
        assert sol.status is expected, p.dump()
        if status == 0:
            assert sol.objective == pytest.approx(obj, rel=1e-7, abs=1e-7)
            assert max_violation(p, sol.values) <= TOL
        checked += 1
    assert checked > 250


def test_optimality_certificate_on_random_problems():
    # complementary slackness + dual feasibility for the inequality form
    rng = np.random.default_rng(11)
    for _ in range(100):
        m, n = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        A = rng.uniform(0.1, 3, (m, n))
        b = rng.uniform(1, 10, m)
        c = rng.uniform(0.1, 3, n)
        p = LpProblem(
            [Variable(f"x{j}") for j in range(n)],
            [Constraint({f"x{j}": A[i, j] for j in range(n)}, "<=", b[i], f"r{i}") for i in range(m)],
            {f"x{j}": c[j] for j in range(n)},
            maximize=True,
        )
        sol = solve(p)
        x = np.array([sol[f"x{j}"] for j in range(n)])
        y = np.array([sol.duals[f"r{i}"] for i in range(m)])
        assert np.all(y >= -TOL)
        assert np.all(A.T @ y >= c - TOL)
        assert abs(y @ (b - A @ x)) <= 1e-6
        assert abs(x @ (A.T @ y - c)) <= 1e-6
        assert sol.objective == pytest.approx(b @ y, abs=1e-6)


@given(st.floats(0.01, 100.0))
def test_row_scaling_invariance(c):
    base = solve(two_var())
    cons = list(two_var().constraints)
    cons[0] = Constraint({k: v * c for k, v in cons[0].coeffs.items()}, "<=", cons[0].rhs * c, "a")
    scaled = solve(LpProblem(two_var().variables, cons, two_var().objective, maximize=True))
    assert scaled["x"] == pytest.approx(base["x"], abs=1e-9)
    assert scaled["y"] == pytest.approx(base["y"], abs=1e-9)
    assert scaled.duals["a"] == pytest.approx(base.duals["a"] / c, rel=1e-7)


def test_objective_resubstitution():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = random_lp(rng, 4, 5)
        sol = solve(p)
        if sol.optimal:
            assert p.evaluate(sol.values) == pytest.approx(sol.objective, rel=1e-9, abs=1e-12)


def test_deterministic_and_thread_safe():
    rng = np.random.default_rng(5)
    problems = [random_lp(rng, 5, 6) for _ in range(40)]
    sequential = [solve(p) for p in problems]
    results = [None] * len(problems)

    def work(i):
        results[i] = solve(problems[i])

    threads = [threading.Thread(target=work, args=(i,)) for i in range(len(problems))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for a, b in zip(sequential, results):
        assert a.status is b.status
        assert a.values == b.values


def test_highly_degenerate_assignment_problem():
    rng = np.random.default_rng(0)
    n = 12
    cost = rng.integers(1, 5, (n, n)).astype(float)  # many ties -> degenerate pivots
    var = lambda i, j: f"a{i}_{j}"  # noqa: E731
    rows = [Constraint({var(i, j): 1 for j in range(n)}, "==", 1, f"row{i}") for i in range(n)]
    rows += [Constraint({var(i, j): 1 for i in range(n)}, "==", 1, f"col{j}") for j in range(n)]
    p = LpProblem([Variable(var(i, j)) for i in range(n) for j in range(n)], rows, {var(i, j): cost[i, j] for i in range(n) for j in range(n)})
    sol = solve(p)
    _, obj, _ = highs(p)
    assert sol.optimal
    assert sol.objective == pytest.approx(obj, abs=1e-9)
