from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from oracles import random_panel, sbm_dual, sbm_primal
from sbmopa.delta_sbm import (
    DmuPanel,
    PanelValidationError,
    SbmInfeasibleError,
    VariableWeights,
    assess,
    build_primal,
    default_weights,
    solve_dual,
)


def column_panel(values):
    n = len(values)
    return DmuPanel(tuple(f"D{i}" for i in range(n)), ("x",), ("y",), np.array(values, float)[:, None], np.ones((n, 1)))


def random_cases(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, r, s = int(rng.integers(1, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        eps = float(rng.choice([0.0, 0.01, 0.05]))
        yield random_panel(rng, n, r, s), eps


# --- examples -------------------------------------------------------------


def test_toy_frontier_dmu(toy_panel):
    a = assess(toy_panel, VariableWeights.unit(toy_panel), 0.0, "A")
    assert a.score == pytest.approx(1.0, abs=1e-9)
    assert a.objective == pytest.approx(0.0, abs=1e-9)


def test_toy_dominated_dmu(toy_panel):
    b = assess(toy_panel, VariableWeights.unit(toy_panel), 0.0, "B")
    assert b.score == pytest.approx(0.25, abs=1e-9)
    assert b.objective == pytest.approx(3.0, abs=1e-9)
    # the CRS optimum projects B to (x, y) = (2, 4)
    assert b.target_inputs == pytest.approx([2.0 - b.input_slacks[0]])
    assert b.target_outputs == pytest.approx([1.0 + b.output_slacks[0]])


@pytest.mark.parametrize("rule, expected", [("max", 0.25), ("avg", 3 / 7), ("min", 1.0)])
def test_default_weight_rules(rule, expected):
    w = default_weights(column_panel([1.0, 2.0, 4.0]), rule)
    assert w.inputs[0] == pytest.approx(expected)
    assert w.outputs[0] == pytest.approx(1.0)
    assert w.provenance == rule


def test_constant_column_weight():
    assert default_weights(column_panel([2.0, 2.0]), "max").inputs[0] == pytest.approx(0.5)


def test_unknown_weight_rule():
    with pytest.raises(ValueError):
        default_weights(column_panel([1.0]), "median")


def test_single_dmu_is_efficient():
    p = column_panel([3.0])
    a = assess(p, VariableWeights.unit(p), 0.0, 0)
    assert a.score == pytest.approx(1.0)
    assert a.sensitivity == 1.0


# --- oracle agreement -----------------------------------------------------


def test_primal_matches_highs():
    for panel, eps in random_cases(1, 60):
        w = default_weights(panel, "max")
        for l in range(panel.n):
            obj, *_ = sbm_primal(panel.X, panel.Y, w.inputs, w.outputs, eps, l)
            assert assess(panel, w, eps, l).objective == pytest.approx(obj, abs=1e-7)


def test_strong_duality_against_both_duals():
    for panel, eps in random_cases(2, 60):
        w = default_weights(panel, "avg")
        for l in range(panel.n):
            primal = assess(panel, w, eps, l).objective
            assert abs(primal - sbm_dual(panel.X, panel.Y, w.inputs, w.outputs, eps, l)) <= 1e-6
            assert abs(primal - solve_dual(panel, w, eps, l).objective) <= 1e-6


def test_sign_restricted_dual_is_an_upper_bound():
    for panel, eps in random_cases(3, 40):
        w = default_weights(panel, "max")
        for l in range(panel.n):
            exact = solve_dual(panel, w, eps, l).objective
            restricted = solve_dual(panel, w, eps, l, sign_restricted=True).objective
            assert restricted >= exact - 1e-7
            if eps == 0.0:
                assert restricted == pytest.approx(exact, abs=1e-7)


# --- tape and sensitivity -------------------------------------------------


def test_tape_ordering_and_sensitivity():
    for panel, eps in random_cases(4, 100):
        w = default_weights(panel, "max")
        for l in range(panel.n):
            a = assess(panel, w, eps, l)
            assert np.all(a.inner_inputs <= a.target_inputs + 1e-12)
            assert np.all(a.target_inputs <= a.outer_inputs + 1e-12)
            assert np.all(a.outer_outputs <= a.target_outputs + 1e-12)
            assert np.all(a.target_outputs <= a.inner_outputs + 1e-12)
            assert a.sensitivity >= 1.0 - 1e-12
            assert a.score > 0.0
            if eps == 0.0:
                assert a.sensitivity == 1.0
                assert a.score <= 1.0 + 1e-9
                zero = np.allclose(a.input_slacks, 0, atol=1e-9) and np.allclose(a.output_slacks, 0, atol=1e-9)
                assert zero == (a.score >= 1.0 - 1e-9)


def test_slacks_respect_their_bounds():
    for panel, eps in random_cases(5, 40):
        w = default_weights(panel, "max")
        for l in range(panel.n):
            a = assess(panel, w, eps, l)
            assert np.all(a.input_slacks <= panel.X[l] + 1e-9)
            assert np.all(a.output_slacks >= 2 * eps * panel.Y[l] - panel.Y[l] - 1e-9)
            assert np.all(a.outer_outputs >= -1e-9)


# --- properties -----------------------------------------------------------


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_units_invariance(c):
    rng = np.random.default_rng(6)
    for _ in range(20):
        panel = random_panel(rng, 6, 2, 2)
        j = int(rng.integers(2))
        X = panel.X.copy()
        X[:, j] *= c
        scaled = DmuPanel(panel.dmu_ids, panel.inputs, panel.outputs, X, panel.Y)
        for l in range(panel.n):
            a = assess(panel, default_weights(panel, "max"), 0.01, l).score
            b = assess(scaled, default_weights(scaled, "max"), 0.01, l).score
            assert abs(a - b) <= 1e-9


def test_dominated_dmu_scores_below_one():
    rng = np.random.default_rng(8)
    for _ in range(20):
        panel = random_panel(rng, 4, 2, 2)
        X = np.vstack([panel.X, panel.X[0] * 1.2])
        Y = np.vstack([panel.Y, panel.Y[0]])
        dom = DmuPanel(panel.dmu_ids + ("W",), panel.inputs, panel.outputs, X, Y)
        w = default_weights(dom)
        worse = assess(dom, w, 0.0, "W").score
        assert worse < 1.0 - 1e-6
        assert assess(dom, w, 0.0, panel.dmu_ids[0]).score >= worse


def test_concurrent_equals_sequential():
    panel = random_panel(np.random.default_rng(9), 8, 3, 2)
    w = default_weights(panel)
    seq = [assess(panel, w, 0.01, l) for l in range(panel.n)]
    with ThreadPoolExecutor(4) as pool:
        par = list(pool.map(lambda l: assess(panel, w, 0.01, l), range(panel.n)))
    for a, b in zip(seq, par):
        assert a.score == b.score and a.sensitivity == b.sensitivity
        assert np.array_equal(a.input_slacks, b.input_slacks)


def test_reciprocal_outputs():
    p = DmuPanel(("A", "B"), ("x",), ("y", "co2"), np.ones((2, 1)), np.array([[1.0, 4.0], [2.0, 0.5]]))
    q = p.with_reciprocal_outputs(["co2"])
    assert q.column("co2") == pytest.approx([0.25, 2.0])
    assert q.column("y") == pytest.approx([1.0, 2.0])
    with pytest.raises(KeyError):
        p.with_reciprocal_outputs(["x"])


# --- validation -----------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(dmu_ids=(), X=np.zeros((0, 1)), Y=np.zeros((0, 1))),
        dict(dmu_ids=("A", "A"), X=np.ones((2, 1)), Y=np.ones((2, 1))),
        dict(dmu_ids=("A",), X=np.array([[0.0]]), Y=np.ones((1, 1))),
        dict(dmu_ids=("A",), X=np.ones((1, 1)), Y=np.array([[np.nan]])),
        dict(dmu_ids=("A",), X=np.ones((1, 2)), Y=np.ones((1, 1))),
    ],
)
def test_invalid_panels(kwargs):
    with pytest.raises(PanelValidationError):
        DmuPanel(inputs=("x",), outputs=("y",), **kwargs)


def test_error_names_the_offending_cell():
    with pytest.raises(PanelValidationError, match="'B'.*'y'"):
        DmuPanel(("A", "B"), ("x",), ("y",), np.ones((2, 1)), np.array([[1.0], [-1.0]]))


def test_bad_epsilon_and_weights(toy_panel):
    w = VariableWeights.unit(toy_panel)
    for eps in (-0.1, float("inf")):
        with pytest.raises(ValueError):
            build_primal(toy_panel, w, eps, 0)
    with pytest.raises(ValueError):
        VariableWeights(np.array([-1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        build_primal(toy_panel, VariableWeights(np.ones(2), np.ones(1)), 0.0, 0)
    with pytest.raises(KeyError):
        assess(toy_panel, w, 0.0, "Z")


def test_excessive_epsilon_is_reported():
    p = column_panel([3.0])
    with pytest.raises(SbmInfeasibleError, match="epsilon"):
        assess(p, VariableWeights.unit(p), 0.6, 0)
    assert assess(p, VariableWeights.unit(p), 0.5, 0).score > 0
