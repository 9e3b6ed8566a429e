import csv
import io
import json
import math
import statistics

import numpy as np
import pytest

from sbmopa.dataio import (
    ConfigError,
    bundled,
    csv_text,
    descriptive_statistics,
    dumps,
    load_panel,
    parse_policies,
    parse_roles,
    read_roles,
    round_sig,
    sanitize,
)
from sbmopa.delta_sbm import PanelValidationError
from sbmopa.synthetic import panel_csv, roles_json, synthetic_panel

ROLES = {"x": "input", "y": {"role": "output", "unit": "t"}}


def write(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- panel loading ------------------------------------------------------------


def test_toy_panel(tmp_path):
    p = load_panel(write(tmp_path, "# comment\ndmu_id,x,y\nA,1,2\n\nB,2,1\n"), ROLES)
    assert p.n == 2
    assert p.dmu_ids == ("A", "B")
    assert p.X.tolist() == [[1.0], [2.0]]
    assert p.units == {"x": "", "y": "t"}


def test_roles_file_shapes(tmp_path):
    listed = write(tmp_path, json.dumps({"variables": [{"name": "x", "role": "input"}, {"name": "y", "role": "output"}]}), "r.json")
    assert read_roles(listed) == {"x": {"role": "input", "unit": ""}, "y": {"role": "output", "unit": ""}}
    assert parse_roles(ROLES)["y"] == {"role": "output", "unit": "t"}


@pytest.mark.parametrize(
    "raw",
    [[1, 2], {"x": "sideways"}, {"x": ["input"]}, {"variables": [{"role": "input"}]}, {"variables": ["x"]}],
)
def test_bad_roles(raw):
    with pytest.raises(ConfigError):
        parse_roles(raw)


def test_invalid_roles_json(tmp_path):
    with pytest.raises(ConfigError, match="invalid JSON"):
        read_roles(write(tmp_path, "{", "r.json"))


def test_column_without_role_is_named(tmp_path):
    with pytest.raises(PanelValidationError, match="'z'"):
        load_panel(write(tmp_path, "dmu_id,x,y,z\nA,1,2,3\n"), ROLES)


def test_role_without_column_is_named(tmp_path):
    with pytest.raises(PanelValidationError, match="'y'"):
        load_panel(write(tmp_path, "dmu_id,x\nA,1\n"), ROLES)


@pytest.mark.parametrize(
    "body, where",
    [
        ("A,1,2\nB,oops,1\n", r"p\.csv:3: column 'x'"),
        ("A,1,2\nB,2,0\n", r"p\.csv:3: column 'y'"),
        ("A,1,-2\n", r"p\.csv:2: column 'y'"),
        ("A,1,nan\n", r"p\.csv:2: column 'y'"),
        ("A,1\n", r"p\.csv:2: expected 3 cells"),
    ],
)
def test_error_coordinates(tmp_path, body, where):
    with pytest.raises(PanelValidationError, match=where):
        load_panel(write(tmp_path, "dmu_id,x,y\n" + body), ROLES)


@pytest.mark.parametrize("text", ["", "# only a comment\n", "id,x,y\nA,1,2\n", "dmu_id,x,y\n"])
def test_structural_errors(tmp_path, text):
    with pytest.raises(PanelValidationError):
        load_panel(write(tmp_path, text), ROLES)


def test_shipped_panel_is_the_seeded_synthetic_panel():
    text = bundled("synthetic_panel_30.csv").read_text()
    assert text.startswith("# SYNTHETIC DATA")
    assert text == panel_csv(synthetic_panel(30, seed=2021))
    roles = json.loads(bundled("roles.json").read_text())
    assert roles == roles_json(synthetic_panel(30))
    p = load_panel(bundled("synthetic_panel_30.csv"), bundled("roles.json"))
    assert p.n == 30 and p.inputs == ("L", "K", "T", "E") and p.outputs == ("Y", "C")


# --- descriptive statistics ----------------------------------------------------


def test_statistics_match_an_independent_computation(tmp_path):
    path = bundled("synthetic_panel_30.csv")
    p = load_panel(path, bundled("roles.json"))
    rows = list(csv.DictReader(line for line in path.read_text().splitlines() if not line.startswith("#")))
    for entry in descriptive_statistics(p):
        col = [float(r[entry["variable"]]) for r in rows]
        assert entry["observations"] == 30
        assert entry["min"] == min(col) and entry["max"] == max(col)
        assert entry["mean"] == pytest.approx(sum(col) / 30, rel=1e-12)
        ss = sum((v - sum(col) / 30) ** 2 for v in col)
        assert entry["std"] == pytest.approx(math.sqrt(ss / 29), rel=1e-12)


def test_single_row_has_no_std(tmp_path):
    p = load_panel(write(tmp_path, "dmu_id,x,y\nA,1,2\n"), ROLES)
    assert descriptive_statistics(p)[0]["std"] is None


# --- policies -------------------------------------------------------------------


@pytest.mark.parametrize(
    "raw",
    [
        {},
        {"policies": [{"anchor": "Y"}]},
        {"policies": [{"name": "P1"}], "scenarios": "some"},
        {"policies": [{"name": "P1"}], "scenarios": [{"order": ["P1"]}]},
    ],
)
def test_bad_policy_configs(raw):
    with pytest.raises(ConfigError):
        parse_policies(raw)


def test_policy_defaults():
    pc = parse_policies({"policies": [{"name": "P1", "anchor": "Y"}, {"name": "P2", "anchor": "C"}]})
    assert [s.id for s in pc.scenarios] == ["S1", "S2"]
    assert pc.absolute_correlation is False


# --- serialization --------------------------------------------------------------


def test_sanitize_flags_non_finite_values():
    flags = []
    out = sanitize({"a": [1.0, math.nan], "b": {"c": -math.inf}, "d": np.float64(0.1) + np.float64(0.2)}, flags)
    assert out == {"a": [1.0, None], "b": {"c": None}, "d": 0.3}
    assert flags == [{"path": "$.a[1]", "value": "nan"}, {"path": "$.b.c", "value": "-inf"}]


def test_sanitize_numpy_types():
    out = sanitize({"i": np.int64(3), "b": np.bool_(True), "v": np.array([1.5, 2.5])})
    assert out == {"i": 3, "b": True, "v": [1.5, 2.5]}
    assert type(out["i"]) is int and type(out["b"]) is bool


def test_round_sig():
    assert round_sig(0.1 + 0.2) == 0.3
    assert round_sig(123456789.123456789) == 123456789.123
    assert round_sig(1e-20 / 3) == float("3.33333333333e-21")


def test_dumps_round_trip():
    data = sanitize({"x": [0.1, 2, None], "s": "é"})
    text = dumps(data)
    assert text.endswith("\n")
    assert json.loads(text) == data
    with pytest.raises(ValueError):
        dumps({"x": math.nan})


def test_csv_escaping_and_empty_cells():
    text = csv_text(["id", "note", "v"], [["a,b", 'say "hi"', math.inf], ["c", None, 0.1 + 0.2]])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows == [["id", "note", "v"], ["a,b", 'say "hi"', ""], ["c", "", "0.3"]]


def test_fmean_agrees_with_numpy():
    col = synthetic_panel(30).column("K")
    assert statistics.fmean(col) == pytest.approx(float(np.mean(col)), rel=1e-14)
