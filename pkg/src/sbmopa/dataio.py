"""Panel/roles/policy ingestion and JSON/CSV emission helpers."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .delta_sbm import DmuPanel, PanelValidationError
from .scenario import PolicyDefinition, ScenarioSpec, enumerate_scenarios, explicit_scenarios

SIG_DIGITS = 12


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# panel


def read_roles(path: str | Path) -> dict[str, dict[str, str]]:
    """Roles JSON -> {column: {"role": input|output, "unit": str}}.

    Accepted shapes::

        {"variables": [{"name": "L", "role": "input", "unit": "10^4 persons"}, ...]}
        {"L": "input", "Y": {"role": "output", "unit": "..."}}
    """
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_roles(raw, str(path))


def parse_roles(raw: Any, source: str = "roles") -> dict[str, dict[str, str]]:
    entries: list[tuple[str, Any]]
    if isinstance(raw, dict) and "variables" in raw:
        entries = []
        for v in raw["variables"]:
            if not isinstance(v, dict) or "name" not in v:
                raise ConfigError(f"{source}: every variable entry needs a name")
            entries.append((v["name"], v))
    elif isinstance(raw, dict):
        entries = list(raw.items())
    else:
        raise ConfigError(f"{source}: roles must be a JSON object")
    roles = {}
    for name, spec in entries:
        if isinstance(spec, str):
            spec = {"role": spec}
        if not isinstance(spec, dict):
            raise ConfigError(f"{source}: variable {name!r} needs a role string or object, got {spec!r}")
        role = spec.get("role")
        if role not in ("input", "output"):
            raise ConfigError(f"{source}: variable {name!r} needs role 'input' or 'output', got {role!r}")
        roles[str(name)] = {"role": role, "unit": str(spec.get("unit", ""))}
    return roles


def _data_lines(fh) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(fh, start=1):
        if line.lstrip().startswith("#") or not line.strip():
            continue
        yield lineno, line


def load_panel(path: str | Path, roles: Mapping[str, Mapping[str, str]] | str | Path) -> DmuPanel:
    """Read a panel CSV (first column ``dmu_id``; ``#`` lines are comments)."""
    roles = read_roles(roles) if isinstance(roles, (str, Path)) else parse_roles(roles)
    path = Path(path)
    with open(path, newline="") as fh:
        numbered = list(_data_lines(fh))
    if not numbered:
        raise PanelValidationError(f"{path}: no header row")
    reader = csv.reader(line for _, line in numbered)
    rows = list(reader)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "dmu_id":
        raise PanelValidationError(f"{path}: first column must be 'dmu_id'")
    columns = header[1:]
    unlabeled = [c for c in columns if c not in roles]
    if unlabeled:
        raise PanelValidationError(f"{path}: column(s) {unlabeled} have no role in the roles config")
    missing = [c for c in roles if c not in columns]
    if missing:
        raise PanelValidationError(f"{path}: roles config names column(s) {missing} absent from the CSV")
    inputs = [c for c in columns if roles[c]["role"] == "input"]
    outputs = [c for c in columns if roles[c]["role"] == "output"]
    ids, data = [], []
    for (lineno, _), row in zip(numbered[1:], rows[1:]):
        if len(row) != len(header):
            raise PanelValidationError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        ids.append(row[0].strip())
        vals = {}
        for c, cell in zip(columns, row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise PanelValidationError(f"{path}:{lineno}: column {c!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v) or v <= 0:
                raise PanelValidationError(f"{path}:{lineno}: column {c!r}: value {cell!r} must be finite and > 0")
            vals[c] = v
        data.append(vals)
    if not ids:
        raise PanelValidationError(f"{path}: no data rows")
    X = np.array([[d[c] for c in inputs] for d in data])
    Y = np.array([[d[c] for c in outputs] for d in data])
    units = {c: roles[c]["unit"] for c in columns}
    return DmuPanel(tuple(ids), tuple(inputs), tuple(outputs), X, Y, units)


def descriptive_statistics(panel: DmuPanel) -> list[dict[str, Any]]:
    """Min/max/mean/sample std per variable, in the panel's variable order."""
    out = []
    for name in panel.variables:
        col = panel.column(name).tolist()
        out.append(
            {
                "variable": name,
                "role": "input" if name in panel.inputs else "output",
                "unit": panel.units.get(name, ""),
                "observations": len(col),
                "min": min(col),
                "max": max(col),
                "mean": statistics.fmean(col),
                "std": statistics.stdev(col) if len(col) > 1 else None,
            }
        )
    return out


# ---------------------------------------------------------------------------
# policies and scenarios


@dataclass(frozen=True)
class PolicyConfig:
    policies: tuple[PolicyDefinition, ...]
    scenarios: tuple[ScenarioSpec, ...]
    absolute_correlation: bool = False


def parse_policies(raw: Mapping[str, Any], source: str = "policies") -> PolicyConfig:
    try:
        items = raw["policies"]
    except (KeyError, TypeError):
        raise ConfigError(f"{source}: missing 'policies' list") from None
    policies = []
    for p in items:
        if "name" not in p:
            raise ConfigError(f"{source}: every policy needs a name")
        fixed = {str(k): int(v) for k, v in (p.get("fixed_ranks") or {}).items()}
        policies.append(
            PolicyDefinition(str(p["name"]), p.get("anchor"), fixed, str(p.get("note", "")), str(p.get("label", "")))
        )
    names = [p.name for p in policies]
    mode = raw.get("scenarios", "all-permutations")
    try:
        if mode == "all-permutations":
            scenarios = enumerate_scenarios(names)
        elif isinstance(mode, list):
            scenarios = explicit_scenarios([(str(s["id"]), list(s["order"])) for s in mode], names)
        else:
            raise ConfigError(f"{source}: 'scenarios' must be 'all-permutations' or a list")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{source}: malformed scenario entry ({exc})") from exc
    return PolicyConfig(tuple(policies), tuple(scenarios), bool(raw.get("absolute_correlation", False)))


def read_policies(path: str | Path) -> PolicyConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_policies(raw, str(path))


def bundled(name: str) -> Path:
    """Path of a data file shipped in the package (``sbmopa/data``)."""
    ref = resources.files("sbmopa") / "data" / name
    return Path(str(ref))


# ---------------------------------------------------------------------------
# serialization


def round_sig(x: float, digits: int = SIG_DIGITS) -> float:
    return float(f"{x:.{digits}g}")


def sanitize(obj: Any, flags: list[dict[str, str]] | None = None, path: str = "$") -> Any:
    """JSON-ready copy: floats at 12 significant digits, non-finite -> None + flag."""
    if flags is None:
        flags = []
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            flags.append({"path": path, "value": "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")})
            return None
        return round_sig(x)
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist(), flags, path)
    if isinstance(obj, Mapping):
        return {str(k): sanitize(v, flags, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v, flags, f"{path}[{i}]") for i, v in enumerate(obj)]
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """CSV with proper quoting; None and non-finite floats become empty cells."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return repr(round_sig(x)) if math.isfinite(x) else ""
    return v
