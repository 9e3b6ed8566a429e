"""Run configuration, end-to-end pipeline and the report it produces.

A run goes panel -> policy ranks -> one hybrid assessment per
(scenario, DMU) -> sensitivity flags -> clustering of weight frontiers ->
report. Aggregation is always ordered by (scenario id, DMU id), so the
report does not depend on how the per-DMU solves were scheduled.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from . import analytics
from .delta_sbm import WEIGHT_RULES, DmuPanel, SbmInfeasibleError, assess, default_weights
from .dataio import (
    ConfigError,
    PolicyConfig,
    csv_text,
    descriptive_statistics,
    dumps,
    load_panel,
    read_policies,
    read_roles,
    round_sig,
    sanitize,
)
from .hybrid import HybridSolution, assess_scenario
from .scenario import pearson_table, rank_by_pearson, to_ranking_set

SCHEMA = "sbmopa.report/1"
CLUSTER_MODES = ("per-scenario", "best-scenario", "both")


@dataclass(frozen=True)
class RunConfig:
    panel: Path
    roles: Path
    policies: Path
    epsilon: float = 0.01
    u_s: float = 0.5
    u_p: float = 0.5
    weight_rule: str = "max"
    k: int | None = None
    k_range: tuple[int, int] = (1, 6)
    seed: int = 0
    cluster_mode: str = "per-scenario"
    reciprocal_outputs: tuple[str, ...] = ()
    jobs: int = 1
    out: Path | None = None

    def __post_init__(self):
        for label in ("panel", "roles", "policies"):
            p = Path(getattr(self, label))
            object.__setattr__(self, label, p)
            if not p.is_file():
                raise ConfigError(f"{label} file not found: {p}")
        if self.out is not None:
            object.__setattr__(self, "out", Path(self.out))
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if not (0 <= self.u_s <= 1 and 0 <= self.u_p <= 1) or abs(self.u_s + self.u_p - 1) > 1e-9:
            raise ConfigError(f"U_S and U_P must lie in [0, 1] and sum to 1, got {self.u_s}, {self.u_p}")
        if self.weight_rule not in WEIGHT_RULES:
            raise ConfigError(f"weight rule must be one of {WEIGHT_RULES}, got {self.weight_rule!r}")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        lo, hi = self.k_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"k range must satisfy 1 <= lo <= hi, got {self.k_range}")
        object.__setattr__(self, "k_range", (int(lo), int(hi)))
        if self.cluster_mode not in CLUSTER_MODES:
            raise ConfigError(f"cluster mode must be one of {CLUSTER_MODES}, got {self.cluster_mode!r}")
        object.__setattr__(self, "reciprocal_outputs", tuple(self.reciprocal_outputs))
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base: Path | None = None) -> "RunConfig":
        """Build from a JSON-style mapping; relative paths resolve against ``base``."""
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        kw = dict(raw)
        for key in ("panel", "roles", "policies", "out"):
            if kw.get(key) is not None and base is not None:
                kw[key] = base / kw[key]
        for key in ("panel", "roles", "policies"):
            if key not in kw:
                raise ConfigError(f"config is missing {key!r}")
        if "k_range" in kw:
            kw["k_range"] = parse_k_range(kw["k_range"])
        if "reciprocal_outputs" in kw:
            kw["reciprocal_outputs"] = tuple(kw["reciprocal_outputs"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path, **overrides: Any) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw, path.parent)

    def describe(self) -> dict[str, Any]:
        """Settings and input fingerprints, as recorded in the report."""
        return {
            "inputs": {
                label: {"file": getattr(self, label).name, "sha256": _sha256(getattr(self, label))}
                for label in ("panel", "roles", "policies")
            },
            "epsilon": self.epsilon,
            "u_s": self.u_s,
            "u_p": self.u_p,
            "weight_rule": self.weight_rule,
            "k": self.k,
            "k_range": list(self.k_range),
            "seed": self.seed,
            "cluster_mode": self.cluster_mode,
            "reciprocal_outputs": list(self.reciprocal_outputs),
        }


def parse_k_range(value: Any) -> tuple[int, int]:
    """``"1-6"``, ``"3"``, ``[1, 6]`` -> (lo, hi)."""
    try:
        if isinstance(value, str):
            parts = value.split("-")
            lo, hi = (int(parts[0]), int(parts[-1])) if len(parts) <= 2 else (None, None)
        elif len(value) == 2:
            lo, hi = int(value[0]), int(value[1])
        else:
            lo = hi = None
    except (ValueError, TypeError, IndexError):
        raise ConfigError(f"invalid k range {value!r}") from None
    if lo is None:
        raise ConfigError(f"invalid k range {value!r}")
    return lo, hi


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# report


@dataclass
class Report:
    """Sanitized, JSON-shaped run results (floats at 12 significant digits)."""

    data: dict[str, Any]

    @classmethod
    def build(cls, raw: Mapping[str, Any]) -> "Report":
        flags: list[dict[str, str]] = []
        data = sanitize(raw, flags)
        data["non_finite"] = flags
        return cls(data)

    def to_json(self) -> str:
        return dumps(self.data)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls(json.loads(text))

    @property
    def scenarios(self) -> list[dict[str, Any]]:
        return self.data["scenarios"]

    def records(self) -> Iterator[dict[str, Any]]:
        for sc in self.scenarios:
            yield from sc["records"]

    def tables(self) -> dict[str, str]:
        """Tidy CSV tables keyed by file name."""
        variables = self.data["panel"]["variables"]
        cluster_of: dict[tuple[str, str], Any] = {}
        for sc in self.scenarios:
            cl = sc.get("clusters")
            if cl:
                for dmu, c in cl["assignments"].items():
                    cluster_of[(sc["id"], dmu)] = c

        def flags(rec):
            return ";".join(rec["warnings"])

        eff_rows = [
            [r["scenario"], r["dmu"], cluster_of.get((r["scenario"], r["dmu"]))]
            + [r["weights"][v] for v in variables]
            + [r["gamma"], r["eta"], flags(r)]
            for r in self.records()
        ]
        tape_rows = [
            [r["scenario"], r["dmu"], r["gamma"], r["gamma_inner"], r["gamma_outer"], r["eta"]]
            + [r["tape_outer"][v] for v in variables]
            + [r["tape_inner"][v] for v in variables]
            for r in self.records()
        ]
        sids = [sc["id"] for sc in self.scenarios]
        cmp_rows = [
            [row["dmu"]] + [row["gamma"].get(s) for s in sids] + [row["optimal_scenario"], row["optimal_gamma"]]
            for row in self.data["scenario_comparison"]
        ]
        tables = {
            "efficiency.csv": csv_text(
                ["scenario", "dmu_id", "cluster"] + [f"W_{v}" for v in variables] + ["gamma", "eta", "warnings"],
                eff_rows,
            ),
            "tape.csv": csv_text(
                ["scenario", "dmu_id", "gamma", "gamma_inner", "gamma_outer", "eta"]
                + [f"outer_{v}" for v in variables]
                + [f"inner_{v}" for v in variables],
                tape_rows,
            ),
            "scenario_comparison.csv": csv_text(
                ["dmu_id"] + [f"gamma_{s}" for s in sids] + ["optimal_scenario", "optimal_gamma"], cmp_rows
            ),
            "descriptive_statistics.csv": csv_text(
                ["variable", "role", "unit", "observations", "min", "max", "mean", "std"],
                [list(r.values()) for r in self.data["panel"]["descriptive_statistics"]],
            ),
        }
        best = self.data.get("best_scenario_clusters")
        if best:
            tables["best_scenario_clusters.csv"] = csv_text(
                ["dmu_id", "scenario", "cluster"],
                [[d, self._optimal(d), c] for d, c in best["assignments"].items()],
            )
        return tables

    def _optimal(self, dmu: str) -> str | None:
        for row in self.data["scenario_comparison"]:
            if row["dmu"] == dmu:
                return row["optimal_scenario"]
        return None

    def write(self, out_dir: str | Path, fmt: str = "json") -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        if fmt in ("json", "both"):
            p = out_dir / "report.json"
            p.write_text(self.to_json())
            written.append(p)
        if fmt in ("csv", "both"):
            for name, text in self.tables().items():
                p = out_dir / name
                p.write_text(text)
                written.append(p)
        return written


# ---------------------------------------------------------------------------
# record builders


def _by_var(names, values) -> dict[str, float]:
    return dict(zip(names, np.asarray(values, dtype=float).tolist()))


def _efficiency(weights, x, y) -> float:
    den = float(weights.inputs @ x)
    return float(weights.outputs @ y) / den if den > 0 else math.inf


def solution_record(panel: DmuPanel, sol: HybridSolution) -> dict[str, Any]:
    a = sol.assessment
    l = panel.index(sol.dmu)
    w = sol.sbm_weights
    base = _efficiency(w, panel.X[l], panel.Y[l])
    ins, outs = panel.inputs, panel.outputs
    return {
        "scenario": sol.scenario,
        "dmu": sol.dmu,
        "gamma": a.score,
        "eta": a.sensitivity,
        "gamma_inner": base / _efficiency(w, a.inner_inputs, a.inner_outputs),
        "gamma_outer": base / _efficiency(w, a.outer_inputs, a.outer_outputs),
        "Z": sol.Z,
        "xi": sol.xi,
        "f": sol.f,
        "f_trans": sol.f_trans,
        "weights": sol.weight_map(),
        "policy_weights": {p: _by_var(sol.variables, sol.policy_weights[k]) for k, p in enumerate(sol.policies)},
        "sbm_weights": {"inputs": _by_var(ins, w.inputs), "outputs": _by_var(outs, w.outputs)},
        "slacks": {"inputs": _by_var(ins, a.input_slacks), "outputs": _by_var(outs, a.output_slacks)},
        "target": {**_by_var(ins, a.target_inputs), **_by_var(outs, a.target_outputs)},
        "tape_outer": {**_by_var(ins, a.outer_inputs), **_by_var(outs, a.outer_outputs)},
        "tape_inner": {**_by_var(ins, a.inner_inputs), **_by_var(outs, a.inner_outputs)},
        "peers": {panel.dmu_ids[i]: float(lam) for i, lam in enumerate(a.lambdas) if lam > 1e-12},
        "warnings": list(sol.warnings),
    }


def cluster_record(
    report: analytics.ClusterReport, elbow: analytics.ElbowResult | None, scenario: str | None
) -> dict[str, Any]:
    return {
        "scenario": scenario,
        "k": report.k,
        "elbow": None
        if elbow is None
        else {
            "ks": elbow.ks,
            "inertias": elbow.inertias,
            "suggested": elbow.suggested,
            "low_confidence": elbow.low_confidence,
        },
        "assignments": report.assignments,
        "sizes": report.sizes,
        "centroids": [dict(zip([f.feature for f in report.features], row)) for row in report.centroids.tolist()],
        "inertia": report.inertia,
        "silhouette": report.silhouette,
        "davies_bouldin": report.davies_bouldin,
        "calinski_harabasz": report.calinski_harabasz,
        "features": [
            {
                "feature": f.feature,
                "means": f.means,
                "stds": f.stds,
                "F": None if f.anova is None else f.anova.F,
                "p": None if f.anova is None else f.anova.p,
                "F_capped": None if f.anova is None else f.anova.capped,
            }
            for f in report.features
        ],
        "benchmarks": {str(c): d for c, d in sorted(report.benchmarks.items())},
        "mean_efficiency": {str(c): v for c, v in sorted(report.mean_efficiency.items())},
        "warnings": report.warnings,
    }


def cluster_weights(
    ids: list[str],
    matrix: np.ndarray,
    features: tuple[str, ...],
    scores: Mapping[str, float],
    config_k: int | None,
    k_range: tuple[int, int],
    seed: int,
    scenario: str | None = None,
) -> dict[str, Any] | None:
    """Elbow (unless k is fixed) then K-means; None when there is nothing to cluster."""
    n = len(ids)
    if n == 0:
        return None
    el = None
    if config_k is None:
        lo, hi = min(k_range[0], n), min(k_range[1], n)
        el = analytics.elbow(matrix, range(lo, hi + 1), seed)
        k = el.suggested
    else:
        k = min(config_k, n)
    rep = analytics.kmeans(matrix, k, seed, ids=ids, features=features, scores=scores)
    rec = cluster_record(rep, el, scenario)
    if config_k is not None and config_k > n:
        rec["warnings"].append(f"k = {config_k} exceeds the {n} DMUs available; clamped to {n}")
    return rec


def optimal_scenarios(gammas: Mapping[str, Mapping[str, float]]) -> dict[str, tuple[str, float]]:
    """Per DMU: (scenario with the highest gamma, gamma).

    gammas is {scenario: {dmu: gamma}}. Scores are compared at the
    reported precision; ties go to the lexicographically smallest id.
    """
    best: dict[str, tuple[str, float]] = {}
    for sid in sorted(gammas):
        for dmu, g in gammas[sid].items():
            if not math.isfinite(g):
                continue
            cur = best.get(dmu)
            if cur is None or round_sig(g) > round_sig(cur[1]):
                best[dmu] = (sid, g)
    return best


# ---------------------------------------------------------------------------
# pipeline


def policy_ranks(panel: DmuPanel, pc: PolicyConfig) -> tuple[dict[str, dict[str, int]], list[dict[str, Any]]]:
    ranks, described = {}, []
    for p in pc.policies:
        ranks[p.name] = rank_by_pearson(panel, p, pc.absolute_correlation)
        entry: dict[str, Any] = {"name": p.name, "label": p.label, "anchor": p.anchor, "ranks": ranks[p.name], "note": p.note}
        free = [v for v in panel.variables if v not in p.fixed_ranks and v != p.anchor]
        if free and p.anchor is not None:
            entry["correlations"] = [
                {"variable": c.variable, "coefficient": c.coefficient, "p_value": c.p_value}
                for c in pearson_table(panel, p.anchor, free)
            ]
        described.append(entry)
    return ranks, described


def run_pipeline(config: RunConfig) -> Report:
    roles = read_roles(config.roles)
    panel = load_panel(config.panel, roles)
    if config.reciprocal_outputs:
        panel = panel.with_reciprocal_outputs(config.reciprocal_outputs)
    pc = read_policies(config.policies)
    ranks, policies_desc = policy_ranks(panel, pc)
    features = panel.variables

    scenarios_out = []
    gammas: dict[str, dict[str, float]] = {}
    frontier: dict[tuple[str, str], list[float]] = {}
    for spec in sorted(pc.scenarios, key=lambda s: s.id):
        rankings = to_ranking_set(spec, ranks, panel.variables)
        sa = assess_scenario(panel, rankings, config.epsilon, config.u_s, config.u_p, jobs=config.jobs)
        records = [solution_record(panel, s) for s in sa.solutions]
        gammas[spec.id] = {s.dmu: s.assessment.score for s in sa.solutions}
        for s in sa.solutions:
            frontier[(spec.id, s.dmu)] = s.aggregated_weights.tolist()
        etas = {s.dmu: s.assessment.sensitivity for s in sa.solutions}
        sens = analytics.sensitivity_stats(etas) if etas else None
        finite = [g for g in gammas[spec.id].values() if math.isfinite(g)]
        section: dict[str, Any] = {
            "id": spec.id,
            "order": list(spec.order),
            "label": spec.label(),
            "records": records,
            "failures": dict(sorted(sa.failures.items())),
            "mean_gamma": float(np.mean(finite)) if finite else None,
            "sensitivity": None
            if sens is None
            else {"mean": sens.mean, "std": sens.std, "threshold": sens.threshold, "flagged": sens.flagged},
            "clusters": None,
        }
        if config.cluster_mode in ("per-scenario", "both"):
            ids = [s.dmu for s in sa.solutions]
            matrix = np.array([frontier[(spec.id, d)] for d in ids]).reshape(len(ids), len(features))
            section["clusters"] = cluster_weights(
                ids, matrix, features, gammas[spec.id], config.k, config.k_range, config.seed, spec.id
            )
        scenarios_out.append(section)

    best = optimal_scenarios(gammas)
    comparison = [
        {
            "dmu": dmu,
            "gamma": {sid: gammas[sid].get(dmu) for sid in sorted(gammas)},
            "optimal_scenario": best[dmu][0] if dmu in best else None,
            "optimal_gamma": best[dmu][1] if dmu in best else None,
        }
        for dmu in sorted(panel.dmu_ids)
    ]
    coverage: dict[str, int] = {sid: 0 for sid in sorted(gammas)}
    for sid, _ in best.values():
        coverage[sid] += 1

    best_clusters = None
    if config.cluster_mode in ("best-scenario", "both"):
        ids = sorted(best)
        matrix = np.array([frontier[(best[d][0], d)] for d in ids]).reshape(len(ids), len(features))
        best_clusters = cluster_weights(
            ids, matrix, features, {d: best[d][1] for d in ids}, config.k, config.k_range, config.seed
        )

    raw = {
        "schema": SCHEMA,
        "config": config.describe(),
        "panel": {
            "n": panel.n,
            "dmu_ids": list(panel.dmu_ids),
            "inputs": list(panel.inputs),
            "outputs": list(panel.outputs),
            "variables": list(panel.variables),
            "descriptive_statistics": descriptive_statistics(panel),
        },
        "policies": policies_desc,
        "scenarios": scenarios_out,
        "scenario_comparison": comparison,
        "optimal_scenario_coverage": coverage,
        "best_scenario_clusters": best_clusters,
        "baseline": baseline(panel, config.weight_rule, config.epsilon),
    }
    return Report.build(raw)


def baseline(panel: DmuPanel, rule: str, epsilon: float) -> dict[str, Any]:
    """Plain delta-SBM scores under a rule-based weight vector, for reference."""
    weights = default_weights(panel, rule)
    records, failures = [], {}
    for dmu in sorted(panel.dmu_ids):
        try:
            a = assess(panel, weights, epsilon, dmu)
        except SbmInfeasibleError as exc:
            failures[dmu] = str(exc)
            continue
        records.append({"dmu": dmu, "gamma": a.score, "eta": a.sensitivity})
    return {"weight_rule": rule, "records": records, "failures": failures}

