"""Command-line interface.

Exit codes: 0 success, 2 validation error (bad input, config or data),
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import emissions
from .dataio import ConfigError, csv_text, dumps, load_panel, read_policies, read_roles, sanitize
from .delta_sbm import WEIGHT_RULES, assess, default_weights, solve_dual
from .hybrid import assess_scenario
from .opa import RankingInstance, aggregate_weights, solve_opa
from .pipeline import CLUSTER_MODES, RunConfig, cluster_weights, parse_k_range, policy_ranks, run_pipeline, solution_record
from .scenario import to_ranking_set

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj: Any) -> str:
    flags: list = []
    data = sanitize(obj, flags)
    if flags and isinstance(data, dict):
        data["non_finite"] = flags
    return dumps(data)


def _objective_weights(args) -> tuple[float | None, float | None]:
    """--us/--up; giving one implies the other as its complement."""
    us, up = args.us, args.up
    if us is not None and up is None:
        up = 1.0 - us
    elif up is not None and us is None:
        us = 1.0 - up
    return us, up


def _load(args) -> Any:
    panel = load_panel(args.panel, read_roles(args.roles))
    if getattr(args, "reciprocal", None):
        panel = panel.with_reciprocal_outputs(args.reciprocal)
    return panel


# ---------------------------------------------------------------------------
# commands


def cmd_opa_solve(args) -> int:
    inst = RankingInstance.from_json(args.rankings)
    sol = solve_opa(inst)
    if args.format == "csv":
        rows = [[e, i, sol.weights[k, j]] for k, e in enumerate(sol.expert_names) for j, i in enumerate(sol.items)]
        _emit(csv_text(["expert", "item", "weight"], rows), args.out)
    else:
        _emit(
            _json(
                {
                    "objective": sol.objective,
                    "weights": {e: sol.expert_weights(k) for k, e in enumerate(sol.expert_names)},
                    "aggregated": aggregate_weights(sol),
                }
            ),
            args.out,
        )
    return EXIT_OK


def cmd_sbm_assess(args) -> int:
    panel = _load(args)
    weights = default_weights(panel, args.weight_rule)
    dmus = args.dmu or sorted(panel.dmu_ids)
    records = []
    for d in dmus:
        a = assess(panel, weights, args.epsilon, d)
        rec = {
            "dmu": a.dmu,
            "gamma": a.score,
            "eta": a.sensitivity,
            "objective": a.objective,
            "input_slacks": dict(zip(panel.inputs, a.input_slacks.tolist())),
            "output_slacks": dict(zip(panel.outputs, a.output_slacks.tolist())),
        }
        if args.dual:
            ds = solve_dual(panel, weights, args.epsilon, d)
            rec["dual_objective"] = ds.objective
        records.append(rec)
    if args.format == "csv":
        header = ["dmu_id", "gamma", "eta", "objective"] + [f"s_in_{v}" for v in panel.inputs]
        header += [f"s_out_{v}" for v in panel.outputs]
        rows = [
            [r["dmu"], r["gamma"], r["eta"], r["objective"]]
            + list(r["input_slacks"].values())
            + list(r["output_slacks"].values())
            for r in records
        ]
        _emit(csv_text(header, rows), args.out)
    else:
        _emit(_json({"epsilon": args.epsilon, "weight_rule": args.weight_rule, "records": records}), args.out)
    return EXIT_OK


def _scenario_runs(args, only: str | None) -> tuple[Any, list[dict[str, Any]]]:
    panel = _load(args)
    pc = read_policies(args.policies)
    ranks, _ = policy_ranks(panel, pc)
    specs = sorted(pc.scenarios, key=lambda s: s.id)
    if only is not None:
        specs = [s for s in specs if s.id == only]
        if not specs:
            raise ConfigError(f"no scenario with id {only!r}")
    sections = []
    for spec in specs:
        rk = to_ranking_set(spec, ranks, panel.variables)
        us, up = _objective_weights(args)
        sa = assess_scenario(
            panel, rk, args.epsilon, 0.5 if us is None else us, 0.5 if up is None else up, args.jobs, args.dmu or None
        )
        sections.append(
            {
                "id": spec.id,
                "label": spec.label(),
                "records": [solution_record(panel, s) for s in sa.solutions],
                "failures": dict(sorted(sa.failures.items())),
            }
        )
    return panel, sections


def _emit_sections(args, panel, sections) -> int:
    if args.format == "csv":
        header = ["scenario", "dmu_id"] + [f"W_{v}" for v in panel.variables] + ["gamma", "eta", "Z", "xi"]
        rows = [
            [r["scenario"], r["dmu"]] + [r["weights"][v] for v in panel.variables] + [r["gamma"], r["eta"], r["Z"], r["xi"]]
            for sec in sections
            for r in sec["records"]
        ]
        _emit(csv_text(header, rows), args.out)
    else:
        _emit(_json({"scenarios": sections}), args.out)
    failed = any(sec["failures"] for sec in sections)
    solved = any(sec["records"] for sec in sections)
    return EXIT_SOLVER if failed and not solved else EXIT_OK


def cmd_hybrid_run(args) -> int:
    panel, sections = _scenario_runs(args, args.scenario or "S1")
    return _emit_sections(args, panel, sections)


def cmd_scenarios_run(args) -> int:
    panel, sections = _scenario_runs(args, None)
    return _emit_sections(args, panel, sections)


def cmd_scenarios_list(args) -> int:
    pc = read_policies(args.policies)
    ranks = None
    if args.panel and args.roles:
        ranks, _ = policy_ranks(_load(args), pc)
    rows = [{"id": s.id, "order": list(s.order), "label": s.label()} for s in pc.scenarios]
    if args.format == "csv":
        _emit(csv_text(["id", "label"], [[r["id"], r["label"]] for r in rows]), args.out)
    else:
        _emit(_json({"scenarios": rows, "policy_ranks": ranks}), args.out)
    return EXIT_OK


def cmd_emissions(args) -> int:
    factors = emissions.read_factors(args.factors) if args.factors else emissions.default_factors()
    table = emissions.emissions_table(emissions.read_consumption(args.consumption), factors)
    if args.format == "csv":
        fuels = sorted({f for r in table.values() for f in r.per_fuel})
        rows = [[d] + [r.per_fuel.get(f) for f in fuels] + [r.total] for d, r in table.items()]
        _emit(csv_text(["dmu_id"] + fuels + ["total"], rows), args.out)
    else:
        _emit(_json({d: {"per_fuel": r.per_fuel, "total": r.total} for d, r in table.items()}), args.out)
    return EXIT_OK


def _read_weight_matrix(path: str) -> tuple[list[str], list[str], np.ndarray, dict[str, float] | None]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "dmu_id":
        raise ConfigError(f"{path}: first column must be dmu_id")
    header = rows[0]
    has_gamma = header[-1] == "gamma"
    features = header[1:-1] if has_gamma else header[1:]
    ids, mat, scores = [], [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-numeric value") from None
        if len(vals) != len(header) - 1:
            raise ConfigError(f"{path}:{lineno}: expected {len(header)} cells")
        ids.append(row[0])
        mat.append(vals[: len(features)])
        if has_gamma:
            scores[row[0]] = vals[-1]
    return ids, features, np.array(mat), scores if has_gamma else None


def cmd_cluster(args) -> int:
    if args.weights:
        ids, features, mat, scores = _read_weight_matrix(args.weights)
        k_range = parse_k_range(args.k_range or "1-6")
        rec = cluster_weights(ids, mat, tuple(features), scores or {d: 0.0 for d in ids}, args.k, k_range, args.seed or 0)
        if scores is None and rec is not None:
            rec["benchmarks"], rec["mean_efficiency"] = {}, {}
        out = {"clusters": [rec]}
    else:
        cfg = _config_from_args(args, cluster_mode=args.mode)
        rep = run_pipeline(cfg)
        out = {"clusters": [sc["clusters"] for sc in rep.scenarios if sc["clusters"]]}
        if rep.data.get("best_scenario_clusters"):
            out["best_scenario_clusters"] = rep.data["best_scenario_clusters"]
    if args.format == "csv":
        recs = out["clusters"] + ([out["best_scenario_clusters"]] if "best_scenario_clusters" in out else [])
        rows = [[rec["scenario"] or "best", d, c] for rec in recs for d, c in rec["assignments"].items()]
        _emit(csv_text(["scenario", "dmu_id", "cluster"], rows), args.out)
    else:
        _emit(_json(out), args.out)
    return EXIT_OK


def _config_from_args(args, **extra) -> RunConfig:
    us, up = _objective_weights(args)
    overrides = {
        "panel": args.panel,
        "roles": args.roles,
        "policies": args.policies,
        "epsilon": args.epsilon,
        "u_s": us,
        "u_p": up,
        "weight_rule": args.weight_rule,
        "k": args.k,
        "k_range": args.k_range,
        "seed": args.seed,
        "jobs": args.jobs,
        "reciprocal_outputs": args.reciprocal,
        **extra,
    }
    if getattr(args, "config", None):
        return RunConfig.from_file(args.config, **overrides)
    kw = {k: v for k, v in overrides.items() if v is not None}
    return RunConfig.from_dict(kw)


def cmd_report(args) -> int:
    cfg = _config_from_args(args, cluster_mode=args.mode)
    rep = run_pipeline(cfg)
    out = args.out or (str(cfg.out) if cfg.out else None)
    if out is None:
        sys.stdout.write(rep.to_json())
    else:
        for p in rep.write(out, args.format):
            logging.getLogger(__name__).info("wrote %s", p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common_panel(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--panel", required=required, help="panel CSV (first column dmu_id)")
    p.add_argument("--roles", required=required, help="roles JSON labelling each column input/output")
    p.add_argument("--reciprocal", nargs="+", metavar="OUTPUT", help="treat these outputs as undesirable (1/y)")


def _common_run(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    p.add_argument("--epsilon", type=float, default=0.01 if defaults else None, help="relative allowed error")
    p.add_argument("--us", type=float, help="weight of the efficiency objective (default 0.5)")
    p.add_argument("--up", type=float, help="weight of the priority objective (default 1 - us)")
    p.add_argument("--jobs", type=int, default=1 if defaults else None, help="parallel DMU solves")


def _output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output file (default: stdout)")


def _clustering(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="fixed number of clusters (default: elbow suggestion)")
    p.add_argument("--k-range", default=None, help="elbow search range, e.g. 1-6")
    p.add_argument("--seed", type=int, default=None, help="clustering seed")
    p.add_argument("--mode", choices=CLUSTER_MODES, default=None, help="which weight frontiers to cluster")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbmopa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    opa = sub.add_parser("opa", help="ordinal priority weights").add_subparsers(dest="action", required=True)
    p = opa.add_parser("solve", help="solve a ranking instance")
    p.add_argument("--rankings", required=True, help='JSON {"experts": [{"rank": 1, "item_ranks": {...}}]}')
    _output(p)
    p.set_defaults(func=cmd_opa_solve)

    sbm = sub.add_parser("sbm", help="delta-SBM with rule-based weights").add_subparsers(dest="action", required=True)
    p = sbm.add_parser("assess", help="score DMUs")
    _common_panel(p)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--weight-rule", choices=WEIGHT_RULES, default="max")
    p.add_argument("--dmu", nargs="+", help="DMU ids (default: all)")
    p.add_argument("--dual", action="store_true", help="also solve the dual and report its optimum")
    _output(p)
    p.set_defaults(func=cmd_sbm_assess)

    hyb = sub.add_parser("hybrid", help="policy-constrained model").add_subparsers(dest="action", required=True)
    p = hyb.add_parser("run", help="solve one scenario")
    _common_panel(p)
    p.add_argument("--policies", required=True, help="policy/scenario JSON")
    p.add_argument("--scenario", help="scenario id (default S1)")
    p.add_argument("--dmu", nargs="+", help="DMU ids (default: all)")
    _common_run(p)
    _output(p)
    p.set_defaults(func=cmd_hybrid_run)

    sc = sub.add_parser("scenarios", help="policy-order scenarios").add_subparsers(dest="action", required=True)
    p = sc.add_parser("list", help="list scenarios (and policy ranks when a panel is given)")
    p.add_argument("--policies", required=True)
    _common_panel(p, required=False)
    _output(p)
    p.set_defaults(func=cmd_scenarios_list)
    p = sc.add_parser("run", help="solve every scenario")
    _common_panel(p)
    p.add_argument("--policies", required=True)
    p.add_argument("--dmu", nargs="+", help="DMU ids (default: all)")
    _common_run(p)
    _output(p)
    p.set_defaults(func=cmd_scenarios_run)

    em = sub.add_parser("emissions", help="CO2 accounting").add_subparsers(dest="action", required=True)
    p = em.add_parser("compute", help="CO2 per DMU from fuel consumption")
    p.add_argument("--consumption", required=True, help="CSV dmu_id,<fuel>...")
    p.add_argument("--factors", help="CSV fuel,ncv,cef,cof (default: bundled placeholders)")
    _output(p)
    p.set_defaults(func=cmd_emissions)

    p = sub.add_parser("cluster", help="K-means on weight frontiers")
    p.add_argument("--weights", help="CSV dmu_id,<features>[,gamma]; otherwise run the pipeline")
    p.add_argument("--config", help="run config JSON")
    _common_panel(p, required=False)
    p.add_argument("--policies")
    _common_run(p, defaults=False)
    p.add_argument("--weight-rule", choices=WEIGHT_RULES, default=None)
    _clustering(p)
    _output(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("report", help="full pipeline: scenarios, sensitivity, clustering")
    p.add_argument("--config", help="run config JSON; flags override its values")
    _common_panel(p, required=False)
    p.add_argument("--policies")
    _common_run(p, defaults=False)
    p.add_argument("--weight-rule", choices=WEIGHT_RULES, default=None)
    _clustering(p)
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.add_argument("--out", help="output directory (default: JSON to stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
