"""Batch command line: reproducible bound, inference and simulation runs.

Every command reads a JSON run configuration, emits machine-readable JSON
(or CSV for sweeps) with an embedded run manifest, and uses exit codes
0 (success), 1 (input error), 2 (specification rejected by the data) and
3 (numerical failure).  Setting ``SOURCE_DATE_EPOCH`` pins the manifest
timestamp, making outputs byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, baseline, data_io, inference, parametric, simulate as sim
from .model import ProgramConfig, WelfareTarget
from .parametric import ParametricSpec
from .partition import Point, build_partition
from .solvers import NumericalFailure, write_mps

SPEC_CHOICES = ("baseline", "o", "as", "ns")


def _parametric_spec(args) -> ParametricSpec | None:
    if args.spec == "baseline":
        return None
    return ParametricSpec(args.spec.upper(), degree=args.degree, grid_points=args.grid)


def _shape_policy(args) -> baseline.ShapePolicy:
    return baseline.ShapePolicy(getattr(args, "shape", "default"))


def _json_default(value):
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)!r}")


def _manifest(args) -> dict:
    config_hash = None
    if getattr(args, "config", None):
        config_hash = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch else datetime.now(timezone.utc)
    return {
        "command": " ".join(args._argv),
        "config_sha256": config_hash,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "created_at": stamp.isoformat(),
    }


def _emit(payload, args, default_suffix: str = ".json") -> None:
    out = getattr(args, "out", "-") or "-"
    if isinstance(payload, str):
        text = payload
    else:
        text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    with tempfile.NamedTemporaryFile(
        "w", dir=path.parent or Path("."), delete=False, encoding="utf-8"
    ) as handle:
        handle.write(text)
        temp_name = handle.name
    os.replace(temp_name, path)


def _load_program(args) -> tuple[dict, ProgramConfig]:
    if not args.config:
        raise data_io.DataError([(0, "--config is required")])
    config_map = data_io.read_config_file(args.config)
    return config_map, data_io.program_config_from_mapping(config_map["program"])


def _load_shares(config_map, config):
    if "shares" not in config_map:
        raise data_io.DataError([(0, "config file lacks a 'shares' section")])
    return data_io.shares_from_mapping(config_map["shares"], config)


def _load_microdata(args, config):
    if not (args.students and args.schools):
        raise data_io.DataError([(0, "--students and --schools are required")])
    students, schools, _ = data_io.load(args.students, args.schools)
    students = data_io.impute_missing(students, schools)
    return data_io.build_microdata(students, schools, config)


def _target(kind: str, args) -> WelfareTarget:
    tau = getattr(args, "tau", None)
    kappa = getattr(args, "kappa", None)
    if kind.endswith("k"):
        return WelfareTarget(kind, tau=tau, kappa=kappa if kappa is not None else 0)
    return WelfareTarget(kind, tau=tau)


def _one_bound(spec, target, shares, config, policy) -> dict:
    if spec is None:
        result = baseline.bounds(target, shares, config, policy)
    else:
        result = parametric.bounds(spec, target, shares, config)
    return {
        "param": target.kind,
        "tau": None if target.tau is None else float(target.resolve_tau(config)),
        "kappa": None if target.kappa is None else float(target.kappa),
        "spec": "baseline" if spec is None else spec.family.lower(),
        "degree": None if spec is None else spec.degree,
        "status": result.status,
        "lower": result.lower,
        "upper": result.upper,
    }


def cmd_bounds(args) -> int:
    config_map, config = _load_program(args)
    shares = _load_shares(config_map, config)
    spec = _parametric_spec(args)
    policy = _shape_policy(args)
    results = [_one_bound(spec, _target(kind, args), shares, config, policy)
               for kind in args.param.split(",")]
    if args.dump_lp:
        target = _target(args.param.split(",")[0], args)
        if spec is None:
            problem = baseline.build_problem(target, shares, config, policy)
        else:
            problem = parametric.build_problem(spec, target, shares, config)
        with open(args.dump_lp, "w", encoding="utf-8") as handle:
            write_mps(problem.system.lp(problem.objective, "min"), handle)
    _emit({"results": results, "manifest": _manifest(args)}, args)
    return 2 if any(r["status"] == "infeasible" for r in results) else 0


def _sweep_point(config, shares, spec, policy, kinds, tau, kappa) -> list[dict]:
    rows = []
    for kind in kinds:
        target = WelfareTarget(kind, tau=tau, kappa=kappa if kind.endswith("k") else None)
        rows.append(_one_bound(spec, target, shares, config, policy))
    return rows


def _run_sweep(args, kinds, points, kappa_sweep: bool) -> int:
    config_map, config = _load_program(args)
    shares = _load_shares(config_map, config)
    spec = _parametric_spec(args)
    policy = _shape_policy(args)
    jobs = max(1, args.jobs)
    tasks = [
        (config, shares, spec, policy, kinds,
         config.tau_sq if kappa_sweep else point, point if kappa_sweep else None)
        for point in points
    ]
    if jobs == 1:
        groups = [_sweep_point(*task) for task in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            groups = list(pool.map(_sweep_point, *zip(*tasks)))
    rows = [row for group in groups for row in group]
    if args.svg:
        _render_envelope_svg(rows, args.svg, "kappa" if kappa_sweep else "tau")
    out = getattr(args, "out", "-") or "-"
    if out.endswith(".csv"):
        _emit(_rows_to_csv(rows), args)
    else:
        _emit({"results": rows, "manifest": _manifest(args)}, args)
    return 2 if all(r["status"] == "infeasible" for r in rows) else 0


def _rows_to_csv(rows) -> str:
    header = ["param", "spec", "degree", "tau", "kappa", "status", "lower", "upper"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if row[k] is None else str(row[k]) for k in header))
    return "\n".join(lines) + "\n"


def cmd_sweep_tau(args) -> int:
    points = _grid(args.start, args.stop, args.step)
    kinds = ("AB", "AC", "AS", "dAB", "dAC", "dAS")
    return _run_sweep(args, kinds, points, kappa_sweep=False)


def cmd_sweep_kappa(args) -> int:
    points = _grid(args.start, args.stop, args.step)
    kinds = ("ABk", "ACk", "ASk")
    return _run_sweep(args, kinds, points, kappa_sweep=True)


def _grid(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise data_io.DataError([(0, "--step must be positive")])
    values = []
    value = start
    while value <= stop + 1e-9:
        values.append(round(value, 9))
        value += step
    return values


def cmd_ci(args) -> int:
    config_map, config = _load_program(args)
    data = _load_microdata(args, config)
    base_cfg = data_io.inference_config_from_mapping(config_map.get("inference", {}))
    cfg = replace(
        base_cfg,
        alpha=args.alpha if args.alpha is not None else base_cfg.alpha,
        n_subsamples=args.subsamples if args.subsamples is not None else base_cfg.n_subsamples,
        seed=args.seed if args.seed is not None else base_cfg.seed,
        grid_step=args.grid_step if args.grid_step is not None else base_cfg.grid_step,
    )
    target = _target(args.param, args)
    try:
        ci = inference.confidence_interval(
            data, target, config, cfg, spec=_parametric_spec(args), policy=_shape_policy(args)
        )
    except ValueError as exc:
        _emit({"error": str(exc), "manifest": _manifest(args)}, args)
        return 2
    payload = {
        "param": target.kind,
        "ci": None if ci.is_empty else [ci.lower, ci.upper],
        "empty": ci.is_empty,
        "alpha": cfg.alpha,
        "B": cfg.n_subsamples,
        "N_s": ci.subsample_n,
        "seed": cfg.seed,
        "bounds": None
        if ci.bound_result is None
        else [ci.bound_result.lower, ci.bound_result.upper],
        "manifest": _manifest(args),
    }
    _emit(payload, args)
    return 0


def cmd_spec_test(args) -> int:
    config_map, config = _load_program(args)
    data = _load_microdata(args, config)
    base_cfg = data_io.inference_config_from_mapping(config_map.get("inference", {}))
    cfg = replace(
        base_cfg,
        n_subsamples=args.subsamples if args.subsamples is not None else base_cfg.n_subsamples,
        seed=args.seed if args.seed is not None else base_cfg.seed,
    )
    result = inference.specification_pvalue(
        data, config, cfg, spec=_parametric_spec(args), policy=_shape_policy(args)
    )
    payload = {
        "spec": args.spec,
        "degree": None if args.spec == "baseline" else args.degree,
        "p_value": result.p_value,
        "statistic": result.statistic,
        "B": result.n_subsamples,
        "N_s": result.subsample_n,
        "seed": cfg.seed,
        "manifest": _manifest(args),
    }
    _emit(payload, args)
    return 0


_MODEL_DEFAULTS = {
    "family": "L1",
    "school_effects": None,   # default: zeros
    "nonparticipating_effect": 0.0,
    "price_coef_mean": 3e-4,
    "price_coef_loadings": (0.0,) * len(sim.COVARIATE_NAMES),
    "price_coef_sd": 0.0,
}


def _model_from_config(config_map, config, family_override=None) -> sim.UtilityModel:
    section = dict(_MODEL_DEFAULTS)
    section.update(config_map.get("model", {}))
    if family_override:
        section["family"] = family_override
    effects = section["school_effects"]
    if effects is None:
        effects = (0.0,) * config.n_schools
    elif isinstance(effects, dict):
        effects = tuple(float(effects[sid]) for sid in config.school_ids)
    return sim.UtilityModel(
        family=section["family"],
        school_effects=tuple(effects),
        nonparticipating_effect=float(section["nonparticipating_effect"]),
        price_coef_mean=float(section["price_coef_mean"]),
        price_coef_loadings=tuple(section["price_coef_loadings"]),
        price_coef_sd=float(section["price_coef_sd"]),
    )


def cmd_simulate(args) -> int:
    config_map, config = _load_program(args)
    family = {"l1": "L1", "ml1": "ML1", "l2": "L2", "ml2": "ML2",
              "quasilinear": "quasilinear"}[args.model]
    model = _model_from_config(config_map, config, family)
    data, _ = sim.simulate(model, args.n, config, seed=args.seed or 0)
    out = Path(args.out if args.out and args.out != "-" else "students.csv")
    data_io.write_students_csv(out, data, config)
    data_io.write_schools_csv(out.parent / "schools.csv", config)
    oracle = sim.DemandOracle(model, config, seed=args.seed or 0)
    truth = {
        kind: sim.true_parameter(model, WelfareTarget(kind), config, oracle=oracle)
        for kind in ("AB", "AC", "AS")
    }
    truth["manifest"] = _manifest(args)
    with open(out.parent / "truth.json", "w", encoding="utf-8") as handle:
        json.dump(truth, handle, indent=2, default=_json_default)
        handle.write("\n")
    sys.stdout.write(f"wrote {out}, {out.parent / 'schools.csv'}, {out.parent / 'truth.json'}\n")
    return 0


def cmd_partition_dump(args) -> int:
    config_map, config = _load_program(args)
    tau_c = args.tau if args.tau is not None else None
    partition = build_partition(config, tau_c=tau_c)
    elements = []
    for element in partition.elements:
        coords = []
        for proj in element.box.projections:
            if isinstance(proj, Point):
                coords.append({"point": float(proj.value)})
            else:
                coords.append({"interval": [float(proj.lo), float(proj.hi)]})
        elements.append(
            {
                "coordinates": coords,
                "paths": [
                    {"tau": float(tag.tau), "segment": tag.segment,
                     "a": [float(tag.a_lo), float(tag.a_hi)]}
                    for tag in element.path_tags
                ],
                "vertices": [float(t) for t in element.vertex_taus],
            }
        )
    _emit({"elements": elements, "manifest": _manifest(args)}, args)
    return 0


def _render_envelope_svg(rows, path, x_key) -> None:
    """Minimal static SVG: lower/upper envelopes per parameter."""
    finite = [r for r in rows if r["status"] == "feasible"
              and np.isfinite(r["lower"]) and np.isfinite(r["upper"])]
    if not finite:
        Path(path).write_text("<svg xmlns='http://www.w3.org/2000/svg'/>\n")
        return
    width, height, margin = 640, 400, 50
    xs = [r[x_key] for r in finite]
    ys = [v for r in finite for v in (r["lower"], r["upper"])]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]
    parts = [
        f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}'>",
        f"<rect width='{width}' height='{height}' fill='white'/>",
    ]
    params = sorted({r["param"] for r in finite})
    for i, param in enumerate(params):
        series = sorted((r for r in finite if r["param"] == param), key=lambda r: r[x_key])
        color = colors[i % len(colors)]
        for bound in ("lower", "upper"):
            points = " ".join(f"{sx(r[x_key]):.1f},{sy(r[bound]):.1f}" for r in series)
            parts.append(
                f"<polyline points='{points}' fill='none' stroke='{color}' stroke-width='1.5'/>"
            )
        parts.append(
            f"<text x='{margin}' y='{margin + 14 * i}' fill='{color}' font-size='12'>{param}</text>"
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voucherbounds",
        description="Bounds, confidence intervals and specification tests for "
        "the welfare effects of a price-subsidy program.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, shares_based: bool) -> None:
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--spec", choices=SPEC_CHOICES, default="baseline")
        p.add_argument("--degree", type=int, default=1, help="polynomial degree K")
        p.add_argument("--grid", type=int, default=4, help="restriction grid density L")
        p.add_argument("--shape", choices=("default", "full"), default="default")
        p.add_argument("--out", default="-")
        if not shares_based:
            p.add_argument("--students", help="students CSV")
            p.add_argument("--schools", help="schools CSV")

    p = sub.add_parser("bounds", help="bound one or more welfare parameters")
    common(p, shares_based=True)
    p.add_argument("--param", default="AB,AC,AS", help="comma list of target kinds")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--dump-lp", dest="dump_lp", help="write the min program as fixed MPS")
    p.set_defaults(handler=cmd_bounds)

    p = sub.add_parser("sweep-tau", help="bounds across counterfactual voucher amounts")
    common(p, shares_based=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--svg", help="render bound envelopes to an SVG file")
    p.set_defaults(handler=cmd_sweep_tau)

    p = sub.add_parser("sweep-kappa", help="bounds when low-tuition schools are removed")
    common(p, shares_based=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--svg", help="render bound envelopes to an SVG file")
    p.set_defaults(handler=cmd_sweep_kappa)

    p = sub.add_parser("ci", help="test-inversion confidence interval")
    common(p, shares_based=False)
    p.add_argument("--param", default="AB")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--subsamples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grid-step", dest="grid_step", type=float, default=None)
    p.set_defaults(handler=cmd_ci)

    p = sub.add_parser("spec-test", help="specification-test p-value")
    common(p, shares_based=False)
    p.add_argument("--subsamples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_spec_test)

    p = sub.add_parser("simulate", help="draw a synthetic population and its truth")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=("l1", "ml1", "l2", "ml2", "quasilinear"), default="l1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="students.csv")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("partition", help="partition utilities")
    partition_sub = p.add_subparsers(dest="partition_command", required=True)
    d = partition_sub.add_parser("dump", help="emit the price partition as JSON")
    d.add_argument("--config", required=True)
    d.add_argument("--tau", type=float, default=None, help="counterfactual amount")
    d.add_argument("--out", default="-")
    d.set_defaults(handler=cmd_partition_dump)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = ["voucherbounds", *argv]
    try:
        return args.handler(args)
    except data_io.DataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
