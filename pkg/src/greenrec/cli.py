"""Command-line entry point: stats, prep, split, run, report, estimate-co2."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .ingest import SCHEMAS, Schema, compute_stats, get_schema, load_dataset, output_schema, write_dataset
from .preprocess import preprocess
from .runner import REPORT_KINDS, ExperimentConfig, ResultStore, report, resume, run_experiment
from .sampling import DEFAULT_PORTIONS, DownsamplePlan, Method, SplitConfig, make_splits
from .sustainability import EmissionModel, co2e_savings_kg

log = logging.getLogger("greenrec")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=default, help="experiment config file (YAML)")
    g.add_argument("--seed", type=int, default=default, help="random seed")
    g.add_argument("--out", default=default, help="output path or directory")
    g.add_argument("--parallelism", type=int, default=default, help="worker processes")
    g.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="human-readable output instead of delimited text")
    g.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)
    return p


def _data_flags(p: argparse.ArgumentParser, need_k: bool = False) -> None:
    p.add_argument("--input", required=True, help="delimited interaction file")
    p.add_argument("--schema", default="ml100k", help=f"column layout preset: {', '.join(SCHEMAS)}")
    p.add_argument("--columns", help="comma-separated column roles overriding the preset, "
                                     "e.g. user,item,rating,timestamp (other names are ignored)")
    p.add_argument("--sep", help="field separator overriding the preset (use \\t for tab)")
    p.add_argument("--header", action="store_true", help="skip the first line")
    p.add_argument("--feedback", choices=("explicit", "implicit"), default="explicit")
    p.add_argument("--name", help="dataset name (default: file stem)")
    if need_k:
        p.add_argument("--k", type=int, default=10, help="k-core threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greenrec",
        description="Downsampling benchmarks for top-N recommenders.",
        parents=[_global_flags(suppress=False)],
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    common = [_global_flags(suppress=True)]

    p = sub.add_parser("stats", parents=common, help="descriptive statistics of a dataset")
    _data_flags(p)

    p = sub.add_parser("prep", parents=common,
                       help="dedup, average duplicate ratings, k-core prune; --out is the output file")
    _data_flags(p, need_k=True)

    p = sub.add_parser("split", parents=common,
                       help="write train/val/test files per portion; --out is a directory")
    _data_flags(p, need_k=True)
    p.add_argument("--method", choices=[m.value for m in Method], default=Method.USER_BASED.value)
    p.add_argument("--portions", default=",".join(str(x) for x in DEFAULT_PORTIONS),
                   help="comma-separated training portions in (0, 1]")

    p = sub.add_parser("run", parents=common, help="run the experiment grid of --config")
    p.add_argument("--resume", action="store_true", help="only run cells missing from --out")

    p = sub.add_parser("report", parents=common, help="plot-ready tables from results")
    p.add_argument("--results", help="results directory (default: --out)")
    p.add_argument("--kind", choices=("all",) + REPORT_KINDS, default="all")

    p = sub.add_parser("estimate-co2", parents=common, help="modelled CO2e savings in kg")
    p.add_argument("--relative-runtime", type=float, required=True,
                   help="downsampled runtime as a fraction of the full-data runtime")
    p.add_argument("--energy-kwh", type=float, default=EmissionModel.energy_per_run_kwh)
    p.add_argument("--configs", type=int, default=EmissionModel.tuning_configs)
    p.add_argument("--intensity", type=float, default=EmissionModel.intensity_g_per_kwh,
                   help="grid carbon intensity, gCO2e per kWh")
    p.add_argument("--scale", type=float, default=EmissionModel.scale_factor)
    return parser


def _schema(args) -> Schema:
    base = get_schema(args.schema)
    sep = base.sep if args.sep is None else args.sep.encode().decode("unicode_escape")
    cols = base.columns if args.columns is None else tuple(c.strip() for c in args.columns.split(","))
    return Schema(cols, sep=sep, header=args.header or base.header)


def _load(args):
    return load_dataset(args.input, _schema(args), args.feedback, name=args.name)


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _print_rows(rows: list[dict], pretty: bool) -> None:
    cols = list(rows[0])
    if not pretty:
        print(",".join(cols))
        for r in rows:
            print(",".join(_fmt(r[c]) for c in cols))
        return
    cells = [[_fmt(r[c]) if not isinstance(r[c], float) else f"{r[c]:.2f}" for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def cmd_stats(args) -> int:
    d = _load(args)
    row = {"dataset": d.name, "feedback": d.feedback.value, **compute_stats(d).as_row()}
    _print_rows([row], args.pretty)
    return 0


def cmd_prep(args) -> int:
    if not args.out:
        raise ValueError("prep needs --out <path>")
    d = _load(args)
    pruned, rep = preprocess(d, args.k)
    out = Path(args.out)
    write_dataset(pruned, out, sep=_schema(args).sep if _schema(args).sep in ("\t", ",") else "\t")
    report_path = out.with_name(out.name + ".report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump({"k": args.k, **rep.to_dict()}, fh, indent=2)
        fh.write("\n")
    _print_rows([{"dataset": d.name, "k": args.k, **rep.after.as_row()}], args.pretty)
    return 0


def cmd_split(args) -> int:
    if not args.out:
        raise ValueError("split needs --out <dir>")
    seed = 42 if args.seed is None else args.seed
    d, _ = preprocess(_load(args), args.k)
    portions = tuple(float(p) for p in args.portions.split(","))
    bundles = make_splits(d, SplitConfig(seed=seed), DownsamplePlan(args.method, portions, seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"dataset": d.name, "method": args.method, "seed": seed, "k": args.k, "bundles": []}
    for b in bundles:
        entry = {"portion": b.portion, "users_included": int(b.users_included.size)}
        for part in ("train", "val", "test"):
            path = out / f"{args.method}_p{b.portion:g}_s{seed}_{part}.tsv"
            write_dataset(d.take(getattr(b, part)), path)
            entry[part] = {"file": path.name, "count": int(getattr(b, part).size),
                           "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}
        manifest["bundles"].append(entry)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    rows = [{"portion": e["portion"], "train": e["train"]["count"], "val": e["val"]["count"],
             "test": e["test"]["count"], "users": e["users_included"]} for e in manifest["bundles"]]
    _print_rows(rows, args.pretty)
    return 0


def _experiment(args) -> ExperimentConfig:
    if not args.config:
        raise ValueError("run needs --config <path>")
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    if args.out:
        overrides["output_dir"] = args.out
    if args.parallelism:
        overrides["parallelism"] = args.parallelism
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def cmd_run(args) -> int:
    cfg = _experiment(args)
    manifest = Path(cfg.output_dir) / "manifest.json"
    if args.resume and manifest.exists():
        store = resume(cfg, ResultStore.load(cfg.output_dir))
    else:
        store = run_experiment(cfg)
    print(f"records,{len(store.records)}")
    print(f"skips,{len(store.skips)}")
    print(f"output_dir,{cfg.output_dir}")
    return 0


def cmd_report(args) -> int:
    results = args.results or args.out
    if not results:
        raise ValueError("report needs --results <dir> or --out <dir>")
    store = ResultStore.load(results)
    out = Path(args.out or results) / "reports"
    kinds = REPORT_KINDS if args.kind == "all" else (args.kind,)
    for kind in kinds:
        for path in report(store, kind, out):
            print(path)
    return 0


def cmd_estimate_co2(args) -> int:
    model = EmissionModel(args.energy_kwh, args.configs, args.intensity, args.scale)
    kg = co2e_savings_kg(args.relative_runtime, model)
    if args.pretty:
        print(f"{kg:.2f} kg CO2e saved at {100 * args.relative_runtime:g}% of full runtime")
    else:
        print(f"{kg:.2f}")
    return 0


COMMANDS = {
    "stats": cmd_stats,
    "prep": cmd_prep,
    "split": cmd_split,
    "run": cmd_run,
    "report": cmd_report,
    "estimate-co2": cmd_estimate_co2,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        print(f"greenrec {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
