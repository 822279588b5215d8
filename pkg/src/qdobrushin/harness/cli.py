"""Command-line entry point: ``qdobrushin run|suite|gen-model|plot``.

Environment: QDOBRUSHIN_OUT (output directory), QDOBRUSHIN_WORKERS (worker
count), QDOBRUSHIN_SEED (seed override for ``run``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from ..lattice import GENERATORS, make_model
from . import criteria
from .config import ConfigError, load
from .experiments import run as run_experiment
from .report import ExperimentReport, Table, read_report, read_table


def _out_dir(args, default: str = "runs") -> Path:
    return Path(args.out or os.environ.get("QDOBRUSHIN_OUT") or default)


def _print_claims(rep: ExperimentReport, stream=sys.stdout):
    for a in rep.assertions:
        print(f"  {rep.name}/{a.name} -> {a.claim or '-'} [{'ok' if a.passed else 'FAIL'}]", file=stream)


def cmd_run(args) -> int:
    try:
        cfg = load(args.config, seed_override=args.seed)
    except (ConfigError, yaml.YAMLError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rep = run_experiment(cfg)
    out = Path(args.out) if args.out else cfg.out_dir
    path = rep.write(out, claims=args.paper_check)
    print(f"{rep.name}: {'PASS' if rep.passed else 'FAIL'} ({rep.wall_clock:.1f}s) -> {path}")
    for a in rep.assertions:
        print(f"  {a.name}: {'ok' if a.passed else 'FAIL'} value={a.value} bound={a.bound}")
    if rep.error:
        print(f"  error: {rep.error}", file=sys.stderr)
    if args.paper_check:
        _print_claims(rep)
    return 0 if rep.passed else 1


def _suite_plan(name: str) -> list[tuple[int, dict]]:
    if name == "fast":
        return sorted(criteria.FAST.items())
    return [(k, {}) for k in sorted(criteria.RUNNERS)]


def _run_one(item):
    k, kw = item
    return k, criteria.run_criterion(k, **kw)


def cmd_suite(args) -> int:
    plan = _suite_plan(args.name)
    workers = args.workers or int(os.environ.get("QDOBRUSHIN_WORKERS", "1"))
    out = _out_dir(args)
    results: dict[int, ExperimentReport] = {}
    if workers > 1 and not args.first_failure:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, rep in pool.map(_run_one, plan):
                results[k] = rep
                print(criteria.summary_line(k, rep), flush=True)
    else:
        for item in plan:
            k, rep = _run_one(item)
            results[k] = rep
            print(criteria.summary_line(k, rep), flush=True)
            if args.first_failure and not rep.passed:
                break
    agg = ExperimentReport(name=f"suite-{args.name}", config={"suite": args.name, "workers": workers},
                           config_hash="")
    for k, rep in sorted(results.items()):
        path = rep.write(out, claims=args.paper_check)
        agg.check(f"criterion-{k:02d}", rep.passed, None, None, ",".join(sorted({a.claim for a in rep.assertions})))
        agg.metrics[f"criterion-{k:02d}"] = {"report": path.name, "wall_clock": rep.wall_clock,
                                             "status": rep.status}
        if args.paper_check:
            _print_claims(rep)
    agg.tables["matrix"] = Table(["criterion", "title", "passed", "status"],
                                 [[k, criteria.TITLES[k], rep.passed, rep.status] for k, rep in sorted(results.items())])
    path = agg.write(out, claims=args.paper_check)
    n_pass = sum(r.passed for r in results.values())
    print(f"suite {args.name}: {n_pass}/{len(results)} passed -> {path}")
    return 0 if n_pass == len(results) == len(plan) else 1


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def cmd_gen_model(args) -> int:
    params = {}
    for item in args.params:
        if "=" not in item:
            print(f"parameters are key=value, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        params[k] = _parse_value(v)
    try:
        spec = make_model(args.name, **params)
    except (KeyError, TypeError, ValueError) as exc:
        print(f"cannot build model: {exc}", file=sys.stderr)
        return 2
    text = json.dumps({"spec": spec.to_dict(), "hash": spec.content_hash()}, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_plot(args) -> int:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("plotting needs matplotlib (pip install 'artifact[plot]')", file=sys.stderr)
        return 2
    report_path = Path(args.report)
    rep = read_report(report_path)
    out = Path(args.out) if args.out else report_path.parent
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for tname, fname in rep["tables"].items():
        cols, rows = read_table(report_path.parent / fname)
        numeric = []
        for c, col in enumerate(zip(*rows) if rows else []):
            try:
                numeric.append((cols[c], [float(v) if v else float("nan") for v in col]))
            except ValueError:
                continue
        if len(numeric) < 2:
            continue
        (xname, x), ys = numeric[0], numeric[1:]
        fig, ax = plt.subplots(figsize=(6, 4))
        positive = all(v > 0 for _, y in ys for v in y if v == v)
        for yname, y in ys[:6]:
            ax.plot(x, y, marker=".", label=yname)
        if positive:
            ax.set_yscale("log")
        ax.set_xlabel(xname)
        ax.set_title(f"{rep['name']}: {tname}")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / f"{report_path.stem}.{tname}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    for p in written:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdobrushin", description="Balanced Lindbladian and Dobrushin experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output.dir or $QDOBRUSHIN_OUT)")
    r.add_argument("--seed", type=int, help="seed override")
    r.add_argument("--paper-check", action="store_true", help="tag each assertion with its claim id")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run the fast checks or the full acceptance matrix")
    s.add_argument("name", choices=["fast", "full"])
    s.add_argument("--out")
    s.add_argument("--workers", type=int, help="parallel workers (default $QDOBRUSHIN_WORKERS or 1)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--first-failure", action="store_true", help="stop at the first failing criterion")
    g.add_argument("--keep-going", action="store_true", help="run everything (default)")
    s.add_argument("--paper-check", action="store_true")
    s.set_defaults(func=cmd_suite)

    m = sub.add_parser("gen-model", help=f"emit a model spec as JSON ({', '.join(sorted(GENERATORS))})")
    m.add_argument("name")
    m.add_argument("params", nargs="*", help="key=value generator parameters")
    m.add_argument("--out")
    m.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("plot", help="write PNG plots of a report's tables")
    p.add_argument("report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
