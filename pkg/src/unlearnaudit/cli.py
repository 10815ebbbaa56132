"""Command-line entry point.

Exit status for ``verify``: 0 when the target shows no influence at or
above the threshold, 2 when residual influence remains, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import shlex
import sys
import time
from pathlib import Path

from . import __version__
from .baselines import fairness_by_feature, permutation_scores, read_scores
from .cafe import CafeConfig, RESIDUAL, cafe_estimate
from .data import UnlearningTarget, load_dataset
from .errors import AuditError, ModelError, UsageError
from .external import ExternalModel
from .fuzz import FuzzConfig, PATHS, fuzz
from .graph import PathSet, load_graph
from .models import BuiltinModel, resolve_kind, train
from .report import InfluenceReport, comparison_table, file_digest, load_report, report_sources
from .robustness import ADD, FULL, REMOVE, PerturbationSpec, benchmark, perturb_graph, rank_change
from .sem import STRATEGIES, fit_sem
from .synth import load_spec, write_outputs

METHODS = ("fuzz", "cafe", "perm", "fairness")
EXIT_OK, EXIT_ERROR, EXIT_RESIDUAL = 0, 1, 2


def _csv_list(text: str | None) -> list[str]:
    return [t.strip() for t in (text or "").split(",") if t.strip()]


def _methods(values) -> list[str]:
    chosen = []
    for v in values or ["cafe"]:
        for m in _csv_list(v):
            if m == "all":
                chosen.extend(METHODS)
            elif m in METHODS:
                chosen.append(m)
            else:
                raise UsageError(f"unknown method {m!r}", hint="choose from fuzz, cafe, perm, fairness, all")
    return [m for m in METHODS if m in chosen]


def _pair(text: str) -> tuple[str, tuple[str, str]]:
    try:
        feature, values = text.split("=", 1)
        b, t = values.split(":", 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FEATURE=BASELINE:TREATMENT, got {text!r}") from None
    return feature.strip(), (b.strip(), t.strip())


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True, help="causal graph file (JSON)")
    p.add_argument("--data", required=True, help="dataset file (CSV with header)")
    p.add_argument("--model", help="built-in kind to train (linear, logistic, trees, mlp) or a saved model file")
    p.add_argument("--external-cmd", help="command serving predictions over the line protocol")
    p.add_argument("--train-without", default="", help="comma-separated features the built-in model must not read")
    p.add_argument("--save-model", help="write the trained built-in model here")
    p.add_argument("--timeout", type=float, default=30.0, help="external model timeout per request (s)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unlearnaudit", description="Causal audits of machine unlearning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="measure residual influence of an unlearning target")
    _add_model_args(v)
    v.add_argument("--target-features", required=True, help="comma-separated target features")
    v.add_argument("--where", default="", help="subgroup predicate, e.g. 'age>50 & gender=1'")
    v.add_argument("--method", action="append", help="fuzz, cafe, perm, fairness or all (repeatable)")
    v.add_argument("--mode", choices=("total", "direct", "paths"), default="total", help="fuzzing mode")
    v.add_argument("--tau", type=float, help="verdict threshold (default 1%% of the outcome std)")
    v.add_argument("--samples", type=int, default=10, help="fuzzing samples per row")
    v.add_argument("--strategy", choices=STRATEGIES, default="empirical", help="fuzzing intervention values")
    v.add_argument("--aggregation", choices=("sum", "mean", "per-unit"), default="per-unit",
                   help="fuzzing aggregation; per-unit keeps scores on the estimator's scale")
    v.add_argument("--estimator", choices=("regression", "stratified"), default="regression")
    v.add_argument("--intervention", action="append", type=_pair, default=[],
                   metavar="F=B:T", help="baseline and treatment values for a feature")
    v.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for the total effect")
    v.add_argument("--breakdown", action="append", default=[], metavar="PREDICATE",
                   help="also report the estimator within this subgroup (repeatable)")
    v.add_argument("--threshold", type=float, default=0.5, help="decision threshold for fairness metrics")
    v.add_argument("--out", default="report.json", help="report path; plot data goes next to it")

    gen = sub.add_parser("generate", help="sample a synthetic dataset and its graph from a spec")
    gen.add_argument("--spec", required=True, help="spec file or shipped name (heart, heart_opposed, heart_age, performance)")
    gen.add_argument("--out", default=".", help="output directory")
    gen.add_argument("--n", type=int, help="override the row count")
    gen.add_argument("--seed", type=int, help="override the spec seed")

    cmp_ = sub.add_parser("compare", help="side-by-side rankings from reports and score files")
    cmp_.add_argument("reports", nargs="*", help="report files written by verify")
    cmp_.add_argument("--scores", action="append", default=[], metavar="NAME=PATH",
                      help="extra 'feature,score' file as its own column")
    cmp_.add_argument("--out", help="write the table here (default: standard output)")

    b = sub.add_parser("bench", help="median wall time per method")
    _add_model_args(b)
    b.add_argument("--method", action="append", help="cafe, fuzz, perm (repeatable)")
    b.add_argument("--target-features", help="default: every feature")
    b.add_argument("--samples", type=int, default=10)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out", help="write timings as CSV")

    pt = sub.add_parser("perturb", help="mis-specify a graph and measure the ranking shift")
    pt.add_argument("--graph", required=True)
    pt.add_argument("--kind", choices=(ADD, REMOVE, FULL), required=True)
    pt.add_argument("--fraction", type=float, default=0.5)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--out", help="write the perturbed graph here")
    pt.add_argument("--data", help="with --model, report the rank change")
    pt.add_argument("--model", help="built-in kind or saved model file")
    pt.add_argument("--target-features", help="default: every feature")
    return parser


# ---------------------------------------------------------------------------


def _load_model(args, ds):
    """Exactly one of --model / --external-cmd; returns (model, description)."""
    if bool(args.model) == bool(getattr(args, "external_cmd", None)):
        raise ModelError("give exactly one of --model or --external-cmd")
    if getattr(args, "external_cmd", None):
        cmd = shlex.split(args.external_cmd)
        return ExternalModel(cmd, ds.columns, timeout=args.timeout), {"external": cmd}
    path = Path(args.model)
    if path.suffix == ".json" or path.exists():
        model = BuiltinModel.load(path)
        if tuple(model.features) != tuple(ds.columns):
            raise ModelError(f"model features {list(model.features)} differ from data columns",
                             hint="retrain the model on this dataset's schema")
        return model, {"file": str(path), "sha256": file_digest(path)}
    kind = resolve_kind(args.model)
    drop = set(_csv_list(getattr(args, "train_without", "")))
    for f in drop:
        ds.col(f)
    uses = [f for f in ds.columns if f not in drop]
    model = train(kind, ds, uses, seed=getattr(args, "seed", 0))
    if getattr(args, "save_model", None):
        model.save(args.save_model)
    return model, {"builtin": kind, "uses": uses}


def cmd_verify(args) -> int:
    methods = _methods(args.method)
    g = load_graph(args.graph)
    ds = load_dataset(args.data, g)
    target = UnlearningTarget.parse(args.target_features, args.where)
    target.validate(ds, ds.outcome)
    breakdowns = [UnlearningTarget.parse(target.features, w) for w in args.breakdown]
    for b in breakdowns:
        b.validate(ds, ds.outcome)
    model, model_info = _load_model(args, ds)
    order = [f for f in ds.columns if f in target.features]
    fuzz_cfg = FuzzConfig(samples=args.samples, strategy=args.strategy, mode=args.mode, seed=args.seed,
                          aggregation=args.aggregation,
                          pairs={f: tuple(float(ds.decl(f).encode(v)) if ds.decl(f).is_categorical else float(v)
                                          for v in pair) for f, pair in args.intervention})
    if args.mode == PATHS:
        fuzz_cfg.paths = PathSet(tuple(p for f in target.features for p in g.directed_paths(f)))
    cafe_cfg = CafeConfig(estimator=args.estimator, interventions=dict(args.intervention), tau=args.tau,
                          bootstrap=args.bootstrap, seed=args.seed)
    config = {
        "graph": str(args.graph), "data": str(args.data), "model": model_info,
        "target": {"features": list(target.features), "where": str(target.selector)},
        "methods": methods, "seed": args.seed,
        "fuzz": fuzz_cfg.describe() if "fuzz" in methods else None,
        "cafe": cafe_cfg.describe() if "cafe" in methods else None,
        "breakdowns": [str(b.selector) for b in breakdowns],
    }
    report = InfluenceReport(config, file_digest(args.graph), file_digest(args.data), args.seed)
    try:
        if "cafe" in methods:
            t0 = time.perf_counter()
            result = cafe_estimate(g, ds, model, target, cafe_cfg)
            report.timings["cafe"] = time.perf_counter() - t0
            report.add_scores("cafe", result, order)
            for b in breakdowns:
                sub = cafe_estimate(g, ds, model, b, cafe_cfg)
                report.subgroups[str(b.selector)] = sub.to_dict()
        if "fuzz" in methods:
            t0 = time.perf_counter()
            sem = fit_sem(g, ds)
            result = fuzz(g, sem, model, ds, target, fuzz_cfg)
            report.timings["fuzz"] = time.perf_counter() - t0
            report.add_scores("fuzz", result, order)
            report.methods["fuzz"]["sem_flags"] = list(sem.flagged)
        if "perm" in methods:
            t0 = time.perf_counter()
            perm = permutation_scores(ds, model, list(ds.columns), seed=args.seed)
            report.timings["permutation"] = time.perf_counter() - t0
            report.add_baseline("permutation", perm, ds.columns)
        if "fairness" in methods:
            t0 = time.perf_counter()
            fair = fairness_by_feature(ds, model, args.threshold, list(target.features))
            report.timings["fairness"] = time.perf_counter() - t0
            report.methods["fairness"] = {"method": "fairness", "groups": {
                f: (r if isinstance(r, str) else r.to_dict()) for f, r in fair.items()}}
    finally:
        if isinstance(model, ExternalModel):
            model.close()
    written = report.write(args.out)
    _print_summary(report.to_dict(), written)
    if report.verdict is not None and report.verdict["status"] == RESIDUAL:
        return EXIT_RESIDUAL
    return EXIT_OK


def _fmt(x) -> str:
    return "-" if x is None else f"{x:+.4f}" if isinstance(x, float) else str(x)


def _print_summary(d: dict, written) -> None:
    for method, body in d["methods"].items():
        feats = body.get("features")
        if not feats:
            continue
        print(f"[{method}]")
        ranks = {r["feature"]: r["rank"] for r in d["rankings"].get(method, [])}
        for f, v in feats.items():
            if isinstance(v, dict):
                print(f"  {ranks.get(f, '-'):>2} {f:<24} total {_fmt(v.get('total'))}  "
                      f"direct {_fmt(v.get('direct'))}  indirect {_fmt(v.get('indirect'))}")
            else:
                print(f"  {ranks.get(f, '-'):>2} {f:<24} score {_fmt(v)}")
    if "fairness" in d["methods"]:
        print("[fairness]")
        for f, r in d["methods"]["fairness"]["groups"].items():
            if isinstance(r, str):
                print(f"  {f}: {r}")
            else:
                print(f"  {f} ({r['privileged']}): SPD {_fmt(r['spd'])} DI {_fmt(r['di'])} "
                      f"EOD {_fmt(r['eod'])} AOD {_fmt(r['aod'])}")
    if "verdict" in d:
        v = d["verdict"]
        print(f"verdict: {v['status']} (combined total {v['combined_total']:+.4f}, tau {v['threshold']:.4f})")
    print("wrote " + ", ".join(str(p) for p in written))


def cmd_generate(args) -> int:
    spec = load_spec(args.spec)
    if args.n is not None or args.seed is not None:
        spec = spec.with_n(args.n if args.n is not None else spec.n, args.seed)
    data, graph = write_outputs(spec, args.out)
    print(f"wrote {data} ({spec.n} rows), {graph}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sources: dict[str, dict[str, float]] = {}
    for path in args.reports:
        stem = Path(path).stem
        for method, vals in report_sources(load_report(path)).items():
            name = method if method not in sources else f"{stem}:{method}"
            sources[name] = vals
    for item in args.scores:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        sources[name] = read_scores(path)
    header, rows = comparison_table(sources)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    g = load_graph(args.graph)
    ds = load_dataset(args.data, g)
    model, _ = _load_model(args, ds)
    methods = []
    for m in _csv_list(",".join(args.method or ["cafe,fuzz"])):
        methods.append("permutation" if m == "perm" else m)
    feats = _csv_list(args.target_features) or list(ds.columns)
    try:
        table = benchmark(methods, g, ds, model, repeats=args.repeats, features=feats,
                          fuzz_cfg=FuzzConfig(samples=args.samples, seed=args.seed, threads=1))
    finally:
        if isinstance(model, ExternalModel):
            model.close()
    for m, t in table.items():
        print(f"{m:<12} {t:.4f} s")
    if "cafe" in table and "fuzz" in table and table["cafe"] > 0:
        print(f"fuzz/cafe speedup {table['fuzz'] / table['cafe']:.1f}x")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "median_seconds"])
            w.writerows(table.items())
    return EXIT_OK


def cmd_perturb(args) -> int:
    g = load_graph(args.graph)
    g2 = perturb_graph(g, PerturbationSpec(args.kind, args.fraction, args.seed))
    if args.out:
        Path(args.out).write_text(g2.dumps(), encoding="utf-8")
    print(f"{len(g.edges)} -> {len(g2.edges)} edges")
    if args.data and args.model:
        ds = load_dataset(args.data, g)
        args.external_cmd = None
        model, _ = _load_model(args, ds)
        feats = _csv_list(args.target_features) or list(ds.columns)
        print(f"rank change {rank_change(g, g2, ds, model, features=feats):.1f}%")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "generate": cmd_generate, "compare": cmd_compare,
            "bench": cmd_bench, "perturb": cmd_perturb}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AuditError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        if exc.hint:
            print(f"hint: {exc.hint}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_ERROR

