"""Command-line entry point: ``sctrace <command> [options]``.

Every output is plain comma-separated or ``key=value`` text.  Commands exit
with status 0 on success, 1 on bad input or data, and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import classifiers, dataset_io, filtering, risk_eval, signal_model, timing, tracing
from .signal_model import CASES

log = logging.getLogger("sctrace")

DEFAULT_WINDOW = 100
DEFAULT_THRESHOLD_M = 2.0
DEFAULT_REPEATS = risk_eval.DEFAULT_REPEATS

REPORT_WINDOWS = (1, 5, 10, 20, 50, 100, 150, 200, 300)
REPORT_THRESHOLDS = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
REPORT_DURATIONS_S = (1, 2, 5, 10, 20, 30, 60)


class CliError(Exception):
    pass


# -- data helpers -------------------------------------------------------------

def _mapping(args) -> dataset_io.ColumnMapping:
    return dataset_io.load_mapping(args.mapping) if args.mapping else dataset_io.DEFAULT_MAPPING


def load_data(spec: str, case: str, mapping) -> dataset_io.CaseDataset:
    """``spec`` is a CSV file, a directory, or ``synthetic[:seed]`` for a Gaussian stand-in."""
    if spec.startswith("synthetic"):
        seed = int(spec.partition(":")[2] or 0)
        return dataset_io.synthesize_table2_case(seed=seed, case=case)
    path = Path(spec)
    if path.is_dir():
        found = dataset_io.discover_case_files(path)
        if found:
            if case not in found:
                raise CliError(f"no files for case {case} under {path}")
            parts = [dataset_io.load_case(f, mapping, case) for f in found[case]]
            return dataset_io.concat(parts)
    return dataset_io.load_case(path, mapping, case)


def load_all_cases(spec: str, mapping) -> dict[str, dataset_io.CaseDataset]:
    if spec.startswith("synthetic"):
        seed = int(spec.partition(":")[2] or 0)
        return {c: dataset_io.synthesize_table2_case(seed=[seed, i], case=c) for i, c in enumerate(CASES)}
    return dataset_io.load_cases(spec, mapping)


def _write(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# -- commands -----------------------------------------------------------------

def cmd_fit(args) -> int:
    ds = load_data(args.data, args.case, _mapping(args))
    stats = dataset_io.summarize(ds)
    points = [(s.distance, s.mean_rss) for s in stats]
    model = signal_model.fit_path_loss(points)
    rss = signal_model.residual_sum_squares(model, points)
    if args.out:
        signal_model.save_model(model, args.out)
    print(f"n={model.n!r}\nc={model.c!r}\nresidual_ss={rss!r}\npoints={len(points)}\nskipped_rows={ds.skipped}")
    return 0


def cmd_summarize(args) -> int:
    ds = load_data(args.data, args.case, _mapping(args))
    _write(dataset_io.format_summary(dataset_io.summarize(ds)), args.out)
    return 0


def cmd_simulate(args) -> int:
    scenario = timing.read_scenario(args.scenario)
    model = signal_model.load_model(args.model) if args.model else signal_model.reference_model()
    noise = None if args.noiseless else signal_model.table2_variance
    samples = timing.run_encounter(scenario, model, noise)
    if args.out:
        timing.write_trace(samples, args.out)
    else:
        rows = ["time_ms,rss_dbm,true_distance_m"] + [f"{int(s.timestamp)},{s.rss!r},{s.true_distance!r}"
                                                      for s in samples]
        sys.stdout.write("\n".join(rows) + "\n")
    print(f"received={len(samples)}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    ds = load_data(args.data, args.case, _mapping(args))
    rss = filtering.filter_segments(ds.rss, ds.segment_ids(), args.window)
    y = risk_eval.truth_labels(ds.true_distance, args.threshold_m)
    model = classifiers.train(args.method, classifiers.encode_many(rss), y, seed=args.seed)
    _write(model.dump(), args.out)
    return 0


def _report_row(case, method, variant, rep) -> str:
    return f"{case},{method},{variant},{_fmt(rep.mean)},{_fmt(rep.ci_lo)},{_fmt(rep.ci_hi)}"


def cmd_evaluate(args) -> int:
    ds = load_data(args.data, args.case, _mapping(args))
    pl_model = signal_model.load_model(args.model) if args.model else None
    rep = risk_eval.evaluate_case(ds, args.method, window=args.window, threshold=args.threshold_m,
                                  split_seed=args.seed, repeats=args.repeats, pl_model=pl_model)
    variant = "raw" if args.window == 1 else "filtered"
    text = "case,method,variant,mean,ci_lo,ci_hi\n" + _report_row(args.case, args.method, variant, rep) + "\n"
    text += "\n" + rep.confusion.format()
    _write(text, args.out)
    return 0


def cmd_trace_demo(args) -> int:
    duration = int(round(args.duration_s * 1000))
    devices = tracing.default_devices(args.devices, duration)
    ids = [d.dev_id for d in devices]
    if args.infected not in ids:
        raise CliError(f"--infected must be one of {', '.join(ids)}")
    model = signal_model.load_model(args.model) if args.model else None
    clf = classifiers.load_classifier(Path(args.classifier).read_text()) if args.classifier else None
    cfg = timing.DeviceTimingConfig(T_a=args.T_a, T_s=args.T_s, T_w=args.T_w, T_g=args.T_g, jitter_max=args.jitter)
    result = tracing.run_trace_demo(devices, args.infected, duration, seed=args.seed, model=model, timing=cfg,
                                    threshold=args.threshold_m, window=args.window, classifier=clf)
    placement = "".join(f"# {d.dev_id}: {d.distance:g} m, active {d.active[0]}-{d.active[1]} ms\n" for d in devices)
    _write(placement + result.format(), args.out)
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_all_cases(args.data, _mapping(args))
    missing = [c for c in CASES if c not in data]
    for c in missing:
        log.warning("case %s not found; its rows are left out", c)
    if not data:
        raise CliError("no case data found")
    methods = tuple(args.methods.split(",")) if args.methods else risk_eval.METHODS
    cal_case = "HH" if "HH" in data else next(iter(data))
    pl_model = risk_eval.fit_case_model(data[cal_case].rss, data[cal_case].true_distance)
    signal_model.save_model(pl_model, out / "pl_model.txt")
    kw = dict(threshold=args.threshold_m, split_seed=args.seed, repeats=args.repeats, pl_model=pl_model)

    rows = ["case,method,variant,mean,ci_lo,ci_hi"]
    for case, ds in data.items():
        for method in methods:
            for variant, w in (("raw", 1), ("filtered", args.window)):
                rep = risk_eval.evaluate_case(ds, method, window=w, **kw)
                rows.append(_report_row(case, method, variant, rep))
    (out / "table3.csv").write_text("\n".join(rows) + "\n")

    summary = ["case,count,skipped"] + [f"{c},{len(ds)},{ds.skipped}" for c, ds in data.items()]
    (out / "counts.csv").write_text("\n".join(summary) + "\n")
    (out / "table2.csv").write_text(dataset_io.format_summary(dataset_io.summarize(data[cal_case])))

    if not args.skip_sweeps:
        sweep_ds = data[cal_case]
        rows = ["method,window,mean"]
        for method in methods:
            for w, acc in risk_eval.sweep_window(sweep_ds, method, REPORT_WINDOWS, **kw):
                rows.append(f"{method},{w},{_fmt(acc)}")
        (out / "window_sweep.csv").write_text("\n".join(rows) + "\n")

        rows = ["method,threshold_m,mean"]
        for method in ("PL", "DT", "LDA"):
            for t in REPORT_THRESHOLDS:
                try:
                    acc = risk_eval.evaluate_case(sweep_ds, method, window=args.window, threshold=t,
                                                  split_seed=args.seed, repeats=args.repeats,
                                                  pl_model=pl_model).mean
                except risk_eval.DegenerateEvaluationError:
                    continue
                rows.append(f"{method},{t:g},{_fmt(acc)}")
        (out / "threshold_sweep.csv").write_text("\n".join(rows) + "\n")

    rows = ["case,error_m,cdf"]
    p80 = ["case,p80_error_m,mae_m"]
    time_rows = ["case,duration_s,accuracy"]
    for case, ds in data.items():
        cdf = risk_eval.distance_error_cdf(ds, pl_model, window=args.window)
        rows += [f"{case},{e:.6f},{c:.6f}" for e, c in cdf.rows()]
        p80.append(f"{case},{cdf.percentile(0.8):.6f},{cdf.mae:.6f}")
        for T, acc in risk_eval.accuracy_over_time(ds, REPORT_DURATIONS_S, pl_model, args.threshold_m):
            time_rows.append(f"{case},{T:g},{_fmt(acc)}")
    (out / "error_cdf.csv").write_text("\n".join(rows) + "\n")
    (out / "error_p80.csv").write_text("\n".join(p80) + "\n")
    (out / "time_sweep.csv").write_text("\n".join(time_rows) + "\n")
    print(f"wrote report for {', '.join(data)} to {out}")
    return 0


# -- argument parsing -----------------------------------------------------------

def _add_data(p, case=True):
    p.add_argument("--data", required=True, help="CSV file, directory, or synthetic[:seed]")
    p.add_argument("--mapping", help="column mapping file (field=column lines)")
    if case:
        p.add_argument("--case", default="HH", choices=CASES)


def _add_eval(p):
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="moving-average window (1 = raw)")
    p.add_argument("--threshold-m", type=float, default=DEFAULT_THRESHOLD_M)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sctrace", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the path-loss model to per-distance mean RSS")
    _add_data(p)
    p.add_argument("--out", help="model file to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="per-distance count, mean and variance")
    _add_data(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("simulate", help="run one encounter scenario and write its trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", help="path-loss model file (default: hand-to-hand fit)")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one classifier and write it as text")
    _add_data(p)
    _add_eval(p)
    p.add_argument("--method", required=True, choices=classifiers.KINDS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="repeated 80/20 evaluation of one method on one case")
    _add_data(p)
    _add_eval(p)
    p.add_argument("--method", required=True, choices=risk_eval.METHODS)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--model", help="fixed path-loss model for PL (default: fit on each training split)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trace-demo", help="simulate encounters, upload, match and label each contact")
    p.add_argument("--devices", type=int, default=6)
    p.add_argument("--duration-s", type=float, default=600.0)
    p.add_argument("--infected", default="d0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--threshold-m", type=float, default=DEFAULT_THRESHOLD_M)
    p.add_argument("--T_a", type=int, default=timing.ADVERTISE_MODES["ADVERTISE_MODE_LOW_LATENCY"])
    p.add_argument("--T_s", type=int, default=1000)
    p.add_argument("--T_w", type=int, default=1000)
    p.add_argument("--T_g", type=int, default=5 * 60 * 1000)
    p.add_argument("--jitter", type=int, default=10)
    p.add_argument("--model", help="path-loss model file")
    p.add_argument("--classifier", help="classifier file from `train`; replaces the PL rule")
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace_demo)

    p = sub.add_parser("report", help="all cases x methods x raw/filtered, plus figure data files")
    _add_data(p, case=False)
    _add_eval(p)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(risk_eval.METHODS))
    p.add_argument("--skip-sweeps", action="store_true", help="leave out the window and threshold sweeps")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        print(f"sctrace: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
