"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data or file-format error,
3 experiment failure (e.g. a variant never entered the risk band).
"""

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from repmult.errors import ConfigError, DataError, ExperimentError
from repmult.experiments.analysis import (
    RM_ORIENTATIONS,
    confabulation_report,
    hypothesis1,
    mean_svcca,
)
from repmult.experiments.construct import constructed_hyp1_runs
from repmult.experiments.runs import run_strategy, sweep_regime
from repmult.io.config import load_config
from repmult.io.mtx import read_matrix
from repmult.io.reports import analyze_runs, emit_reports, hyp1_summary, render_json, ReportBundle
from repmult.io.rundir import RunStore
from repmult.multiplicity import pm
from repmult.svcca import ActivationMatrix, svcca_correlations, svcca_similarity
from repmult.trainer.data import generate_synthetic, split_dataset, write_idx

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EXPERIMENT = 0, 1, 2, 3

log = logging.getLogger("repmult")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(preset_default="desk"):
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="experiment config file (INI key/value sections)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="data / transform seed")
    p.add_argument("--preset", choices=("paper", "desk"), default=preset_default)
    p.add_argument("--variance-fraction", type=float, default=None, help="SVD energy kept (default 0.99)")
    p.add_argument("--top-t", type=int, default=None, help="canonical correlations averaged (default 20)")
    p.add_argument("--subset-size", type=int, default=None,
                   help="Hypothesis-1 subset size (default 1000, capped at N/4 for the desk preset)")
    p.add_argument("--workers", type=int, default=None, help="parallel variant processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args, extra=None):
    overrides = {
        ("analysis", "variance_fraction"): args.variance_fraction,
        ("analysis", "top_t"): args.top_t,
        ("analysis", "subset_size"): args.subset_size,
        ("training", "workers"): args.workers,
        ("data", "seed"): args.seed,
        ("ood", "seed"): args.seed,
    }
    overrides.update(extra or {})
    return load_config(args.config, args.preset, overrides)


def _require_out(args):
    if not args.out:
        raise ConfigError("--out is required for this command")
    return Path(args.out)


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def _f(x):
    return "" if x is None else format(x, ".9g")


# -- commands --------------------------------------------------------------------

def cmd_gen_data(args):
    cfg = _config(args)
    d = cfg.sections["data"]
    out = _require_out(args)
    out.mkdir(parents=True, exist_ok=True)
    full = generate_synthetic(int(d.get("classes", 4)), int(d.get("samples", 2000)),
                              int(d.get("image_size", 14)), float(d.get("noise", 0.8)),
                              int(d.get("seed", 0)))
    train, test = split_dataset(full, int(d.get("test_samples", 500)))
    w = _writer()
    w.writerow(["split", "images", "labels", "samples", "fingerprint"])
    for ds in (train, test):
        img, lab = out / f"{ds.split}-images.idx", out / f"{ds.split}-labels.idx"
        write_idx(ds, img, lab)
        w.writerow([ds.split, img, lab, len(ds), ds.fingerprint])
    return EXIT_OK


def _prepare(cfg):
    data = cfg.datasets()
    spec = cfg.network(data.train.input_shape, data.train.classes)
    return data, spec


def cmd_train(args):
    overrides = {}
    if args.learning_rate is not None:
        overrides[("training", "learning_rate")] = args.learning_rate
    if args.batch_size is not None:
        overrides[("training", "batch_size")] = args.batch_size
    cfg = _config(args, overrides)
    if args.strategy:
        strategy = cfg.strategy(args.strategy)
    else:
        from dataclasses import replace
        from repmult.experiments.runs import strategy_name
        base = cfg.base_strategy()
        strategy = replace(base, name=strategy_name(base.regime, base.value))
    data, spec = _prepare(cfg)
    run = run_strategy(strategy, spec, data, workers=cfg.workers)
    RunStore(_require_out(args)).save(run)
    w = _writer()
    w.writerow(["strategy", "seed", "accuracy", "status"])
    for seed, acc in zip(run.seeds, run.accuracies):
        w.writerow([run.name, seed, _f(acc), "ok"])
    for seed, err in sorted(run.failed.items()):
        w.writerow([run.name, seed, "", f"failed: {err}"])
    return EXIT_OK if run.complete else EXIT_EXPERIMENT


def _analysis_kwargs(cfg):
    return dict(
        pcc_tap=cfg.get("analysis", "pcc_tap", "fc1"),
        variance_fraction=cfg.variance_fraction,
        top_t=cfg.top_t,
        subset_size=cfg.subset_size,
        confab_n=int(cfg.get("analysis", "confab_n", "16")),
        confab_pool=cfg.get("analysis", "confab_pool", "pooled"),
    )


def _print_rows(bundle):
    w = _writer()
    w.writerow(bundle.columns)
    for row in bundle.rows:
        w.writerow([row[c] if isinstance(row[c], str) else _f(row[c]) for c in bundle.columns])


def cmd_sweep(args):
    overrides = {}
    if args.regime:
        overrides[("training", "regime")] = args.regime
    if args.values:
        overrides[("training", "values")] = args.values
    cfg = _config(args, overrides)
    out = _require_out(args)
    data, spec = _prepare(cfg)
    store = RunStore(out / "runs")
    if cfg.explicit:
        runs = []
        for s in cfg.strategies():
            run = store.load(s.name) if store.is_complete(s.name) else run_strategy(s, spec, data, cfg.workers)
            store.save(run)
            runs.append(run)
    else:
        runs = sweep_regime(cfg.regime, cfg.values, cfg.base_strategy(), spec, data,
                            workers=cfg.workers, store=store)
    eval_sets = ["iid"] + list(data.ood)
    bundle = analyze_runs(runs, cfg.taps, eval_sets, cfg.regime, **_analysis_kwargs(cfg))
    emit_reports(bundle, out)
    _print_rows(bundle)
    return EXIT_OK if all(r.complete for r in runs) else EXIT_EXPERIMENT


def _load_runs(args):
    if not args.runs:
        raise ConfigError("--runs <run directory> is required")
    return RunStore(args.runs).load_all()


def _usable(runs):
    out = [r for r in runs if len(r.seeds) >= 2]
    for r in runs:
        if len(r.seeds) < 2:
            log.warning("%s: fewer than 2 successful variants, skipped", r.name)
    return out


def _runs_eval_sets(runs):
    return list(runs[0].tables)


def cmd_pm(args):
    runs = _load_runs(args)
    sets = _runs_eval_sets(runs)
    w = _writer()
    w.writerow(["strategy", "variants"] + [f"pm_{e}" for e in sets])
    for r in runs:
        ok = len(r.seeds) >= 2
        w.writerow([r.name, len(r.seeds)] + [_f(pm(r.tables[e], mode=args.mode)) if ok else "" for e in sets])
    return EXIT_OK


def cmd_rm(args):
    cfg = _config(args)
    runs = _load_runs(args)
    taps = args.tap or sorted(runs[0].activations)
    w = _writer()
    w.writerow(["strategy", "tap", "svcca", "rm"])
    for r in runs:
        for t in taps:
            s = mean_svcca(r, t, cfg.variance_fraction, cfg.top_t) if len(r.seeds) >= 2 else None
            w.writerow([r.name, t, _f(s), _f(None if s is None else -s)])
    return EXIT_OK


def cmd_svcca(args):
    cfg = _config(args)
    a = read_matrix(args.a)
    b = read_matrix(args.b)
    spec = svcca_correlations(ActivationMatrix("a", a), ActivationMatrix("b", b), cfg.variance_fraction)
    sim = svcca_similarity(spec, cfg.top_t)
    for note in spec.warnings:
        warnings.warn(note)
    w = _writer()
    w.writerow(["svcca", "rm", "k1", "k2", "correlations"])
    w.writerow([_f(sim), _f(-sim), spec.k1, spec.k2, " ".join(_f(c) for c in spec.correlations)])
    return EXIT_OK


def cmd_confab(args):
    runs = _load_runs(args)
    listings = confabulation_report(runs, args.pool, args.n, args.eval_set)
    w = _writer()
    w.writerow(["group", "rank", "sample_index", "score", "pm", "distinct_labels", "label_histogram"])
    for lst in listings:
        for rank, e in enumerate(lst.entries, 1):
            w.writerow([lst.group, rank, e.sample_index, _f(e.score), _f(e.pm), e.distinct_labels,
                        " ".join(map(str, e.label_histogram))])
        if lst.degenerate:
            w.writerow([lst.group, "", "", "", "", "", "degenerate: all variants agree on every sample"])
    return EXIT_OK


def cmd_hyp1(args):
    cfg = _config(args)
    runs = constructed_hyp1_runs() if args.constructed else _usable(_load_runs(args))
    subset = cfg.subset_size if cfg.subset_size or not args.constructed else 500
    report = hypothesis1(runs, subset, args.tap, cfg.variance_fraction, cfg.top_t, args.rm_orientation)
    w = _writer()
    w.writerow(["strategy", "rm_sub", "pm_sub", "pm_full", "e_rm", "e_pm"])
    for i, name in enumerate(report.names):
        w.writerow([name, _f(report.rm_sub[i]), _f(report.pm_sub[i]), _f(report.pm_full[i]),
                    _f(report.e_rm[i]), _f(report.e_pm[i])])
    w.writerow(["mean", "", "", "", _f(report.mean_e_rm), _f(report.mean_e_pm)])
    w.writerow(["verdict", str(report.verdict).lower(), "", "", "", ""])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        bundle = ReportBundle(columns=[], summary={"hypothesis1": hyp1_summary(report)})
        (out / "hyp1.json").write_text(render_json(bundle))
    return EXIT_OK


def cmd_report(args):
    cfg = _config(args)
    runs = _load_runs(args)
    taps = cfg.taps if all(t in runs[0].activations for t in cfg.taps) else sorted(runs[0].activations)
    bundle = analyze_runs(runs, taps, _runs_eval_sets(runs), runs[0].regime, **_analysis_kwargs(cfg))
    paths = emit_reports(bundle, _require_out(args))
    _print_rows(bundle)
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def build_parser():
    common = _common()
    parser = _Parser(prog="repmult", description="Representational and predictive multiplicity toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset as IDX files")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train the variants of one strategy")
    p.add_argument("--strategy", help="name of a [strategy:<name>] section or a sweep strategy (e.g. lr0.001)")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", parents=[common], help="train a regime sweep and write reports")
    p.add_argument("--regime", choices=("learning_rate", "batch_size"))
    p.add_argument("--values", help="comma-separated regime values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("svcca", parents=[common], help="compare two MTX1 activation files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_svcca)

    for name, func, helptext in (("pm", cmd_pm, "predictive multiplicity per strategy"),
                                 ("rm", cmd_rm, "representational multiplicity per strategy")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--runs", help="run directory (as written by train/sweep)")
        if name == "pm":
            p.add_argument("--mode", choices=("probs", "labels"), default="probs")
        else:
            p.add_argument("--tap", action="append")
        p.set_defaults(func=func)

    p = sub.add_parser("confab", parents=[common], help="top-N confabulated samples")
    p.add_argument("--runs")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--pool", choices=("pooled", "per_strategy"), default="pooled")
    p.add_argument("--eval-set", default="iid")
    p.set_defaults(func=cmd_confab)

    p = sub.add_parser("hyp1", parents=[common], help="Hypothesis-1 report (RM vs PM on a low-PM subset)")
    p.add_argument("--runs")
    p.add_argument("--tap", default="fc1")
    p.add_argument("--rm-orientation", choices=RM_ORIENTATIONS, default="multiplicity")
    p.add_argument("--constructed", action="store_true", help="use the built-in constructed ensembles")
    p.set_defaults(func=cmd_hyp1)

    p = sub.add_parser("report", parents=[common], help="assemble the report bundle from a run directory")
    p.add_argument("--runs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"repmult: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError) as exc:
        print(f"repmult: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as exc:
        print(f"repmult: experiment failed: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
