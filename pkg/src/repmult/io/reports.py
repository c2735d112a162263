"""Report bundle: a per-strategy CSV table plus a nested JSON summary.

``strategies.csv`` columns, in order::

    strategy, regime, value, variants, accuracy_mean, accuracy_std,
    svcca_<tap> for each tap, pm_<evalset> for each evaluation set

``summary.json`` top-level keys: ``schema``, ``regime``, ``strategies``,
``columns``, ``svcca``, ``delta_svcca``, ``pcc``, ``hypothesis1``,
``confabulation``, ``notes``. Floats carry 9 significant digits and undefined
values are written as empty CSV cells / JSON ``null``.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from repmult.experiments.analysis import (
    confabulation_report,
    correlation_report,
    hypothesis1,
    mean_svcca,
)
from repmult.multiplicity import pm

SCHEMA = "repmult-report/1"
CSV_NAME = "strategies.csv"
JSON_NAME = "summary.json"
SUMMARY_KEYS = ("schema", "regime", "strategies", "columns", "svcca", "delta_svcca", "pcc",
                "hypothesis1", "confabulation", "notes")


def fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".9g")


def _round(obj):
    """Recursively round floats to 9 significant digits; NaN/inf become None."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        return float(format(obj, ".9g")) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if hasattr(obj, "item"):
        return _round(obj.item())
    return obj


def columns_for(taps, eval_sets):
    return (["strategy", "regime", "value", "variants", "accuracy_mean", "accuracy_std"]
            + [f"svcca_{t}" for t in taps] + [f"pm_{e}" for e in eval_sets])


@dataclass
class ReportBundle:
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def hyp1_summary(r):
    if r is None:
        return None
    return {
        "tap": r.tap,
        "subset_size": r.subset_size,
        "rm_orientation": r.rm_orientation,
        "strategies": r.names,
        "rm_sub": r.rm_sub,
        "rm_series": r.rm_series,
        "pm_sub": r.pm_sub,
        "pm_full": r.pm_full,
        "scaling": {"c_rm": r.c_rm, "c_pm_full": r.c_pm_full, "c_pm_sub": r.c_pm_sub},
        "scaled": r.scaled,
        "e_rm": r.e_rm,
        "e_pm": r.e_pm,
        "mean_e_rm": r.mean_e_rm,
        "mean_e_pm": r.mean_e_pm,
        "verdict": r.verdict,
        "pcc": r.pcc,
        "excluded": r.excluded,
        "notes": r.notes,
    }


def confab_summary(listings):
    if listings is None:
        return None
    return [{
        "group": lst.group,
        "variants": lst.variants,
        "degenerate": lst.degenerate,
        "top": [{"sample_index": e.sample_index, "score": e.score, "pm": e.pm,
                 "distinct_labels": e.distinct_labels, "label_histogram": list(e.label_histogram)}
                for e in lst.entries],
    } for lst in listings]


def build_bundle(runs, taps, eval_sets, correlations=None, hyp1=None, confab=None, regime=None,
                 variance_fraction=0.99, top_t=20, notes=()):
    """Assemble the tables; ``correlations`` maps tap -> CorrelationReport."""
    columns = columns_for(taps, eval_sets)
    rows = []
    svcca_by_tap = {t: [] for t in taps}
    for run in runs:
        acc_mean, acc_std = run.accuracy_stats() if run.seeds else (None, None)
        row = {"strategy": run.name, "regime": run.regime, "value": run.value,
               "variants": len(run.seeds), "accuracy_mean": acc_mean, "accuracy_std": acc_std}
        for t in taps:
            s = mean_svcca(run, t, variance_fraction, top_t) if len(run.seeds) >= 2 else None
            svcca_by_tap[t].append(s)
            row[f"svcca_{t}"] = s
        for e in eval_sets:
            row[f"pm_{e}"] = pm(run.tables[e]) if len(run.seeds) >= 2 and e in run.tables else None
        rows.append(row)
    correlations = correlations or {}
    summary = {
        "schema": SCHEMA,
        "regime": regime,
        "strategies": [r.name for r in runs],
        "columns": columns,
        "svcca": svcca_by_tap,
        "delta_svcca": {t: c.delta_svcca for t, c in correlations.items()},
        "pcc": {t: c.pcc for t, c in correlations.items()},
        "hypothesis1": hyp1_summary(hyp1),
        "confabulation": confab_summary(confab),
        "notes": list(notes) + sorted({n for r in runs for n in r.notes}),
    }
    return ReportBundle(columns, rows, summary)


def render_csv(bundle):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(bundle.columns)
    for row in bundle.rows:
        w.writerow([fmt(row.get(c)) if not isinstance(row.get(c), str) else row[c] for c in bundle.columns])
    return buf.getvalue()


def render_json(bundle):
    return json.dumps(_round(bundle.summary), indent=2, sort_keys=True) + "\n"


def emit_reports(bundle, out_dir):
    """Write ``strategies.csv`` and ``summary.json``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / CSV_NAME, out / JSON_NAME]
    paths[0].write_text(render_csv(bundle))
    paths[1].write_text(render_json(bundle))
    return paths


def analyze_runs(runs, taps, eval_sets, regime=None, pcc_tap="fc1", variance_fraction=0.99, top_t=20,
                 subset_size=None, confab_n=16, confab_pool="pooled", rm_orientation="multiplicity"):
    """Run every cross-strategy analysis that the available runs support and bundle the results."""
    notes = []
    usable = [r for r in runs if len(r.seeds) >= 2]
    for r in runs:
        if r.failed:
            notes.append(f"{r.name}: incomplete, failed seeds {sorted(r.failed)}")
    correlations = {}
    if len(usable) >= 3:
        for t in taps:
            correlations[t] = correlation_report(usable, t, eval_sets, variance_fraction, top_t)
    else:
        notes.append("fewer than 3 usable runs; PCC table omitted")
    hyp1 = None
    if len(usable) >= 2:
        hyp1 = hypothesis1(usable, subset_size, pcc_tap, variance_fraction, top_t, rm_orientation)
    confab = confabulation_report(usable, confab_pool, confab_n) if usable else None
    return build_bundle(usable, taps, eval_sets, correlations, hyp1, confab, regime,
                        variance_fraction, top_t, notes)
