"""Cross-strategy analyses over finished ensembles.

* :func:`hypothesis1` asks whether RM measured on a small low-PM subset predicts
  the full-set PM better than PM on that same subset does.
* :func:`correlation_report` correlates per-strategy SVCCA with per-strategy PM.
* :func:`confabulation_report` lists the samples the ensemble disagrees on most.
"""

from dataclasses import dataclass, field

import numpy as np

from repmult.errors import DataError, DegenerateInputError, ShapeError
from repmult.multiplicity import (
    confabulation_scores,
    pairwise_svcca,
    per_sample_pm,
    pm,
    top_confabulators,
)
from repmult.linalg import pearson
from repmult.svcca import DEFAULT_TOP_T, DEFAULT_VARIANCE_FRACTION

RM_ORIENTATIONS = ("multiplicity", "magnitude")


def mean_svcca(run, tap, variance_fraction=DEFAULT_VARIANCE_FRACTION, top_t=DEFAULT_TOP_T, subset=None):
    zs = run.activations[tap]
    if len(zs) < 2:
        raise ShapeError(f"{run.name}: mean SVCCA needs K >= 2 variants, got {len(zs)}")
    if subset is not None:
        zs = [z.subset(subset) for z in zs]
    sims = pairwise_svcca(zs, variance_fraction, top_t)
    return float(np.mean(list(sims.values())))


def low_pm_subset(table, size):
    """Indices of the ``size`` samples with the smallest per-sample PM (ties by index)."""
    values = per_sample_pm(table)
    if not 1 <= size <= values.size:
        raise DataError(f"subset size must lie in [1, {values.size}], got {size}")
    return np.sort(np.argsort(values, kind="stable")[:size])


def default_subset_size(n):
    return max(1, min(1000, n // 4))


def _scale(values):
    top = max(values) if values else 0.0
    if top <= 0.0:
        return 0.0, [0.0 for _ in values]
    return 1.0 / top, [v / top for v in values]


def _safe_pearson(x, y):
    try:
        return pearson(x, y)
    except (DegenerateInputError, DataError):
        return None


@dataclass
class Hyp1Report:
    names: list
    subset_size: int
    tap: str
    rm_orientation: str
    rm_sub: list          # |RM| on the subset, i.e. mean pairwise SVCCA
    rm_series: list       # the RM quantity that gets scaled
    pm_sub: list
    pm_full: list
    c_rm: float
    c_pm_full: float
    c_pm_sub: float
    e_rm: list
    e_pm: list
    mean_e_rm: float
    mean_e_pm: float
    verdict: bool
    excluded: dict = field(default_factory=dict)
    pcc: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def scaled(self):
        # divide rather than multiply by c so the maximum lands exactly on 1
        return {
            "rm_sub": _scale(self.rm_series)[1],
            "pm_full": _scale(self.pm_full)[1],
            "pm_sub": _scale(self.pm_sub)[1],
        }


def hypothesis1(runs, subset_size=None, tap="fc1", variance_fraction=DEFAULT_VARIANCE_FRACTION,
                top_t=DEFAULT_TOP_T, rm_orientation="multiplicity"):
    """Compare RM and PM on each run's lowest-PM subset as predictors of full-set PM.

    The subset is chosen from per-sample PM alone. With
    ``rm_orientation="multiplicity"`` the scaled RM series is ``1 - SVCCA``
    (RM shifted to be non-negative and increasing with multiplicity);
    ``"magnitude"`` scales ``|RM| = SVCCA`` directly. Every series is divided
    by its maximum over the included runs and errors are absolute differences
    to the scaled full-set PM.
    """
    if rm_orientation not in RM_ORIENTATIONS:
        raise ValueError(f"rm_orientation must be one of {RM_ORIENTATIONS}")
    if len(runs) < 2:
        raise DataError(f"hypothesis1 needs at least 2 runs, got {len(runs)}")
    names, rm_sub, pm_sub, pm_full, excluded, notes = [], [], [], [], {}, []
    size_used = None
    for run in runs:
        table = run.iid
        full = pm(table)
        if full == 0.0:
            excluded[run.name] = "PM is zero on the full set; scaling undefined"
            continue
        size = subset_size if subset_size is not None else default_subset_size(table.samples)
        size_used = size
        idx = low_pm_subset(table, size)
        names.append(run.name)
        pm_full.append(full)
        pm_sub.append(pm(table, idx))
        rm_sub.append(mean_svcca(run, tap, variance_fraction, top_t, subset=idx))
    for name, why in excluded.items():
        notes.append(f"excluded {name}: {why}")

    rm_series = [1.0 - v for v in rm_sub] if rm_orientation == "multiplicity" else list(rm_sub)
    c_rm, s_rm = _scale(rm_series)
    c_full, s_full = _scale(pm_full)
    c_sub, s_sub = _scale(pm_sub)
    if names and c_sub == 0.0:
        notes.append("PM is zero on every subset; scaled subset PM set to 0")
    if names and c_rm == 0.0:
        notes.append("RM series is zero on every subset; scaled RM set to 0")
    e_rm = [abs(a - b) for a, b in zip(s_rm, s_full)]
    e_pm = [abs(a - b) for a, b in zip(s_sub, s_full)]
    mean_rm = float(np.mean(e_rm)) if e_rm else float("nan")
    mean_pm = float(np.mean(e_pm)) if e_pm else float("nan")
    verdict = bool(mean_rm < mean_pm) if names else None
    if not names:
        notes.append("no runs left after exclusions; verdict undefined")
    pcc = {
        "rm_sub_vs_pm_full": _safe_pearson(rm_series, pm_full) if len(names) >= 2 else None,
        "pm_sub_vs_pm_full": _safe_pearson(pm_sub, pm_full) if len(names) >= 2 else None,
        "rm_sub_vs_pm_full_scaled": _safe_pearson(s_rm, s_full) if len(names) >= 2 else None,
        "pm_sub_vs_pm_full_scaled": _safe_pearson(s_sub, s_full) if len(names) >= 2 else None,
    }
    return Hyp1Report(names, size_used, tap, rm_orientation, rm_sub, rm_series, pm_sub, pm_full,
                      c_rm, c_full, c_sub, e_rm, e_pm, mean_rm, mean_pm, verdict, excluded, pcc, notes)


@dataclass
class CorrelationReport:
    names: list
    tap: str
    svcca: list
    pm: dict      # eval set -> per-strategy PM
    pcc: dict     # eval set -> PCC or None when undefined
    delta_svcca: float


def correlation_report(runs, tap="fc1", eval_sets=None, variance_fraction=DEFAULT_VARIANCE_FRACTION,
                       top_t=DEFAULT_TOP_T):
    """PCC across strategies between mean pairwise SVCCA at ``tap`` and PM on each evaluation set.

    Negative values mean RM and PM move together. ``delta_svcca`` is the spread
    (max - min) of SVCCA over the strategies.
    """
    if len(runs) < 3:
        raise DataError(f"need >= 3 runs for a meaningful PCC, got {len(runs)}")
    if eval_sets is None:
        eval_sets = runs[0].eval_sets
    sv = [mean_svcca(r, tap, variance_fraction, top_t) for r in runs]
    pms = {e: [pm(r.tables[e]) for r in runs] for e in eval_sets}
    pcc = {e: _safe_pearson(sv, v) for e, v in pms.items()}
    return CorrelationReport([r.name for r in runs], tap, sv, pms, pcc, float(max(sv) - min(sv)))


@dataclass
class ConfabulationListing:
    group: str
    variants: int
    indices: list
    entries: list
    degenerate: bool


def confabulation_report(runs, pool="pooled", n=16, eval_set="iid"):
    """Top-``n`` confabulated samples, pooled over all variants or per strategy."""
    if not runs:
        raise DataError("confabulation report needs at least one run")
    if pool == "pooled":
        table = runs[0].tables[eval_set]
        for r in runs[1:]:
            table = table.concat(r.tables[eval_set])
        groups = [("pooled", table)]
    elif pool == "per_strategy":
        groups = [(r.name, r.tables[eval_set]) for r in runs]
    else:
        raise ValueError(f"pool must be 'pooled' or 'per_strategy', got {pool!r}")
    out = []
    for name, table in groups:
        entries = confabulation_scores(table)
        idx = top_confabulators(entries, min(n, len(entries)))
        by_index = {e.sample_index: e for e in entries}
        out.append(ConfabulationListing(
            group=name,
            variants=table.variants,
            indices=idx,
            entries=[by_index[i] for i in idx],
            degenerate=all(e.score == 0.0 for e in entries),
        ))
    return out
