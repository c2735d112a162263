"""Ensembles of seed-varied variants and hyperparameter-regime sweeps."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from repmult.errors import DataError, ExperimentError
from repmult.multiplicity import PredictionTable
from repmult.trainer.data import apply_ood_transform, parse_transform
from repmult.trainer.train import predict, select_pseudo_max, train_variant

log = logging.getLogger(__name__)

IID = "iid"


@dataclass
class EnsembleRun:
    """K variants of one training strategy, evaluated at their stopping checkpoints.

    ``tables`` maps an evaluation-set name (``"iid"`` or an OOD transform name)
    to the ensemble's :class:`PredictionTable`; ``activations`` maps a tap name
    to one activation matrix per variant, computed on the i.i.d. test set.
    """

    name: str
    regime: str
    value: float
    seeds: list
    accuracies: list
    tables: dict
    activations: dict
    strategy: object = None
    failed: dict = field(default_factory=dict)
    models: list = field(default_factory=list)
    pseudo_max: float = None
    notes: list = field(default_factory=list)

    @property
    def complete(self):
        return not self.failed and len(self.seeds) >= 2

    @property
    def iid(self):
        return self.tables[IID]

    @property
    def eval_sets(self):
        return list(self.tables)

    def accuracy_stats(self):
        acc = np.asarray(self.accuracies, dtype=np.float64)
        return float(acc.mean()), float(acc.std())


@dataclass(frozen=True)
class DataBundle:
    """Training set, i.i.d. test set, and the OOD test sets derived from it."""

    train: object
    test: object
    ood: dict = field(default_factory=dict)

    @classmethod
    def build(cls, train, test, transforms=(), transform_seed=0):
        ood = {}
        for i, t in enumerate(transforms):
            t = parse_transform(t) if isinstance(t, str) else t
            ood[t.name] = apply_ood_transform(test, t, seed=[int(transform_seed), i])
        return cls(train, test, ood)


def _train_one(args):
    strategy, seed, spec, train, test = args
    try:
        return seed, train_variant(strategy, seed, spec, train, test), None
    except ExperimentError as exc:
        return seed, None, str(exc)


def run_strategy(strategy, spec, data, workers=1):
    """Train every seed of ``strategy`` and evaluate the ensemble on all test sets.

    Variants are independent; ``workers > 1`` trains them in separate processes
    and results are still collected in seed order, so outputs do not depend on
    scheduling. Seeds that miss the risk band are listed in ``failed``.
    """
    jobs = [(strategy, s, spec, data.train, data.test) for s in strategy.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_train_one, jobs))
    else:
        outcomes = [_train_one(j) for j in jobs]

    failed = {seed: err for seed, _, err in outcomes if err is not None}
    variants = [res for _, res, err in outcomes if err is None]
    for seed, err in failed.items():
        log.warning("%s seed %s failed: %s", strategy.name, seed, err)

    level, notes = None, []
    if strategy.stopping == "pseudo_max" and variants:
        level, variants = select_pseudo_max(variants, data.test, strategy.min_agreeing)
        notes.append(f"pseudo-max accuracy {level:.4f} reached by {len(variants)} seeds")

    tables, activations = {}, {}
    if variants:
        tables[IID] = PredictionTable.stack([v.probs for v in variants], data.test.fingerprint)
        for name, ood_set in data.ood.items():
            probs = [predict(v.model, ood_set)[0] for v in variants]
            tables[name] = PredictionTable.stack(probs, ood_set.fingerprint)
        for tap in spec.taps:
            activations[tap] = [v.activations[tap] for v in variants]
    notes.append("i.i.d. test set doubles as the validation set for stopping")
    return EnsembleRun(
        name=strategy.name,
        regime=strategy.regime,
        value=strategy.value,
        seeds=[v.seed for v in variants],
        accuracies=[v.accuracy for v in variants],
        tables=tables,
        activations=activations,
        strategy=strategy,
        failed=failed,
        models=[v.model for v in variants],
        pseudo_max=level,
        notes=notes,
    )


def strategy_name(regime, value):
    return f"lr{value:g}" if regime == "learning_rate" else f"bs{int(value)}"


def strategies_for(regime, values, base):
    """One strategy per regime value, otherwise identical to ``base``."""
    values = list(values)
    if not values:
        raise DataError("sweep needs at least one value")
    if len(set(values)) != len(values):
        raise DataError(f"sweep values must be distinct, got {values}")
    out = []
    for v in values:
        if regime == "learning_rate":
            s = replace(base, regime=regime, learning_rate=float(v), name=strategy_name(regime, v))
        elif regime == "batch_size":
            s = replace(base, regime=regime, batch_size=int(v), name=strategy_name(regime, v))
        else:
            raise DataError(f"unknown regime {regime!r}")
        out.append(s)
    return out


def sweep_regime(regime, values, base_strategy, spec, data, workers=1, store=None):
    """Run one ensemble per regime value.

    Failures stay confined to their value. With ``store`` (a
    :class:`repmult.io.rundir.RunStore`), finished strategies are saved and
    reloaded on the next call instead of being retrained.
    """
    runs = []
    for strategy in strategies_for(regime, values, base_strategy):
        if store is not None and store.is_complete(strategy.name):
            log.info("resuming %s from %s", strategy.name, store.root)
            runs.append(store.load(strategy.name))
            continue
        run = run_strategy(strategy, spec, data, workers=workers)
        if store is not None:
            store.save(run)
        runs.append(run)
    return runs
