from dataclasses import replace

import numpy as np
import pytest

from repmult.errors import DataError
from repmult.experiments.analysis import (
    confabulation_report,
    correlation_report,
    default_subset_size,
    hypothesis1,
    low_pm_subset,
    mean_svcca,
)
from repmult.experiments.construct import constructed_hyp1_runs, constructed_run
from repmult.experiments.presets import PAPER_LEARNING_RATES, PAPER_BATCH_SIZES, PRESETS, REGIME_VALUES
from repmult.experiments.runs import IID, DataBundle, EnsembleRun, run_strategy, strategies_for, sweep_regime
from repmult.io.config import load_config
from repmult.io.rundir import RunStore
from repmult.multiplicity import PredictionTable, confabulation_scores, per_sample_pm, pm
from repmult.svcca import ActivationMatrix
from repmult.trainer import Dataset, NetworkSpec, TrainingStrategy


def blobs(n, seed):
    g = np.random.default_rng(seed)
    y = g.integers(0, 2, n)
    x = np.array([[0.3] * 4, [0.7] * 4])[y] + 0.08 * g.standard_normal((n, 4))
    return Dataset(np.clip(x, 0, 1).reshape(n, 1, 2, 2), y, 2)


SPEC = NetworkSpec((1, 2, 2), [("flatten",), ("dense", 4, 8), ("relu",), ("dense", 8, 2)])
BASE = TrainingStrategy("base", "learning_rate", 0.003, 16, seeds=(0, 1), target_accuracy=0.95,
                        epsilon=0.02, max_epochs=100, eval_every=1)


@pytest.fixture(scope="module")
def data():
    return DataBundle.build(blobs(300, 0), blobs(200, 1), ["xflip", "rot0-20"], 0)


class TestRunStrategy:
    def test_toy_run(self, data):
        run = run_strategy(replace(BASE, name="toy"), SPEC, data)
        assert run.complete and run.seeds == [0, 1]
        assert set(run.tables) == {IID, "xflip", "rot0-20"}
        for name, table in run.tables.items():
            assert table.probs.shape == (2, 200, 2)
            assert table.dataset_fingerprint == (data.test if name == IID else data.ood[name]).fingerprint
        assert [z.values.shape for z in run.activations["fc1"]] == [(8, 200), (8, 200)]
        assert all(abs(a - 0.95) < 0.02 for a in run.accuracies)

    def test_duplicate_seeds(self):
        with pytest.raises(ValueError):
            replace(BASE, seeds=(3, 3))

    def test_unreachable_is_incomplete(self, data):
        run = run_strategy(replace(BASE, name="bad", target_accuracy=0.6, epsilon=0.001, max_epochs=1,
                                   eval_every=None), SPEC, data)
        assert not run.complete
        assert sorted(run.failed) == [s for s in BASE.seeds if s not in run.seeds]

    def test_workers_do_not_change_results(self, data):
        a = run_strategy(replace(BASE, name="w"), SPEC, data, workers=1)
        b = run_strategy(replace(BASE, name="w"), SPEC, data, workers=2)
        np.testing.assert_array_equal(a.iid.probs, b.iid.probs)
        assert a.accuracies == b.accuracies

    def test_pseudo_max_run(self, data):
        s = replace(BASE, name="pm", stopping="pseudo_max", target_accuracy=None, max_epochs=2, eval_every=10,
                    seeds=(0, 1, 2))
        run = run_strategy(s, SPEC, data)
        assert run.pseudo_max is not None and len(run.seeds) >= 2
        assert all(a >= run.pseudo_max for a in run.accuracies)


class TestSweep:
    def test_paper_value_counts(self):
        assert len(strategies_for("learning_rate", PAPER_LEARNING_RATES, BASE)) == 7
        assert len(strategies_for("batch_size", PAPER_BATCH_SIZES, BASE)) == 7

    def test_desk_arithmetic(self):
        cfg = load_config(preset="desk")
        strategies = cfg.strategies()
        assert len(strategies) == 3
        assert sum(len(s.seeds) for s in strategies) == 9
        assert [s.learning_rate for s in strategies] == list(REGIME_VALUES["desk"]["learning_rate"])

    def test_paper_preset(self):
        cfg = load_config(preset="paper", overrides={("training", "target_accuracy"): 0.98})
        assert [s.learning_rate for s in cfg.strategies()] == list(PAPER_LEARNING_RATES)
        assert cfg.base_strategy().batch_size == 64 and len(cfg.seeds) == 10
        assert cfg.subset_size == 1000

    def test_empty_values(self):
        with pytest.raises(DataError):
            strategies_for("learning_rate", [], BASE)

    def test_duplicate_values(self):
        with pytest.raises(DataError):
            strategies_for("batch_size", [16, 16], BASE)

    def test_names(self):
        names = [s.name for s in strategies_for("batch_size", [8, 64], BASE)]
        assert names == ["bs8", "bs64"]

    def test_partial_failure_and_resume(self, data, tmp_path):
        base = replace(BASE, seeds=(0,))
        store = RunStore(tmp_path)
        runs = sweep_regime("learning_rate", [0.003, 1e-9], base, SPEC, data, store=store)
        assert len(runs) == 2
        assert runs[0].seeds == [0] and not runs[0].failed
        assert runs[1].seeds == [] and runs[1].failed
        names = store.names()
        assert names == ["lr0.003", "lr1e-09"]
        assert not store.is_complete("lr1e-09")

    def test_resume_skips_complete(self, data, tmp_path, monkeypatch):
        store = RunStore(tmp_path)
        first = sweep_regime("learning_rate", [0.003], BASE, SPEC, data, store=store)
        import repmult.experiments.runs as runs_mod

        def boom(*a, **k):
            raise AssertionError("should have resumed")

        monkeypatch.setattr(runs_mod, "run_strategy", boom)
        again = sweep_regime("learning_rate", [0.003], BASE, SPEC, data, store=store)
        np.testing.assert_array_equal(again[0].iid.probs, first[0].iid.probs)


class TestHypothesis1:
    def test_constructed_verdict(self):
        report = hypothesis1(constructed_hyp1_runs(), subset_size=500)
        assert report.verdict is True
        assert report.mean_e_pm - report.mean_e_rm > 0.1
        assert all(v == 0.0 for v in report.pm_sub)

    def test_magnitude_orientation(self):
        report = hypothesis1(constructed_hyp1_runs(), subset_size=500, rm_orientation="magnitude")
        assert report.rm_series == report.rm_sub
        assert report.verdict is True

    def test_scaled_max_is_one(self):
        runs = constructed_hyp1_runs(levels=(0.3, 0.6, 0.9), seed=3, samples=800, agree=100)
        report = hypothesis1(runs, subset_size=200)
        assert report.pm_sub[0] > 0
        for series in report.scaled.values():
            assert max(series) == 1.0

    def test_identical_runs_excluded(self):
        runs = [constructed_run(0.0, samples=200, agree=200, seed=s, name=f"r{s}") for s in range(3)]
        report = hypothesis1(runs, subset_size=50)
        assert set(report.excluded) == {"r0", "r1", "r2"}
        assert report.verdict is None and report.notes

    def test_subset_ignores_activations(self):
        run = constructed_run(0.5, samples=300, agree=50, seed=1)
        idx = low_pm_subset(run.iid, 60)
        other = replace(run, activations={"fc1": [ActivationMatrix("fc1", np.ones((2, 300)) + np.arange(300), "x")]})
        np.testing.assert_array_equal(low_pm_subset(other.iid, 60), idx)
        vals = per_sample_pm(run.iid)
        assert vals[idx].max() <= np.delete(vals, idx).min()

    def test_subset_ties_by_index(self):
        t = PredictionTable(np.full((2, 6, 2), 0.5))
        np.testing.assert_array_equal(low_pm_subset(t, 3), [0, 1, 2])

    def test_default_subset_size(self):
        assert default_subset_size(500) == 125
        assert default_subset_size(10_000) == 1000

    def test_needs_two_runs(self):
        with pytest.raises(DataError):
            hypothesis1(constructed_hyp1_runs(levels=(0.5,)))


class TestCorrelationReport:
    def test_monotone_negative(self):
        runs = constructed_hyp1_runs(levels=(0.2, 0.5, 0.8, 1.1))
        rep = correlation_report(runs, "fc1")
        assert rep.pcc[IID] < 0
        assert rep.delta_svcca >= 0
        assert rep.svcca == sorted(rep.svcca, reverse=True)

    def test_two_runs(self):
        with pytest.raises(DataError, match="3"):
            correlation_report(constructed_hyp1_runs(levels=(0.2, 0.4)))

    def test_constant_series_undefined(self):
        runs = [constructed_run(0.0, samples=100, agree=100, seed=s, name=f"r{s}") for s in range(3)]
        rep = correlation_report(runs)
        assert rep.pcc[IID] is None


class TestConfabulationReport:
    def runs(self):
        # same seed, so both strategies share one evaluation set
        return [constructed_run(d, samples=300, agree=50, seed=5) for d in (0.4, 0.9)]

    def test_pooled_uses_all_variants(self):
        runs = self.runs()
        (listing,) = confabulation_report(runs, "pooled", 16)
        assert listing.variants == sum(len(r.seeds) for r in runs)
        assert len(listing.entries) == 16

    def test_per_strategy(self):
        listings = confabulation_report(self.runs(), "per_strategy", 5)
        assert [l.group for l in listings] == ["d0.4", "d0.9"]

    def test_degenerate(self):
        runs = [constructed_run(0.0, samples=40, agree=40, seed=1)]
        (listing,) = confabulation_report(runs, n=4)
        assert listing.degenerate and all(e.score == 0.0 for e in listing.entries)

    def test_matches_raw_label_recount(self):
        runs = self.runs()
        (listing,) = confabulation_report(runs, n=16)
        labels = np.concatenate([r.iid.labels for r in runs])
        for e in listing.entries:
            counts = np.bincount(labels[:, e.sample_index], minlength=4)
            p = counts[counts > 0] / counts.sum()
            assert e.score == pytest.approx(float(-(p * np.log(p)).sum()), abs=1e-12)
            assert e.label_histogram == tuple(counts)

    def test_empty(self):
        with pytest.raises(DataError):
            confabulation_report([])


class TestMeanSvcca:
    def test_single_variant(self):
        run = constructed_run(0.5, variants=1, samples=50, agree=10)
        with pytest.raises(DataError):
            mean_svcca(run, "fc1")
