"""On-disk layout for ensemble runs.

::

    <root>/
      sweep.json                      strategy order of the sweep
      <strategy>/
        strategy.json                 written last; "complete" marks a finished run
        seed_<s>/
          meta.json                   seed, accuracy at the stopping checkpoint
          probs_<evalset>.mtx         N x C probabilities per evaluation set
          act_<tap>.mtx               M x N activations on the i.i.d. test set
          checkpoint/spec.json        network spec
          checkpoint/layer<i>_<w|b>.mtx

External trainers can produce the same layout (checkpoints optional) and use
the ``pm``/``rm``/``confab``/``hyp1``/``report`` commands on it.
"""

import json
from dataclasses import asdict
from pathlib import Path

from repmult.errors import DataError, FormatError
from repmult.experiments.runs import IID, EnsembleRun
from repmult.io.mtx import read_matrix, write_matrix
from repmult.multiplicity import PredictionTable
from repmult.svcca import ActivationMatrix
from repmult.trainer.network import Network, NetworkSpec
from repmult.trainer.train import TrainingStrategy


REQUIRED_KEYS = ("name", "regime", "value", "seeds", "eval_sets", "taps")


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_checkpoint(model, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = model.spec
    _dump_json({"input_shape": list(spec.input_shape), "layers": [list(l) for l in spec.layers],
                "taps": spec.taps}, directory / "spec.json")
    for i, p in enumerate(model.params):
        for key, arr in sorted(p.items()):
            write_matrix(arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr[None, :],
                         directory / f"layer{i}_{key}.mtx")


def load_checkpoint(directory):
    directory = Path(directory)
    meta = json.loads((directory / "spec.json").read_text())
    spec = NetworkSpec(tuple(meta["input_shape"]), tuple(tuple(l) for l in meta["layers"]), meta["taps"])
    params = []
    for i, layer in enumerate(spec.layers):
        p = {}
        if layer[0] == "conv2d":
            _, cin, cout, k = layer
            p["w"] = read_matrix(directory / f"layer{i}_w.mtx").reshape(cout, cin, k, k)
            p["b"] = read_matrix(directory / f"layer{i}_b.mtx").ravel()
        elif layer[0] == "dense":
            p["w"] = read_matrix(directory / f"layer{i}_w.mtx")
            p["b"] = read_matrix(directory / f"layer{i}_b.mtx").ravel()
        params.append(p)
    return Network(spec, params)


class RunStore:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, name):
        return self.root / name

    def is_complete(self, name):
        f = self.path(name) / "strategy.json"
        return f.exists() and json.loads(f.read_text()).get("complete", False)

    def names(self):
        index = self.root / "sweep.json"
        if index.exists():
            return json.loads(index.read_text())["strategies"]
        return sorted(p.parent.name for p in self.root.glob("*/strategy.json"))

    def save(self, run):
        d = self.path(run.name)
        d.mkdir(parents=True, exist_ok=True)
        (d / "strategy.json").unlink(missing_ok=True)
        for k, seed in enumerate(run.seeds):
            sd = d / f"seed_{seed}"
            sd.mkdir(exist_ok=True)
            _dump_json({"seed": seed, "accuracy": run.accuracies[k]}, sd / "meta.json")
            for eval_name, table in run.tables.items():
                write_matrix(table.probs[k], sd / f"probs_{eval_name}.mtx")
            for tap, zs in run.activations.items():
                write_matrix(zs[k].values, sd / f"act_{tap}.mtx")
            if run.models:
                save_checkpoint(run.models[k], sd / "checkpoint")
        meta = {
            "name": run.name,
            "regime": run.regime,
            "value": run.value,
            "seeds": run.seeds,
            "accuracies": run.accuracies,
            "failed": {str(k): v for k, v in run.failed.items()},
            "eval_sets": {e: t.dataset_fingerprint for e, t in run.tables.items()},
            "taps": sorted(run.activations),
            "pseudo_max": run.pseudo_max,
            "notes": run.notes,
            "strategy": asdict(run.strategy) if run.strategy is not None else None,
            "complete": run.complete,
        }
        _dump_json(meta, d / "strategy.json")
        self._index(run.name)

    def _index(self, name):
        index = self.root / "sweep.json"
        names = json.loads(index.read_text())["strategies"] if index.exists() else []
        if name not in names:
            names.append(name)
        _dump_json({"strategies": names}, index)

    def load(self, name, with_models=False):
        d = self.path(name)
        f = d / "strategy.json"
        if not f.exists():
            raise FormatError(f"{d}: not a run directory (missing strategy.json)")
        try:
            meta = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{f}: invalid JSON ({exc})") from exc
        missing = [k for k in REQUIRED_KEYS if k not in meta]
        if missing:
            raise FormatError(f"{f}: missing keys {missing}")
        seeds = meta["seeds"]
        if not seeds:
            raise DataError(f"{d}: run has no successful variants")
        tables = {}
        for e, fp in meta["eval_sets"].items():
            tables[e] = PredictionTable.stack([read_matrix(d / f"seed_{s}" / f"probs_{e}.mtx") for s in seeds], fp)
        iid_fp = meta["eval_sets"].get(IID, "")
        activations = {
            tap: [ActivationMatrix(tap, read_matrix(d / f"seed_{s}" / f"act_{tap}.mtx"), iid_fp) for s in seeds]
            for tap in meta["taps"]
        }
        models = []
        if with_models:
            models = [load_checkpoint(d / f"seed_{s}" / "checkpoint") for s in seeds]
        return EnsembleRun(
            name=meta["name"],
            regime=meta["regime"],
            value=meta["value"],
            seeds=seeds,
            accuracies=meta.get("accuracies") or [float("nan")] * len(seeds),
            tables=tables,
            activations=activations,
            strategy=TrainingStrategy(**meta["strategy"]) if meta.get("strategy") else None,
            failed={int(k): v for k, v in meta.get("failed", {}).items()},
            models=models,
            pseudo_max=meta.get("pseudo_max"),
            notes=meta.get("notes", []),
        )

    def load_all(self):
        names = self.names()
        if not names:
            raise FormatError(f"{self.root}: no runs found")
        return [self.load(n) for n in names]
