"""Experiment configuration: INI-style ``key = value`` sections layered over a preset.

Sections: ``[data]``, ``[ood]``, ``[network]``, ``[training]``, ``[analysis]``
and optional ``[strategy:<name>]`` sections that replace the regime sweep with
explicitly listed strategies (each may override ``learning_rate`` and
``batch_size``). See ``configs/desk.ini`` for a complete file.
"""

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from repmult.errors import ConfigError
from repmult.experiments.presets import PRESETS, REGIME_VALUES
from repmult.experiments.runs import DataBundle, strategies_for
from repmult.trainer.data import generate_synthetic, load_idx, parse_transform, split_dataset
from repmult.trainer.network import desk_spec, paper_spec
from repmult.trainer.train import TrainingStrategy


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text):
    return [int(v) for v in text.replace(",", " ").split()]


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    preset: str
    sections: dict
    explicit: dict = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section, key):
        value = self.get(section, key)
        if value in (None, ""):
            raise ConfigError(f"missing required setting [{section}] {key}")
        return value

    # -- typed accessors -----------------------------------------------------------

    @property
    def regime(self):
        return self.require("training", "regime")

    @property
    def values(self):
        raw = self.get("training", "values")
        if raw:
            return _floats(raw) if self.regime == "learning_rate" else _ints(raw)
        return list(REGIME_VALUES[self.preset][self.regime])

    @property
    def seeds(self):
        return _ints(self.require("training", "seeds"))

    @property
    def workers(self):
        return int(self.get("training", "workers", "1"))

    @property
    def taps(self):
        return _names(self.get("analysis", "taps", "cnn, fc1"))

    @property
    def transforms(self):
        return [parse_transform(t) for t in _names(self.get("ood", "transforms", ""))]

    @property
    def variance_fraction(self):
        return float(self.get("analysis", "variance_fraction", "0.99"))

    @property
    def top_t(self):
        return int(self.get("analysis", "top_t", "20"))

    @property
    def subset_size(self):
        raw = self.get("analysis", "subset_size")
        return int(raw) if raw else None

    def base_strategy(self):
        t = self.sections.get("training", {})
        target = t.get("target_accuracy")
        eval_every = t.get("eval_every")
        try:
            return TrainingStrategy(
                name="base",
                regime=self.regime,
                learning_rate=float(self.require("training", "learning_rate")),
                batch_size=int(self.require("training", "batch_size")),
                seeds=tuple(self.seeds),
                stopping=t.get("stopping", "risk_band"),
                target_accuracy=float(target) if target else None,
                epsilon=float(t.get("epsilon", "0.01")),
                max_epochs=int(t.get("max_epochs", "50")),
                eval_every=int(eval_every) if eval_every else None,
                min_agreeing=int(t.get("min_agreeing", "5")),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def strategies(self):
        base = self.base_strategy()
        if not self.explicit:
            return strategies_for(self.regime, self.values, base)
        out = []
        for name, overrides in self.explicit.items():
            out.append(replace(
                base,
                name=name,
                learning_rate=float(overrides.get("learning_rate", base.learning_rate)),
                batch_size=int(overrides.get("batch_size", base.batch_size)),
            ))
        return out

    def strategy(self, name):
        for s in self.strategies():
            if s.name == name:
                return s
        raise ConfigError(f"no strategy named {name!r}; known: {[s.name for s in self.strategies()]}")

    def datasets(self, seed=None):
        d = self.sections.get("data", {})
        source = d.get("source", "synthetic")
        if source == "synthetic":
            full = generate_synthetic(
                classes=int(d.get("classes", "4")),
                samples=int(d.get("samples", "2000")),
                image_size=int(d.get("image_size", "14")),
                noise=float(d.get("noise", "0.8")),
                seed=int(d.get("seed", "0")) if seed is None else seed,
                channels=int(d.get("channels", "1")),
            )
            train, test = split_dataset(full, int(d.get("test_samples", "500")))
        elif source == "idx":
            classes = int(d["classes"]) if d.get("classes") else None
            train = load_idx(self.require("data", "train_images"), self.require("data", "train_labels"),
                             classes, "train")
            test = load_idx(self.require("data", "test_images"), self.require("data", "test_labels"),
                            classes or train.classes, "test")
            if d.get("train_subset"):
                train = train.take(range(int(d["train_subset"])), "train")
            if d.get("test_subset"):
                test = test.take(range(int(d["test_subset"])), "test")
        else:
            raise ConfigError(f"unknown data source {source!r}")
        return DataBundle.build(train, test, self.transforms, int(self.get("ood", "seed", "0")))

    def network(self, input_shape, classes):
        arch = self.get("network", "arch", "desk")
        if arch == "desk":
            return desk_spec(input_shape, classes, int(self.get("network", "hidden", "64")))
        if arch == "paper":
            return paper_spec(input_shape, classes)
        raise ConfigError(f"unknown network arch {arch!r}")


def load_config(path=None, preset="desk", overrides=None):
    """Merge ``preset`` defaults, the file at ``path`` (if any) and ``overrides``."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    sections = {k: dict(v) for k, v in PRESETS[preset].items()}
    explicit = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(Path(path)) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for name in parser.sections():
            if name.startswith("strategy:"):
                explicit[name.split(":", 1)[1].strip()] = dict(parser[name])
            else:
                sections.setdefault(name, {}).update(parser[name])
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            sections.setdefault(section, {})[key] = str(value)
    return ExperimentConfig(preset, sections, explicit)
