"""Seed-controlled training of risk-equivalent model variants."""

from dataclasses import dataclass, field

import numpy as np

from repmult.errors import DataError, TargetUnreachableError
from repmult.svcca import ActivationMatrix
from repmult.trainer.network import init_network
from repmult.trainer.optim import Adam, train_step

REGIMES = ("learning_rate", "batch_size")
STOPPING = ("risk_band", "pseudo_max")
EVAL_BATCH = 500


@dataclass(frozen=True)
class TrainingStrategy:
    name: str
    regime: str
    learning_rate: float
    batch_size: int
    seeds: tuple = tuple(range(10))
    stopping: str = "risk_band"
    target_accuracy: float = None
    epsilon: float = 0.01
    max_epochs: int = 50
    # Extra evaluation cadence in steps; None keeps the per-epoch schedule
    # (plus every 200 steps for batch_size >= 256).
    eval_every: int = None
    min_agreeing: int = 5

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.stopping not in STOPPING:
            raise ValueError(f"stopping must be one of {STOPPING}, got {self.stopping!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {self.seeds}")
        if self.stopping == "risk_band" and self.target_accuracy is None:
            raise ValueError("risk_band stopping needs target_accuracy")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    @property
    def value(self):
        return self.learning_rate if self.regime == "learning_rate" else self.batch_size

    def eval_points(self, steps_per_epoch):
        """Step indices (1-based, within an epoch) after which accuracy is checked."""
        points = {steps_per_epoch}
        if self.batch_size >= 256:
            points.update(range(200, steps_per_epoch, 200))
        if self.eval_every:
            points.update(range(self.eval_every, steps_per_epoch, self.eval_every))
        return points


@dataclass
class Checkpoint:
    step: int
    epoch: int
    accuracy: float
    model: object = None


@dataclass
class VariantResult:
    seed: int
    accuracy: float
    step: int
    epoch: int
    model: object
    probs: np.ndarray = None
    activations: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    best_accuracy: float = 0.0


def predict(model, dataset, batch=EVAL_BATCH):
    """Probabilities and flattened tap activations over a dataset, in sample order."""
    probs, taps = [], {name: [] for name in model.spec.taps}
    for start in range(0, len(dataset), batch):
        out = model.forward(dataset.images[start:start + batch])
        probs.append(out.probs)
        for name, a in out.taps.items():
            taps[name].append(a)
    return np.concatenate(probs), {name: np.concatenate(v) for name, v in taps.items()}


def evaluate_accuracy(model, dataset):
    if len(dataset) == 0:
        raise DataError("cannot evaluate accuracy on an empty dataset")
    correct = 0
    for start in range(0, len(dataset), EVAL_BATCH):
        out = model.forward(dataset.images[start:start + EVAL_BATCH])
        correct += int(np.sum(out.logits.argmax(axis=1) == dataset.labels[start:start + EVAL_BATCH]))
    return correct / len(dataset)


def variant_outputs(model, test_set):
    probs, taps = predict(model, test_set)
    acts = {name: ActivationMatrix(name, a.T, test_set.fingerprint) for name, a in taps.items()}
    return probs, acts


def train_variant(strategy, seed, spec, train_set, test_set):
    """Train one variant until it enters the risk band (or to ``max_epochs`` in pseudo-max mode).

    In risk-band mode the returned variant carries its test-set probabilities
    and tap activations. In pseudo-max mode every evaluation is checkpointed
    and the outputs are filled in later by :func:`select_pseudo_max`.
    """
    band = strategy.stopping == "risk_band"
    if band and strategy.target_accuracy - strategy.epsilon >= 1.0:
        raise TargetUnreachableError(
            f"target unreachable: accuracy {strategy.target_accuracy} cannot be attained", 0.0)
    model = init_network(spec, seed)
    adam = Adam(model.parameter_arrays())
    order_rng = np.random.default_rng([int(seed), 1])
    n = len(train_set)
    bsz = min(strategy.batch_size, n)
    steps_per_epoch = -(-n // bsz)
    checks = strategy.eval_points(steps_per_epoch)
    history, best, step = [], 0.0, 0
    for epoch in range(1, strategy.max_epochs + 1):
        order = order_rng.permutation(n)
        for j in range(steps_per_epoch):
            idx = order[j * bsz:(j + 1) * bsz]
            train_step(model, train_set.images[idx], train_set.labels[idx], adam, strategy.learning_rate)
            step += 1
            if j + 1 not in checks:
                continue
            acc = evaluate_accuracy(model, test_set)
            best = max(best, acc)
            if band:
                history.append(Checkpoint(step, epoch, acc))
                if abs(acc - strategy.target_accuracy) < strategy.epsilon:
                    probs, acts = variant_outputs(model, test_set)
                    return VariantResult(seed, acc, step, epoch, model, probs, acts, history, best)
            else:
                history.append(Checkpoint(step, epoch, acc, model.copy()))
    if band:
        raise TargetUnreachableError(
            f"target unreachable: seed {seed} never reached {strategy.target_accuracy}"
            f" +- {strategy.epsilon} (best {best:.4f})", best)
    last = history[-1]
    return VariantResult(seed, last.accuracy, last.step, last.epoch, model, history=history, best_accuracy=best)


def pseudo_max_accuracy(results, min_agreeing=5):
    """Highest accuracy that at least ``min(min_agreeing, K)`` variants reached."""
    need = min(min_agreeing, len(results))
    bests = sorted((r.best_accuracy for r in results), reverse=True)
    return bests[need - 1]


def select_pseudo_max(results, test_set, min_agreeing=5):
    """Keep the variants that reach the pseudo-maximum, each at its first crossing checkpoint."""
    level = pseudo_max_accuracy(results, min_agreeing)
    selected = []
    for r in results:
        cross = next((c for c in r.history if c.accuracy >= level), None)
        if cross is None:
            continue
        probs, acts = variant_outputs(cross.model, test_set)
        selected.append(VariantResult(r.seed, cross.accuracy, cross.step, cross.epoch, cross.model,
                                      probs, acts, r.history, r.best_accuracy))
    return level, selected
