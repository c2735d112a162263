import numpy as np

from repmult.errors import TrainingDivergedError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class Adam:
    """Adam with bias correction; moment buffers mirror ``Network.parameter_arrays()``."""

    def __init__(self, params, beta1=BETA1, beta2=BETA2, eps=EPS):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        if lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {lr}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def flat_grads(model, grads):
    return [g[name] for g, p in zip(grads, model.params) for name in ("w", "b") if name in p]


def train_step(model, x, labels, adam, lr):
    """One Adam update on a mini-batch; returns the pre-update mean cross-entropy."""
    loss, grads = model.loss_and_grads(x, labels)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss ({loss}) at Adam step {adam.t + 1}")
    adam.step(model.parameter_arrays(), flat_grads(model, grads), lr)
    return loss
