"""Hand-built ensembles with known multiplicity structure.

Used to exercise the Hypothesis-1 pipeline without training: every variant
agrees exactly on a fixed block of samples, yet its internal activations are a
rotated, noise-perturbed copy of a shared latent representation.
"""

import numpy as np

from repmult.experiments.runs import IID, EnsembleRun
from repmult.multiplicity import PredictionTable
from repmult.svcca import ActivationMatrix
from repmult.trainer.network import softmax


def random_rotation(rng, m):
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def constructed_run(diversity, variants=4, samples=2000, neurons=12, classes=4, agree=500, seed=0,
                    tap="fc1", name=None, data_seed=None):
    """One synthetic ensemble whose RM and off-subset PM both grow with ``diversity``.

    The first ``agree`` samples receive identical probability vectors from
    every variant, so PM is exactly zero there. Activations of variant ``k``
    are ``R_k (A + diversity * E_k) + b_k`` for a shared latent ``A``, a random
    rotation ``R_k``, Gaussian noise ``E_k`` and per-neuron offsets ``b_k``.
    ``data_seed`` (default ``seed``) fixes ``A``, the base logits and the
    evaluation-set fingerprint; ``seed`` drives the per-variant randomness.
    """
    data_seed = seed if data_seed is None else data_seed
    data_rng = np.random.default_rng([data_seed, 0])
    latent = data_rng.standard_normal((neurons, samples))
    base_logits = 3.0 * data_rng.standard_normal((samples, classes))
    fingerprint = f"constructed-{data_seed}"
    rng = np.random.default_rng([seed, 1])
    probs, acts = [], []
    for _ in range(variants):
        logits = base_logits + diversity * 2.0 * rng.standard_normal((samples, classes))
        logits[:agree] = base_logits[:agree]
        probs.append(softmax(logits))
        z = random_rotation(rng, neurons) @ (latent + diversity * rng.standard_normal(latent.shape))
        z += rng.standard_normal((neurons, 1))
        acts.append(ActivationMatrix(tap, z, fingerprint))
    return EnsembleRun(
        name=name or f"d{diversity:g}",
        regime="constructed",
        value=float(diversity),
        seeds=list(range(variants)),
        accuracies=[float("nan")] * variants,
        tables={IID: PredictionTable.stack(probs, fingerprint)},
        activations={tap: acts},
    )


def constructed_hyp1_runs(levels=(0.2, 0.4, 0.6, 0.8, 1.0), seed=0, **kwargs):
    """One constructed run per diversity level over a shared evaluation set."""
    return [constructed_run(d, seed=seed * 1000 + i, data_seed=seed, **kwargs) for i, d in enumerate(levels)]
