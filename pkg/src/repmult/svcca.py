"""SVCCA similarity between two layers' activations.

Activations are neuron-by-sample matrices: row ``j`` holds neuron ``j``'s
output over every sample of one evaluation set. The pipeline is

1. subtract each neuron's mean,
2. SVD each side and keep the leading directions that explain
   ``variance_fraction`` of the energy,
3. CCA between the two reduced subspaces (whitened cross-covariance, then SVD),
4. average the ``top_t`` largest canonical correlations.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from repmult.errors import AlignmentError, DegenerateInputError, ShapeError
from repmult.linalg import as_matrix, inv_sqrt_psd, svd, truncate_by_variance

DEFAULT_VARIANCE_FRACTION = 0.99
DEFAULT_TOP_T = 20
WHITEN_RTOL = 1e-12


@dataclass(frozen=True)
class ActivationMatrix:
    layer_name: str
    values: np.ndarray
    fingerprint: str = ""

    def __post_init__(self):
        values = as_matrix(self.values, name=f"activations[{self.layer_name}]")
        if values.shape[1] < 2:
            raise ShapeError(f"need at least 2 samples, got {values.shape[1]}")
        object.__setattr__(self, "values", values)

    @property
    def neurons(self):
        return self.values.shape[0]

    @property
    def samples(self):
        return self.values.shape[1]

    def subset(self, indices):
        """Restrict to a subset of samples; the fingerprint records the selection."""
        idx = np.asarray(indices, dtype=np.int64)
        tag = f"{self.fingerprint}[{_index_digest(idx)}]"
        return replace(self, values=self.values[:, idx], fingerprint=tag)


@dataclass(frozen=True)
class CcaSpectrum:
    correlations: np.ndarray
    k1: int
    k2: int
    warnings: tuple = field(default=())


def _index_digest(idx):
    return hashlib.blake2b(np.ascontiguousarray(idx).tobytes(), digest_size=8).hexdigest()


def center_rows(z):
    """Subtract each neuron's mean activation."""
    v = z.values - z.values.mean(axis=1, keepdims=True)
    return replace(z, values=v)


def _reduced_subspace(values, fraction):
    u, s, vt = svd(values)
    k = truncate_by_variance(s, fraction)
    return s[:k, None] * vt[:k], k


def svcca_correlations(z1, z2, variance_fraction=DEFAULT_VARIANCE_FRACTION):
    """Canonical correlations between the variance-truncated subspaces of two layers."""
    if z1.samples != z2.samples:
        raise AlignmentError(
            f"sample alignment violated: {z1.samples} vs {z2.samples} samples"
        )
    if z1.fingerprint != z2.fingerprint:
        raise AlignmentError(
            f"sample alignment violated: fingerprint {z1.fingerprint!r} != {z2.fingerprint!r}"
        )
    n = z1.samples
    a, k1 = _reduced_subspace(center_rows(z1).values, variance_fraction)
    b, k2 = _reduced_subspace(center_rows(z2).values, variance_fraction)
    notes = []
    # centering removes one degree of freedom, so the retained rank never exceeds N - 1
    if n - 1 <= max(k1, k2):
        notes.append(f"rank-deficient regime: N-1={n - 1} <= max(k1={k1}, k2={k2})")

    sxx = a @ a.T / (n - 1)
    syy = b @ b.T / (n - 1)
    sxy = a @ b.T / (n - 1)
    wx = inv_sqrt_psd(sxx, WHITEN_RTOL * float(np.max(np.diag(sxx))))
    wy = inv_sqrt_psd(syy, WHITEN_RTOL * float(np.max(np.diag(syy))))
    rho = np.linalg.svd(wx @ sxy @ wy, compute_uv=False)
    rho = np.clip(rho, 0.0, 1.0)
    return CcaSpectrum(correlations=rho[: min(k1, k2)], k1=k1, k2=k2, warnings=tuple(notes))


def svcca_similarity(spectrum, top_t=DEFAULT_TOP_T):
    """Mean of the ``top_t`` largest canonical correlations (fewer if fewer exist)."""
    if top_t < 1:
        raise ValueError(f"top_t must be >= 1, got {top_t}")
    rho = np.asarray(spectrum.correlations, dtype=np.float64)
    if rho.size == 0:
        raise DegenerateInputError("empty CCA spectrum")
    top = np.sort(rho)[::-1][:top_t]
    return float(top.mean())


def svcca(z1, z2, variance_fraction=DEFAULT_VARIANCE_FRACTION, top_t=DEFAULT_TOP_T):
    """Convenience wrapper: similarity of two activation matrices."""
    return svcca_similarity(svcca_correlations(z1, z2, variance_fraction), top_t)
