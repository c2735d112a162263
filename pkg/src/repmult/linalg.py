"""Dense linear-algebra and statistics primitives.

Everything is computed in float64. Matrices are plain 2-D numpy arrays;
:func:`as_matrix` is the single validation gate used by the rest of the package.
"""

from typing import NamedTuple

import numpy as np

from repmult.errors import (
    AsymmetricMatrixError,
    DegenerateInputError,
    LengthMismatchError,
    NonFiniteError,
    ShapeError,
)


class SvdResult(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite, non-empty 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        bad = int(np.size(m) - np.count_nonzero(np.isfinite(m)))
        raise NonFiniteError(f"{name} contains {bad} non-finite entries")
    return m


def svd(a):
    """Thin SVD with a deterministic sign convention.

    The largest-magnitude entry of every left singular vector is made
    non-negative (first such entry on ties); the matching row of ``vt`` is
    flipped with it so the product is unchanged.
    """
    m = as_matrix(a)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    vt = vt * signs[:, None]
    return SvdResult(u, s, vt)


def truncate_by_variance(s, fraction=0.99):
    """Smallest ``k`` whose leading singular values explain ``fraction`` of the energy.

    Energy is measured on squared singular values.
    """
    s = np.asarray(s, dtype=np.float64).ravel()
    if s.size == 0:
        raise ShapeError("empty singular value vector")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("singular values must be non-negative and non-increasing")
    if s[0] == 0.0:
        raise DegenerateInputError("all singular values are zero; no variance to explain")
    r = s / s[0]  # rescale so tiny spectra do not underflow when squared
    energy = r * r
    total = energy.sum()
    ratio = np.cumsum(energy) / total
    # 1e-12 slack so fraction=1.0 is not lost to cumulative rounding
    k = int(np.searchsorted(ratio, fraction - 1e-12, side="left")) + 1
    return min(k, s.size)


def inv_sqrt_psd(c, eps=1e-12):
    """Pseudo-inverse square root of a symmetric PSD matrix.

    Eigenvalues below ``eps`` (absolute) are mapped to zero instead of being
    inverted, so ``R @ c @ R`` is the projector onto the retained eigenspace.
    """
    c = as_matrix(c)
    if c.shape[0] != c.shape[1]:
        raise ShapeError(f"expected a square matrix, got {c.shape}")
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.max(np.abs(c - c.T)) > 1e-10 * scale:
        raise AsymmetricMatrixError("matrix is not symmetric within 1e-10")
    w, v = np.linalg.eigh((c + c.T) / 2.0)
    if w.min() < -1e-10 * scale:
        raise DegenerateInputError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    keep = w > eps
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ v.T


def pearson(x, y):
    """Product-moment correlation of two equal-length vectors, clamped to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise LengthMismatchError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteError("non-finite values in correlation input")
    for name, v in (("x", x), ("y", y)):
        if np.all(v == v[0]):
            raise DegenerateInputError(f"{name} is constant; correlation undefined")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))
