"""Datasets: IDX files, a synthetic image generator, and evaluation-time OOD transforms."""

import hashlib
import re
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from repmult.errors import (
    BadMagicError,
    CountMismatchError,
    DataError,
    FormatError,
    ShapeError,
    TruncatedPayloadError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def fingerprint_bytes(*chunks):
    """64-bit BLAKE2b content hash rendered as 16 hex digits."""
    h = hashlib.blake2b(digest_size=8)
    for chunk in chunks:
        h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, C, H, W) in [0, 1]
    labels: np.ndarray  # (N,) int64
    classes: int
    split: str = "train"
    fingerprint: str = ""

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise ShapeError(f"images must be (N, C, H, W), got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise CountMismatchError(f"{images.shape[0]} images but {labels.size} labels")
        if not np.all(np.isfinite(images)) or (images.size and (images.min() < 0 or images.max() > 1)):
            raise DataError("pixels must be finite and lie in [0, 1]")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise DataError(f"labels must lie in [0, {self.classes})")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        if not self.fingerprint:
            object.__setattr__(self, "fingerprint", content_fingerprint(images, labels))

    def __len__(self):
        return self.labels.size

    @property
    def input_shape(self):
        return self.images.shape[1:]

    def take(self, indices, split=None):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.classes, split or self.split)


def content_fingerprint(images, labels):
    return fingerprint_bytes(np.ascontiguousarray(images).tobytes(), np.ascontiguousarray(labels).tobytes())


def split_dataset(d, n_test):
    """First ``len(d) - n_test`` samples for training, the rest as the test split."""
    if not 0 < n_test < len(d):
        raise ValueError(f"n_test must lie in (0, {len(d)})")
    cut = len(d) - n_test
    return d.take(np.arange(cut), "train"), d.take(np.arange(cut, len(d)), "test")


# -- IDX ---------------------------------------------------------------------------

def _parse_idx(raw, magic, ndim, path):
    if len(raw) < 4 + 4 * ndim:
        raise TruncatedPayloadError(f"{path}: truncated payload (header needs {4 + 4 * ndim} bytes, got {len(raw)})")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic mismatch (expected 0x{magic:08x}, found 0x{found:08x})")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    size = int(np.prod(dims))
    payload = raw[4 + 4 * ndim:]
    if len(payload) < size:
        raise TruncatedPayloadError(f"{path}: truncated payload ({len(payload)} of {size} bytes)")
    if len(payload) > size:
        raise FormatError(f"{path}: {len(payload) - size} trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, classes=None, split="train"):
    """Read an IDX image/label pair (unsigned-byte payloads).

    Pixels are scaled to [0, 1]; the fingerprint hashes both files' raw bytes.
    """
    raw_images = Path(images_path).read_bytes()
    raw_labels = Path(labels_path).read_bytes()
    images = _parse_idx(raw_images, IDX_IMAGES_MAGIC, 3, images_path)
    labels = _parse_idx(raw_labels, IDX_LABELS_MAGIC, 1, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"image/label count mismatch: {images.shape[0]} images, {labels.shape[0]} labels")
    if classes is None:
        classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(images[:, None].astype(np.float64) / 255.0, labels.astype(np.int64), classes, split,
                   fingerprint_bytes(raw_images, raw_labels))


def write_idx(d, images_path, labels_path):
    """Write a single-channel dataset as an IDX pair; pixels are rounded to bytes."""
    if d.images.shape[1] != 1:
        raise ShapeError("IDX export supports single-channel images only")
    n, _, h, w = d.images.shape
    pixels = np.rint(d.images[:, 0] * 255.0).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, n) + d.labels.astype(np.uint8).tobytes())


# -- synthetic data ------------------------------------------------------------------

def class_prototypes(classes, image_size, channels=1):
    """One blob-plus-stripe template per class, each scaled to unit max."""
    yy, xx = np.mgrid[0:image_size, 0:image_size] / max(image_size - 1, 1)
    protos = []
    for c in range(classes):
        angle = np.pi * c / classes
        cy = 0.5 + 0.3 * np.sin(2 * np.pi * c / classes)
        cx = 0.5 + 0.3 * np.cos(2 * np.pi * c / classes)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.03)
        stripe = 0.5 + 0.5 * np.cos(2 * np.pi * 2.5 * (xx * np.cos(angle) + yy * np.sin(angle)))
        img = 0.6 * blob + 0.4 * stripe
        img = img / img.max()
        protos.append(np.stack([img * (0.6 + 0.4 * ((c + ch) % channels == 0)) for ch in range(channels)]))
    return np.stack(protos)


def generate_synthetic(classes, samples, image_size=14, noise=0.5, seed=0, channels=1, split="train"):
    """Class-conditional blob/stripe images.

    Each sample is ``a * prototype[label]`` with a random amplitude ``a`` in
    [0.7, 1]. ``noise`` scales three corruptions: blending in another class's
    prototype (weight up to ``0.5 * noise``), a random shift of up to
    ``round(2 * noise)`` pixels, and Gaussian pixel noise with std ``0.3 * noise``.
    At ``noise=0`` the classes are linearly separable.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    protos = class_prototypes(classes, image_size, channels)
    labels = rng.integers(0, classes, size=samples)
    amp = rng.uniform(0.7, 1.0, size=samples)
    other = (labels + rng.integers(1, classes, size=samples)) % classes
    mix = rng.uniform(0.0, 0.5 * noise, size=samples)
    images = amp[:, None, None, None] * ((1 - mix)[:, None, None, None] * protos[labels]
                                         + mix[:, None, None, None] * protos[other])
    max_shift = int(round(2 * noise))
    if max_shift:
        shifts = rng.integers(-max_shift, max_shift + 1, size=(samples, 2))
        for i, (dy, dx) in enumerate(shifts):
            images[i] = np.roll(images[i], (dy, dx), axis=(1, 2))
    images = images + 0.3 * noise * rng.standard_normal(images.shape)
    return Dataset(np.clip(images, 0.0, 1.0), labels, classes, split)


# -- OOD transforms ------------------------------------------------------------------

ROTATION_RANGES = ((0, 20), (20, 30), (30, 40), (40, 50), (50, 60),
                   (60, 70), (70, 80), (80, 90), (90, 110))


@dataclass(frozen=True)
class OodTransform:
    """An evaluation-time distribution shift.

    kinds: ``xflip`` (flip with probability ``p``), ``pixelate`` (block-average
    down by ``factor`` then nearest upsample), ``jitter`` (brightness factor in
    ``1 +- brightness``, hue shift in ``+- hue`` for RGB inputs), ``rot``
    (angle uniform in ``[lo, hi]`` degrees).
    """

    kind: str
    p: float = 0.9
    factor: int = 2
    brightness: float = 0.3
    hue: float = 0.1
    lo: float = 0.0
    hi: float = 0.0

    @property
    def name(self):
        if self.kind == "rot":
            return f"rot{self.lo:g}-{self.hi:g}"
        return self.kind


def parse_transform(text):
    """``xflip``, ``pixelate``, ``jitter`` or ``rotLO-HI`` (degrees)."""
    text = text.strip()
    m = re.fullmatch(r"rot(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)", text)
    if m:
        return OodTransform("rot", lo=float(m.group(1)), hi=float(m.group(2)))
    if text in ("xflip", "pixelate", "jitter"):
        return OodTransform(text)
    raise ValueError(f"unknown OOD transform {text!r}")


def _pixelate(images, factor):
    n, c, h, w = images.shape
    ph, pw = -h % factor, -w % factor
    padded = np.pad(images, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape[2] // factor, padded.shape[3] // factor
    small = padded.reshape(n, c, hh, factor, ww, factor).mean(axis=(3, 5))
    big = np.repeat(np.repeat(small, factor, axis=2), factor, axis=3)
    return big[:, :, :h, :w]


def _rgb_to_hsv(rgb):
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    mx = rgb.max(axis=1)
    mn = rgb.min(axis=1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(mx == r, ((g - b) / safe) % 6.0,
                 np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0)) / 6.0
    h = np.where(delta > 0, h, 0.0)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return h, s, mx


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    i = i.astype(np.int64) % 6
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.zeros(h.shape + (3,))
    for k, (rr, gg, bb) in enumerate(choices):
        sel = i == k
        out[sel] = np.stack([rr[sel], gg[sel], bb[sel]], axis=-1)
    return np.moveaxis(out, -1, 1)


def apply_ood_transform(d, t, seed=0):
    """Apply ``t`` to every image of ``d``; labels and sample count are untouched."""
    if isinstance(t, str):
        t = parse_transform(t)
    rng = np.random.default_rng(seed)
    x = d.images.copy()
    if t.kind == "xflip":
        flip = rng.random(len(d)) < t.p
        x[flip] = x[flip][..., ::-1]
    elif t.kind == "pixelate":
        x = _pixelate(x, t.factor)
    elif t.kind == "jitter":
        factor = rng.uniform(1.0 - t.brightness, 1.0 + t.brightness, size=len(d))
        x = x * factor[:, None, None, None]
        if x.shape[1] == 3:
            shift = rng.uniform(-t.hue, t.hue, size=len(d))
            h, s, v = _rgb_to_hsv(np.clip(x, 0.0, 1.0))
            x = _hsv_to_rgb((h + shift[:, None, None]) % 1.0, s, v)
        # single-channel inputs: hue is undefined, brightness only
    elif t.kind == "rot":
        if not 0 <= t.lo <= t.hi:
            raise ValueError(f"invalid rotation range [{t.lo}, {t.hi}]")
        angles = rng.uniform(t.lo, t.hi, size=len(d))
        for i, angle in enumerate(angles):
            if angle != 0.0:
                x[i] = ndimage.rotate(x[i], angle, axes=(1, 2), reshape=False, order=1,
                                      mode="constant", cval=0.0)
    else:
        raise ValueError(f"unknown OOD transform {t.kind!r}")
    x = np.clip(x, 0.0, 1.0)
    return replace(d, images=x, split=f"{d.split}:{t.name}", fingerprint=content_fingerprint(x, d.labels))
