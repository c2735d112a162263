"""Small feed-forward CNNs in numpy: valid 2-D convolution, ReLU, 2x2 max-pool,
flatten and dense layers, with a softmax cross-entropy head.

Shapes follow the NCHW convention. Dense weights are stored ``(out, in)``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from repmult.errors import ShapeError

LAYER_KINDS = ("conv2d", "relu", "maxpool", "flatten", "dense")


@dataclass(frozen=True)
class NetworkSpec:
    """Layer list plus named tap points.

    Layers are tuples: ``("conv2d", in_ch, out_ch, kernel)``, ``("relu",)``,
    ``("maxpool",)``, ``("flatten",)`` or ``("dense", in, out)``. A tap named
    ``name`` captures the output of layer ``taps[name]``. When ``taps`` is
    empty, ``cnn`` (last conv) and ``fc1`` (first dense) are used.
    """

    input_shape: tuple
    layers: tuple
    taps: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))
        if not self.taps:
            object.__setattr__(self, "taps", default_taps(self.layers))
        shapes = self.shapes()
        if not self.taps:
            raise ShapeError("network spec declares no tap points")
        for name, idx in self.taps.items():
            if not 0 <= idx < len(self.layers):
                raise ShapeError(f"tap {name!r} points at missing layer {idx}")
        if len(shapes[-1]) != 1:
            raise ShapeError(f"network output must be a vector, got shape {shapes[-1]}")

    @property
    def classes(self):
        return self.shapes()[-1][0]

    def shapes(self):
        """Per-sample output shape after every layer; validates composition."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            kind = layer[0]
            where = f"layer {i} ({kind})"
            if kind == "conv2d":
                _, cin, cout, k = layer
                if len(shape) != 3 or shape[0] != cin:
                    raise ShapeError(f"{where}: expects {cin} input channels, got shape {shape}")
                h, w = shape[1] - k + 1, shape[2] - k + 1
                if h < 1 or w < 1:
                    raise ShapeError(f"{where}: kernel {k} larger than input {shape[1:]}")
                shape = (cout, h, w)
            elif kind == "maxpool":
                if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
                    raise ShapeError(f"{where}: cannot pool shape {shape}")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif kind == "relu":
                pass
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif kind == "dense":
                _, fin, fout = layer
                if len(shape) != 1 or shape[0] != fin:
                    raise ShapeError(f"{where}: expects {fin} inputs, got shape {shape}")
                shape = (fout,)
            else:
                raise ShapeError(f"{where}: unknown layer kind")
            out.append(shape)
        return out


def default_taps(layers):
    taps = {}
    convs = [i for i, layer in enumerate(layers) if layer[0] == "conv2d"]
    denses = [i for i, layer in enumerate(layers) if layer[0] == "dense"]
    if convs:
        taps["cnn"] = convs[-1]
    if denses:
        taps["fc1"] = denses[0]
    return taps


def desk_spec(input_shape, classes, hidden=64):
    """conv(C,8,3)-ReLU-pool-conv(8,16,3)-ReLU-pool-flatten-dense(.,hidden)-dense(hidden,classes)."""
    c = input_shape[0]
    layers = [("conv2d", c, 8, 3), ("relu",), ("maxpool",),
              ("conv2d", 8, 16, 3), ("relu",), ("maxpool",), ("flatten",)]
    flat = NetworkSpec(input_shape, layers, {"cnn": 3}).shapes()[-1][0]
    layers += [("dense", flat, hidden), ("dense", hidden, classes)]
    return NetworkSpec(input_shape, layers)


def paper_spec(input_shape, classes):
    """The four-conv architecture used for the MNIST-family and CIFAR experiments."""
    c = input_shape[0]
    layers = [("conv2d", c, 48, 3), ("relu",), ("maxpool",),
              ("conv2d", 48, 96, 3), ("relu",), ("maxpool",),
              ("conv2d", 96, 80, 3), ("relu",),
              ("conv2d", 80, 96, 3), ("relu",), ("flatten",)]
    flat = NetworkSpec(input_shape, layers, {"cnn": 9}).shapes()[-1][0]
    layers += [("dense", flat, 512), ("dense", 512, classes)]
    return NetworkSpec(input_shape, layers)


# -- layer kernels ---------------------------------------------------------------

def conv2d_forward(x, w, b):
    """Valid, stride-1 convolution via an explicit im2col matrix (returned for backward)."""
    bsz = x.shape[0]
    o, k = w.shape[0], w.shape[-1]
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (B, C, Ho, Wo, k, k)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, -1)
    out = cols @ w.reshape(o, -1).T + b
    return out.reshape(bsz, ho, wo, o).transpose(0, 3, 1, 2), cols


def conv2d_backward(g, x, w, cols):
    o, c, k = w.shape[0], w.shape[1], w.shape[-1]
    bsz, _, ho, wo = g.shape
    g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (g2.T @ cols).reshape(w.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ w.reshape(o, -1)).reshape(bsz, ho, wo, c, k, k)
    dx = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def maxpool_forward(x):
    bsz, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    blocks = (x[:, :, :h2 * 2, :w2 * 2]
              .reshape(bsz, c, h2, 2, w2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(bsz, c, h2, w2, 4))
    arg = blocks.argmax(axis=-1)  # first max on ties
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(g, x_shape, arg):
    bsz, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    routed = np.zeros((bsz, c, h2, w2, 4))
    np.put_along_axis(routed, arg[..., None], g[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, :h2 * 2, :w2 * 2] = (routed.reshape(bsz, c, h2, w2, 2, 2)
                                  .transpose(0, 1, 2, 4, 3, 5)
                                  .reshape(bsz, c, h2 * 2, w2 * 2))
    return dx


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(logsumexp - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / len(labels)


# -- model -------------------------------------------------------------------------

@dataclass
class ForwardResult:
    taps: dict
    logits: np.ndarray
    probs: np.ndarray


class Network:
    """Parameters for a :class:`NetworkSpec`; ``params[i]`` holds layer ``i``'s ``w``/``b``."""

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params
        self._cache = None

    def parameter_arrays(self):
        """Flat list of parameter arrays in a fixed order (layer, then w before b)."""
        return [p[name] for p in self.params for name in ("w", "b") if name in p]

    def copy(self):
        return Network(self.spec, [{k: v.copy() for k, v in p.items()} for p in self.params])

    def forward(self, x, keep_cache=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"batch shape {x.shape[1:]} does not match input {self.spec.input_shape}")
        tap_at = {idx: name for name, idx in self.spec.taps.items()}
        taps, cache = {}, []
        for i, layer in enumerate(self.spec.layers):
            kind, p = layer[0], self.params[i]
            inp = x
            if kind == "conv2d":
                x, aux = conv2d_forward(x, p["w"], p["b"])
            elif kind == "relu":
                aux = x > 0
                x = x * aux
            elif kind == "maxpool":
                x, aux = maxpool_forward(x)
            elif kind == "flatten":
                aux = x.shape
                x = x.reshape(x.shape[0], -1)
            else:
                aux = None
                x = x @ p["w"].T + p["b"]
            if keep_cache:
                cache.append((inp, aux))
            if i in tap_at:
                taps[tap_at[i]] = x.reshape(x.shape[0], -1)
        self._cache = cache if keep_cache else None
        return ForwardResult(taps=taps, logits=x, probs=softmax(x))

    def backward(self, dlogits):
        """Gradients for every layer, aligned with ``self.params``; needs a cached forward."""
        if self._cache is None:
            raise RuntimeError("backward() requires forward(..., keep_cache=True)")
        g = dlogits
        grads = [dict() for _ in self.params]
        for i in range(len(self.spec.layers) - 1, -1, -1):
            kind, p = self.spec.layers[i][0], self.params[i]
            inp, aux = self._cache[i]
            if kind == "conv2d":
                g, grads[i]["w"], grads[i]["b"] = conv2d_backward(g, inp, p["w"], aux)
            elif kind == "relu":
                g = g * aux
            elif kind == "maxpool":
                g = maxpool_backward(g, inp.shape, aux)
            elif kind == "flatten":
                g = g.reshape(aux)
            else:
                grads[i]["w"] = g.T @ inp
                grads[i]["b"] = g.sum(axis=0)
                g = g @ p["w"]
        self._cache = None
        return grads

    def loss_and_grads(self, x, labels):
        out = self.forward(x, keep_cache=True)
        loss, dlogits = cross_entropy(out.logits, labels)
        return loss, self.backward(dlogits)


def init_network(spec, seed):
    """He fan-in normal weights, zero biases; deterministic in ``(spec, seed)``."""
    spec.shapes()
    rng = np.random.default_rng([int(seed), 0])
    params = []
    for layer in spec.layers:
        kind = layer[0]
        if kind == "conv2d":
            _, cin, cout, k = layer
            fan_in = cin * k * k
            params.append({"w": rng.standard_normal((cout, cin, k, k)) * np.sqrt(2.0 / fan_in),
                           "b": np.zeros(cout)})
        elif kind == "dense":
            _, fin, fout = layer
            params.append({"w": rng.standard_normal((fout, fin)) * np.sqrt(2.0 / fin),
                           "b": np.zeros(fout)})
        else:
            params.append({})
    return Network(spec, params)


def forward(model, batch):
    return model.forward(batch)
