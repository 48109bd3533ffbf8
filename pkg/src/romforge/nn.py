"""Small reverse-mode neural network engine in float64.

Tensors are numpy arrays with a leading batch axis; image tensors are laid
out ``(batch, height, width, channels)``. Convolution kernels follow the
``(k, k, in_channels, out_channels)`` convention; transposed-convolution
kernels are ``(k, k, out_channels, in_channels)`` so that a transposed
convolution is exactly the adjoint of the convolution with the same kernel.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from romforge.errors import ContractError
from romforge.io import atomic_write_bytes, atomic_write_text, check_magic, f64_bytes, pack_header

__all__ = [
    "LayerSpec",
    "Network",
    "AdamState",
    "adam_step",
    "forward",
    "backward",
    "init_he_uniform",
    "share_flat_buffer",
    "flatten_grads",
    "init_glorot_normal",
    "conv2d",
    "conv2d_transpose",
    "elu",
    "save_network",
    "load_network",
]

ACTIVATIONS = ("elu", "tanh", "none")
KINDS = ("dense", "conv2d", "conv2d_transpose", "reshape")


def elu(x):
    # expm1(x) >= x, so the max picks x for x > 0 and expm1(x) otherwise
    return np.maximum(x, np.expm1(np.minimum(x, 0.0)))


def _act(name, z):
    if name == "elu":
        return elu(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, g):
    if name == "elu":
        return g * (np.minimum(a, 0.0) + 1.0)
    if name == "tanh":
        return g * (1.0 - a * a)
    return g


# -- initialisers ------------------------------------------------------------------


def init_he_uniform(shape, fan_in, rng):
    if fan_in <= 0:
        raise ContractError("fan_in must be positive")
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape)


def init_glorot_normal(shape, fan_in, fan_out, rng):
    if fan_in <= 0 or fan_out <= 0:
        raise ContractError("fans must be positive")
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


# -- convolution primitives ------------------------------------------------------------


def same_padding(n, k, stride):
    out = -(-n // stride)
    total = max((out - 1) * stride + k - n, 0)
    return out, total // 2, total - total // 2


def _patches(xp, k, stride, out):
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    return win[:, : stride * out : stride, : stride * out : stride]


def conv2d(x, W, stride):
    """SAME-padded cross-correlation; output spatial size ``ceil(n / stride)``."""
    k = W.shape[0]
    B, n, m, _ = x.shape
    oh, lo_h, hi_h = same_padding(n, k, stride)
    ow, lo_w, hi_w = same_padding(m, k, stride)
    xp = np.pad(x, ((0, 0), (lo_h, hi_h), (lo_w, hi_w), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, : stride * oh : stride, : stride * ow : stride]
    return np.einsum("bhwcij,ijcd->bhwd", win, W, optimize=True)


def conv2d_input_grad(dy, W, in_hw, stride):
    """Adjoint of :func:`conv2d` with respect to its input."""
    k = W.shape[0]
    n, m = in_hw
    oh, lo_h, hi_h = same_padding(n, k, stride)
    ow, lo_w, hi_w = same_padding(m, k, stride)
    B = dy.shape[0]
    dxp = np.zeros((B, n + lo_h + hi_h, m + lo_w + hi_w, W.shape[2]))
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += dy @ W[i, j].T
    return dxp[:, lo_h : lo_h + n, lo_w : lo_w + m, :]


def conv2d_weight_grad(x, dy, k, stride):
    B, n, m, _ = x.shape
    oh, lo_h, hi_h = same_padding(n, k, stride)
    ow, lo_w, hi_w = same_padding(m, k, stride)
    xp = np.pad(x, ((0, 0), (lo_h, hi_h), (lo_w, hi_w), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, : stride * oh : stride, : stride * ow : stride]
    return np.einsum("bhwcij,bhwd->ijcd", win, dy, optimize=True)


def conv2d_transpose(y, W, stride):
    """Transposed convolution: output spatial size ``n * stride``."""
    _, n, m, _ = y.shape
    return conv2d_input_grad(y, W, (n * stride, m * stride), stride)


# -- layers ------------------------------------------------------------------------------


@dataclass
class LayerSpec:
    """One layer: ``dense`` (``units``), ``conv2d``/``conv2d_transpose``
    (``kernel``, ``filters``, ``stride``, SAME padding) or ``reshape`` (``shape``)."""

    kind: str
    units: int | None = None
    kernel: int | None = None
    filters: int | None = None
    stride: int = 1
    shape: tuple | None = None
    activation: str = "none"
    padding: str = "SAME"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if self.kind.startswith("conv"):
            if not (self.kernel and self.filters and self.stride):
                raise ContractError("conv layers need kernel, filters and stride")
            if self.padding != "SAME":
                raise ContractError("only SAME padding is supported")
        if self.kind == "dense" and not self.units:
            raise ContractError("dense layers need units")
        if self.kind == "reshape":
            if not self.shape:
                raise ContractError("reshape layers need a target shape")
            self.shape = tuple(int(s) for s in self.shape)


def _out_shape(spec, in_shape):
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise ContractError(f"dense layer expects a flat input, got {in_shape}")
        return (spec.units,)
    if spec.kind == "reshape":
        if int(np.prod(spec.shape)) != int(np.prod(in_shape)):
            raise ContractError(f"cannot reshape {in_shape} to {spec.shape}")
        return spec.shape
    if len(in_shape) != 3:
        raise ContractError(f"{spec.kind} expects (h, w, c) input, got {in_shape}")
    h, w, _ = in_shape
    if spec.kind == "conv2d":
        return (-(-h // spec.stride), -(-w // spec.stride), spec.filters)
    return (h * spec.stride, w * spec.stride, spec.filters)


class Network:
    """Sequential network built from :class:`LayerSpec` objects.

    ``params[i]`` is ``[W, b]`` for parametric layers and ``[]`` for reshapes.
    """

    def __init__(self, specs, input_shape, init="he_uniform", seed=0, rng=None):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
        self.input_shape = tuple(int(s) for s in np.atleast_1d(input_shape))
        self.init = init
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.shapes = [self.input_shape]
        self.params = []
        for spec in self.specs:
            in_shape = self.shapes[-1]
            out_shape = _out_shape(spec, in_shape)
            self.shapes.append(out_shape)
            self.params.append(self._init_layer(spec, in_shape, rng))

    def _init_layer(self, spec, in_shape, rng):
        if spec.kind == "reshape":
            return []
        if spec.kind == "dense":
            shape = (in_shape[0], spec.units)
            fan_in, fan_out = in_shape[0], spec.units
            n_bias = spec.units
        else:
            cin = in_shape[2]
            k = spec.kernel
            if spec.kind == "conv2d":
                shape = (k, k, cin, spec.filters)
            else:
                shape = (k, k, spec.filters, cin)
            fan_in, fan_out = k * k * cin, k * k * spec.filters
            n_bias = spec.filters
        if self.init == "glorot_normal":
            W = init_glorot_normal(shape, fan_in, fan_out, rng)
        else:
            W = init_he_uniform(shape, fan_in, rng)
        return [W, np.zeros(n_bias)]

    @property
    def output_shape(self):
        return self.shapes[-1]

    def n_params(self):
        return sum(p.size for layer in self.params for p in layer)

    def flat_params(self):
        return np.concatenate([p.ravel() for layer in self.params for p in layer])

    def set_flat_params(self, vec):
        off = 0
        for layer in self.params:
            for p in layer:
                p[...] = vec[off : off + p.size].reshape(p.shape)
                off += p.size

    def copy_params(self):
        return [[p.copy() for p in layer] for layer in self.params]

    def load_params(self, params):
        for dst, src in zip(self.params, params):
            for d, s in zip(dst, src):
                d[...] = s

    def forward(self, x):
        return forward(self, x)

    def backward(self, cache, dy):
        return backward(self, cache, dy)

    def __call__(self, x):
        return forward(self, x)[0]


def share_flat_buffer(networks):
    """Rebind the parameters of ``networks`` as views into one contiguous vector.

    Optimiser updates on the returned vector then act on every layer at once.
    """
    params = [p for net in networks for layer in net.params for p in layer]
    theta = np.empty(sum(p.size for p in params))
    off = 0
    for net in networks:
        for layer in net.params:
            for j, p in enumerate(layer):
                theta[off : off + p.size] = p.ravel()
                layer[j] = theta[off : off + p.size].reshape(p.shape)
                off += p.size
    return theta


def flatten_grads(grads):
    return np.concatenate([g.ravel() for layer in grads for g in layer])


def forward(net, x):
    """Apply every layer and its activation; the cache keeps what backward needs."""
    x = np.asarray(x, dtype=float)
    if x.shape[1:] != net.input_shape:
        raise ContractError(f"input shape {x.shape[1:]} does not match {net.input_shape}")
    cache = []
    for spec, params, in_shape in zip(net.specs, net.params, net.shapes[:-1]):
        if spec.kind == "dense":
            z = x @ params[0] + params[1]
        elif spec.kind == "conv2d":
            z = conv2d(x, params[0], spec.stride) + params[1]
        elif spec.kind == "conv2d_transpose":
            z = conv2d_transpose(x, params[0], spec.stride) + params[1]
        else:
            z = x.reshape((x.shape[0],) + spec.shape)
        a = _act(spec.activation, z)
        cache.append((x, z, a))
        x = a
    return x, cache


def backward(net, cache, dy):
    """Reverse pass: returns ``(grads, dx)`` with ``grads`` shaped like ``net.params``."""
    if len(cache) != len(net.specs):
        raise ContractError("cache does not belong to this network")
    grads = [None] * len(net.specs)
    g = np.asarray(dy, dtype=float)
    for i in range(len(net.specs) - 1, -1, -1):
        spec, params = net.specs[i], net.params[i]
        x, z, a = cache[i]
        if g.shape != a.shape:
            raise ContractError("stale cache: upstream gradient shape mismatch")
        g = _act_grad(spec.activation, z, a, g)
        if spec.kind == "dense":
            grads[i] = [x.T @ g, g.sum(axis=0)]
            g = g @ params[0].T
        elif spec.kind == "conv2d":
            grads[i] = [conv2d_weight_grad(x, g, spec.kernel, spec.stride), g.sum(axis=(0, 1, 2))]
            g = conv2d_input_grad(g, params[0], x.shape[1:3], spec.stride)
        elif spec.kind == "conv2d_transpose":
            grads[i] = [conv2d_weight_grad(g, x, spec.kernel, spec.stride), g.sum(axis=(0, 1, 2))]
            g = conv2d(g, params[0], spec.stride)
        else:
            grads[i] = []
            g = g.reshape(x.shape)
    return grads, g


# -- optimiser ------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        zeros = [[np.zeros_like(p) for p in layer] for layer in params]
        return cls([[z.copy() for z in layer] for layer in zeros], zeros, **kw)


def adam_step(state, params, grads):
    """One in-place Adam update of ``params``; returns ``(params, state)``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for layer_p, layer_g, layer_m, layer_v in zip(params, grads, state.m, state.v):
        for p, g, m, v in zip(layer_p, layer_g, layer_m, layer_v):
            if p.shape != g.shape:
                raise ContractError("parameter and gradient shapes differ")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- checkpoints ------------------------------------------------------------------------

_MAGIC = b"NNCK"


def network_to_spec(net):
    return {
        "input_shape": list(net.input_shape),
        "init": net.init,
        "layers": [{k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(s).items()}
                   for s in net.specs],
    }


def save_network(path, net):
    """Binary ``NNCK`` weights plus a ``.json`` sidecar with the layer specs."""
    parts = [pack_header(_MAGIC, len(net.params))]
    for layer in net.params:
        parts.append(struct.pack("<I", len(layer)))
        for p in layer:
            parts.append(struct.pack("<I", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
            parts.append(f64_bytes(p))
    atomic_write_bytes(path, b"".join(parts))
    atomic_write_text(str(path) + ".json", json.dumps(network_to_spec(net), indent=1, sort_keys=True))


def load_network(path):
    with open(str(path) + ".json") as fh:
        doc = json.load(fh)
    net = Network(doc["layers"], doc["input_shape"], init=doc.get("init", "he_uniform"))
    with open(path, "rb") as fh:
        buf = fh.read()
    off = check_magic(buf, _MAGIC)
    (n_layers,) = struct.unpack_from("<I", buf, off)
    off += 4
    if n_layers != len(net.params):
        raise ContractError("checkpoint layer count does not match its sidecar")
    for layer in net.params:
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        for p in layer[:count]:
            (ndim,) = struct.unpack_from("<I", buf, off)
            shape = struct.unpack_from(f"<{ndim}I", buf, off + 4)
            off += 4 + 4 * ndim
            size = int(np.prod(shape))
            p[...] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shape)
            off += 8 * size
    return net
