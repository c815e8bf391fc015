"""Encoders (MLP, small CNN, linear head), each ending in row-wise L2 normalization."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedFile
from .numcore import layers
from .numcore.rng import RngStream

CHECKPOINT_MAGIC = b"MLC1"
KINDS = ("mlp", "cnn", "head")


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int = 1
    image_size: int = 28
    channels: tuple = (8, 16)
    kernel: int = 3
    padding: int = 1
    pool: int = 2


@dataclass(frozen=True)
class Architecture:
    """Encoder description.

    ``layer_dims`` lists widths from input to embedding for ``mlp``/``head``
    (``[128, 64, 32]``, ``[D, 512]``) and the fully connected widths after
    the flatten for ``cnn`` (``[128, 64]``).
    """

    kind: str
    layer_dims: tuple
    conv_spec: ConvSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if any(d <= 0 for d in dims):
            raise ValueError("layer dims must be positive")
        if dims[-1] < 2:
            raise ValueError("embedding dimension must be >= 2")
        if self.kind == "head" and len(dims) != 2:
            raise ValueError("head architecture is a single affine layer: [input, output]")
        if self.kind == "mlp" and len(dims) < 2:
            raise ValueError("mlp needs at least input and output widths")
        if self.kind == "cnn":
            if self.conv_spec is None:
                object.__setattr__(self, "conv_spec", ConvSpec())
            elif isinstance(self.conv_spec, dict):
                spec = dict(self.conv_spec)
                spec["channels"] = tuple(spec.get("channels", (8, 16)))
                object.__setattr__(self, "conv_spec", ConvSpec(**spec))
            side = self.conv_spec.image_size
            for _ in self.conv_spec.channels:
                if side % self.conv_spec.pool:
                    raise ValueError("image size must stay divisible by the pool size")
                side //= self.conv_spec.pool

    @classmethod
    def mlp(cls, dims=(128, 64, 32)):
        return cls("mlp", tuple(dims))

    @classmethod
    def cnn(cls, fc_dims=(128, 64), **conv):
        return cls("cnn", tuple(fc_dims), ConvSpec(**conv))

    @classmethod
    def head(cls, input_dim: int, output_dim: int = 512):
        return cls("head", (input_dim, output_dim))

    @property
    def embedding_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_shape(self) -> tuple:
        if self.kind == "cnn":
            s = self.conv_spec
            return (s.in_channels, s.image_size, s.image_size)
        return (self.layer_dims[0],)

    def flat_dim(self) -> int:
        s = self.conv_spec
        side = s.image_size // (s.pool ** len(s.channels))
        return s.channels[-1] * side * side

    def plan(self) -> list:
        """Layer sequence as ``(kind, param_shapes, opts)`` tuples."""
        out = []
        if self.kind == "cnn":
            s = self.conv_spec
            cin = s.in_channels
            for cout in s.channels:
                out.append(("conv2d", [(cout, cin, s.kernel, s.kernel), (cout,)], {"padding": s.padding}))
                out.append(("relu", [], {}))
                out.append(("maxpool2d", [], {"size": s.pool}))
                cin = cout
            out.append(("flatten", [], {}))
            dims = (self.flat_dim(),) + self.layer_dims
        else:
            dims = self.layer_dims
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            out.append(("affine", [(a, b), (b,)], {}))
            if i < len(dims) - 2:
                out.append(("relu", [], {}))
        out.append(("l2norm", [], {}))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        if d["conv_spec"] is not None:
            d["conv_spec"]["channels"] = list(d["conv_spec"]["channels"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(d["kind"], tuple(d["layer_dims"]), d.get("conv_spec"))


def init_params(arch: Architecture, rng: RngStream) -> list:
    """He-uniform weights, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))`` (std ``sqrt(2/fan_in)``); zero biases."""
    params = []
    for kind, shapes, _ in arch.plan():
        if not shapes:
            continue
        wshape, bshape = shapes
        fan_in = wshape[0] if kind == "affine" else math.prod(wshape[1:])
        bound = math.sqrt(6.0 / fan_in)
        params.append(bound * (2.0 * rng.uniform(wshape) - 1.0))
        params.append(np.zeros(bshape))
    return params


def init_std(fan_in: int) -> float:
    return math.sqrt(2.0 / fan_in)


@dataclass
class EncodeCache:
    arch: Architecture
    params: list
    steps: list = field(default_factory=list)  # (kind, param slice, cache)


def encode(params, arch: Architecture, batch: np.ndarray):
    """Embed a batch; returns ``(embeddings, cache)`` with unit-norm rows."""
    x = np.asarray(batch, dtype=np.float64)
    if arch.kind == "cnn" and x.ndim == 2 and x.shape[1] == math.prod(arch.input_shape):
        x = x.reshape((x.shape[0],) + arch.input_shape)
    if x.shape[1:] != arch.input_shape:
        raise ShapeMismatch(f"batch shape {x.shape} does not match input {arch.input_shape}")
    cache = EncodeCache(arch, params)
    p = 0
    for kind, shapes, opts in arch.plan():
        if kind == "flatten":
            cache.steps.append((kind, None, x.shape))
            x = x.reshape(x.shape[0], -1)
            continue
        n = len(shapes)
        layer_params = params[p:p + n]
        for arr, shp in zip(layer_params, shapes):
            if arr.shape != tuple(shp):
                raise ShapeMismatch(f"{kind} parameter {arr.shape} does not match {shp}")
        x, c = layers.forward(kind, layer_params, x, **opts)
        cache.steps.append((kind, (p, p + n), c))
        p += n
    return x, cache


def encode_backward(cache: EncodeCache, grad_embeddings: np.ndarray) -> list:
    """Parameter gradients of ``<grad_embeddings, embeddings>``, aligned with the params list."""
    params = cache.params
    g = np.asarray(grad_embeddings, dtype=np.float64)
    last = cache.steps[-1][2]
    if g.shape != last[0].shape:
        raise ShapeMismatch(f"grad {g.shape} vs embeddings {last[0].shape}")
    grads = [None] * len(params)
    for kind, span, c in reversed(cache.steps):
        if kind == "flatten":
            g = g.reshape(c)
            continue
        lo, hi = span
        g, pg = layers.backward(kind, params[lo:hi], c, g)
        grads[lo:hi] = pg
    return grads


def num_params(params) -> int:
    return int(sum(p.size for p in params))


# --- checkpoint container -----------------------------------------------------
# b"MLC1", u32 len + UTF-8 JSON architecture, u32 tensor count, then per tensor:
# u32 ndim, ndim x u32 dims, float64 little-endian data.

def save_checkpoint(path, arch: Architecture, params) -> None:
    desc = json.dumps(arch.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(desc)))
        f.write(desc)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            f.write(struct.pack("<I", p.ndim))
            f.write(struct.pack(f"<{p.ndim}I", *p.shape))
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    try:
        pos = 4
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        arch = Architecture.from_dict(json.loads(raw[pos:pos + n].decode("utf-8")))
        pos += n
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        params = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = math.prod(shape)
            if pos + 8 * size > len(raw):
                raise TruncatedFile(f"{path}: tensor data truncated")
            params.append(np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64))
            pos += 8 * size
    except struct.error as exc:
        raise TruncatedFile(f"{path}: {exc}") from None
    return arch, params
