"""Dense ReLU networks with hand-written reverse-mode gradients, Adam, and the
tanh-squashed Gaussian policy head.

Binary parameter format (little endian)::

    magic   8 bytes   b"JRLMLP\\x00\\x01"
    version uint32    1
    layers  uint32    L
    dims    uint32 x (L + 1)   input, hidden..., output
    then for each layer: weight (in x out, row-major float64), bias (out float64)
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

HIDDEN = (512, 256, 256, 64)
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
TANH_EPS = 1e-6
MAGIC = b"JRLMLP\x00\x01"
FORMAT_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)


class ShapeError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = HIDDEN

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ShapeError("layer sizes must be positive")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


class Mlp:
    """Affine + ReLU stack with a linear output layer.

    ``forward`` keeps the activations needed by ``backward``; parameters live in
    ``weights[k]`` (in x out) and ``biases[k]``.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None, *, out_scale: float = 1.0,
                 dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        rng = rng if rng is not None else np.random.default_rng(0)
        dims = spec.dims
        for k in range(len(dims) - 1):
            bound = 1.0 / math.sqrt(dims[k])
            w = rng.uniform(-bound, bound, size=(dims[k], dims[k + 1]))
            b = rng.uniform(-bound, bound, size=dims[k + 1])
            if k == len(dims) - 2:
                w, b = w * out_scale, b * out_scale
            self.weights.append(w.astype(self.dtype))
            self.biases.append(b.astype(self.dtype))
        self._cache: list[np.ndarray] | None = None

    # -- parameters -------------------------------------------------------
    @property
    def params(self) -> list[np.ndarray]:
        """Weight/bias arrays interleaved: [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, v: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = v[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != v.size:
            raise ShapeError(f"flat vector has {v.size} entries, network has {i}")

    @property
    def size(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "Mlp":
        new = Mlp.__new__(Mlp)
        new.spec, new.dtype = self.spec, self.dtype
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        new._cache = None
        return new

    def load_from(self, other: "Mlp") -> None:
        for p, q in zip(self.params, other.params):
            p[...] = q

    # -- passes -----------------------------------------------------------
    def forward(self, x: np.ndarray, *, keep: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"expected (batch, {self.spec.input_dim}) input, got {x.shape}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                np.maximum(h, 0.0, out=h)
            acts.append(h)
        self._cache = acts if keep else None
        return h

    __call__ = forward

    def backward(self, upstream: np.ndarray, *, need_input: bool = False, need_params: bool = True):
        """Gradients of ``sum(upstream * output)`` for the last cached forward pass.

        Returns ``(grads, dx)`` with ``grads`` laid out like ``params``; either part is
        ``None`` when not requested.
        """
        if self._cache is None:
            raise UsageError("backward() needs a preceding forward(keep=True)")
        acts = self._cache
        g = np.asarray(upstream, dtype=self.dtype)
        if g.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
        n = len(self.weights)
        grads: list[np.ndarray | None] = [None] * (2 * n)
        for k in range(n - 1, -1, -1):
            if k < n - 1:
                g = g * (acts[k + 1] > 0)
            if need_params:
                grads[2 * k] = acts[k].T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            if k > 0 or need_input:
                g = g @ self.weights[k].T
        return (grads if need_params else None), (g if need_input else None)

    def input_grad(self, upstream: np.ndarray) -> np.ndarray:
        return self.backward(upstream, need_input=True, need_params=False)[1]

    # -- serialization ----------------------------------------------------
    def to_bytes(self) -> bytes:
        dims = self.spec.dims
        head = MAGIC + struct.pack("<II", FORMAT_VERSION, len(dims) - 1) + struct.pack(f"<{len(dims)}I", *dims)
        body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes, *, spec: MlpSpec | None = None, dtype=np.float64) -> "Mlp":
        if data[:8] != MAGIC:
            raise CheckpointError("not a parameter file (bad magic)")
        version, layers = struct.unpack_from("<II", data, 8)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        dims = struct.unpack_from(f"<{layers + 1}I", data, 16)
        stored = MlpSpec(dims[0], dims[-1], tuple(dims[1:-1]))
        if spec is not None and spec != stored:
            raise CheckpointError(f"checkpoint dims {dims} do not match expected {spec.dims}")
        net = cls.__new__(cls)
        net.spec, net.dtype, net._cache = stored, np.dtype(dtype), None
        net.weights, net.biases = [], []
        off = 16 + 4 * (layers + 1)
        for k in range(layers):
            n_w, n_b = dims[k] * dims[k + 1], dims[k + 1]
            if len(data) < off + 8 * (n_w + n_b):
                raise CheckpointError("truncated parameter file")
            w = np.frombuffer(data, "<f8", n_w, off).reshape(dims[k], dims[k + 1])
            off += 8 * n_w
            b = np.frombuffer(data, "<f8", n_b, off)
            off += 8 * n_b
            net.weights.append(w.astype(net.dtype))
            net.biases.append(b.astype(net.dtype))
        if off != len(data):
            raise CheckpointError("trailing bytes after parameters")
        return net

    def save(self, path) -> None:
        FsPath(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path, *, spec: MlpSpec | None = None, dtype=np.float64) -> "Mlp":
        return cls.from_bytes(FsPath(path).read_bytes(), spec=spec, dtype=dtype)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float = 1e-4) -> None:
    """In-place Adam update with bias correction."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state are not aligned")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the raw norm."""
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        s = max_norm / (total + 1e-12)
        for g in grads:
            g *= s
    return total


# ---------------------------------------------------------------------------
# squashed Gaussian


@dataclass(frozen=True)
class SquashedGaussianSample:
    action: np.ndarray
    log_prob: np.ndarray
    pre_tanh: np.ndarray = field(repr=False, default=None)
    noise: np.ndarray = field(repr=False, default=None)


def clamp_log_std(log_std: np.ndarray) -> np.ndarray:
    return np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)


def squashed_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """log density of tanh(u) for u ~ N(mean, exp(log_std)^2), summed over the last axis."""
    z = (u - mean) * np.exp(-log_std)
    gauss = -0.5 * z * z - log_std - 0.5 * _LOG_2PI
    return (gauss - np.log(1.0 - np.tanh(u) ** 2 + TANH_EPS)).sum(axis=-1)


def sample_squashed(mean, log_std, rng: np.random.Generator | None = None, *,
                    deterministic: bool = False) -> SquashedGaussianSample:
    mean = np.asarray(mean)
    log_std = clamp_log_std(np.asarray(log_std))
    if deterministic or rng is None:
        eps = np.zeros_like(mean)
    else:
        eps = rng.standard_normal(mean.shape).astype(mean.dtype, copy=False)
    u = mean + np.exp(log_std) * eps
    return SquashedGaussianSample(np.tanh(u), squashed_log_prob(u, mean, log_std), u, eps)


class GaussianPolicy:
    """Trunk MLP whose output splits into a 2-wide mean head and a 2-wide log_std head."""

    def __init__(self, obs_dim: int, action_dim: int = 2, rng=None, *, hidden=HIDDEN, dtype=np.float64,
                 out_scale: float = 1e-2):
        self.action_dim = action_dim
        self.net = Mlp(MlpSpec(obs_dim, 2 * action_dim, tuple(hidden)), rng, out_scale=out_scale, dtype=dtype)

    def heads(self, obs: np.ndarray, *, keep: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(mean, clamped log_std, raw log_std)."""
        out = self.net.forward(obs, keep=keep)
        mean, raw = out[:, :self.action_dim], out[:, self.action_dim:]
        return mean, clamp_log_std(raw), raw

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None, *, deterministic: bool = False) -> np.ndarray:
        obs = np.atleast_2d(obs)
        mean, log_std, _ = self.heads(obs, keep=False)
        if deterministic:
            return np.tanh(mean).astype(np.float64)
        return sample_squashed(mean, log_std, rng).action.astype(np.float64)

    def copy(self) -> "GaussianPolicy":
        new = GaussianPolicy.__new__(GaussianPolicy)
        new.action_dim, new.net = self.action_dim, self.net.copy()
        return new


class QNetwork:
    """Critic: observation and action concatenated at the input, scalar output."""

    def __init__(self, obs_dim: int, action_dim: int = 2, rng=None, *, hidden=HIDDEN, dtype=np.float64):
        self.obs_dim = obs_dim
        self.net = Mlp(MlpSpec(obs_dim + action_dim, 1, tuple(hidden)), rng, dtype=dtype)

    def forward(self, obs: np.ndarray, act: np.ndarray, *, keep: bool = True) -> np.ndarray:
        return self.net.forward(np.concatenate([obs, act], axis=1), keep=keep)[:, 0]

    __call__ = forward

    def copy(self) -> "QNetwork":
        new = QNetwork.__new__(QNetwork)
        new.obs_dim, new.net = self.obs_dim, self.net.copy()
        return new
