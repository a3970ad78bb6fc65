"""Dense ReLU classifier with a softmax head, trained by cross-entropy and Adam.

Parameters are float64 throughout. Weight matrices have shape
``(fan_in, fan_out)`` so a batch ``X`` of shape ``(B, fan_in)`` propagates as
``X @ W + b``.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from mos.errors import CheckpointError, ContractError
from mos.features import FEATURE_KINDS, FeatureVector

CHECKPOINT_MAGIC = b"MOSNET1\n"


@dataclass(frozen=True)
class NetMeta:
    M: int
    N_train: int
    Lmax: int
    steps: int = 0


@dataclass(frozen=True, eq=False)
class MlpParams:
    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    feature_kind: str
    meta: NetMeta

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if self.feature_kind not in FEATURE_KINDS:
            raise ContractError(f"unknown feature kind {self.feature_kind!r}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ContractError("number of layers does not match layer_dims")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ContractError(f"layer {i} shapes {W.shape}, {b.shape} do not match {dims}")
        if dims[-1] != self.meta.Lmax + 1:
            raise ContractError(f"output width {dims[-1]} != Lmax + 1 = {self.meta.Lmax + 1}")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        """Parameters in checkpoint order: ``W0, b0, W1, b1, ...``."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def copy(self) -> MlpParams:
        return replace(
            self,
            weights=tuple(W.copy() for W in self.weights),
            biases=tuple(b.copy() for b in self.biases),
        )


@dataclass(frozen=True, eq=False)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    zeros = tuple(np.zeros_like(a) for a in params.arrays())
    return AdamState(zeros, tuple(z.copy() for z in zeros), 0, lr, beta1, beta2, eps)


@dataclass(eq=False)
class ForwardCache:
    inputs: np.ndarray
    preacts: list[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray
    layer_dims: tuple[int, ...]
    steps: int
    owner: int = field(default=0)


def default_layer_dims(in_dim: int, width: int, n_classes: int, hidden: int = 3) -> tuple[int, ...]:
    return (in_dim, *([width] * hidden), n_classes)


def glorot_uniform_init(layer_dims: Sequence[int], rng: np.random.Generator, feature_kind: str,
                        meta: NetMeta) -> MlpParams:
    """Weights uniform on ``+-sqrt(6 / (fan_in + fan_out))``, biases zero."""
    dims = [int(d) for d in layer_dims]
    if any(d < 1 for d in dims) or len(dims) < 2:
        raise ContractError(f"invalid layer_dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(dims), tuple(weights), tuple(biases), feature_kind, meta)


def _as_batch(params: MlpParams, x) -> tuple[np.ndarray, bool]:
    if isinstance(x, FeatureVector):
        if x.kind != params.feature_kind:
            raise ContractError(f"network expects {params.feature_kind} features, got {x.kind}")
        X, single = x.values[None, :], True
    else:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.layer_dims[0]:
        raise ContractError(
            f"input width {X.shape[-1]} does not match network input {params.layer_dims[0]}"
        )
    return X, single


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Class posteriors for one feature vector or a ``(B, in)`` batch.

    Returns ``(probs, cache)``; ``probs`` is 1-D for a single input.
    """
    X, single = _as_batch(params, x)
    h = X
    preacts = []
    last = params.num_layers - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        if i == last:
            logits = z
        else:
            preacts.append(z)
            h = np.maximum(z, 0.0)
    probs = softmax(logits)
    cache = ForwardCache(X, preacts, logits, probs, params.layer_dims, params.meta.steps, id(params))
    return (probs[0] if single else probs), cache


def cross_entropy(probs: np.ndarray, label) -> float | np.ndarray:
    """``-ln probs[label]`` (per row for a batch)."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        return float(-np.log(probs[int(label)]))
    label = np.asarray(label)
    return -np.log(probs[np.arange(probs.shape[0]), label])


def softmax_cross_entropy(logits: np.ndarray, labels) -> np.ndarray:
    """Fused, overflow-safe ``logsumexp(logits) - logits[label]`` per row."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.atleast_1d(np.asarray(labels))
    return -log_softmax(logits)[np.arange(logits.shape[0]), labels]


def backward(params: MlpParams, cache: ForwardCache, labels) -> Gradients:
    """Gradients of the batch-mean cross-entropy with respect to all parameters."""
    if (
        cache.layer_dims != params.layer_dims
        or cache.steps != params.meta.steps
        or cache.owner != id(params)
    ):
        raise ContractError("forward cache does not belong to these parameters")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    B = cache.probs.shape[0]
    if labels.shape != (B,):
        raise ContractError(f"expected {B} labels, got {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= params.layer_dims[-1]):
        raise ContractError("label out of range")
    delta = cache.probs.copy()
    delta[np.arange(B), labels] -= 1.0
    delta /= B
    gW = [None] * params.num_layers
    gb = [None] * params.num_layers
    for i in range(params.num_layers - 1, -1, -1):
        h_in = cache.inputs if i == 0 else np.maximum(cache.preacts[i - 1], 0.0)
        gW[i] = h_in.T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            # ReLU subgradient at exactly zero is taken as zero.
            delta = (delta @ params.weights[i].T) * (cache.preacts[i - 1] > 0.0)
    return Gradients(tuple(gW), tuple(gb))


def adam_step(params: MlpParams, grads: Gradients, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns new parameter and state objects."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_arrays, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        new_arrays.append(p)
        new_m.append(m)
        new_v.append(v)
    new_params = replace(
        params,
        weights=tuple(new_arrays[0::2]),
        biases=tuple(new_arrays[1::2]),
        meta=replace(params.meta, steps=params.meta.steps + 1),
    )
    return new_params, replace(state, m=tuple(new_m), v=tuple(new_v), t=t)


def predict(params: MlpParams, x) -> int | np.ndarray:
    """Most probable class; ``argmax`` already breaks ties toward the smaller index."""
    probs, _ = forward(params, x)
    return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)


def predict_batch(params: MlpParams, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], chunk):
        probs, _ = forward(params, X[start:start + chunk])
        out[start:start + chunk] = np.argmax(probs, axis=1)
    return out


def _header(params: MlpParams, state: AdamState | None) -> str:
    dims = ",".join(str(d) for d in params.layer_dims)
    m = params.meta
    adam = "none" if state is None else (
        f"{state.t},{state.lr!r},{state.beta1!r},{state.beta2!r},{state.eps!r}"
    )
    return f"{params.feature_kind};{dims};{m.M};{m.N_train};{m.Lmax};{m.steps};adam={adam}\n"


def dump_checkpoint(params: MlpParams, state: AdamState | None = None) -> bytes:
    """Serialize to the ``MOSNET1`` layout.

    Magic line, one text header ``feature_kind;layer_dims;M;N_train;Lmax;steps;adam=...``,
    then little-endian float64 blocks in layer order (weights row-major, then
    bias). If Adam state is present its first- and second-moment blocks follow
    in the same order.
    """
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(_header(params, state).encode("ascii"))
    for a in params.arrays():
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    if state is not None:
        for a in (*state.m, *state.v):
            buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(params: MlpParams, path: str | os.PathLike, state: AdamState | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_checkpoint(params, state))


def parse_checkpoint(data: bytes) -> tuple[MlpParams, AdamState | None]:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("bad magic: not a MOSNET1 checkpoint")
    rest = data[len(CHECKPOINT_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        fields = rest[:nl].decode("ascii").split(";")
        kind, dims_s, M, N_train, Lmax, steps, adam_s = fields
        dims = tuple(int(d) for d in dims_s.split(","))
        meta = NetMeta(int(M), int(N_train), int(Lmax), int(steps))
        if not adam_s.startswith("adam="):
            raise ValueError(adam_s)
        adam_s = adam_s[len("adam="):]
    except (UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {rest[:nl][:200]!r}") from exc
    if kind not in FEATURE_KINDS:
        raise CheckpointError(f"unknown feature kind {kind!r} in checkpoint")
    shapes = []
    for a, b in zip(dims[:-1], dims[1:]):
        shapes.extend(((a, b), (b,)))
    sizes = [int(np.prod(s)) for s in shapes]
    n_blocks = 1 if adam_s == "none" else 3
    body = rest[nl + 1:]
    expected = 8 * sum(sizes) * n_blocks
    if len(body) != expected:
        raise CheckpointError(f"checkpoint body has {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays, pos = [], 0
    for _ in range(n_blocks):
        for shape, size in zip(shapes, sizes):
            arrays.append(flat[pos:pos + size].reshape(shape).copy())
            pos += size
    n = len(shapes)
    try:
        params = MlpParams(dims, tuple(arrays[0:n:2]), tuple(arrays[1:n:2]), kind, meta)
    except ContractError as exc:
        raise CheckpointError(f"inconsistent checkpoint: {exc}") from exc
    state = None
    if adam_s != "none":
        try:
            t, lr, b1, b2, eps = adam_s.split(",")
            state = AdamState(tuple(arrays[n:2 * n]), tuple(arrays[2 * n:3 * n]), int(t),
                              float(lr), float(b1), float(b2), float(eps))
        except ValueError as exc:
            raise CheckpointError(f"malformed Adam header {adam_s!r}") from exc
    return params, state


def load_checkpoint(path: str | os.PathLike, M: int | None = None, feature_kind: str | None = None,
                    Lmax: int | None = None) -> tuple[MlpParams, AdamState | None]:
    """Read a checkpoint, optionally validating it against the intended scenario."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    params, state = parse_checkpoint(data)
    check_compatible(params, M=M, feature_kind=feature_kind, Lmax=Lmax)
    return params, state


def check_compatible(params: MlpParams, M: int | None = None, feature_kind: str | None = None,
                     Lmax: int | None = None, N: int | None = None) -> None:
    """Raise :class:`CheckpointError` if the network cannot serve the given scenario.

    Covariance networks accept any ``N``; stacked-iq networks only their training ``N``.
    """
    meta = params.meta
    if feature_kind is not None and feature_kind != params.feature_kind:
        raise CheckpointError(f"checkpoint uses {params.feature_kind} features, not {feature_kind}")
    if M is not None and M != meta.M:
        raise CheckpointError(f"checkpoint was trained for M={meta.M}, scenario has M={M}")
    if Lmax is not None and Lmax != meta.Lmax:
        raise CheckpointError(f"checkpoint has Lmax={meta.Lmax}, scenario has Lmax={Lmax}")
    if N is not None and params.feature_kind != "covariance" and N != meta.N_train:
        raise CheckpointError(
            f"stacked-iq checkpoint needs N={meta.N_train} snapshots, scenario has N={N}"
        )
