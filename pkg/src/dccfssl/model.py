"""A small MLP encoder + softmax classifier with explicit analytic gradients.

Parameters live in one flat float64 vector so server-side weighted
averaging is a plain vector operation. Forward passes can record a cache
that :func:`backward` consumes to produce the flat parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError

NORM_EPS = 1e-12


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    repr_dim: int
    num_classes: int
    normalize_repr: bool = True

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.repr_dim, self.num_classes)
        if any(d < 1 for d in dims):
            raise ShapeError("all architecture dims must be >= 1")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, encoder first, classifier last."""
        sizes = [self.input_dim, *self.hidden_dims, self.repr_dim, self.num_classes]
        return list(zip(sizes[:-1], sizes[1:]))

    def param_count(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims())


@dataclass(frozen=True)
class ModelParams:
    values: np.ndarray
    arch: Architecture

    def __post_init__(self):
        if self.values.shape != (self.arch.param_count(),):
            raise ShapeError(
                "param vector length %d, architecture needs %d"
                % (self.values.size, self.arch.param_count())
            )
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("non-finite entries in parameter vector")


def _unpack(params: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat vector."""
    layers = []
    offset = 0
    for fan_in, fan_out in params.arch.layer_dims():
        w = params.values[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params.values[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """Fan-in scaled uniform weights (variance 1/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in arch.layer_dims():
        limit = np.sqrt(3.0 / fan_in)
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ModelParams(values=np.concatenate(chunks), arch=arch)


@dataclass
class ForwardCache:
    """Intermediate activations of one forward pass, consumed by backward."""

    inputs: list[np.ndarray]      # input to each encoder affine layer
    pre_acts: list[np.ndarray]    # pre-ReLU activations of hidden layers
    pre_norm: np.ndarray          # encoder output before normalization
    norms: np.ndarray | None      # row norms where normalization applied
    reprs: np.ndarray             # final representation z


def encode(params: ModelParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Encoder forward pass returning representations and the cache."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.arch.input_dim:
        raise ShapeError(
            "batch shape %s does not match input_dim %d"
            % (batch.shape, params.arch.input_dim)
        )
    layers = _unpack(params)
    n_hidden = len(params.arch.hidden_dims)
    a = batch
    inputs, pre_acts = [], []
    for w, b in layers[:n_hidden]:
        inputs.append(a)
        pre = a @ w + b
        pre_acts.append(pre)
        a = np.maximum(pre, 0.0)
    inputs.append(a)
    w, b = layers[n_hidden]
    u = a @ w + b
    if params.arch.normalize_repr:
        norms = np.linalg.norm(u, axis=1)
        safe = np.where(norms < NORM_EPS, 1.0, norms)
        z = u / safe[:, None]
    else:
        norms = None
        z = u
    return z, ForwardCache(inputs=inputs, pre_acts=pre_acts, pre_norm=u,
                           norms=norms, reprs=z)


def forward_encoder(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    z, _ = encode(params, batch)
    return z


def forward_classifier(params: ModelParams, reprs: np.ndarray) -> np.ndarray:
    """Softmax probabilities from representations."""
    probs, _ = classify(params, reprs)
    return probs


def classify(params: ModelParams, reprs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(probabilities, logits) of the classifier head."""
    reprs = np.asarray(reprs, dtype=np.float64)
    if reprs.ndim != 2 or reprs.shape[1] != params.arch.repr_dim:
        raise ShapeError(
            "repr shape %s does not match repr_dim %d"
            % (reprs.shape, params.arch.repr_dim)
        )
    w, b = _unpack(params)[-1]
    logits = reprs @ w + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, logits


def backward(params: ModelParams, cache: ForwardCache,
             d_repr: np.ndarray | None = None,
             d_logits: np.ndarray | None = None) -> np.ndarray:
    """Flat parameter gradient for one forward pass.

    d_repr is the upstream gradient w.r.t. the (post-normalization)
    representations; d_logits w.r.t. the classifier logits. Either may be
    omitted; contributions are summed.
    """
    arch = params.arch
    layers = _unpack(params)
    n_hidden = len(arch.hidden_dims)
    batch = cache.reprs.shape[0]

    grads_w = [np.zeros_like(w) for w, _ in layers]
    grads_b = [np.zeros_like(b) for _, b in layers]

    dz = np.zeros((batch, arch.repr_dim))
    if d_repr is not None:
        if d_repr.shape != dz.shape:
            raise ShapeError("d_repr shape %s, expected %s" % (d_repr.shape, dz.shape))
        dz = dz + d_repr
    if d_logits is not None:
        if d_logits.shape != (batch, arch.num_classes):
            raise ShapeError(
                "d_logits shape %s, expected %s"
                % (d_logits.shape, (batch, arch.num_classes))
            )
        wc, _ = layers[-1]
        grads_w[-1] += cache.reprs.T @ d_logits
        grads_b[-1] += d_logits.sum(axis=0)
        dz = dz + d_logits @ wc.T

    if arch.normalize_repr:
        norms = cache.norms
        normalized = norms >= NORM_EPS
        safe = np.where(normalized, norms, 1.0)
        inner = np.sum(dz * cache.reprs, axis=1, keepdims=True)
        du = np.where(
            normalized[:, None],
            (dz - inner * cache.reprs) / safe[:, None],
            dz,
        )
    else:
        du = dz

    w, _ = layers[n_hidden]
    grads_w[n_hidden] += cache.inputs[n_hidden].T @ du
    grads_b[n_hidden] += du.sum(axis=0)
    da = du @ w.T
    for l in range(n_hidden - 1, -1, -1):
        dpre = da * (cache.pre_acts[l] > 0)
        w, _ = layers[l]
        grads_w[l] += cache.inputs[l].T @ dpre
        grads_b[l] += dpre.sum(axis=0)
        da = dpre @ w.T

    return np.concatenate(
        [np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)]
    )


def predict_probs(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Encoder + classifier on raw features, probabilities only."""
    return forward_classifier(params, forward_encoder(params, batch))


def save_checkpoint(params: ModelParams, path) -> None:
    """Architecture descriptor line + little-endian float64 parameter bytes."""
    arch = params.arch
    header = "mlp input=%d hidden=%s repr=%d classes=%d normalize=%d\n" % (
        arch.input_dim,
        ",".join(str(d) for d in arch.hidden_dims) or "-",
        arch.repr_dim,
        arch.num_classes,
        int(arch.normalize_repr),
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").strip()
        blob = f.read()
    fields = header.split()
    if not fields or fields[0] != "mlp":
        raise FormatError("bad checkpoint header: %r" % header)
    kv = dict(field.split("=", 1) for field in fields[1:])
    try:
        hidden = kv["hidden"]
        arch = Architecture(
            input_dim=int(kv["input"]),
            hidden_dims=tuple() if hidden == "-" else tuple(
                int(d) for d in hidden.split(",")
            ),
            repr_dim=int(kv["repr"]),
            num_classes=int(kv["classes"]),
            normalize_repr=bool(int(kv["normalize"])),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError("bad checkpoint header: %r" % header) from exc
    values = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if values.size != arch.param_count():
        raise FormatError(
            "checkpoint holds %d params, architecture needs %d"
            % (values.size, arch.param_count())
        )
    return ModelParams(values=values, arch=arch)
