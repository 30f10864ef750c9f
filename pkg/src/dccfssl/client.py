"""Local training for labeled and unlabeled clients.

One round of local work: mini-batch SGD over the client shard (weak view
feeds the basic objective, two strong views feed the contrastive terms),
then authentication counting and local prototype extraction with the
updated model on raw features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses, model
from .data import AugmentConfig, ClientDataset, LABELED, UNLABELED, \
    augment_strong, augment_weak
from .errors import ConfigurationError, NumericDivergenceError
from .losses import ContrastiveBatch, LossHyper
from .model import ModelParams
from .prototypes import GlobalPrototypes


@dataclass(frozen=True)
class ClientConfig:
    eta: float = 0.01
    epochs: int = 1
    batch_size: int = 16
    hyper: LossHyper = LossHyper()
    augment: AugmentConfig = AugmentConfig()

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigurationError("eta must be >= 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")


@dataclass(frozen=True)
class AuthReport:
    """Which local samples authenticate, and under which class."""

    flags: np.ndarray        # (N,) bool
    classes: np.ndarray      # (N,) class each sample counts under
    per_class: np.ndarray    # (C,) int counts v
    total: int               # A = sum(v)


@dataclass(frozen=True)
class LocalResult:
    params: ModelParams
    prototypes: np.ndarray       # (C, repr_dim); rows meaningless where absent
    proto_present: np.ndarray    # (C,) bool
    auth_counts: np.ndarray      # (C,) int
    total_auth: int


def batch_loss_and_grad(params: ModelParams, weak: np.ndarray, strong_a: np.ndarray,
                        strong_b: np.ndarray, labels: np.ndarray | None,
                        prototypes: GlobalPrototypes,
                        h: LossHyper) -> tuple[float, np.ndarray, dict]:
    """Total loss and flat parameter gradient for one pre-augmented batch.

    labels=None selects the unlabeled path (pseudo labels from the weak
    view). Pure in (params, views), so finite differences apply directly.
    """
    grad = np.zeros_like(params.values)
    z_a, cache_a = model.encode(params, strong_a)
    z_b, cache_b = model.encode(params, strong_b)

    if labels is not None:
        z_w, cache_w = model.encode(params, weak)
        probs_w, _ = model.classify(params, z_w)
        basic, d_logits_w = losses.supervised_loss(probs_w, labels)
        grad += model.backward(params, cache_w, d_logits=d_logits_w)
        cbatch = ContrastiveBatch.from_views(z_a, z_b, labels)
        lcc_v, d_z = losses.lcc_labeled(cbatch, h)
        gcc_v, d_zg = losses.gcc_labeled(cbatch, prototypes, h, on_missing="skip")
        d_logits_a = None
        info = {"basic": basic, "mask": np.ones(len(weak), dtype=bool)}
    else:
        # pseudo labels from the weak view, no gradient through that pass
        probs_w = model.predict_probs(params, weak)
        probs_a, _ = model.classify(params, z_a)
        basic, d_logits_a, pseudo, mask = losses.fixmatch_loss(probs_w, probs_a, h)
        cbatch = ContrastiveBatch.from_views(
            z_a, z_b, pseudo, confidences=probs_w.max(axis=1))
        lcc_v, d_z = losses.lcc_unlabeled(cbatch, h)
        gcc_v, d_zg = losses.gcc_unlabeled(cbatch, prototypes, h, on_missing="skip")
        info = {"basic": basic, "pseudo": pseudo, "mask": mask}

    d_z = h.lambda_lcc * d_z + h.lambda_gcc * d_zg
    grad += model.backward(params, cache_a, d_repr=d_z[0::2], d_logits=d_logits_a)
    grad += model.backward(params, cache_b, d_repr=d_z[1::2])

    value = losses.total_loss(basic, lcc_v, gcc_v, h)
    info.update({"lcc": lcc_v, "gcc": gcc_v})
    return value, grad, info


def local_train(init: ModelParams, global_prototypes: GlobalPrototypes,
                dataset: ClientDataset, cfg: ClientConfig,
                rng: np.random.Generator) -> LocalResult:
    """Mini-batch SGD over the shard, then prototype/authentication extraction."""
    features = dataset.features_matrix()
    labels = dataset.training_labels() if dataset.role == LABELED else None
    n = len(dataset)

    params = init
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = features[idx]
            weak = augment_weak(x, cfg.augment, rng)
            strong_a = augment_strong(x, cfg.augment, rng)
            strong_b = augment_strong(x, cfg.augment, rng)
            batch_labels = None if labels is None else labels[idx]
            value, grad, _ = batch_loss_and_grad(
                params, weak, strong_a, strong_b, batch_labels,
                global_prototypes, cfg.hyper)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise NumericDivergenceError(
                    "non-finite loss on client %d (batch at %d)"
                    % (dataset.client_id, start)
                )
            if cfg.eta != 0.0:
                params = ModelParams(values=params.values - cfg.eta * grad,
                                     arch=params.arch)

    report = compute_authentication(params, dataset, cfg.hyper)
    protos, present = compute_local_prototypes(params, dataset, report)
    return LocalResult(params=params, prototypes=protos, proto_present=present,
                       auth_counts=report.per_class, total_auth=report.total)


def compute_authentication(params: ModelParams, dataset: ClientDataset,
                           h: LossHyper) -> AuthReport:
    """Count authentication samples with the given model on raw features.

    Labeled clients authenticate correctly classified samples under their
    true class; unlabeled clients authenticate confident predictions under
    the pseudo class.
    """
    probs = model.predict_probs(params, dataset.features_matrix())
    predicted = np.argmax(probs, axis=1)
    if dataset.role == LABELED:
        truth = dataset.training_labels()
        flags = predicted == truth
        classes = truth
    else:
        flags = probs.max(axis=1) >= h.t_thr
        classes = predicted
    num_classes = params.arch.num_classes
    per_class = np.bincount(classes[flags], minlength=num_classes)
    return AuthReport(flags=flags, classes=classes, per_class=per_class,
                      total=int(per_class.sum()))


def compute_local_prototypes(params: ModelParams, dataset: ClientDataset,
                             report: AuthReport) -> tuple[np.ndarray, np.ndarray]:
    """Per-class mean representation over authenticated samples.

    Means are re-normalized to unit norm when the architecture normalizes
    representations, so prototypes live on the same manifold as z.
    """
    arch = params.arch
    reprs = model.forward_encoder(params, dataset.features_matrix())
    protos = np.zeros((arch.num_classes, arch.repr_dim))
    present = report.per_class > 0
    for c in np.where(present)[0]:
        members = report.flags & (report.classes == c)
        mean = reprs[members].mean(axis=0)
        if arch.normalize_repr:
            norm = np.linalg.norm(mean)
            if norm >= model.NORM_EPS:
                mean = mean / norm
        protos[c] = mean
    return protos, present
