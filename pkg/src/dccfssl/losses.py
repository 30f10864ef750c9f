"""Training objectives for labeled and unlabeled clients, value + gradient.

The contrastive losses operate on a batch of 2N representations (two
strong views per image, sibling views adjacent). Each returns its scalar
value together with the gradient w.r.t. the representations; the
cross-entropy style losses return gradients w.r.t. logits. Pseudo labels
and confidence masks are constants under differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, ShapeError
from .prototypes import GlobalPrototypes

UNCONFIDENT = -1


@dataclass(frozen=True)
class LossHyper:
    """Temperature, confidence threshold, and contrastive weights."""

    tau: float = 1.0
    t_thr: float = 0.95
    lambda_lcc: float = 1.0
    lambda_gcc: float = 1.0
    include_sibling_positive: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigurationError("tau must be > 0")
        if not 0 < self.t_thr <= 1:
            raise ConfigurationError("t_thr must be in (0, 1]")
        if self.lambda_lcc < 0 or self.lambda_gcc < 0:
            raise ConfigurationError("loss weights must be >= 0")


@dataclass(frozen=True)
class ContrastiveBatch:
    """2N strong-view representations with class ids and confidences.

    Sibling views of one image occupy rows 2k and 2k+1 and share class id
    and confidence. Unconfident views carry class id -1.
    """

    reprs: np.ndarray        # (2N, d)
    class_ids: np.ndarray    # (2N,) int, -1 marks unconfident
    confidences: np.ndarray  # (2N,) in [0, 1]

    def __post_init__(self):
        m = self.reprs.shape[0]
        if m % 2 != 0:
            raise ShapeError("contrastive batch needs an even number of views")
        if self.class_ids.shape != (m,) or self.confidences.shape != (m,):
            raise ShapeError("class_ids/confidences must have one entry per view")
        if not (np.array_equal(self.class_ids[0::2], self.class_ids[1::2])
                and np.array_equal(self.confidences[0::2], self.confidences[1::2])):
            raise ShapeError("sibling views must share class id and confidence")

    @property
    def num_images(self) -> int:
        return self.reprs.shape[0] // 2

    @classmethod
    def from_views(cls, z_a: np.ndarray, z_b: np.ndarray, class_ids: np.ndarray,
                   confidences: np.ndarray | None = None) -> "ContrastiveBatch":
        """Interleave two per-image view matrices into sibling-adjacent rows."""
        n, d = z_a.shape
        reprs = np.empty((2 * n, d))
        reprs[0::2] = z_a
        reprs[1::2] = z_b
        if confidences is None:
            confidences = np.ones(n)
        return cls(
            reprs=reprs,
            class_ids=np.repeat(np.asarray(class_ids, dtype=np.int64), 2),
            confidences=np.repeat(np.asarray(confidences, dtype=np.float64), 2),
        )


def supervised_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy; gradient w.r.t. the logits behind ``probs``."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise ShapeError("label out of range for %d classes" % c)
    value = float(-np.mean(np.log(probs[np.arange(n), labels])))
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    return value, d_logits


def _lcc_core(batch: ContrastiveBatch, h: LossHyper,
              view_mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Shared local contrastive computation.

    view_mask gates both the outer sum (view i participates) and positive
    candidacy (view j may sit in S(i)); labeled clients pass all-ones.
    """
    z = batch.reprs
    m = z.shape[0]
    sims = (z @ z.T) / h.tau
    off_diag = sims.copy()
    np.fill_diagonal(off_diag, -np.inf)
    log_denom = logsumexp(off_diag, axis=1)
    p = np.exp(off_diag - log_denom[:, None])  # softmax over j != i, zero diagonal

    image = np.arange(m) // 2
    same_class = batch.class_ids[:, None] == batch.class_ids[None, :]
    positives = same_class & view_mask[None, :]
    if h.include_sibling_positive:
        positives &= np.arange(m)[:, None] != np.arange(m)[None, :]
    else:
        positives &= image[:, None] != image[None, :]
    counts = positives.sum(axis=1)
    weight = view_mask / (1.0 + counts)

    log_ratio = np.where(positives, sims - log_denom[:, None], 0.0)
    value = float(-np.sum(weight * log_ratio.sum(axis=1)))

    g = weight[:, None] * (-positives.astype(np.float64) + counts[:, None] * p)
    d_reprs = (g + g.T) @ z / h.tau
    return value, d_reprs


def lcc_labeled(batch: ContrastiveBatch, h: LossHyper) -> tuple[float, np.ndarray]:
    """Batch contrastive loss pulling views of same-class images together."""
    if np.any(batch.class_ids == UNCONFIDENT):
        raise ShapeError("labeled contrastive batch has unconfident views")
    return _lcc_core(batch, h, np.ones(batch.reprs.shape[0]))


def lcc_unlabeled(batch: ContrastiveBatch, h: LossHyper) -> tuple[float, np.ndarray]:
    """Labeled variant gated by pseudo-label confidence on both sum and S(i)."""
    mask = (batch.confidences >= h.t_thr) & (batch.class_ids != UNCONFIDENT)
    return _lcc_core(batch, h, mask.astype(np.float64))


def _gcc_core(batch: ContrastiveBatch, prototypes: GlobalPrototypes, h: LossHyper,
              view_mask: np.ndarray, on_missing: str) -> tuple[float, np.ndarray]:
    z = batch.reprs
    m = z.shape[0]
    active = view_mask.astype(bool)
    if active.any():
        if on_missing == "error":
            prototypes.require(batch.class_ids[active])
        elif on_missing == "skip":
            active &= prototypes.present[np.clip(batch.class_ids, 0, None)]
        else:
            raise ValueError("on_missing must be 'error' or 'skip'")
    if not active.any() or not prototypes.any_present():
        return 0.0, np.zeros_like(z)

    present_idx = np.where(prototypes.present)[0]
    protos = prototypes.vectors[present_idx]
    col_of = {c: k for k, c in enumerate(present_idx)}

    rows = np.where(active)[0]
    cols = np.array([col_of[c] for c in batch.class_ids[rows]])
    logits = z @ protos.T / h.tau
    logp = logits - logsumexp(logits, axis=1, keepdims=True)
    value = float(-np.sum(logp[rows, cols]) / m)

    soft = np.exp(logp)
    grad_logits = np.zeros_like(soft)
    grad_logits[rows] = soft[rows]
    grad_logits[rows, cols] -= 1.0
    grad_logits /= m
    d_reprs = grad_logits @ protos / h.tau
    return value, d_reprs


def gcc_labeled(batch: ContrastiveBatch, prototypes: GlobalPrototypes,
                h: LossHyper, on_missing: str = "error") -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of each view against its class prototype."""
    if np.any(batch.class_ids == UNCONFIDENT):
        raise ShapeError("labeled contrastive batch has unconfident views")
    return _gcc_core(batch, prototypes, h,
                     np.ones(batch.reprs.shape[0]), on_missing)


def gcc_unlabeled(batch: ContrastiveBatch, prototypes: GlobalPrototypes,
                  h: LossHyper, on_missing: str = "error") -> tuple[float, np.ndarray]:
    """Prototype alignment restricted to confident pseudo-labeled views."""
    mask = (batch.confidences >= h.t_thr) & (batch.class_ids != UNCONFIDENT)
    return _gcc_core(batch, prototypes, h, mask.astype(np.float64), on_missing)


def fixmatch_loss(weak_probs: np.ndarray, strong_probs: np.ndarray,
                  h: LossHyper) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Confidence-masked pseudo-label cross-entropy on the strong view.

    Returns (value, gradient w.r.t. strong logits, pseudo_labels, mask).
    Pseudo labels come from the weak view and are detached.
    """
    if weak_probs.shape != strong_probs.shape:
        raise ShapeError("weak/strong probability shapes differ")
    n = weak_probs.shape[0]
    pseudo = np.argmax(weak_probs, axis=1)
    mask = weak_probs.max(axis=1) >= h.t_thr
    picked = strong_probs[np.arange(n), pseudo]
    value = float(np.sum(np.where(mask, -np.log(picked), 0.0)) / n)
    d_logits = strong_probs.copy()
    d_logits[np.arange(n), pseudo] -= 1.0
    d_logits *= mask[:, None] / n
    return value, d_logits, pseudo, mask


def total_loss(basic: float, lcc: float, gcc: float, h: LossHyper) -> float:
    """Basic objective plus weighted contrastive terms (labeled or unlabeled)."""
    return basic + h.lambda_lcc * lcc + h.lambda_gcc * gcc
