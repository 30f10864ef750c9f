"""Dataset synthesis and ingestion, client partitioning, and augmentation.

Datasets are plain sequences of :class:`Sample`. Partitioners split them
across simulated clients; :func:`assign_roles` marks clients as labeled or
unlabeled. Unlabeled clients keep their ground-truth labels in a sealed
field that only evaluation code may read.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, FormatError, HiddenLabelError

LABELED = "labeled"
UNLABELED = "unlabeled"

CIFAR10_RECORD_BYTES = 3073


@dataclass(frozen=True)
class Sample:
    """One feature vector with an optional class label."""

    features: np.ndarray
    label: int | None = None


@dataclass(frozen=True)
class ClientDataset:
    """A client's local shard plus its labeled/unlabeled role."""

    client_id: int
    samples: tuple[Sample, ...]
    role: str = LABELED

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ConfigurationError("client %d has an empty shard" % self.client_id)
        if self.role not in (LABELED, UNLABELED):
            raise ConfigurationError("unknown role %r" % self.role)
        if self.role == LABELED and any(s.label is None for s in self.samples):
            raise ConfigurationError(
                "labeled client %d holds samples without labels" % self.client_id
            )

    def __len__(self) -> int:
        return len(self.samples)

    def features_matrix(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples]).astype(np.float64)

    def training_labels(self) -> np.ndarray:
        """Labels visible to training. Raises for unlabeled clients."""
        if self.role == UNLABELED:
            raise HiddenLabelError(
                "labels of unlabeled client %d are sealed" % self.client_id
            )
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def sealed_labels(self) -> np.ndarray:
        """Ground-truth labels for evaluation oracles only.

        Never feed these into a training path; they exist so pseudo-label
        quality can be diagnosed.
        """
        return np.array(
            [-1 if s.label is None else s.label for s in self.samples],
            dtype=np.int64,
        )


@dataclass(frozen=True)
class AugmentConfig:
    """Weak/strong view parameters for feature-vector augmentation."""

    weak_noise_sigma: float = 0.05
    strong_noise_sigma: float = 0.15
    strong_mask_fraction: float = 0.1

    def __post_init__(self):
        if self.weak_noise_sigma < 0 or self.strong_noise_sigma < 0:
            raise ConfigurationError("noise sigmas must be >= 0")
        if self.strong_noise_sigma < self.weak_noise_sigma:
            raise ConfigurationError(
                "strong_noise_sigma must be >= weak_noise_sigma"
            )
        if not 0 <= self.strong_mask_fraction < 1:
            raise ConfigurationError("strong_mask_fraction must be in [0, 1)")


def num_classes_of(samples) -> int:
    """Class count inferred from the full dataset: 1 + max label."""
    labels = [s.label for s in samples if s.label is not None]
    if not labels:
        raise ConfigurationError("cannot infer class count from unlabeled data")
    return int(max(labels)) + 1


def synthesize_blobs(num_classes: int, dim: int, per_class: int, spread: float,
                     seed: int) -> list[Sample]:
    """Isotropic Gaussian blobs, one per class, ordered by class.

    Class means are drawn first from the seeded generator, so two calls
    with the same seed but different per_class share the same means.
    """
    if num_classes < 2 or dim < 2 or per_class < 1:
        raise ConfigurationError(
            "need num_classes >= 2, dim >= 2, per_class >= 1"
        )
    if spread < 0:
        raise ConfigurationError("spread must be >= 0")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, size=(num_classes, dim))
    samples = []
    for c in range(num_classes):
        points = means[c] + spread * rng.normal(size=(per_class, dim))
        for p in points:
            samples.append(Sample(features=p.astype(np.float64), label=c))
    return samples


def partition_iid(samples, num_clients: int, seed: int) -> list[ClientDataset]:
    """Shuffle and split into near-equal shards (sizes differ by <= 1)."""
    if num_clients < 1:
        raise ConfigurationError("num_clients must be >= 1")
    if num_clients > len(samples):
        raise ConfigurationError(
            "num_clients=%d exceeds sample count %d" % (num_clients, len(samples))
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    shards = np.array_split(order, num_clients)
    return [
        ClientDataset(client_id=i, samples=tuple(samples[j] for j in shard))
        for i, shard in enumerate(shards)
    ]


def partition_dirichlet(samples, num_clients: int, gamma: float,
                        seed: int) -> list[ClientDataset]:
    """Non-IID split: per-class client proportions drawn from Dir(gamma).

    A draw that leaves any client empty is rejected and the whole partition
    is re-drawn with an incremented seed, up to 100 attempts.
    """
    if gamma <= 0:
        raise ConfigurationError("gamma must be > 0")
    if num_clients < 1:
        raise ConfigurationError("num_clients must be >= 1")
    if num_clients > len(samples):
        raise ConfigurationError(
            "num_clients=%d exceeds sample count %d" % (num_clients, len(samples))
        )
    if any(s.label is None for s in samples):
        raise ConfigurationError("dirichlet partitioning requires labeled samples")

    labels = np.array([s.label for s in samples], dtype=np.int64)
    classes = np.unique(labels)
    for attempt in range(100):
        rng = np.random.default_rng(seed + attempt)
        shards: list[list[int]] = [[] for _ in range(num_clients)]
        for c in classes:
            idx = np.where(labels == c)[0]
            rng.shuffle(idx)
            props = rng.dirichlet([gamma] * num_clients)
            cuts = (np.cumsum(props)[:-1] * len(idx)).astype(int)
            for client, part in enumerate(np.split(idx, cuts)):
                shards[client].extend(part.tolist())
        if all(len(s) > 0 for s in shards):
            return [
                ClientDataset(client_id=i, samples=tuple(samples[j] for j in shard))
                for i, shard in enumerate(shards)
            ]
    raise ConfigurationError(
        "dirichlet partition left a client empty after 100 attempts"
    )


def assign_roles(clients, labeled_fraction: float, seed: int) -> list[ClientDataset]:
    """Mark round(fraction * count) clients labeled (at least 1), rest unlabeled."""
    if not 0 < labeled_fraction <= 1:
        raise ConfigurationError("labeled_fraction must be in (0, 1]")
    n_labeled = max(1, round(labeled_fraction * len(clients)))
    rng = np.random.default_rng(seed)
    ids = [c.client_id for c in clients]
    chosen = set(rng.choice(ids, size=n_labeled, replace=False).tolist())
    out = []
    for c in clients:
        role = LABELED if c.client_id in chosen else UNLABELED
        out.append(replace(c, role=role))
    return out


def unseal_clients(clients) -> list[ClientDataset]:
    """Turn every client labeled, exposing sealed labels (oracle baseline)."""
    return [replace(c, role=LABELED) for c in clients]


def augment_weak(features: np.ndarray, cfg: AugmentConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise with the weak sigma."""
    x = np.asarray(features, dtype=np.float64)
    if cfg.weak_noise_sigma == 0:
        return x.copy()
    return x + rng.normal(0.0, cfg.weak_noise_sigma, size=x.shape)


def augment_strong(features: np.ndarray, cfg: AugmentConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with the strong sigma, then coordinate dropout.

    Exactly round(strong_mask_fraction * P) coordinates are zeroed per
    vector, chosen uniformly without replacement.
    """
    x = np.asarray(features, dtype=np.float64)
    if cfg.strong_noise_sigma > 0:
        x = x + rng.normal(0.0, cfg.strong_noise_sigma, size=x.shape)
    else:
        x = x.copy()
    dim = x.shape[-1]
    n_mask = int(round(cfg.strong_mask_fraction * dim))
    if n_mask > 0:
        if x.ndim == 1:
            x[rng.choice(dim, size=n_mask, replace=False)] = 0.0
        else:
            for row in x:
                row[rng.choice(dim, size=n_mask, replace=False)] = 0.0
    return x


def read_cifar10_binary(path) -> list[Sample]:
    """Parse a CIFAR-10 batch file: 3073-byte records, pixels scaled to [0,1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % CIFAR10_RECORD_BYTES != 0:
        offset = len(raw) - len(raw) % CIFAR10_RECORD_BYTES
        raise FormatError(
            "truncated CIFAR-10 file %s: %d trailing bytes at offset %d"
            % (path, len(raw) - offset, offset)
        )
    if not raw:
        return []
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
    samples = []
    for rec in records:
        samples.append(
            Sample(
                features=rec[1:].astype(np.float64) / 255.0,
                label=int(rec[0]),
            )
        )
    return samples


def save_samples(samples, path) -> None:
    """Line-oriented export: ``label,f1,...,fP``; empty label hides it."""
    with open(path, "w") as f:
        for s in samples:
            label = "" if s.label is None else str(s.label)
            f.write(label + "," + ",".join("%.17g" % v for v in s.features) + "\n")


def load_samples(path) -> list[Sample]:
    """Inverse of :func:`save_samples`."""
    samples = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            head, *rest = line.split(",")
            if not rest:
                raise FormatError("%s:%d: no feature values" % (path, lineno))
            try:
                label = None if head == "" else int(head)
                features = np.array([float(v) for v in rest], dtype=np.float64)
            except ValueError as exc:
                raise FormatError("%s:%d: %s" % (path, lineno, exc)) from exc
            samples.append(Sample(features=features, label=label))
    return samples
