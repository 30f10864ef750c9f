"""Run configuration: a flat key=value text format with strict validation.

Unknown keys are rejected so experiment grids stay diffable. Serialization
is canonical; parse(serialize(parse(text))) is a fixed point.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigurationError

METHODS = ("dccfssl", "fedavg-sl-lower", "fedavg-sl-upper", "fedavg-fixmatch")
PARTITIONS = ("iid", "dirichlet")
DATASETS = ("blobs", "cifar10")


@dataclass(frozen=True)
class RunConfig:
    # dataset
    dataset: str = "blobs"
    data_path: str = ""
    num_classes: int = 8
    feature_dim: int = 16
    train_per_class: int = 50
    test_per_class: int = 20
    blob_spread: float = 0.5
    # federation
    num_clients: int = 10
    labeled_fraction: float = 0.1
    partition: str = "dirichlet"
    gamma: float = 1.0
    method: str = "dccfssl"
    # model
    hidden_dims: tuple[int, ...] = (32,)
    repr_dim: int = 16
    normalize_repr: bool = True
    # training
    rounds: int = 100
    clients_per_round: int = 20
    eta: float = 0.01
    epochs: int = 1
    batch_size: int = 16
    tau: float = 1.0
    t_thr: float = 0.95
    lambda_lcc: float = 1.0
    lambda_gcc: float = 1.0
    include_sibling_positive: bool = False
    warmup_fraction: float = 0.5
    # augmentation
    weak_noise_sigma: float = 0.05
    strong_noise_sigma: float = 0.15
    strong_mask_fraction: float = 0.1
    # bookkeeping
    seed: int = 0
    out_dir: str = "runs/out"

    def __post_init__(self):
        v = _validate_field
        v("dataset", self.dataset in DATASETS, "must be one of %s" % (DATASETS,))
        v("partition", self.partition in PARTITIONS,
          "must be one of %s" % (PARTITIONS,))
        v("method", self.method in METHODS, "must be one of %s" % (METHODS,))
        v("num_classes", self.num_classes >= 2, "must be >= 2")
        v("feature_dim", self.feature_dim >= 2, "must be >= 2")
        v("train_per_class", self.train_per_class >= 1, "must be >= 1")
        v("test_per_class", self.test_per_class >= 1, "must be >= 1")
        v("blob_spread", self.blob_spread >= 0, "must be >= 0")
        v("num_clients", self.num_clients >= 1, "must be >= 1")
        v("labeled_fraction", 0 < self.labeled_fraction <= 1,
          "must be in (0, 1]")
        v("gamma", self.gamma > 0, "must be > 0")
        v("rounds", self.rounds >= 0, "must be >= 0")
        v("clients_per_round",
          1 <= self.clients_per_round <= self.num_clients,
          "must be in [1, num_clients=%d]" % self.num_clients)
        v("eta", self.eta >= 0, "must be >= 0")
        v("epochs", self.epochs >= 0, "must be >= 0")
        v("batch_size", self.batch_size >= 1, "must be >= 1")
        v("tau", self.tau > 0, "must be > 0")
        v("t_thr", 0 < self.t_thr <= 1, "must be in (0, 1]")
        v("lambda_lcc", self.lambda_lcc >= 0, "must be >= 0")
        v("lambda_gcc", self.lambda_gcc >= 0, "must be >= 0")
        v("warmup_fraction", 0 <= self.warmup_fraction <= 1,
          "must be in [0, 1]")
        v("weak_noise_sigma", self.weak_noise_sigma >= 0, "must be >= 0")
        v("strong_noise_sigma",
          self.strong_noise_sigma >= self.weak_noise_sigma,
          "must be >= weak_noise_sigma")
        v("strong_mask_fraction", 0 <= self.strong_mask_fraction < 1,
          "must be in [0, 1)")
        v("repr_dim", self.repr_dim >= 1, "must be >= 1")
        v("hidden_dims", all(d >= 1 for d in self.hidden_dims),
          "entries must be >= 1")
        v("data_path", self.dataset != "cifar10" or bool(self.data_path),
          "required when dataset=cifar10")


def _validate_field(name: str, ok: bool, message: str) -> None:
    if not ok:
        raise ConfigurationError("config field %r %s" % (name, message))


def _parse_value(name: str, text: str, pytype):
    text = text.strip()
    try:
        if pytype is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError("not a boolean")
        if pytype is int:
            return int(text)
        if pytype is float:
            return float(text)
        if pytype is str:
            return text
        # tuple[int, ...]
        if text == "":
            return tuple()
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigurationError(
            "config field %r: cannot parse %r (%s)" % (name, text, exc)
        ) from exc


def _field_types() -> dict:
    return {f.name: f.type for f in dataclasses.fields(RunConfig)}


_PY_TYPES = {"str": str, "int": int, "float": float, "bool": bool,
             "tuple[int, ...]": tuple}


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys rejected."""
    types = _field_types()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError("config line %d: expected key = value" % lineno)
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigurationError("unknown config key %r (line %d)" % (key, lineno))
        if key in values:
            raise ConfigurationError("duplicate config key %r (line %d)" % (key, lineno))
        values[key] = _parse_value(key, val, _PY_TYPES[types[key]])
    if overrides:
        for key, val in overrides.items():
            if key not in types:
                raise ConfigurationError("unknown config key %r" % key)
            if isinstance(val, str):
                val = _parse_value(key, val, _PY_TYPES[types[key]])
            values[key] = val
    return RunConfig(**values)


def parse_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path) as f:
        return parse_config_text(f.read(), overrides)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append("%s = %s" % (f.name, text))
    return "\n".join(lines) + "\n"
