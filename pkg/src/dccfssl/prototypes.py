"""Global class prototypes shared between the server and the loss layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingPrototypeError, ShapeError


@dataclass(frozen=True)
class GlobalPrototypes:
    """Per-class prototype vectors with availability flags.

    A class is "present" once aggregation has produced a prototype for it;
    losses referencing an absent class either raise or skip, depending on
    the caller's policy.
    """

    vectors: np.ndarray   # (num_classes, repr_dim)
    present: np.ndarray   # (num_classes,) bool

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.present.shape != (self.vectors.shape[0],):
            raise ShapeError("prototype matrix and present flags disagree")
        if not np.all(np.isfinite(self.vectors[self.present])):
            raise ShapeError("non-finite prototype for a present class")

    @classmethod
    def empty(cls, num_classes: int, repr_dim: int) -> "GlobalPrototypes":
        return cls(
            vectors=np.zeros((num_classes, repr_dim)),
            present=np.zeros(num_classes, dtype=bool),
        )

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def repr_dim(self) -> int:
        return self.vectors.shape[1]

    def any_present(self) -> bool:
        return bool(self.present.any())

    def require(self, class_ids: np.ndarray) -> None:
        missing = np.unique(class_ids[~self.present[class_ids]])
        if missing.size:
            raise MissingPrototypeError(
                "no global prototype for class(es) %s" % missing.tolist()
            )
