"""Per-node class labels with an explicit "unknown" marker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError

UNKNOWN = -1


@dataclass(frozen=True, eq=False)
class LabelVector:
    """Class id per node in ``[0, num_classes)``, or ``UNKNOWN`` (-1)."""

    values: np.ndarray
    num_classes: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64).ravel().copy()
        if self.num_classes < 1:
            raise DataError(f"need at least one class, got {self.num_classes}")
        if v.size and (v.min() < UNKNOWN or v.max() >= self.num_classes):
            raise DataError(f"label ids must lie in [0, {self.num_classes}) or be {UNKNOWN}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, y, num_classes: Optional[int] = None) -> "LabelVector":
        y = np.asarray(y, dtype=np.int64)
        if num_classes is None:
            num_classes = int(y.max()) + 1 if y.size and y.max() >= 0 else 1
        return cls(y, num_classes)

    def __len__(self):
        return self.values.size

    @property
    def known(self) -> np.ndarray:
        return self.values != UNKNOWN

    @property
    def all_known(self) -> bool:
        return bool(np.all(self.known))

    def require_known(self, idx=None) -> np.ndarray:
        """Return the label array (restricted to ``idx``), raising on UNKNOWN."""
        v = self.values if idx is None else self.values[np.asarray(idx)]
        if np.any(v == UNKNOWN):
            raise DataError("labels must be known for this operation")
        return v

    def one_hot(self) -> np.ndarray:
        """``n x C`` indicator matrix; unknown rows are zero."""
        Y = np.zeros((self.values.size, self.num_classes))
        k = self.known
        Y[np.flatnonzero(k), self.values[k]] = 1.0
        return Y

    def permuted_classes(self, perm) -> "LabelVector":
        """Relabel class ``c`` as ``perm[c]``."""
        perm = np.asarray(perm, dtype=np.int64)
        v = self.values.copy()
        k = self.known
        v[k] = perm[v[k]]
        return LabelVector(v, self.num_classes)
