"""Per-variable bounds ``L <= x <= U`` over the extended reals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        up = np.array(self.upper, dtype=float).ravel()
        if lo.shape != up.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(up)):
            raise ValueError("bounds must not be NaN")
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def unbounded(cls, n: int) -> "BoxBounds":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def from_labels(cls, n: int, labels) -> "BoxBounds":
        labels = np.asarray(labels, dtype=float)
        lo = np.full(n, -np.inf)
        up = np.full(n, np.inf)
        l = labels.size
        lo[:l][labels > 0] = 1.0
        up[:l][labels < 0] = -1.0
        return cls(lo, up)

    def __len__(self):
        return self.lower.size

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper))

    @property
    def sign_fixed(self) -> np.ndarray:
        return (self.lower >= 1.0) | (self.upper <= -1.0)

    @property
    def fixed_signs(self) -> np.ndarray:
        """+1 / -1 for sign-fixed variables, 0 elsewhere."""
        s = np.zeros(self.lower.size)
        s[self.lower >= 1.0] = 1.0
        s[self.upper <= -1.0] = -1.0
        return s

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def intersect(self, other: "BoxBounds") -> "BoxBounds":
        return BoxBounds(np.maximum(self.lower, other.lower), np.minimum(self.upper, other.upper))

    def with_bounds(self, i: int, lower: float | None = None, upper: float | None = None) -> "BoxBounds":
        lo = self.lower.copy()
        up = self.upper.copy()
        if lower is not None:
            lo[i] = lower
        if upper is not None:
            up[i] = upper
        return BoxBounds(lo, up)

    def diag_cap(self) -> np.ndarray:
        """``max(L_i^2, U_i^2)``; +inf where either bound is infinite."""
        cap = np.maximum(self.lower ** 2, self.upper ** 2)
        cap[~(np.isfinite(self.lower) & np.isfinite(self.upper))] = np.inf
        return cap

    def project_signs(self) -> "BoxBounds":
        """Snap bounds inside (-1, 1) outward, since every variable satisfies ``x_i^2 >= 1``.

        ``L > -1`` forces ``x_i >= 1``; ``U < 1`` forces ``x_i <= -1``.
        """
        lo = self.lower.copy()
        up = self.upper.copy()
        lo = np.where(lo > -1.0, np.maximum(lo, 1.0), lo)
        up = np.where(up < 1.0, np.minimum(up, -1.0), up)
        return BoxBounds(lo, up)

    def tighter_or_equal(self, other: "BoxBounds", tol: float = 0.0) -> bool:
        """True when ``self`` is entrywise inside ``other``."""
        return bool(np.all(self.lower >= other.lower - tol) and np.all(self.upper <= other.upper + tol))
