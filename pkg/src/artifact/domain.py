"""Core data types shared across the package.

Arrays held by these types are copied on construction and frozen
(``writeable=False``) so instances can be shared freely.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

INFINITE = math.inf
"""Sentinel for the strict-fairness limit of the penalty weight."""

MASS_TOL = 1e-9
PLAN_TOL = 1e-7


class ValidationError(ValueError):
    """Raised when input violates a type invariant."""


class Group(enum.IntEnum):
    """Binary sensitive attribute, ``+`` or ``-``."""

    PLUS = 1
    MINUS = -1

    @classmethod
    def parse(cls, value) -> "Group":
        if isinstance(value, Group):
            return value
        if isinstance(value, (bool, np.bool_)):
            return cls.PLUS if value else cls.MINUS
        if isinstance(value, (int, np.integer)):
            if value == 1:
                return cls.PLUS
            if value in (-1, 0):
                return cls.MINUS
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("+", "plus", "1", "+1"):
                return cls.PLUS
            if key in ("-", "minus", "-1", "0", "−"):
                return cls.MINUS
        raise ValidationError(f"sensitive value {value!r} is not one of {{plus, minus}}")

    @property
    def symbol(self) -> str:
        return "+" if self is Group.PLUS else "-"


class Penalty(str, enum.Enum):
    W2 = "W2"
    TV = "TV"


class Setting(str, enum.Enum):
    AWARE = "aware"
    UNAWARE = "unaware"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def is_infinite(lam: float) -> bool:
    return math.isinf(lam) and lam > 0


@dataclass(frozen=True)
class Dataset:
    """Features ``X`` (n x p), target ``y`` and sensitive labels ``s``.

    ``sensitive`` holds :class:`Group` values (+1 / -1) as an int8 array.
    """

    features: np.ndarray
    target: np.ndarray
    sensitive: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.target, dtype=float).reshape(-1)
        s = np.asarray(self.sensitive)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-d matrix")
        n = X.shape[0]
        if n < 1:
            raise ValidationError("dataset must contain at least one row")
        if y.shape[0] != n or s.shape[0] != n:
            raise ValidationError(
                f"row count mismatch: features {n}, target {y.shape[0]}, sensitive {s.shape[0]}"
            )
        bad = ~np.isfinite(X).all(axis=1)
        if bad.any():
            raise ValidationError(f"non-finite feature entry in row {int(np.argmax(bad))}")
        bad = ~np.isfinite(y)
        if bad.any():
            raise ValidationError(f"non-finite target in row {int(np.argmax(bad))}")
        if s.dtype.kind in "iub":
            s = s.astype(np.int64)
            if s.dtype.kind == "b":
                s = np.where(s, 1, -1)
            invalid = ~np.isin(s, (1, -1))
            if invalid.any():
                row = int(np.argmax(invalid))
                raise ValidationError(f"row {row}: sensitive value {s[row]!r} is not one of {{plus, minus}}")
        else:
            coded = np.empty(n, dtype=np.int64)
            for row, value in enumerate(s):
                try:
                    coded[row] = int(Group.parse(value))
                except ValidationError as exc:
                    raise ValidationError(f"row {row}: {exc}") from None
            s = coded
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "target", _frozen(y))
        object.__setattr__(self, "sensitive", _frozen(s.astype(np.int8)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def plus_mask(self) -> np.ndarray:
        return self.sensitive == Group.PLUS

    def subset(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.intp)
        return Dataset(self.features[index], self.target[index], self.sensitive[index])

    def with_target(self, target: np.ndarray) -> "Dataset":
        return Dataset(self.features, target, self.sensitive)

    def with_sensitive_feature(self) -> "Dataset":
        """Copy with the sensitive label appended as a 0/1 feature column."""
        extra = (self.sensitive == Group.PLUS).astype(float)[:, None]
        return Dataset(np.hstack([self.features, extra]), self.target, self.sensitive)


def validate_dataset(rows: Iterable[Sequence]) -> Dataset:
    """Build a :class:`Dataset` from ``(features, target, sensitive)`` rows.

    Each row is a triple whose first element is a feature sequence (or a
    scalar for a single feature).  Errors name the offending row.
    """
    rows = list(rows)
    if not rows:
        raise ValidationError("no rows")
    feats, targets, groups = [], [], []
    width = None
    for i, row in enumerate(rows):
        try:
            x, y, s = row
        except (TypeError, ValueError):
            raise ValidationError(f"row {i}: expected (features, target, sensitive)") from None
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if width is None:
            width = x.shape[0]
        elif x.shape[0] != width:
            raise ValidationError(f"row {i}: expected {width} features, got {x.shape[0]}")
        if not np.isfinite(x).all():
            raise ValidationError(f"row {i}: non-finite feature entry")
        y = float(y)
        if not math.isfinite(y):
            raise ValidationError(f"row {i}: non-finite target")
        try:
            g = Group.parse(s)
        except ValidationError as exc:
            raise ValidationError(f"row {i}: {exc}") from None
        feats.append(x)
        targets.append(y)
        groups.append(int(g))
    return Dataset(np.vstack(feats), np.array(targets), np.array(groups, dtype=np.int8))


@dataclass(frozen=True)
class GroupPriors:
    p_plus: float
    p_minus: float

    def __post_init__(self):
        if not (0.0 < self.p_plus < 1.0 and 0.0 < self.p_minus < 1.0):
            raise ValidationError("group priors must lie strictly inside (0, 1)")
        if abs(self.p_plus + self.p_minus - 1.0) > 1e-12:
            raise ValidationError("group priors must sum to 1")

    @classmethod
    def from_counts(cls, n_plus: int, n_minus: int) -> "GroupPriors":
        n = n_plus + n_minus
        if n_plus <= 0 or n_minus <= 0:
            raise ValidationError("both groups must be present to estimate priors")
        return cls(n_plus / n, n_minus / n)

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "GroupPriors":
        n_plus = int(dataset.plus_mask.sum())
        return cls.from_counts(n_plus, dataset.n - n_plus)

    def of(self, group: Group) -> float:
        return self.p_plus if Group.parse(group) is Group.PLUS else self.p_minus


@dataclass(frozen=True)
class PseudoPoint:
    h: float
    d: float
    w: float

    def __post_init__(self):
        if not math.isfinite(self.h) or not math.isfinite(self.d):
            raise ValidationError("pseudo-point coordinates must be finite")
        if self.d == 0.0:
            raise ValidationError("pseudo-point must have nonzero signed ratio")
        if not (math.isfinite(self.w) and self.w >= 0.0):
            raise ValidationError("pseudo-point mass must be finite and nonnegative")


@dataclass(frozen=True)
class PseudoMeasure:
    """Weighted support points ``(h, d)`` on one side of the sign partition.

    Stored column-wise; :meth:`points` yields :class:`PseudoPoint` views.
    An empty measure is allowed (it flags a degenerate partition).
    """

    side: Group
    h: np.ndarray
    d: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        side = Group.parse(self.side)
        h = np.asarray(self.h, dtype=float).reshape(-1)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not (h.shape == d.shape == w.shape):
            raise ValidationError("pseudo-measure columns must have equal length")
        if not (np.isfinite(h).all() and np.isfinite(d).all() and np.isfinite(w).all()):
            raise ValidationError("pseudo-measure entries must be finite")
        if (w < 0).any():
            raise ValidationError("pseudo-measure weights must be nonnegative")
        if side is Group.PLUS and (d <= 0).any():
            raise ValidationError("plus-side points need d > 0")
        if side is Group.MINUS and (d >= 0).any():
            raise ValidationError("minus-side points need d < 0")
        if h.size and abs(w.sum() - 1.0) > MASS_TOL:
            raise ValidationError(f"pseudo-measure mass {w.sum()!r} is not 1")
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "h", _frozen(h))
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "w", _frozen(w))

    def __len__(self) -> int:
        return self.h.shape[0]

    def points(self) -> Iterator[PseudoPoint]:
        for h, d, w in zip(self.h, self.d, self.w):
            yield PseudoPoint(float(h), float(d), float(w))


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling: ``mass[e]`` moves from plus point ``rows[e]`` to minus point ``cols[e]``."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    n_plus: int
    n_minus: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        if not (rows.shape == cols.shape == mass.shape):
            raise ValidationError("plan entry arrays must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_plus or cols.min() < 0 or cols.max() >= self.n_minus:
                raise ValidationError("plan entry index out of range")
            if not (np.isfinite(mass).all() and (mass > 0).all()):
                raise ValidationError("plan masses must be positive and finite")
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "cols", _frozen(cols))
        object.__setattr__(self, "mass", _frozen(mass))

    def __len__(self) -> int:
        return self.mass.shape[0]

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(m)) for i, j, m in zip(self.rows, self.cols, self.mass)]

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=self.n_plus)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=self.n_minus)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n_plus, self.n_minus))
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def check_marginals(self, a: np.ndarray, b: np.ndarray, tol: float = PLAN_TOL) -> None:
        if np.max(np.abs(self.row_sums() - a), initial=0.0) > tol:
            raise ValidationError("plan row sums do not match source weights")
        if np.max(np.abs(self.col_sums() - b), initial=0.0) > tol:
            raise ValidationError("plan column sums do not match target weights")


@dataclass(frozen=True)
class RelaxationConfig:
    penalty: Penalty = Penalty.W2
    setting: Setting = Setting.UNAWARE
    lam: float = INFINITE
    tau: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "penalty", Penalty(self.penalty))
        object.__setattr__(self, "setting", Setting(self.setting))
        lam = float(self.lam)
        if math.isnan(lam) or lam < 0:
            raise ValidationError("lambda must be >= 0 or INFINITE")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValidationError("tau must be a finite value >= 0")
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class FairnessReport:
    mse: float
    w2: float
    tv: float
    ks: float
    ks_grid: float
    var_plus: float
    var_minus: float

    def __post_init__(self):
        for name in ("mse", "w2", "var_plus", "var_minus"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("tv", "ks", "ks_grid"):
            value = getattr(self, name)
            if not (math.isfinite(value) and -1e-12 <= value <= 1 + 1e-12):
                raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")

    FIELDS = ("mse", "w2", "tv", "ks", "ks_grid", "var_plus", "var_minus")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.FIELDS}
