"""Synthetic generators with known oracles, CSV ingestion and splitting.

Randomness comes from numpy's PCG64 bit generator: uniforms are its
53-bit doubles and normals are produced here by Box-Muller, so a fixed
``(n, gamma, seed)`` gives the same dataset on every platform and numpy
version that keeps the PCG64 stream.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .domain import Dataset, Group, ValidationError

log = logging.getLogger(__name__)

NOISE_SD = 0.5
NA_TOKENS = ("", "?", "NA", "N/A", "nan", "NaN")


# -- random source -------------------------------------------------------------


class SeededRng:
    """PCG64 uniforms plus Box-Muller normals."""

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(int(seed))
        self._gen = np.random.Generator(self._bits)

    def uniform(self, n: int) -> np.ndarray:
        return self._gen.random(n)

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(2.0 * math.pi * u2)
        z[1::2] = r * np.sin(2.0 * math.pi * u2)
        return z[:n]


# -- synthetic data ------------------------------------------------------------


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma


def _confounded_feature(rng: SeededRng, n: int, gamma: float):
    s = np.where(rng.uniform(n) < 0.5, int(Group.PLUS), int(Group.MINUS))
    z = np.where(s == Group.PLUS, 1.0, -1.0)
    x = gamma * z + math.sqrt(1.0 - gamma * gamma) * rng.normal(n)
    return x, s


def oracle_eta_1d(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, 0]
    out = 3.0 * np.tanh(1.5 * x)
    return float(out) if out.ndim == 0 else out


def oracle_posterior_1d(x, gamma: float):
    """Exact ``P(S=+ | x)`` for the confounded feature."""
    gamma = _check_gamma(gamma)
    if gamma >= 1.0:
        raise ValidationError("posterior is undefined at gamma = 1 (feature equals the group)")
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, 0]
    out = 1.0 / (1.0 + np.exp(-2.0 * gamma * x / (1.0 - gamma * gamma)))
    return float(out) if out.ndim == 0 else out


def oracle_eta_2d(X):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    return 2.0 * X[:, 0] - X[:, 1]


def oracle_posterior_2d(X, gamma: float):
    # the second feature is independent of the group
    return oracle_posterior_1d(np.asarray(X, dtype=float).reshape(-1, 2)[:, 0], gamma)


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    return int(n)


def gen_synthetic_1d(n: int, gamma: float, seed: int) -> Dataset:
    n, gamma = _check_n(n), _check_gamma(gamma)
    rng = SeededRng(seed)
    x, s = _confounded_feature(rng, n, gamma)
    y = oracle_eta_1d(x) + NOISE_SD * rng.normal(n)
    return Dataset(x[:, None], y, s)


def gen_synthetic_2d(n: int, gamma: float, seed: int) -> Dataset:
    n, gamma = _check_n(n), _check_gamma(gamma)
    rng = SeededRng(seed)
    x1, s = _confounded_feature(rng, n, gamma)
    x2 = rng.normal(n)
    X = np.column_stack([x1, x2])
    y = oracle_eta_2d(X) + NOISE_SD * rng.normal(n)
    return Dataset(X, y, s)


# -- target scaling ------------------------------------------------------------


@dataclass(frozen=True)
class TargetScaler:
    """Affine map of ``[lo, hi]`` onto ``[-1, 1]``."""

    lo: float
    hi: float

    @classmethod
    def fit(cls, y) -> "TargetScaler":
        y = np.asarray(y, dtype=float)
        if y.size == 0:
            raise ValidationError("cannot fit a scaler on an empty target")
        return cls(float(y.min()), float(y.max()))

    @property
    def span(self) -> float:
        return self.hi - self.lo if self.hi > self.lo else 1.0

    def transform(self, y):
        return (np.asarray(y, dtype=float) - self.lo) / self.span * 2.0 - 1.0

    def inverse(self, z):
        return (np.asarray(z, dtype=float) + 1.0) / 2.0 * self.span + self.lo

    def apply(self, dataset: Dataset) -> Dataset:
        return dataset.with_target(self.transform(dataset.target))


# -- CSV ingestion -------------------------------------------------------------


@dataclass(frozen=True)
class Schema:
    """Column roles for one CSV file.

    ``features == ("*",)`` means every column that is not the target, the
    sensitive column or listed in ``exclude``.
    """

    target: str
    sensitive: str
    positive: tuple[str, ...] = ()
    positive_threshold: float | None = None
    features: tuple[str, ...] = ("*",)
    categorical: tuple[str, ...] = ()
    exclude: tuple[str, ...] = ()
    dropna: bool = False
    name: str = ""
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.positive and self.positive_threshold is None:
            raise ValidationError("schema needs 'positive' values or a 'positive_threshold'")

    def is_positive(self, cell: str) -> bool:
        if self.positive_threshold is not None:
            return _parse_float(cell) >= self.positive_threshold
        return cell.strip() in self.positive


def _split_list(text: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in text.replace("\n", ",").split(",") if item.strip())


def read_schema(path) -> Schema:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ValidationError(f"schema {path}: {exc}") from None
    if not parser.has_section("schema"):
        raise ValidationError(f"schema {path}: missing [schema] section")
    sec = parser["schema"]
    for key in ("target", "sensitive"):
        if key not in sec:
            raise ValidationError(f"schema {path}: missing key '{key}'")
    thr = sec.get("positive_threshold")
    return Schema(
        target=sec["target"].strip(),
        sensitive=sec["sensitive"].strip(),
        positive=_split_list(sec.get("positive", "")),
        positive_threshold=None if thr is None else float(thr),
        features=_split_list(sec.get("features", "*")) or ("*",),
        categorical=_split_list(sec.get("categorical", "")),
        exclude=_split_list(sec.get("exclude", "")),
        dropna=sec.getboolean("dropna", fallback=False),
        name=sec.get("name", Path(path).stem),
        notes=sec.get("notes", ""),
    )


def shipped_schema(name: str) -> Schema:
    """One of the schemas bundled with the package (``lawschool``, ``communities``, ``adult``)."""
    ref = resources.files("artifact").joinpath("schemas", f"{name}.ini")
    if not ref.is_file():
        raise ValidationError(f"no shipped schema named {name!r}")
    with resources.as_file(ref) as p:
        return read_schema(p)


def _parse_float(cell: str) -> float:
    return float(cell.strip())


def load_csv(path, schema: Schema, *, scale: bool = False) -> Dataset:
    """Read a header-first UTF-8 CSV into a :class:`Dataset`.

    Numeric feature and target cells must parse as floats; columns named
    in ``schema.categorical`` are one-hot encoded (sorted category order).
    With ``scale=True`` the target is mapped to ``[-1, 1]`` using this
    file's own range; experiment code instead fits :class:`TargetScaler`
    on the training split.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"CSV file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    col = {name: i for i, name in enumerate(header)}
    if schema.features == ("*",):
        skip = {schema.target, schema.sensitive, *schema.exclude}
        features = [h for h in header if h not in skip]
    else:
        features = list(schema.features)
    for name in [schema.target, schema.sensitive, *features, *schema.categorical]:
        if name not in col:
            raise ValidationError(f"{path}: missing column '{name}'")
    used = [schema.target, schema.sensitive, *features]
    keep = []
    for r_idx, row in enumerate(rows):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {r_idx} has {len(row)} cells, expected {len(header)}")
        if any(row[col[c]].strip() in NA_TOKENS for c in used):
            if schema.dropna:
                continue
            bad = next(c for c in used if row[col[c]].strip() in NA_TOKENS)
            raise ValidationError(f"{path}: row {r_idx}: missing value in column '{bad}'")
        keep.append(r_idx)
    if schema.dropna and len(keep) < len(rows):
        log.info("%s: dropped %d rows with missing values", path, len(rows) - len(keep))

    def numeric(name):
        out = np.empty(len(keep))
        for k, r_idx in enumerate(keep):
            try:
                out[k] = _parse_float(rows[r_idx][col[name]])
            except ValueError:
                raise ValidationError(
                    f"{path}: row {r_idx}: cannot parse {rows[r_idx][col[name]]!r} in column '{name}'"
                ) from None
        return out

    y = numeric(schema.target)
    try:
        s = np.array([Group.PLUS if schema.is_positive(rows[r][col[schema.sensitive]]) else Group.MINUS for r in keep])
    except ValueError as exc:
        raise ValidationError(f"{path}: sensitive column: {exc}") from None
    blocks = []
    for name in features:
        if name in schema.categorical:
            cells = [rows[r][col[name]].strip() for r in keep]
            cats = sorted(set(cells))
            index = {c: i for i, c in enumerate(cats)}
            onehot = np.zeros((len(keep), len(cats)))
            onehot[np.arange(len(keep)), [index[c] for c in cells]] = 1.0
            blocks.append(onehot)
        else:
            blocks.append(numeric(name)[:, None])
    X = np.hstack(blocks) if blocks else np.zeros((len(keep), 0))
    for g in (Group.PLUS, Group.MINUS):
        if int((s == g).sum()) < 2:
            raise ValidationError(f"{path}: group {g.symbol} has fewer than 2 rows")
    if scale:
        y = TargetScaler.fit(y).transform(y)
    return Dataset(X, y, s)


# -- splitting -----------------------------------------------------------------


def stratified_split_indices(sensitive, test_fraction: float = 0.2, seed: int = 0):
    """Train and test row indices, shuffled within each group (both sorted)."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValidationError("test_fraction must lie in [0, 1)")
    s = np.asarray(sensitive)
    rng = SeededRng(seed)
    train, test = [], []
    for g in (Group.PLUS, Group.MINUS):
        idx = np.flatnonzero(s == g)
        if idx.size < 2:
            raise ValidationError(f"group {g.symbol} has {idx.size} rows; need at least 2 to split")
        perm = idx[np.argsort(rng.uniform(idx.size), kind="stable")]
        n_test = int(round(test_fraction * idx.size))
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0):
    """Split per group; the test part is ``None`` when it would be empty."""
    tr, te = stratified_split_indices(dataset.sensitive, test_fraction, seed)
    return dataset.subset(tr), (dataset.subset(te) if te.size else None)
