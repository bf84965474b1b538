"""Observational datasets, CSV ingestion and fold assignment for cross-fitting."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when an input file or array violates the dataset schema."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``X`` (n x d), treatment ``W`` and outcome ``Y``.

    Arrays are copied and made read-only on construction.
    """

    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = _frozen(self.X)
        if X.ndim == 1:
            X = _frozen(X[:, None])
        W = _frozen(self.W).ravel()
        Y = _frozen(self.Y).ravel()
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError("X must be an n x d matrix with d >= 1")
        n = X.shape[0]
        if n < 1:
            raise DataError("dataset has no rows")
        if W.shape[0] != n or Y.shape[0] != n:
            raise DataError(f"length mismatch: X has {n} rows, W {W.shape[0]}, Y {Y.shape[0]}")
        for name, a in (("X", X), ("W", W), ("Y", Y)):
            if not np.all(np.isfinite(a)):
                raise DataError(f"{name} contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def standardized(self) -> "Dataset":
        """Copy with each covariate column centered and scaled to unit variance.

        Constant columns are centered only.
        """
        mean = self.X.mean(axis=0)
        sd = self.X.std(axis=0)
        sd[sd == 0] = 1.0
        return Dataset((self.X - mean) / sd, self.W, self.Y)


_X_COL = re.compile(r"^x(\d+)$")


def load_csv(path, d: int | None = None) -> Dataset:
    """Read a dataset with header columns ``y``, ``w``, ``x1..xd``.

    Column names are matched case-insensitively and may appear in any order.
    When ``d`` is None the covariate count is inferred from the header.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        names = [h.strip().lower() for h in header]
        index = {}
        for j, name in enumerate(names):
            if name in index:
                raise DataError(f"{path}: duplicate column {name}")
            index[name] = j
        for required in ("y", "w"):
            if required not in index:
                raise DataError(f"{path}: column {required} not found")
        if d is None:
            present = sorted(int(m.group(1)) for m in map(_X_COL.match, names) if m)
            d = len(present)
            if d == 0:
                raise DataError(f"{path}: column x1 not found")
        for j in range(1, d + 1):
            if f"x{j}" not in index:
                raise DataError(f"{path}: column x{j} not found")

        cols = [index["y"], index["w"]] + [index[f"x{j}"] for j in range(1, d + 1)]
        col_names = ["y", "w"] + [f"x{j}" for j in range(1, d + 1)]
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) < len(names):
                raise DataError(f"{path}: row {lineno} has {len(record)} fields, expected {len(names)}")
            values = []
            for name, j in zip(col_names, cols):
                cell = record[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {name}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {name}: non-finite value {cell!r}")
                values.append(v)
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(X=arr[:, 2:], W=arr[:, 1], Y=arr[:, 0])


def fmt(x: float) -> str:
    """Format a float with 17 significant digits (lossless round trip)."""
    return format(float(x), ".17g")


def write_csv(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["y", "w"] + [f"x{j}" for j in range(1, ds.d + 1)])
        for i in range(ds.n):
            writer.writerow([fmt(ds.Y[i]), fmt(ds.W[i])] + [fmt(v) for v in ds.X[i]])


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    K: int

    def test_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def train_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.K)


def make_folds(n: int, K: int, seed: int) -> FoldAssignment:
    """Random balanced split of ``range(n)`` into ``K`` folds.

    Fold sizes differ by at most one; the result depends only on (n, K, seed).
    """
    if not 2 <= K <= n:
        raise ValueError(f"fold count K={K} must satisfy 2 <= K <= n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % K
    fold_of.setflags(write=False)
    return FoldAssignment(fold_of=fold_of, K=K)
