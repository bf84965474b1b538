"""Weighted tensor-product Hermite dictionary and the extended balance features.

Terms are products of normalized probabilists' Hermite polynomials
``He_k(x) / sqrt(k!)``, which are orthonormal under the standard Gaussian.
A term of total order ``k`` in dimension ``d`` is multiplied by
``1 / (k * sqrt(n_{k,d}))`` where ``n_{k,d}`` counts the terms of that order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    d: int
    max_order: int = 3
    normalize_weights: bool = True
    include_intercept: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.max_order < 1:
            raise ValueError(f"max_order must be >= 1, got {self.max_order}")


@dataclass(frozen=True)
class MultiIndex:
    exponents: tuple[int, ...]

    @property
    def total_order(self) -> int:
        return sum(self.exponents)


@dataclass(frozen=True)
class ExtendedFeatureSpec:
    strata_widths: tuple[float, ...] = (0.05, 0.1, 0.2)
    dyadic_depth: int = 3
    enabled: bool = True
    # "indicator": raw 0/1 columns; otherwise columns are scaled to unit empirical
    # second moment, then divided by Q ("gauge"), sqrt(Q) ("sqrt") or left alone
    # ("unit"); Q = number of columns
    column_scale: str = "indicator"

    def __post_init__(self):
        if any(w <= 0 for w in self.strata_widths):
            raise ValueError("strata widths must be positive")
        if self.dyadic_depth < 0:
            raise ValueError("dyadic_depth must be >= 0")
        if self.column_scale not in ("indicator", "gauge", "sqrt", "unit"):
            raise ValueError(f"unknown column_scale {self.column_scale!r}")


def hermite_eval(k: int, x):
    """Normalized probabilists' Hermite polynomial ``He_k(x) / sqrt(k!)``.

    Works elementwise on arrays.
    """
    if k < 0:
        raise ValueError("order must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for j in range(k):
        prev, cur = cur, (x * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
    return cur if cur.ndim else float(cur)


def hermite_table(x: np.ndarray, max_order: int) -> np.ndarray:
    """Array of shape ``x.shape + (max_order + 1,)`` holding all normalized orders."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_order + 1,))
    out[..., 0] = 1.0
    if max_order >= 1:
        out[..., 1] = x
    for j in range(1, max_order):
        out[..., j + 1] = (x * out[..., j] - math.sqrt(j) * out[..., j - 1]) / math.sqrt(j + 1)
    return out


def n_terms(k: int, d: int) -> int:
    """Number of multi-indices in ``d`` variables with total order ``k``."""
    return math.comb(k + d - 1, k)


@lru_cache(maxsize=None)
def _terms(d: int, max_order: int, include_intercept: bool) -> tuple[MultiIndex, ...]:
    out = []
    for k in range(0 if include_intercept else 1, max_order + 1):
        level = [e for e in itertools.product(range(k + 1), repeat=d) if sum(e) == k]
        out.extend(MultiIndex(tuple(e)) for e in sorted(level))
    return tuple(out)


def enumerate_terms(spec: BasisSpec) -> list[MultiIndex]:
    """Multi-indices sorted by total order, then lexicographically."""
    return list(_terms(spec.d, spec.max_order, spec.include_intercept))


def weight_normalizer(max_order: int) -> float:
    return 1.0 / math.sqrt(sum(1.0 / k**2 for k in range(1, max_order + 1)))


def basis_weight(k: int, d: int, spec: BasisSpec) -> float:
    if k == 0:
        return 1.0
    if not 1 <= k <= spec.max_order:
        raise ValueError(f"order {k} outside [1, {spec.max_order}]")
    a = 1.0 / (k * math.sqrt(n_terms(k, d)))
    return a * weight_normalizer(spec.max_order) if spec.normalize_weights else a


def design_matrix(X: np.ndarray, spec: BasisSpec) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != spec.d:
        raise ValueError(f"X has {X.shape[1]} columns, spec expects d={spec.d}")
    H = hermite_table(X, spec.max_order)  # (n, d, max_order+1)
    terms = enumerate_terms(spec)
    out = np.empty((X.shape[0], len(terms)))
    for j, term in enumerate(terms):
        col = np.full(X.shape[0], basis_weight(term.total_order, spec.d, spec))
        for var, e in enumerate(term.exponents):
            if e:
                col *= H[:, var, e]
        out[:, j] = col
    return out


def _strata(e_hat: np.ndarray, width: float) -> list[np.ndarray]:
    lo = e_hat.min()
    nbins = max(1, int(math.ceil((e_hat.max() - lo) / width)))
    idx = np.minimum(np.floor((e_hat - lo) / width).astype(np.int64), nbins - 1)
    return [idx == b for b in range(nbins) if np.any(idx == b)]


def _dyadic_leaves(X: np.ndarray, depth: int) -> list[np.ndarray]:
    n, d = X.shape
    nodes = [np.ones(n, dtype=bool)]
    for level in range(depth):
        feature = level % d
        nxt = []
        for mask in nodes:
            if not mask.any():
                continue
            med = np.median(X[mask, feature])
            left = mask & (X[:, feature] <= med)
            nxt.extend([left, mask & ~left])
        nodes = nxt
    return [m for m in nodes if m.any()]


def extended_features(X: np.ndarray, e_hat: np.ndarray, spec: ExtendedFeatureSpec) -> np.ndarray:
    """Indicator columns for treatment-intensity strata and dyadic median-split leaves.

    Each partition scheme assigns every row to exactly one nonzero column. Bins
    of ``e_hat`` start at its minimum; empty bins and leaves are dropped. Dyadic
    splits cycle through the features in index order, sending rows at or below
    the node median to the left child. Columns are raw indicators by default;
    see ``ExtendedFeatureSpec.column_scale`` for the rescaled variants.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    e_hat = np.asarray(e_hat, dtype=float)
    if not np.all(np.isfinite(e_hat)):
        raise ValueError("e_hat must be finite")
    n = X.shape[0]
    if not spec.enabled:
        return np.empty((n, 0))
    cols = []
    for width in spec.strata_widths:
        cols.extend(_strata(e_hat, width))
    cols.extend(_dyadic_leaves(X, spec.dyadic_depth))
    if not cols:
        return np.empty((n, 0))
    E = np.column_stack(cols).astype(float)
    if spec.column_scale == "indicator":
        return E
    E /= np.sqrt(E.sum(axis=0) / n)
    if spec.column_scale == "gauge":
        E /= E.shape[1]
    elif spec.column_scale == "sqrt":
        E /= math.sqrt(E.shape[1])
    return E
