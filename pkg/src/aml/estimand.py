"""Estimands compiled to block balance problems, and plug-in functional values.

A balance problem stores, for each block ``b``, a design ``G_b`` (n x p_b) and a
target ``t_b`` so that the worst-case imbalance of weights ``gamma`` over the
absolutely convex hull of the block's dictionary is
``max_j |t_bj - (G_b' gamma)_j / n|``. Blocks combine in Euclidean norm.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .data import Dataset


class EstimandKind(enum.Enum):
    MAR_MEAN = "mar-mean"
    APE_CLM = "ape-clm"
    DIST_SHIFT = "shift"


@dataclass(frozen=True, eq=False)
class EstimandSpec:
    kind: EstimandKind
    shift_targets: np.ndarray | None = None

    def __post_init__(self):
        kind = EstimandKind(self.kind)
        object.__setattr__(self, "kind", kind)
        has_targets = self.shift_targets is not None
        if has_targets != (kind is EstimandKind.DIST_SHIFT):
            raise ValueError("shift_targets must be given exactly when kind is DIST_SHIFT")
        if has_targets:
            t = np.array(self.shift_targets, dtype=float).ravel()
            if not np.all(np.isfinite(t)):
                raise ValueError("shift_targets must be finite")
            t.setflags(write=False)
            object.__setattr__(self, "shift_targets", t)


@dataclass(frozen=True, eq=False)
class Block:
    label: str
    G: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        t = np.array(self.t, dtype=float).ravel()
        if G.shape[1] != t.shape[0]:
            raise ValueError(f"block {self.label!r}: G has {G.shape[1]} columns but t has {t.shape[0]} entries")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(t))):
            raise ValueError(f"block {self.label!r}: non-finite entries")
        G.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "t", t)

    @property
    def p(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True, eq=False)
class BalanceProblem:
    blocks: tuple[Block, ...]
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("a balance problem needs at least one block")
        n = blocks[0].G.shape[0]
        if any(b.G.shape[0] != n for b in blocks):
            raise ValueError("all blocks must share the same number of rows")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return self.blocks[0].G.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [b.p for b in self.blocks]

    @property
    def G(self) -> np.ndarray:
        """Column concatenation of the block designs."""
        if "G" not in self._cache:
            self._cache["G"] = np.hstack([b.G for b in self.blocks])
        return self._cache["G"]

    @property
    def t(self) -> np.ndarray:
        return np.concatenate([b.t for b in self.blocks])

    @property
    def gram(self) -> np.ndarray:
        """``G' G / n`` over the concatenated design."""
        if "gram" not in self._cache:
            G = self.G
            self._cache["gram"] = G.T @ G / self.n
        return self._cache["gram"]

    def slices(self) -> list[slice]:
        out, start = [], 0
        for p in self.sizes:
            out.append(slice(start, start + p))
            start += p
        return out

    def with_block(self, block: Block) -> "BalanceProblem":
        return BalanceProblem(self.blocks + (block,))


def _check_basis(ds: Dataset, Phi) -> np.ndarray:
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim == 1:
        Phi = Phi[:, None]
    if Phi.shape[0] != ds.n:
        raise ValueError(f"basis has {Phi.shape[0]} rows, dataset has {ds.n}")
    return Phi


def build_mar(ds: Dataset, Phi) -> BalanceProblem:
    """Balance treated-row weights against the full-sample average of each basis term."""
    Phi = _check_basis(ds, Phi)
    if not np.all((ds.W == 0) | (ds.W == 1)):
        raise ValueError("missing-at-random mean requires binary W in {0, 1}")
    return BalanceProblem((Block("mar", ds.W[:, None] * Phi, Phi.mean(axis=0)),))


def build_ape_clm(ds: Dataset, Phi) -> BalanceProblem:
    """Two blocks: weights must annihilate ``mu`` and reproduce the average of ``tau``."""
    Phi = _check_basis(ds, Phi)
    return BalanceProblem((
        Block("mu", Phi, np.zeros(Phi.shape[1])),
        Block("tau", ds.W[:, None] * Phi, Phi.mean(axis=0)),
    ))


def build_dist_shift(ds: Dataset, Phi, spec: EstimandSpec) -> BalanceProblem:
    Phi = _check_basis(ds, Phi)
    if spec.kind is not EstimandKind.DIST_SHIFT:
        raise ValueError("build_dist_shift needs a DIST_SHIFT estimand")
    if spec.shift_targets.shape[0] != Phi.shape[1]:
        raise ValueError(f"shift_targets has length {spec.shift_targets.shape[0]}, basis has {Phi.shape[1]} columns")
    return BalanceProblem((Block("shift", Phi, spec.shift_targets),))


def build_problem(spec: EstimandSpec, ds: Dataset, Phi) -> BalanceProblem:
    if spec.kind is EstimandKind.MAR_MEAN:
        return build_mar(ds, Phi)
    if spec.kind is EstimandKind.APE_CLM:
        return build_ape_clm(ds, Phi)
    return build_dist_shift(ds, Phi, spec)


class Imbalance(NamedTuple):
    I: float
    per_block: list[float]


def imbalance(bp: BalanceProblem, gamma) -> Imbalance:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (bp.n,):
        raise ValueError(f"gamma must have length {bp.n}")
    per_block = []
    for b in bp.blocks:
        r = b.t - b.G.T @ gamma / bp.n
        per_block.append(float(np.max(np.abs(r))) if r.size else 0.0)
    return Imbalance(float(np.sqrt(np.sum(np.square(per_block)))), per_block)


def _require(fit, name: str):
    value = getattr(fit, name, None)
    if value is None:
        raise ValueError(f"regression adjustment lacks required component {name!r}")
    return value


def h_values(spec: EstimandSpec, fit, ds: Dataset) -> np.ndarray:
    """Per-row values ``h(Z_i, m_hat)`` whose average is the plug-in estimate."""
    if spec.kind is EstimandKind.MAR_MEAN:
        return np.asarray(_require(fit, "m_hat"), dtype=float)
    if spec.kind is EstimandKind.APE_CLM:
        return np.asarray(_require(fit, "tau_hat"), dtype=float)
    coef = np.asarray(_require(fit, "m_coef"), dtype=float)
    if coef.shape != spec.shift_targets.shape:
        raise ValueError("regression coefficients do not match shift_targets")
    return np.full(ds.n, float(spec.shift_targets @ coef))


def fitted_at_data(spec: EstimandSpec, fit, ds: Dataset) -> np.ndarray:
    """The fitted regression ``m_hat(Z_i)`` at the observed points."""
    if spec.kind is EstimandKind.APE_CLM:
        return np.asarray(_require(fit, "mu_hat")) + ds.W * np.asarray(_require(fit, "tau_hat"))
    return np.asarray(_require(fit, "m_hat"), dtype=float)


def plugin_value(spec: EstimandSpec, fit, ds: Dataset) -> float:
    return float(np.mean(h_values(spec, fit, ds)))


def as_blocks(values: Sequence[np.ndarray] | np.ndarray, bp: BalanceProblem) -> list[np.ndarray]:
    """Split a flat coefficient vector into per-block pieces (or validate a list)."""
    if isinstance(values, np.ndarray) and values.ndim == 1:
        if values.shape[0] != sum(bp.sizes):
            raise ValueError("coefficient vector length does not match the problem")
        return [values[s] for s in bp.slices()]
    pieces = [np.asarray(v, dtype=float) for v in values]
    if [v.shape[0] for v in pieces] != bp.sizes:
        raise ValueError("per-block coefficient sizes do not match the problem")
    return pieces
