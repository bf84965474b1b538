"""Minimax balancing weights via the penalized least-squares dual.

The primal problem is

    min_gamma  I(gamma)^2 + (sigma^2 / n^2) ||gamma||^2

with ``I`` the block imbalance of :func:`aml.estimand.imbalance`. Its dual, in
coefficients ``beta`` on the dictionary columns, is the squared-l1 penalized
least-squares problem

    min_beta  D(beta) = (1/n) ||G beta||^2 - 2 t'beta + (sigma^2 / n) sum_b ||beta_b||_1^2

and the optimal weights are ``gamma = G beta``. Optimal values agree:
``min primal = -(sigma^2 / n) min D``, which gives a computable duality gap.

Everything in the main loop is expressed through the Gram matrix ``G'G / n``,
so an iteration costs O(p^2) regardless of n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimand import BalanceProblem, as_blocks, imbalance


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    sigma: float = 1.0
    tol_gap: float = 1e-7
    max_iter: int = 50000
    power_iter: int = 100
    # active-set Newton step once the gap tolerance is met
    polish: bool = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.tol_gap > 0:
            raise ValueError(f"tol_gap must be positive, got {self.tol_gap}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True, eq=False)
class WeightsSolution:
    gamma: np.ndarray
    beta: tuple[np.ndarray, ...]
    primal: float
    dual: float
    gap: float
    iterations: int
    converged: bool
    trace: list[tuple[float, float]] | None = field(default=None, repr=False)

    @property
    def relative_gap(self) -> float:
        return self.gap / (1.0 + abs(self.primal))


def prox_sq_l1(v, c: float) -> np.ndarray:
    """``argmin_x 0.5 ||x - v||^2 + c ||x||_1^2``.

    The solution soft-thresholds ``v`` at ``theta = 2 c ||x||_1``. With the ``k``
    largest magnitudes active, ``theta_k = 2c S_k / (1 + 2ck)`` for their partial
    sum ``S_k``; the active count is the largest ``k`` with ``|v|_(k) > theta_k``.
    """
    v = np.asarray(v, dtype=float)
    if c < 0:
        raise ValueError("c must be nonnegative")
    if c == 0 or v.size == 0:
        return v.copy()
    a = np.sort(np.abs(v))[::-1]
    k = np.arange(1, a.size + 1)
    theta = 2.0 * c * np.cumsum(a) / (1.0 + 2.0 * c * k)
    active = np.flatnonzero(a > theta)
    if active.size == 0:
        return np.zeros_like(v)
    th = theta[active[-1]]
    return np.sign(v) * np.maximum(np.abs(v) - th, 0.0)


def _block_l1_sq(beta: np.ndarray, slices) -> float:
    return float(sum(np.sum(np.abs(beta[s])) ** 2 for s in slices))


def primal_objective(bp: BalanceProblem, gamma, sigma: float) -> float:
    gamma = np.asarray(gamma, dtype=float)
    return imbalance(bp, gamma).I ** 2 + sigma**2 / bp.n**2 * float(gamma @ gamma)


def dual_objective(bp: BalanceProblem, beta, sigma: float) -> float:
    """``-(sigma^2 / n) D(beta)``; a lower bound on the primal for every ``beta``."""
    pieces = as_blocks(beta, bp)
    flat = np.concatenate(pieces) if pieces else np.zeros(0)
    Gb = bp.G @ flat
    c = sigma**2 / bp.n
    D = float(Gb @ Gb) / bp.n - 2.0 * float(bp.t @ flat) + c * sum(np.sum(np.abs(p)) ** 2 for p in pieces)
    return -c * D


def lipschitz_estimate(bp: BalanceProblem, power_iter: int = 100) -> float:
    """Power-iteration estimate of the top eigenvalue of ``(2/n) G'G``, inflated by 5%."""
    K = 2.0 * bp.gram
    p = K.shape[0]
    x = np.random.default_rng(0).standard_normal(p)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max(1, power_iter)):
        y = K @ x
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
    return 1.05 * lam


class _Objectives:
    """Primal/dual evaluation in coefficient space from ``beta`` and ``K beta``."""

    def __init__(self, bp: BalanceProblem, sigma: float):
        self.slices = bp.slices()
        self.t = bp.t
        self.c = sigma**2 / bp.n

    def values(self, beta, Kbeta):
        r = self.t - Kbeta
        I2 = sum(float(np.max(np.abs(r[s]))) ** 2 for s in self.slices if s.stop > s.start)
        q = float(beta @ Kbeta)
        primal = I2 + self.c * q
        D = q - 2.0 * float(self.t @ beta) + self.c * _block_l1_sq(beta, self.slices)
        return primal, -self.c * D


def _polish(K, t, beta, slices, c):
    """Solve the smooth problem on the current support and sign pattern."""
    support = np.flatnonzero(beta)
    if support.size == 0:
        return None
    signs = np.sign(beta[support])
    block_of = np.empty(beta.size, dtype=np.int64)
    for b, s in enumerate(slices):
        block_of[s] = b
    same = block_of[support][:, None] == block_of[support][None, :]
    M = K[np.ix_(support, support)] + c * same * np.outer(signs, signs)
    try:
        sol = np.linalg.solve(M, t[support])
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(M, t[support], rcond=None)[0]
    if np.any(np.sign(sol) != signs):
        return None
    out = np.zeros_like(beta)
    out[support] = sol
    return out


def solve_weights(bp: BalanceProblem, cfg: SolverConfig = SolverConfig(), trace: bool = False) -> WeightsSolution:
    """Minimax balancing weights by accelerated proximal gradient on the dual.

    Iterates until the relative duality gap ``gap / (1 + |primal|)`` falls to
    ``cfg.tol_gap`` or ``cfg.max_iter`` is reached; in the latter case the best
    iterate is returned with ``converged=False``. With ``trace=True`` the
    (primal, dual) pair of every iterate is recorded.
    """
    K = bp.gram
    t = bp.t
    slices = bp.slices()
    c = cfg.sigma**2 / bp.n
    obj = _Objectives(bp, cfg.sigma)
    L = max(lipschitz_estimate(bp, cfg.power_iter), 1e-12 * (1.0 + c))

    p = t.size
    x = np.zeros(p)
    Kx = np.zeros(p)
    y, Ky = x, Kx
    momentum = 1.0
    best = (np.inf, -np.inf, x, Kx)
    history = [] if trace else None
    converged = False
    it = 0

    def prox(z, step):
        out = np.empty_like(z)
        for s in slices:
            out[s] = prox_sq_l1(z[s], c * step)
        return out

    while it < cfg.max_iter:
        it += 1
        grad = 2.0 * (Ky - t)
        x_new = prox(y - grad / L, 1.0 / L)
        Kx_new = K @ x_new
        step = x_new - y
        # sufficient decrease of the quadratic part; guards against an underestimated L
        curvature = float(step @ (Kx_new - Ky))
        if curvature > 0.5 * L * float(step @ step) * (1 + 1e-12) + 1e-300:
            L *= 2.0
            continue

        primal, dual = obj.values(x_new, Kx_new)
        if not (np.isfinite(primal) and np.isfinite(dual)):
            raise SolverError("non-finite objective; check the scaling of the balance problem")
        if history is not None:
            history.append((primal, dual))
        if primal - dual < best[0] - best[1]:
            best = (primal, dual, x_new, Kx_new)
        if (primal - dual) <= cfg.tol_gap * (1.0 + abs(primal)):
            converged = True
            break

        if float((y - x_new) @ (x_new - x)) > 0:
            momentum = 1.0
            y, Ky = x_new, Kx_new
        else:
            nxt = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum**2))
            w = (momentum - 1.0) / nxt
            y = x_new + w * (x_new - x)
            Ky = Kx_new + w * (Kx_new - Kx)
            momentum = nxt
        x, Kx = x_new, Kx_new

    beta = best[2]
    if cfg.polish:
        polished = _polish(K, t, beta, slices, c)
        if polished is not None:
            pp, pd = obj.values(polished, K @ polished)
            if np.isfinite(pp) and pp - pd <= best[0] - best[1]:
                beta = polished
                converged = converged or (pp - pd) <= cfg.tol_gap * (1.0 + abs(pp))

    gamma = bp.G @ beta
    primal = primal_objective(bp, gamma, cfg.sigma)
    dual = dual_objective(bp, beta, cfg.sigma)
    return WeightsSolution(
        gamma=gamma,
        beta=tuple(beta[s].copy() for s in slices),
        primal=primal,
        dual=dual,
        gap=primal - dual,
        iterations=it,
        converged=converged,
        trace=history,
    )


def oracle_solve_small(bp: BalanceProblem, sigma: float, restarts: int = 20, seed: int = 0,
                       move_tol: float = 1e-12, max_sweeps: int = 200_000) -> WeightsSolution:
    """Reference solution by exact cyclic coordinate descent on the dual.

    Intended for test instances only (n <= 12, total p <= 6). Each coordinate
    update minimizes ``A x^2 + B x + C |x|`` in closed form. The best of
    ``restarts`` random starts is returned and must certify a relative gap of
    at most 1e-9.
    """
    p = sum(bp.sizes)
    if bp.n > 12 or p > 6:
        raise ValueError(f"oracle limited to n <= 12 and p <= 6, got n={bp.n}, p={p}")
    K = bp.gram.tolist()
    t = bp.t.tolist()
    c = sigma**2 / bp.n
    block_of = []
    for b, size in enumerate(bp.sizes):
        block_of.extend([b] * size)
    members = [[j for j in range(p) if block_of[j] == b] for b in range(len(bp.sizes))]
    rng = np.random.default_rng(seed)

    def D(beta):
        q = sum(beta[i] * K[i][j] * beta[j] for i in range(p) for j in range(p))
        pen = sum(sum(abs(beta[j]) for j in m) ** 2 for m in members)
        return q - 2.0 * sum(ti * bi for ti, bi in zip(t, beta)) + c * pen

    best, best_val = None, np.inf
    for r in range(restarts):
        beta = [0.0] * p if r == 0 else rng.standard_normal(p).tolist()
        for _ in range(max_sweeps):
            move = 0.0
            for j in range(p):
                q = sum(K[j][k] * beta[k] for k in range(p) if k != j) - t[j]
                s = sum(abs(beta[k]) for k in members[block_of[j]] if k != j)
                A = K[j][j] + c
                B = 2.0 * q
                C = 2.0 * c * s
                new = -np.sign(B) * max(abs(B) - C, 0.0) / (2.0 * A)
                move = max(move, abs(new - beta[j]))
                beta[j] = float(new)
            if move <= move_tol:
                break
        val = D(beta)
        if val < best_val:
            best, best_val = beta, val

    beta = np.asarray(best)
    gamma = bp.G @ beta
    primal = primal_objective(bp, gamma, sigma)
    dual = dual_objective(bp, beta, sigma)
    gap = primal - dual
    if gap > 1e-9 * (1.0 + abs(primal)):
        raise SolverError(f"oracle failed to certify optimality (relative gap {gap / (1 + abs(primal)):.3g})")
    slices = bp.slices()
    return WeightsSolution(gamma=gamma, beta=tuple(beta[s] for s in slices), primal=primal, dual=dual,
                           gap=gap, iterations=0, converged=True)
