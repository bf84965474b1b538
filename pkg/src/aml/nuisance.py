"""Lasso by coordinate descent, cross-validation, cross-fitting and the R-learner.

``fit_regression_adjustment`` assembles the regression adjustment used by the
augmented estimators: outcome and treatment-intensity regressions by
cross-validated lasso, the effect function by residual-on-residual lasso, the
baseline ``mu = E[Y|X] - tau * e`` and, for continuous treatments, a lasso fit
of the conditional treatment variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .data import Dataset, FoldAssignment
from .estimand import EstimandKind


@njit(cache=True)
def _cd_gram(Q, c, pen, beta, tol, max_iter):
    # minimizes 0.5 b'Qb - c'b + sum_j pen_j |b_j|
    p = c.shape[0]
    grad = Q @ beta - c
    for it in range(max_iter):
        max_move = 0.0
        for j in range(p):
            qjj = Q[j, j]
            old = beta[j]
            if qjj <= 0.0:
                new = 0.0
            else:
                z = old * qjj - grad[j]
                a = abs(z) - pen[j]
                new = np.sign(z) * a / qjj if a > 0.0 else 0.0
            if new != old:
                delta = new - old
                beta[j] = new
                for k in range(p):
                    grad[k] += Q[k, j] * delta
                if abs(delta) > max_move:
                    max_move = abs(delta)
        if max_move <= tol:
            return it + 1, True
    return max_iter, False


@dataclass(frozen=True, eq=False)
class LassoFit:
    intercept: float
    coef: np.ndarray
    lam: float
    objective: float
    n_iter: int = 0
    converged: bool = True

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coef


def lasso_objective(X, y, intercept, coef, lam, penalty_factor=None) -> float:
    X = np.asarray(X, dtype=float)
    r = np.asarray(y, dtype=float) - intercept - X @ coef
    pf = np.ones(X.shape[1]) if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
    return float(r @ r) / (2 * X.shape[0]) + lam * float(pf @ np.abs(coef))


class _Problem:
    """Centered (and optionally rescaled) sufficient statistics of a lasso problem."""

    def __init__(self, X, y, fit_intercept=True, standardize=False, penalty_factor=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        self.fit_intercept = fit_intercept
        self.x_mean = X.mean(axis=0) if fit_intercept else np.zeros(p)
        self.y_mean = float(y.mean()) if fit_intercept else 0.0
        Xc = X - self.x_mean
        yc = y - self.y_mean
        if standardize:
            scale = np.sqrt(np.mean(Xc**2, axis=0))
        else:
            scale = np.ones(p)
        dead = scale <= 1e-12 * max(1.0, float(np.max(scale, initial=0.0)))
        scale = np.where(dead, 1.0, scale)
        Xs = Xc / scale
        Xs[:, dead] = 0.0
        self.scale = scale
        self.Q = Xs.T @ Xs / n
        self.c = Xs.T @ yc / n
        self.yy = float(yc @ yc) / n
        pf = np.ones(p) if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
        self.pf = np.where(dead, 0.0, pf)
        self.dead = dead

    def solve(self, lam, beta=None, tol=1e-7, max_iter=10000):
        beta = np.zeros(self.c.size) if beta is None else beta.copy()
        n_iter, ok = _cd_gram(self.Q, self.c, lam * self.pf, beta, tol, max_iter)
        return beta, n_iter, ok

    def lambda_max(self) -> float:
        """Smallest penalty at which every penalized coefficient is zero."""
        penalized = self.pf > 0
        beta = np.zeros(self.c.size)
        if np.any(~penalized & ~self.dead):
            free = np.flatnonzero(~penalized & ~self.dead)
            Qf = self.Q[np.ix_(free, free)]
            beta[free] = np.linalg.lstsq(Qf, self.c[free], rcond=None)[0]
        resid_grad = self.c - self.Q @ beta
        if not np.any(penalized):
            return 0.0
        return float(np.max(np.abs(resid_grad[penalized]) / self.pf[penalized]))

    def to_original(self, beta):
        coef = beta / self.scale
        coef[self.dead] = 0.0
        intercept = self.y_mean - float(self.x_mean @ coef)
        return intercept, coef

    def objective(self, beta, lam):
        return 0.5 * float(beta @ self.Q @ beta) - float(self.c @ beta) + 0.5 * self.yy + lam * float(self.pf @ np.abs(beta))


def lasso_cd(X, y, lam: float, tol: float = 1e-7, max_iter: int = 10000, fit_intercept: bool = True,
             penalty_factor=None, warn: bool = True) -> LassoFit:
    """Minimize ``(2n)^-1 ||y - b0 - X b||^2 + lam * sum_j pf_j |b_j|`` by cyclic coordinate descent.

    The intercept is unpenalized. Convergence is declared when no coefficient
    moves by more than ``tol`` in a full sweep.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    prob = _Problem(X, y, fit_intercept=fit_intercept, penalty_factor=penalty_factor)
    beta, n_iter, ok = prob.solve(lam, tol=tol, max_iter=max_iter)
    if not ok and warn:
        warnings.warn(f"lasso_cd did not converge in {max_iter} sweeps", RuntimeWarning, stacklevel=2)
    intercept, coef = prob.to_original(beta)
    return LassoFit(intercept, coef, lam, prob.objective(beta, lam), n_iter, ok)


@dataclass(frozen=True, eq=False)
class LassoCVFit:
    fit: LassoFit
    lambdas: np.ndarray
    cv_error: np.ndarray
    best: int
    oof: np.ndarray
    """Out-of-fold predictions at the selected penalty."""

    def predict(self, X) -> np.ndarray:
        return self.fit.predict(X)


def lambda_path(lam_max: float, n_lambda: int = 50, ratio: float = 1e-3) -> np.ndarray:
    return lam_max * np.geomspace(1.0, ratio, n_lambda)


def _path(prob: _Problem, lambdas, tol, max_iter):
    betas = np.empty((len(lambdas), prob.c.size))
    beta = np.zeros(prob.c.size)
    for i, lam in enumerate(lambdas):
        beta, _, _ = prob.solve(lam, beta, tol=tol, max_iter=max_iter)
        betas[i] = beta
    return betas


def lasso_cv(X, y, folds: FoldAssignment, n_lambda: int = 50, fit_intercept: bool = True,
             standardize: bool = True, penalty_factor=None, ratio: float = 1e-3,
             tol: float = 1e-7, max_iter: int = 10000) -> LassoCVFit:
    """K-fold cross-validated lasso over a geometric penalty path.

    The path runs from the smallest penalty that zeroes every penalized
    coefficient down ``ratio`` (3 decades by default). The penalty with the
    smallest pooled out-of-fold squared error is refit on all rows.
    Columns are standardized internally when ``standardize`` is set;
    coefficients are always reported on the original scale.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if folds.fold_of.shape[0] != n:
        raise ValueError("fold assignment does not match the number of rows")
    if folds.K < 2:
        raise ValueError("need at least 2 folds")

    full = _Problem(X, y, fit_intercept, standardize, penalty_factor)
    lam_max = full.lambda_max()
    degenerate = not np.isfinite(lam_max) or lam_max <= 1e-14 * max(1.0, full.yy)
    if degenerate:
        lambdas = np.zeros(1)
    else:
        lambdas = lambda_path(lam_max, n_lambda, ratio)

    preds = np.empty((len(lambdas), n))
    for k in range(folds.K):
        train, test = folds.train_index(k), folds.test_index(k)
        prob = _Problem(X[train], y[train], fit_intercept, standardize, penalty_factor)
        betas = _path(prob, lambdas, tol, max_iter)
        for i in range(len(lambdas)):
            b0, coef = prob.to_original(betas[i])
            preds[i, test] = b0 + X[test] @ coef
    cv_error = np.mean((preds - y) ** 2, axis=1)
    best = int(np.argmin(cv_error))
    betas = _path(full, lambdas[: best + 1], tol, max_iter)
    intercept, coef = full.to_original(betas[best])
    fit = LassoFit(intercept, coef, float(lambdas[best]), full.objective(betas[best], lambdas[best]))
    return LassoCVFit(fit=fit, lambdas=lambdas, cv_error=cv_error, best=best, oof=preds[best].copy())


def crossfit_oof(X, y, folds: FoldAssignment, fitter: Callable) -> np.ndarray:
    """Out-of-fold predictions: ``fitter(X_train, y_train)`` must return a predict callable."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty(X.shape[0])
    for k in range(folds.K):
        train, test = folds.train_index(k), folds.test_index(k)
        predict = fitter(X[train], y[train])
        out[test] = predict(X[test])
    return out


def _constant_columns(Phi) -> np.ndarray:
    return np.all(Phi == Phi[0], axis=0)


@dataclass(frozen=True, eq=False)
class RLearnerFit:
    coef: np.ndarray
    lam: float
    cv_error: np.ndarray | None

    def predict(self, Phi) -> np.ndarray:
        return np.asarray(Phi, dtype=float) @ self.coef


def r_learner_tau(Phi, W, Y, m_oof, e_oof, folds: FoldAssignment, n_lambda: int = 50,
                  standardize: bool = True) -> RLearnerFit:
    """Effect function ``tau(x) = phi(x)' b`` from residual-on-residual lasso.

    Minimizes ``(2n)^-1 sum [(Y - m_oof) - (W - e_oof) phi(X)' b]^2 + lam ||b||_1``
    with constant basis columns left unpenalized and the penalty picked by
    cross-validation on the same loss. Non-constant columns of ``Phi`` are
    standardized before multiplication by the treatment residual.
    """
    Phi = np.asarray(Phi, dtype=float)
    W, Y = np.asarray(W, dtype=float), np.asarray(Y, dtype=float)
    w_res = W - np.asarray(e_oof, dtype=float)
    y_res = Y - np.asarray(m_oof, dtype=float)
    if np.all(np.abs(w_res) <= 1e-12 * max(1.0, float(np.max(np.abs(W))))):
        warnings.warn("treatment residuals are all zero; returning tau = 0", RuntimeWarning, stacklevel=2)
        return RLearnerFit(np.zeros(Phi.shape[1]), float("nan"), None)

    const = _constant_columns(Phi)
    if standardize:
        scale = Phi.std(axis=0)
        scale[const | (scale == 0)] = 1.0
    else:
        scale = np.ones(Phi.shape[1])
    design = w_res[:, None] * (Phi / scale)
    pf = np.where(const, 0.0, 1.0)
    cv = lasso_cv(design, y_res, folds, n_lambda=n_lambda, fit_intercept=False, standardize=False,
                  penalty_factor=pf)
    return RLearnerFit(cv.fit.coef / scale, cv.fit.lam, cv.cv_error)


@dataclass(frozen=True, eq=False)
class RegressionAdjustment:
    """Fitted nuisances evaluated at the sample points.

    ``m_hat`` is the outcome regression used by the estimand: ``E[Y|X]`` for
    partial effects and distribution shift, ``m(x, 1)`` for the
    missing-at-random mean. ``mu_hat``/``tau_hat`` exist for partial effects
    only; ``v_hat`` is floored at ``v_floor``.
    """

    kind: EstimandKind
    m_hat: np.ndarray
    e_hat: np.ndarray | None = None
    m_oof: np.ndarray | None = None
    e_oof: np.ndarray | None = None
    m_coef: np.ndarray | None = None
    tau_coef: np.ndarray | None = None
    tau_hat: np.ndarray | None = None
    mu_hat: np.ndarray | None = None
    v_coef: np.ndarray | None = None
    v_hat: np.ndarray | None = None
    v_floor: float | None = None
    v_floor_hits: int = 0
    folds: FoldAssignment | None = None


def _subfolds(folds: FoldAssignment, rows: np.ndarray) -> FoldAssignment:
    labels = folds.fold_of[rows]
    used, relabeled = np.unique(labels, return_inverse=True)
    if used.size < 2:
        raise ValueError("fewer than two folds contain rows of the requested subset")
    return FoldAssignment(fold_of=relabeled.astype(np.int64), K=int(used.size))


def _coef_on_basis(fit: LassoFit, Phi) -> np.ndarray:
    coef = fit.coef.copy()
    const = np.flatnonzero(_constant_columns(Phi) & (Phi[0] != 0))
    if const.size:
        j = const[0]
        coef[j] += fit.intercept / Phi[0, j]
    return coef


def fit_regression_adjustment(ds: Dataset, Phi, folds: FoldAssignment,
                              kind: EstimandKind | str = EstimandKind.APE_CLM, n_lambda: int = 50,
                              standardize: bool = True, zero_outcome: bool = False) -> RegressionAdjustment:
    """Fit every nuisance component the estimand needs.

    With ``zero_outcome`` the outcome regression (and effect function) is
    forced to zero while treatment-intensity models are still fitted.
    """
    kind = EstimandKind(kind)
    Phi = np.asarray(Phi, dtype=float)
    cv_args = dict(folds=folds, n_lambda=n_lambda, standardize=standardize)
    n = ds.n

    if kind is EstimandKind.DIST_SHIFT:
        if zero_outcome:
            return RegressionAdjustment(kind, m_hat=np.zeros(n), m_coef=np.zeros(Phi.shape[1]), folds=folds)
        mfit = lasso_cv(Phi, ds.Y, **cv_args)
        return RegressionAdjustment(kind, m_hat=mfit.predict(Phi), m_oof=mfit.oof,
                                    m_coef=_coef_on_basis(mfit.fit, Phi), folds=folds)

    efit = lasso_cv(Phi, ds.W, **cv_args)
    e_hat, e_oof = efit.predict(Phi), efit.oof

    if kind is EstimandKind.MAR_MEAN:
        if not np.all((ds.W == 0) | (ds.W == 1)):
            raise ValueError("missing-at-random mean requires binary W")
        if zero_outcome:
            return RegressionAdjustment(kind, m_hat=np.zeros(n), e_hat=e_hat, e_oof=e_oof, folds=folds)
        treated = np.flatnonzero(ds.W == 1)
        mfit = lasso_cv(Phi[treated], ds.Y[treated], _subfolds(folds, treated), n_lambda=n_lambda,
                        standardize=standardize)
        m_oof = mfit.predict(Phi)
        m_oof[treated] = mfit.oof
        return RegressionAdjustment(kind, m_hat=mfit.predict(Phi), e_hat=e_hat, m_oof=m_oof, e_oof=e_oof,
                                    m_coef=_coef_on_basis(mfit.fit, Phi), folds=folds)

    v_floor = max(0.01, 1e-3 * float(np.var(ds.W)))
    vfit = lasso_cv(Phi, (ds.W - e_oof) ** 2, **cv_args)
    v_raw = vfit.predict(Phi)
    v_hat = np.maximum(v_raw, v_floor)
    common = dict(e_hat=e_hat, e_oof=e_oof, v_coef=_coef_on_basis(vfit.fit, Phi), v_hat=v_hat,
                  v_floor=v_floor, v_floor_hits=int(np.sum(v_raw < v_floor)), folds=folds)
    if zero_outcome:
        zeros = np.zeros(n)
        return RegressionAdjustment(kind, m_hat=zeros, tau_hat=zeros, mu_hat=zeros,
                                    tau_coef=np.zeros(Phi.shape[1]), **common)

    mfit = lasso_cv(Phi, ds.Y, **cv_args)
    m_hat = mfit.predict(Phi)
    tau = r_learner_tau(Phi, ds.W, ds.Y, mfit.oof, e_oof, folds, n_lambda=n_lambda, standardize=standardize)
    tau_hat = tau.predict(Phi)
    return RegressionAdjustment(kind, m_hat=m_hat, m_oof=mfit.oof, m_coef=_coef_on_basis(mfit.fit, Phi),
                                tau_coef=tau.coef, tau_hat=tau_hat, mu_hat=m_hat - tau_hat * e_hat, **common)
