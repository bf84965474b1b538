"""Point estimates, standard errors and confidence intervals.

All augmented estimators share one form: the plug-in average of
``h(Z_i, m_hat)`` minus a weighted average of regression residuals
``m_hat(Z_i) - Y_i``. They differ only in the weights: minimax weights (AML),
plug-in Riesz representer weights (DR) or oracle Riesz weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .estimand import EstimandKind, EstimandSpec, fitted_at_data, h_values, imbalance
from .solver import WeightsSolution

E_FLOOR = 0.01


@dataclass(frozen=True)
class EstimateReport:
    psi_hat: float
    se: float | None
    ci_low: float | None
    ci_high: float | None
    method: str
    diagnostics: dict = field(default_factory=dict)

    def covers(self, value: float) -> bool | None:
        if self.ci_low is None:
            return None
        return self.ci_low <= value <= self.ci_high


def variance_estimate(h_vals, psi_hat: float, gamma, residuals) -> float:
    """``mean((h_i - psi_hat)^2 + gamma_i^2 (Y_i - m_hat(Z_i))^2)``."""
    h_vals, gamma, residuals = (np.asarray(a, dtype=float) for a in (h_vals, gamma, residuals))
    if not h_vals.shape == gamma.shape == residuals.shape:
        raise ValueError("variance inputs must have equal lengths")
    return float(np.mean((h_vals - psi_hat) ** 2 + gamma**2 * residuals**2))


def z_quantile(alpha: float) -> float:
    return float(norm.ppf(1.0 - alpha / 2.0))


def augmented_estimate(h_vals, fitted, Y, weights, method: str, alpha: float = 0.05,
                       diagnostics: dict | None = None) -> EstimateReport:
    h_vals, fitted, Y, weights = (np.asarray(a, dtype=float) for a in (h_vals, fitted, Y, weights))
    n = Y.shape[0]
    if not h_vals.shape == fitted.shape == weights.shape == (n,):
        raise ValueError("length mismatch between weights, fitted values and outcomes")
    plugin = float(np.mean(h_vals))
    correction = float(np.mean(weights * (fitted - Y)))
    psi = plugin - correction
    V = variance_estimate(h_vals, psi, weights, Y - fitted)
    se = float(np.sqrt(V / n))
    z = z_quantile(alpha)
    diag = {"plugin_term": plugin, "correction_term": correction}
    diag.update(diagnostics or {})
    return EstimateReport(psi, se, psi - z * se, psi + z * se, method, diag)


def _solver_diagnostics(ws: WeightsSolution, bp=None) -> dict:
    n = ws.gamma.shape[0]
    out = {"duality_gap": float(ws.gap), "weight_l2": float(ws.gamma @ ws.gamma) / n**2,
           "converged": bool(ws.converged), "iterations": int(ws.iterations)}
    if bp is not None:
        out["imbalance"] = imbalance(bp, ws.gamma).I
    return out


def aml_estimate(ds: Dataset, fit, ws: WeightsSolution, spec: EstimandSpec, alpha: float = 0.05,
                 bp=None, method: str = "aml") -> EstimateReport:
    """Plug-in estimate minus the minimax-weighted average of residuals."""
    if ws.gamma.shape[0] != ds.n:
        raise ValueError("weights and dataset lengths differ")
    return augmented_estimate(h_values(spec, fit, ds), fitted_at_data(spec, fit, ds), ds.Y, ws.gamma,
                              method, alpha, _solver_diagnostics(ws, bp))


def mlin_estimate(ds: Dataset, ws: WeightsSolution, bp=None, method: str = "mlin") -> EstimateReport:
    """Weighted mean ``mean(gamma_i Y_i)``; no standard error is reported."""
    if ws.gamma.shape[0] != ds.n:
        raise ValueError("weights and dataset lengths differ")
    return EstimateReport(float(np.mean(ws.gamma * ds.Y)), None, None, None, method, _solver_diagnostics(ws, bp))


def riesz_weights(spec: EstimandSpec, ds: Dataset, e, v=None) -> tuple[np.ndarray, dict]:
    """Riesz representer evaluated with the given treatment moments.

    ``W / e`` (e floored at 0.01) for the missing-at-random mean and
    ``(W - e) / v`` for partial effects.
    """
    e = np.asarray(e, dtype=float)
    if spec.kind is EstimandKind.MAR_MEAN:
        floored = np.clip(e, E_FLOOR, 1.0)
        return ds.W / floored, {"e_floor_hits": int(np.sum(e < E_FLOOR))}
    if spec.kind is EstimandKind.APE_CLM:
        if v is None:
            raise ValueError("partial effects need a conditional treatment variance")
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise ValueError("conditional treatment variance must be positive")
        return (ds.W - e) / v, {}
    raise ValueError("no doubly robust weights are defined for the distribution-shift estimand")


def dr_plugin_estimate(ds: Dataset, fit, spec: EstimandSpec, alpha: float = 0.05) -> EstimateReport:
    g, diag = riesz_weights(spec, ds, fit.e_hat, fit.v_hat)
    if fit.v_floor_hits:
        diag["v_floor_hits"] = fit.v_floor_hits
    return augmented_estimate(h_values(spec, fit, ds), fitted_at_data(spec, fit, ds), ds.Y, g, "dr", alpha, diag)


def dr_oracle_estimate(ds: Dataset, fit, oracle_e, oracle_v, spec: EstimandSpec,
                       alpha: float = 0.05) -> EstimateReport:
    g, diag = riesz_weights(spec, ds, oracle_e, oracle_v)
    return augmented_estimate(h_values(spec, fit, ds), fitted_at_data(spec, fit, ds), ds.Y, g, "dr-oracle",
                              alpha, diag)


def plugin_weight_estimate(ds: Dataset, fit, spec: EstimandSpec) -> EstimateReport:
    """``mean(g_hat(Z_i) Y_i)`` with plug-in Riesz weights; no standard error."""
    g, diag = riesz_weights(spec, ds, fit.e_hat, fit.v_hat)
    return EstimateReport(float(np.mean(g * ds.Y)), None, None, None, "plugin-riesz", diag)


def error_decomposition(h_hat, h_true, gamma, fitted, m_true, Y) -> tuple[float, float]:
    """Split ``psi_hat - psi_tilde(m)`` into its bias-like and noise-like terms.

    ``h_hat``/``h_true`` are per-row ``h(Z_i, m_hat)`` and ``h(Z_i, m)``;
    ``fitted``/``m_true`` the regressions at ``Z_i``.
    """
    h_hat, h_true, gamma, fitted, m_true, Y = (np.asarray(a, dtype=float)
                                                for a in (h_hat, h_true, gamma, fitted, m_true, Y))
    bias = float(np.mean((h_hat - h_true) - gamma * (fitted - m_true)))
    noise = float(np.mean(gamma * (Y - m_true)))
    return bias, noise
