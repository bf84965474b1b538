import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aml.data import Dataset
from aml.estimand import EstimandKind, EstimandSpec, build_ape_clm, build_mar, imbalance
from aml.estimators import (aml_estimate, augmented_estimate, dr_oracle_estimate, dr_plugin_estimate,
                            error_decomposition, mlin_estimate, plugin_weight_estimate, riesz_weights,
                            variance_estimate, z_quantile)
from aml.nuisance import RegressionAdjustment
from aml.solver import WeightsSolution, solve_weights

MAR = EstimandSpec(EstimandKind.MAR_MEAN)
APE = EstimandSpec(EstimandKind.APE_CLM)


def weights(gamma):
    gamma = np.asarray(gamma, float)
    return WeightsSolution(gamma, (np.zeros(1),), 0.0, 0.0, 0.0, 0, True)


def ape_fit(n, mu, tau, e, v):
    return RegressionAdjustment(EstimandKind.APE_CLM, m_hat=mu + e * tau, e_hat=e, mu_hat=mu, tau_hat=tau,
                                v_hat=v, v_floor=0.01)


def test_zero_weights_give_plugin(rng):
    n = 30
    ds = Dataset(rng.normal(size=(n, 1)), rng.normal(size=n), rng.normal(size=n))
    fit = ape_fit(n, rng.normal(size=n), rng.normal(size=n), np.zeros(n), np.ones(n))
    rep = aml_estimate(ds, fit, weights(np.zeros(n)), APE)
    assert rep.psi_hat == pytest.approx(fit.tau_hat.mean(), abs=1e-15)
    assert rep.diagnostics["correction_term"] == 0


def test_interpolating_fit_has_no_correction(rng):
    n = 25
    X, W = rng.normal(size=(n, 1)), rng.normal(size=n)
    mu, tau = rng.normal(size=n), rng.normal(size=n)
    ds = Dataset(X, W, mu + W * tau)
    rep = aml_estimate(ds, ape_fit(n, mu, tau, np.zeros(n), np.ones(n)), weights(rng.normal(size=n) * 5), APE)
    assert rep.diagnostics["correction_term"] == pytest.approx(0, abs=1e-14)
    assert rep.psi_hat == pytest.approx(tau.mean(), abs=1e-14)


def test_confidence_interval(rng):
    rep = augmented_estimate(rng.normal(size=50), rng.normal(size=50), rng.normal(size=50), rng.normal(size=50),
                             "aml", alpha=0.05)
    assert rep.ci_high - rep.psi_hat == pytest.approx(1.959964 * rep.se, rel=1e-6)
    assert rep.covers(rep.psi_hat) and not rep.covers(rep.ci_high + 1)
    assert z_quantile(0.1) == pytest.approx(1.6448536, rel=1e-7)


def test_mlin_balanced_constant():
    n = 6
    W = np.array([1, 0, 1, 1, 0, 0.0])
    ds = Dataset(np.zeros((n, 1)), W, np.ones(n))
    rep = mlin_estimate(ds, weights(W * n / W.sum()))
    assert rep.psi_hat == pytest.approx(1.0) and rep.se is None and rep.ci_low is None
    assert mlin_estimate(ds, weights(np.zeros(n))).psi_hat == 0


def test_dr_all_treated_reduces_to_mean(rng):
    n = 20
    ds = Dataset(rng.normal(size=(n, 1)), np.ones(n), rng.normal(size=n))
    fit = RegressionAdjustment(EstimandKind.MAR_MEAN, m_hat=np.zeros(n), e_hat=np.ones(n))
    assert dr_plugin_estimate(ds, fit, MAR).psi_hat == pytest.approx(ds.Y.mean(), abs=1e-14)
    assert plugin_weight_estimate(ds, fit, MAR).psi_hat == pytest.approx(ds.Y.mean(), abs=1e-14)


def test_dr_oracle_equals_plugin_on_equal_inputs(rng):
    n = 40
    e, v = rng.normal(size=n), rng.uniform(0.5, 2, n)
    ds = Dataset(rng.normal(size=(n, 1)), rng.normal(size=n), rng.normal(size=n))
    fit = ape_fit(n, rng.normal(size=n), rng.normal(size=n), e, v)
    a, b = dr_plugin_estimate(ds, fit, APE), dr_oracle_estimate(ds, fit, e, v, APE)
    assert (a.psi_hat, a.se) == (b.psi_hat, b.se)


def test_plugin_weights_vanish_when_treatment_is_predictable(rng):
    n = 10
    e = rng.normal(size=n)
    ds = Dataset(rng.normal(size=(n, 1)), e, rng.normal(size=n))
    fit = ape_fit(n, np.zeros(n), np.zeros(n), e, np.ones(n))
    assert plugin_weight_estimate(ds, fit, APE).psi_hat == 0


def test_riesz_weights_guards(rng):
    ds = Dataset(np.zeros((3, 1)), np.array([1.0, 1.0, 0.0]), np.zeros(3))
    g, diag = riesz_weights(MAR, ds, np.array([0.001, 0.5, 0.5]))
    np.testing.assert_allclose(g, [100, 2, 0])
    assert diag["e_floor_hits"] == 1
    with pytest.raises(ValueError):
        riesz_weights(APE, ds, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        riesz_weights(EstimandSpec(EstimandKind.DIST_SHIFT, np.ones(1)), ds, np.zeros(3))


def test_variance_examples():
    n = 5
    assert variance_estimate(np.full(n, 2.0), 2.0, np.zeros(n), np.ones(n)) == 0
    assert variance_estimate(np.full(n, 2.0), 2.0, np.ones(n), np.ones(n)) == 1


@given(seed=st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_error_decomposition_identity(seed):
    r = np.random.default_rng(seed)
    n = 50
    X, W = r.normal(size=(n, 1)), r.normal(size=n)
    mu, tau = np.sin(X[:, 0]), 1 + X[:, 0] ** 2
    Y = mu + W * tau + r.normal(size=n)
    mu_h, tau_h = mu + r.normal(size=n) * 0.3, tau + r.normal(size=n) * 0.3
    fit = ape_fit(n, mu_h, tau_h, np.zeros(n), np.ones(n))
    gamma = r.normal(size=n) * 2
    psi = aml_estimate(Dataset(X, W, Y), fit, weights(gamma), APE).psi_hat
    bias, noise = error_decomposition(tau_h, tau, gamma, mu_h + W * tau_h, mu + W * tau, Y)
    assert abs((psi - tau.mean()) - (bias + noise)) <= 1e-10


@pytest.mark.parametrize("j,s", [(0, 1.0), (2, -0.7), (4, 0.3)])
def test_bias_bounded_by_imbalance(rng, j, s):
    n = 80
    X = rng.normal(size=(n, 2))
    W = (rng.random(n) < 0.5).astype(float)
    Phi = np.column_stack([np.ones(n), X, X[:, 0] * X[:, 1], X[:, 1] ** 2 - 1])
    bp = build_mar(Dataset(X, W, np.zeros(n)), Phi)
    gamma = solve_weights(bp).gamma
    m_true = X[:, 0]
    diff = s * Phi[:, j]
    bias, _ = error_decomposition(m_true + diff, m_true, gamma * W, m_true + diff, m_true, np.zeros(n))
    assert abs(bias) <= abs(s) * imbalance(bp, gamma).I + 1e-12


def test_linear_in_outcome(rng):
    n = 30
    X, W = rng.normal(size=(n, 1)), rng.normal(size=n)
    fit = ape_fit(n, rng.normal(size=n), rng.normal(size=n), np.zeros(n), np.ones(n))
    gamma = weights(rng.normal(size=n))
    Y1, Y2 = rng.normal(size=n), rng.normal(size=n)
    f = lambda Y: aml_estimate(Dataset(X, W, Y), fit, gamma, APE).psi_hat
    base = f(np.zeros(n))
    assert f(2 * Y1 - Y2) - base == pytest.approx(2 * (f(Y1) - base) - (f(Y2) - base), abs=1e-12)


def test_aml_diagnostics(rng):
    n = 40
    X, W = rng.normal(size=(n, 2)), rng.normal(size=n)
    Phi = np.column_stack([np.ones(n), X])
    ds = Dataset(X, W, rng.normal(size=n))
    bp = build_ape_clm(ds, Phi)
    ws = solve_weights(bp)
    rep = aml_estimate(ds, ape_fit(n, np.zeros(n), np.zeros(n), np.zeros(n), np.ones(n)), ws, APE, bp=bp)
    for key in ("imbalance", "duality_gap", "weight_l2", "plugin_term", "correction_term"):
        assert key in rep.diagnostics
    assert rep.diagnostics["imbalance"] == pytest.approx(imbalance(bp, ws.gamma).I)
