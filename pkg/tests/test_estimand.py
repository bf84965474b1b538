import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aml.data import Dataset
from aml.estimand import (BalanceProblem, Block, EstimandKind, EstimandSpec, build_ape_clm, build_dist_shift,
                          build_mar, build_problem, fitted_at_data, h_values, imbalance, plugin_value)
from aml.nuisance import RegressionAdjustment

from conftest import random_problem


def ds_of(W, X=None, Y=None):
    W = np.asarray(W, float)
    X = np.zeros((W.size, 1)) if X is None else np.asarray(X, float).reshape(W.size, -1)
    return Dataset(X, W, np.zeros(W.size) if Y is None else Y)


def test_mar_exact_balance():
    bp = build_mar(ds_of([1, 0]), np.ones((2, 1)))
    np.testing.assert_array_equal(bp.G[:, 0], [1, 0])
    np.testing.assert_array_equal(bp.t, [1])
    assert imbalance(bp, [2, 0]).I == 0


def test_mar_all_treated_identity_weights():
    bp = build_mar(ds_of([1, 1, 1]), np.ones((3, 1)))
    assert imbalance(bp, np.ones(3)).I == 0


def test_mar_single_covariate_column():
    bp = build_mar(ds_of([1, 1, 0]), np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_array_equal(bp.t, [2])
    np.testing.assert_array_equal(bp.G[:, 0], [1, 2, 0])


def test_mar_rejects_nonbinary():
    with pytest.raises(ValueError):
        build_mar(ds_of([0.5, 1]), np.ones((2, 1)))


def test_ape_single_equation():
    bp = build_ape_clm(ds_of([2.0]), np.ones((1, 1)))
    assert [b.label for b in bp.blocks] == ["mu", "tau"]
    np.testing.assert_array_equal(bp.blocks[0].t, [0])
    np.testing.assert_array_equal(bp.blocks[1].G, [[2]])
    np.testing.assert_array_equal(bp.blocks[1].t, [1])
    per = imbalance(bp, [0.5]).per_block
    assert per[1] == 0 and per[0] == pytest.approx(0.5)


def test_ape_mu_target_is_zero(rng):
    Phi = rng.normal(size=(30, 4))
    bp = build_ape_clm(ds_of(rng.normal(size=30)), Phi)
    np.testing.assert_array_equal(bp.blocks[0].t, 0)
    np.testing.assert_allclose(bp.blocks[1].t, Phi.mean(axis=0))


def test_extra_block_follows_the_same_rule(rng):
    n = 25
    ds = ds_of(rng.normal(size=n))
    Phi, E = rng.normal(size=(n, 3)), rng.normal(size=(n, 2))
    bp = build_ape_clm(ds, Phi).with_block(Block("extra", ds.W[:, None] * E, E.mean(axis=0)))
    assert bp.sizes == [3, 3, 2]
    g = rng.normal(size=n)
    I3 = np.max(np.abs(E.mean(axis=0) - (ds.W[:, None] * E).T @ g / n))
    I = imbalance(bp, g)
    assert I.per_block[2] == pytest.approx(I3)
    assert I.I == pytest.approx(np.linalg.norm(I.per_block))


def test_shift_zero_targets():
    spec = EstimandSpec(EstimandKind.DIST_SHIFT, np.zeros(2))
    bp = build_dist_shift(ds_of([0, 1, 1]), np.ones((3, 2)), spec)
    np.testing.assert_array_equal(bp.t, 0)
    assert imbalance(bp, np.zeros(3)).I == 0


def test_shift_requires_targets():
    with pytest.raises(ValueError):
        EstimandSpec(EstimandKind.DIST_SHIFT)
    with pytest.raises(ValueError):
        EstimandSpec(EstimandKind.MAR_MEAN, np.zeros(2))


def test_zero_weights_imbalance_is_max_target(rng):
    bp = random_problem(rng, 8, (3, 2))
    per = imbalance(bp, np.zeros(8)).per_block
    np.testing.assert_allclose(per, [np.abs(b.t).max() for b in bp.blocks])


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0, 1.7])
def test_constant_basis_imbalance(c):
    bp = BalanceProblem((Block("b", np.ones((5, 1)), np.ones(1)),))
    assert imbalance(bp, np.full(5, c)).I == pytest.approx(abs(1 - c))


def test_mar_columns_vanish_on_controls(rng):
    ds = ds_of((rng.random(40) < 0.5).astype(float))
    bp = build_mar(ds, rng.normal(size=(40, 5)))
    assert np.all(bp.G[ds.W == 0] == 0)


def test_targets_invariant_to_row_order(rng):
    n = 30
    W = (rng.random(n) < 0.5).astype(float)
    Phi = rng.normal(size=(n, 4))
    perm = rng.permutation(n)
    for build in (build_mar, build_ape_clm):
        a, b = build(ds_of(W), Phi), build(ds_of(W[perm]), Phi[perm])
        np.testing.assert_allclose(a.t, b.t, rtol=1e-13)
        np.testing.assert_array_equal(a.G[perm], b.G)


@given(seed=st.integers(0, 100_000), theta=st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_imbalance_is_convex(seed, theta):
    r = np.random.default_rng(seed)
    bp = random_problem(r, 7, (2, 3))
    g1, g2 = r.normal(size=7) * 3, r.normal(size=7) * 3
    lhs = imbalance(bp, theta * g1 + (1 - theta) * g2).I
    rhs = theta * imbalance(bp, g1).I + (1 - theta) * imbalance(bp, g2).I
    assert lhs <= rhs + 1e-12


def test_block_validation():
    with pytest.raises(ValueError):
        Block("b", np.ones((3, 2)), np.ones(3))
    with pytest.raises(ValueError):
        BalanceProblem((Block("a", np.ones((3, 1)), np.ones(1)), Block("b", np.ones((4, 1)), np.ones(1))))


def test_plugin_values():
    n = 4
    ds = ds_of([1, 0, 1, 0], Y=np.arange(4.0))
    tau = RegressionAdjustment(EstimandKind.APE_CLM, m_hat=np.zeros(n), tau_hat=np.full(n, 0.7),
                               mu_hat=np.ones(n))
    assert plugin_value(EstimandSpec(EstimandKind.APE_CLM), tau, ds) == pytest.approx(0.7)
    np.testing.assert_allclose(fitted_at_data(EstimandSpec(EstimandKind.APE_CLM), tau, ds), 1 + 0.7 * ds.W)
    mar = RegressionAdjustment(EstimandKind.MAR_MEAN, m_hat=np.full(n, 2.5))
    assert plugin_value(EstimandSpec(EstimandKind.MAR_MEAN), mar, ds) == pytest.approx(2.5)
    shift = EstimandSpec(EstimandKind.DIST_SHIFT, np.zeros(3))
    fit = RegressionAdjustment(EstimandKind.DIST_SHIFT, m_hat=np.ones(n), m_coef=np.array([1.0, 2.0, 3.0]))
    assert plugin_value(shift, fit, ds) == 0
    spec = EstimandSpec(EstimandKind.DIST_SHIFT, np.array([0.0, 1.0, -1.0]))
    np.testing.assert_allclose(h_values(spec, fit, ds), -1.0)


def test_build_problem_dispatch(rng):
    ds = ds_of([1, 0, 1])
    Phi = rng.normal(size=(3, 2))
    assert len(build_problem(EstimandSpec(EstimandKind.MAR_MEAN), ds, Phi).blocks) == 1
    assert len(build_problem(EstimandSpec(EstimandKind.APE_CLM), ds, Phi).blocks) == 2
    assert len(build_problem(EstimandSpec(EstimandKind.DIST_SHIFT, np.ones(2)), ds, Phi).blocks) == 1
