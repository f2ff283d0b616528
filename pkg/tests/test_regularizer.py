import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdfdot.diagnostics import pdhg_closed_form_error, pdhg_oracle_error, smooth_random_field
from tdfdot.errors import ConfigurationError
from tdfdot.grid import build_grid, l2_norm
from tdfdot.regularizer import (
    PdhgSettings,
    PenaltyParams,
    bregman_argmin,
    dual_objective,
    eval_penalty,
    primal_objective,
    subgradient_select,
)

TIGHT = PenaltyParams(beta1=0.1, beta2=1.0, pdhg=PdhgSettings(max_iters=20_000, tol=1e-12, step_ratio=20.0))
GRID = build_grid(9, 9, 1.0, 0.5)


def test_no_tv_gives_scaled_eta():
    assert pdhg_closed_form_error() <= 1e-10


def test_matches_dual_projected_gradient_oracle():
    assert pdhg_oracle_error() <= 1e-6


def test_zero_eta_gives_zero():
    r = bregman_argmin(GRID.zeros(), GRID, PenaltyParams())
    assert r.converged and r.iterations == 0
    assert np.all(r.z == 0)


def test_penalty_value():
    g = build_grid(5, 5, 1.0, 0.5)
    q = np.full(g.shape, 2.0)
    assert eval_penalty(q, g, PenaltyParams(beta1=0.1, beta2=1.0)) == pytest.approx(0.4)


def test_rejects_nonpositive_beta1():
    with pytest.raises(ConfigurationError):
        PenaltyParams(beta1=0.0)
    with pytest.raises(ConfigurationError):
        PenaltyParams(beta2=-1.0)


def test_rejects_unstable_steps():
    with pytest.raises(ConfigurationError):
        bregman_argmin(np.ones(GRID.shape), GRID, PenaltyParams(pdhg=PdhgSettings(sigma=1.0, tau_step=1.0)))


def test_accelerated_variant_agrees_on_a_step():
    X, Y = GRID.mesh()
    eta = 5 * (X > 0.5) + Y
    acc = PenaltyParams(pdhg=PdhgSettings(max_iters=50_000, tol=1e-12, accelerate=True, step_ratio=20.0))
    assert np.allclose(bregman_argmin(eta, GRID, acc).z, bregman_argmin(eta, GRID, TIGHT).z, atol=1e-5)


eta_seeds = st.integers(0, 10_000)


@settings(max_examples=8)
@given(eta_seeds, eta_seeds)
def test_argmin_is_lipschitz_in_eta(s1, s2):
    e1 = 3 * smooth_random_field(GRID, np.random.default_rng(s1))
    e2 = 3 * smooth_random_field(GRID, np.random.default_rng(s2))
    z1 = bregman_argmin(e1, GRID, TIGHT).z
    z2 = bregman_argmin(e2, GRID, TIGHT).z
    assert l2_norm(z1 - z2, GRID) <= l2_norm(e1 - e2, GRID) / (2 * TIGHT.beta1) + 1e-6


@settings(max_examples=8)
@given(eta_seeds)
def test_output_beats_the_no_tv_point(seed):
    eta = 3 * smooth_random_field(GRID, np.random.default_rng(seed))
    r = bregman_argmin(eta, GRID, TIGHT)
    ref = eta / (2 * TIGHT.beta1)
    assert primal_objective(r.z, eta, GRID, TIGHT) <= primal_objective(ref, eta, GRID, TIGHT) + 1e-8


@settings(max_examples=8)
@given(eta_seeds)
def test_duality_gap_closes(seed):
    eta = 3 * smooth_random_field(GRID, np.random.default_rng(seed))
    r = bregman_argmin(eta, GRID, TIGHT)
    P = primal_objective(r.z, eta, GRID, TIGHT)
    D = dual_objective(r.dual, eta, GRID, TIGHT)
    assert D <= P + 1e-12
    assert P - D <= 1e-10 * max(1.0, abs(P))
    assert np.sqrt((r.dual**2).sum(axis=0)).max() <= TIGHT.beta2 * (1 + 1e-12)


@settings(max_examples=8)
@given(eta_seeds)
def test_mirror_symmetry(seed):
    eta = 3 * smooth_random_field(GRID, np.random.default_rng(seed))
    z = bregman_argmin(eta, GRID, TIGHT).z
    zm = bregman_argmin(eta[::-1], GRID, TIGHT).z
    assert np.allclose(zm, z[::-1], atol=1e-6)


def test_subgradient_roundtrip_on_smooth_field():
    X, Y = GRID.mesh()
    q = 1.0 + 0.5 * np.sin(2 * X + 0.3) * np.cos(Y)
    eta = subgradient_select(q, GRID, TIGHT, rule="explicit")
    z = bregman_argmin(eta, GRID, TIGHT).z
    assert np.allclose(z, q, atol=1e-5)
    assert np.all(subgradient_select(None, GRID, TIGHT) == 0)
    with pytest.raises(ConfigurationError):
        subgradient_select(q, GRID, TIGHT, rule="median")


def test_warm_start_reuses_dual():
    X, Y = GRID.mesh()
    eta = 5 * (X > 0.5)
    params = PenaltyParams(pdhg=PdhgSettings(max_iters=20_000, tol=1e-10))
    cold = bregman_argmin(eta, GRID, params)
    warm = bregman_argmin(eta, GRID, params, dual0=cold.dual)
    assert warm.iterations < cold.iterations
    assert np.allclose(warm.z, cold.z, atol=1e-6)


def test_nonconvergence_is_flagged():
    X, _ = GRID.mesh()
    r = bregman_argmin(5 * (X > 0.5), GRID, PenaltyParams(pdhg=PdhgSettings(max_iters=3, tol=1e-14)))
    assert not r.converged and r.iterations == 3
