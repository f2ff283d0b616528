import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdfdot.diagnostics import adjoint_identity_errors, emission_consistency, smooth_random_field, taylor_ratio
from tdfdot.errors import ConfigurationError
from tdfdot.grid import GammaSpec, build_grid
from tdfdot.observation import (
    ADJOINT_SIGN,
    ObservationKind,
    adjoint_apply,
    clamp_admissible,
    cutoff_on,
    forward,
    frechet_apply,
    make_exponential_input,
    make_ramp_input,
    smooth_ramp,
)


def test_exponential_input_values(small_grid):
    bc = make_exponential_input(small_grid)
    arr = bc.as_array()
    assert arr[0, 0, 0] == pytest.approx(1.0)
    assert arr[-1, -1, -1] == pytest.approx(np.exp(1.0 - 1.0))
    assert np.all(arr[:, 1:-1, 1:-1] == 0)


def test_adjoint_identity_small():
    errs = adjoint_identity_errors(17, 0.05, draws=4)
    assert max(errs) < 0.05
    assert ADJOINT_SIGN == 1.0


def test_adjoint_identity_on_subboundary(small_grid):
    g = small_grid
    gamma = GammaSpec.parse("left,top:2:12")
    cache = forward("excitation", np.ones(g.shape), make_exponential_input(g), gamma)
    rng = np.random.default_rng(5)
    d = smooth_random_field(g, rng)
    r = cache.trace.with_values(rng.normal(size=cache.trace.values.shape))
    from tdfdot.grid import l2_inner
    gd = frechet_apply(cache, d)
    lhs, rhs = l2_inner(gd, r), l2_inner(d, adjoint_apply(cache, r), g)
    assert abs(lhs - rhs) <= 0.1 * gd.norm() * r.norm()


@pytest.mark.parametrize("kind", list(ObservationKind))
def test_taylor_remainder_is_second_order(kind):
    assert 3.5 <= taylor_ratio(kind, n=17, dt=0.05) <= 4.5


def test_emission_decomposition_matches_combined_solve():
    assert emission_consistency(17, 0.05) <= 1e-10


def test_both_kinds_share_the_forward_equation(small_grid):
    g = small_grid
    bc = make_exponential_input(g)
    q = np.full(g.shape, 1.3)
    a = forward("excitation", q, bc).trace.values
    b = forward("combined", q, bc).trace.values
    assert np.array_equal(a, b)


def test_frechet_is_linear(small_grid):
    g = small_grid
    cache = forward("excitation", np.ones(g.shape), make_exponential_input(g))
    rng = np.random.default_rng(0)
    d1, d2 = smooth_random_field(g, rng), smooth_random_field(g, rng)
    lhs = frechet_apply(cache, 2 * d1 - d2).values
    rhs = 2 * frechet_apply(cache, d1).values - frechet_apply(cache, d2).values
    assert np.allclose(lhs, rhs, atol=1e-12)
    with pytest.raises(ConfigurationError):
        frechet_apply(cache, np.ones((3, 3)))


def test_larger_absorption_increases_outward_derivative(small_grid):
    g = small_grid
    bc = make_exponential_input(g)
    # more absorption pulls the interior down under the same boundary values,
    # so the outward normal derivative grows
    lo = forward("excitation", np.full(g.shape, 0.5), bc).trace.values
    hi = forward("excitation", np.full(g.shape, 2.0), bc).trace.values
    assert np.all(hi[1:] >= lo[1:] - 1e-12)
    assert np.any(hi[1:] > lo[1:])


def test_clamp_admissible():
    q = np.array([[-1.0, 0.5], [3.0, 20.0]])
    out, hits = clamp_admissible(q, 10.0)
    assert hits == 2
    assert np.array_equal(out, [[0.0, 0.5], [3.0, 10.0]])
    assert clamp_admissible(q, None)[1] == 1


def test_forward_reports_clamping(small_grid):
    q = np.full(small_grid.shape, 12.0)
    cache = forward("excitation", q, make_exponential_input(small_grid), c_plus=10.0)
    assert cache.clamped_nodes == q.size
    assert cache.q.max() == 10.0


@given(st.floats(-1, 2), st.floats(-1, 2))
def test_smooth_ramp_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    va, vb = smooth_ramp(np.array([lo, hi]))
    assert 0.0 <= va <= vb <= 1.0


def test_smooth_ramp_endpoints():
    assert smooth_ramp(np.array([0.0, 0.5, 1.0])).tolist() == [0.0, 0.5, 1.0]


def test_ramp_input_is_compatible_and_cut_off(small_grid):
    g = small_grid
    gamma_in = GammaSpec.parse("left")
    bc = make_ramp_input(g, [0.0, 0.2, 0.4, 0.6, 0.8], gamma_in=gamma_in)
    v = bc.trace.values
    assert np.all(v[0] == 0.0)
    arr = bc.as_array()
    assert np.all(arr[:, -1, :] == 0.0)
    chi = cutoff_on(g, gamma_in, 0.1)
    assert chi[0, g.ny // 2] == 1.0 and chi[0, 0] == 0.0
    with pytest.raises(ConfigurationError):
        make_ramp_input(g, [0.0, 0.5])
    with pytest.raises(ConfigurationError):
        make_ramp_input(g, [0.0, 0.5, 0.4])


def test_ramp_input_solves_with_zero_initial_state(small_grid):
    bc = make_ramp_input(small_grid, [0.0, 0.3, 0.5])
    cache = forward("excitation", np.ones(small_grid.shape), bc)
    assert np.all(cache.trajectory[0] == 0.0)
    assert np.abs(cache.trajectory[1]).max() < 1e-2 * np.abs(cache.trajectory).max()
