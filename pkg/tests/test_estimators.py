import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dskde.bandwidth import BandwidthPlan, DegenerateInputError, ds_bandwidth, plan_bandwidths
from dskde.estimators import (DEFAULT_TRUNCATION, FrameStack, GpaTable, cd_estimate, cd_grid, density_map, draw_grid, ds_direct,
                              ds_smooth, gpa_fit, gpa_query, gpa_query_grid, spatial_radius)
from dskde.kernel import kernel_moments
from dskde.simulate import sample_truncnorm_array, truncnorm_pdf

from oracles import K, cd_def, ds_def, gpa_def


def random_stack(n, p, q, seed=0):
    return FrameStack(np.random.default_rng(seed).uniform(0, 1, (n, p, q)))


def make_table(table, grid, h_star=0.01, h=0.2):
    plan = BandwidthPlan(h=h, h_star=h_star, sigma_hat=0.1, n=10, m=table.shape[1] * table.shape[2])
    return GpaTable(grid=np.asarray(grid, float), table=np.asarray(table, float), plan=plan, variant="ds", seed=0)


# --- FrameStack -------------------------------------------------------------

def test_framestack_validation():
    with pytest.raises(ValueError):
        FrameStack(np.full((2, 2, 2), 1.5))
    with pytest.raises(ValueError):
        FrameStack(np.zeros((0, 2, 2)))
    st_ = FrameStack(np.zeros((3, 4, 5)))
    assert (st_.n, st_.p, st_.q, st_.m) == (3, 4, 5, 20)
    with pytest.raises(ValueError):
        st_.values[0, 0, 0] = 1.0


# --- CD ---------------------------------------------------------------------

def test_cd_single_sample():
    stack = FrameStack(np.array([[[0.5]]]))
    assert cd_estimate(stack, 0.5, (0, 0), 0.1) == pytest.approx(3.9894228040, abs=1e-9)


def test_cd_two_samples():
    stack = FrameStack(np.array([[[0.3]], [[0.7]]]))
    # (K(1) + K(-1)) / (2 * 0.2), evaluated with mpmath
    assert cd_estimate(stack, 0.5, (0, 0), 0.2) == pytest.approx(1.2098536225957168, abs=1e-13)


def test_cd_matches_duplicate_sum():
    stack = random_stack(30, 4, 5, seed=1)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, h = rng.uniform(), rng.uniform(0.02, 0.3)
        i, j = rng.integers(4), rng.integers(5)
        expect = cd_def(stack.values[:, i, j].tolist(), x, h)
        assert cd_estimate(stack, x, (i, j), h) == pytest.approx(expect, rel=1e-12)


def test_cd_errors():
    stack = random_stack(3, 2, 2)
    with pytest.raises(IndexError):
        cd_estimate(stack, 0.5, (2, 0), 0.1)
    with pytest.raises(ValueError):
        cd_estimate(stack, 0.5, (0, 0), 0.0)


def test_cd_grid_constant_frames():
    v, h = 0.37, 0.05
    stack = FrameStack(np.full((6, 3, 4), v))
    grid = np.array([0.1, 0.35, 0.4, 0.9])
    out = cd_grid(stack, grid, h)
    for g, x in enumerate(grid):
        np.testing.assert_allclose(out[g], K((v - x) / h) / h, rtol=1e-13)


def test_cd_grid_agrees_with_pointwise():
    stack = random_stack(25, 6, 7, seed=3)
    grid = np.sort(np.random.default_rng(4).uniform(0, 1, 9))
    out = cd_grid(stack, grid, 0.08)
    rng = np.random.default_rng(5)
    for _ in range(10):
        g, i, j = rng.integers(9), rng.integers(6), rng.integers(7)
        assert out[g, i, j] == pytest.approx(cd_estimate(stack, grid[g], (i, j), 0.08), rel=1e-13)


def test_cd_grid_single_point():
    stack = random_stack(10, 3, 3, seed=6)
    out = cd_grid(stack, [0.4], 0.1)
    assert out.shape == (1, 3, 3)
    expect = [[cd_estimate(stack, 0.4, (i, j), 0.1) for j in range(3)] for i in range(3)]
    np.testing.assert_allclose(out[0], expect, rtol=1e-13)


def test_cd_grid_chunking_is_invisible():
    stack = random_stack(12, 9, 11, seed=7)
    grid = [0.2, 0.5, 0.8]
    np.testing.assert_array_equal(cd_grid(stack, grid, 0.1, chunk_pixels=7), cd_grid(stack, grid, 0.1))


# --- DS ---------------------------------------------------------------------

def test_ds_direct_constant_map():
    cd_map = np.full((7, 5), 2.5)
    for pix in [(0, 0), (3, 2), (6, 4)]:
        assert ds_direct(cd_map, pix, 0.15) == pytest.approx(2.5, rel=1e-14)


def test_ds_direct_single_location():
    assert ds_direct(np.array([[1.7]]), (0, 0), 0.3) == 1.7


def test_ds_direct_matches_double_loop():
    cd_map = np.random.default_rng(8).uniform(0, 3, (8, 8))
    for i in range(8):
        for j in range(8):
            assert ds_direct(cd_map, (i, j), 0.2) == pytest.approx(ds_def(cd_map.tolist(), i, j, 0.2), rel=1e-12)


def test_ds_smooth_constant_slice():
    out = ds_smooth(np.full((2, 9, 13), 0.8), 0.07)
    np.testing.assert_allclose(out, 0.8, rtol=1e-14)


def test_ds_smooth_matches_direct_16x16():
    h = 0.1
    slice_ = np.random.default_rng(9).gamma(4.0, 0.5, (16, 16))
    fast = ds_smooth(slice_, h)
    radius = spatial_radius(h, 16, 16, DEFAULT_TRUNCATION)
    trunc = np.array([[ds_direct(slice_, (i, j), h, radius) for j in range(16)] for i in range(16)])
    full = np.array([[ds_direct(slice_, (i, j), h) for j in range(16)] for i in range(16)])
    np.testing.assert_allclose(fast, trunc, rtol=1e-12)
    assert np.max(np.abs(fast - full) / np.abs(full)) < 1e-4
    np.testing.assert_allclose(ds_smooth(slice_, h, None), full, rtol=1e-12)


def test_ds_smooth_impulse_symmetric():
    imp = np.zeros((15, 15))
    imp[7, 7] = 1.0
    out = ds_smooth(imp, 0.1)
    assert np.unravel_index(out.argmax(), out.shape) == (7, 7)
    np.testing.assert_allclose(out, out[::-1, :], rtol=1e-14)
    np.testing.assert_allclose(out, out[:, ::-1], rtol=1e-14)
    np.testing.assert_allclose(out, out.T, rtol=1e-14)


def test_spatial_radius():
    assert spatial_radius(0.013, 540, 960, 3.0) == (22, 38)
    assert spatial_radius(0.1, 16, 16, 4.0) == (7, 7)
    assert spatial_radius(0.5, 4, 4, 4.0) == (3, 3)
    assert spatial_radius(0.1, 16, 32, None) == (15, 31)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.floats(0.02, 0.5), st.integers(0, 2**32 - 1))
def test_ds_smooth_convexity(p, q, h, seed):
    a = np.random.default_rng(seed).uniform(0, 5, (2, p, q))
    out = ds_smooth(a, h)
    for g in range(2):
        assert out[g].min() >= a[g].min() - 1e-12
        assert out[g].max() <= a[g].max() + 1e-12


def test_ds_errors():
    with pytest.raises(ValueError):
        ds_smooth(np.ones((3, 3)), 0.0)
    with pytest.raises(IndexError):
        ds_direct(np.ones((3, 3)), (3, 0), 0.1)


# --- GPA --------------------------------------------------------------------

def test_draw_grid():
    g = draw_grid(50, seed=3)
    assert np.all(np.diff(g) > 0) and g[0] > 0 and g[-1] < 1
    np.testing.assert_array_equal(g, draw_grid(50, seed=3))
    np.testing.assert_allclose(draw_grid(4, 0, "even"), [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ValueError):
        draw_grid(1, 0)


def frame_constant_stack(n=8, p=5, q=6, seed=0):
    # each frame is spatially constant; frames differ
    levels = np.random.default_rng(seed).uniform(0.2, 0.8, n)
    return FrameStack(np.broadcast_to(levels[:, None, None], (n, p, q)).copy())


def test_gpa_cd_on_frame_constant_stack_is_spatially_constant():
    stack = frame_constant_stack()
    plan = plan_bandwidths(stack.n, stack.m, 0.2, "cd")
    table = gpa_fit(stack, 20, plan, "cd", seed=1)
    for sl in table.table:
        np.testing.assert_allclose(sl, sl[0, 0], rtol=1e-13)


def test_gpa_fit_is_deterministic():
    stack = random_stack(10, 6, 6, seed=11)
    plan = plan_bandwidths(stack.n, stack.m, 0.29, "ds")
    a = gpa_fit(stack, 15, plan, "ds", seed=42)
    b = gpa_fit(stack, 15, plan, "ds", seed=42)
    np.testing.assert_array_equal(a.grid, b.grid)
    np.testing.assert_array_equal(a.table, b.table)


def test_gpa_ds_is_smoothed_cd_grid():
    stack = random_stack(10, 6, 7, seed=12)
    plan = plan_bandwidths(stack.n, stack.m, 0.29, "ds")
    table = gpa_fit(stack, 12, plan, "ds", seed=5)
    np.testing.assert_array_equal(table.table, ds_smooth(cd_grid(stack, table.grid, plan.h), plan.h))


def test_gpa_fit_errors():
    plan = plan_bandwidths(10, 9, 0.2, "ds")
    with pytest.raises(DegenerateInputError):
        gpa_fit(FrameStack(np.full((10, 3, 3), 0.4)), 10, plan)
    with pytest.raises(ValueError):
        gpa_fit(random_stack(10, 3, 3), 1, plan)


def test_gpa_table_is_immutable():
    stack = random_stack(10, 4, 4, seed=13)
    table = gpa_fit(stack, 10, plan_bandwidths(10, 16, 0.29), seed=0)
    with pytest.raises(ValueError):
        table.table[0, 0, 0] = 1.0
    with pytest.raises(AttributeError):
        table.variant = "cd"


def test_gpa_query_constant_column():
    grid = np.linspace(0.05, 0.95, 10)
    t = make_table(np.full((10, 2, 3), 1.25), grid)
    for x in [0.0, 0.33, 0.5, 1.0]:
        assert gpa_query(t, x, (1, 2)) == pytest.approx(1.25, rel=1e-14)


def test_gpa_query_concentrates_on_grid_point():
    grid = np.sort(np.random.default_rng(14).uniform(0, 1, 30))
    vals = np.random.default_rng(15).uniform(0, 3, (30, 1, 1))
    t = make_table(vals, grid, h_star=1e-2 * 1e-3)
    for g in [0, 11, 29]:
        assert gpa_query(t, grid[g], (0, 0)) == pytest.approx(vals[g, 0, 0], abs=1e-6)


def test_gpa_query_matches_duplicate_sum():
    rng = np.random.default_rng(16)
    grid = np.sort(rng.uniform(0, 1, 40))
    vals = rng.uniform(0, 3, (40, 3, 3))
    t = make_table(vals, grid, h_star=0.03)
    for _ in range(30):
        x = rng.uniform()
        i, j = rng.integers(3), rng.integers(3)
        expect = gpa_def(grid.tolist(), vals[:, i, j].tolist(), x, 0.03)
        assert gpa_query(t, x, (i, j), exact=True) == pytest.approx(expect, rel=1e-12)
        assert gpa_query(t, x, (i, j)) == pytest.approx(expect, rel=1e-12)


def test_gpa_query_window_survives_large_gaps():
    # nearest grid point far outside 8 h* of the query value
    grid = np.array([0.1, 0.105, 0.9])
    vals = np.array([1.0, 2.0, 3.0]).reshape(3, 1, 1)
    t = make_table(vals, grid, h_star=0.005)
    assert gpa_query(t, 0.5, (0, 0)) == pytest.approx(gpa_query(t, 0.5, (0, 0), exact=True), rel=1e-12)
    assert math.isfinite(gpa_query(t, 0.5, (0, 0)))


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32 - 1), st.floats(1e-4, 0.1))
def test_gpa_query_convexity(x, seed, h_star):
    rng = np.random.default_rng(seed)
    grid = np.unique(rng.uniform(0.001, 0.999, 25))
    vals = rng.uniform(0, 4, (grid.size, 1, 2))
    t = make_table(vals, grid, h_star=h_star, h=0.5)
    out = gpa_query(t, x, (0, 1))
    assert vals[:, 0, 1].min() - 1e-12 <= out <= vals[:, 0, 1].max() + 1e-12


def test_gpa_query_pixel_errors():
    t = make_table(np.ones((3, 2, 2)), [0.2, 0.5, 0.7])
    with pytest.raises(IndexError):
        gpa_query(t, 0.5, (2, 0))


def test_density_map_basic():
    grid = np.linspace(0.05, 0.95, 12)
    t = make_table(np.full((12, 4, 5), 0.7), grid)
    frame = np.random.default_rng(17).uniform(0, 1, (4, 5))
    np.testing.assert_allclose(density_map(t, frame).values, 0.7, rtol=1e-14)
    rng = np.random.default_rng(18)
    t2 = make_table(rng.uniform(0, 2, (12, 4, 5)), grid, h_star=0.05)
    np.testing.assert_array_equal(density_map(t2, frame).values, density_map(t2, frame.copy()).values)
    for i in range(4):
        for j in range(5):
            assert density_map(t2, frame).values[i, j] == gpa_query(t2, frame[i, j], (i, j))
    with pytest.raises(ValueError):
        density_map(t2, np.zeros((5, 4)))


def test_gpa_query_grid_shape():
    grid = np.linspace(0.05, 0.95, 12)
    t = make_table(np.random.default_rng(19).uniform(0, 2, (12, 3, 4)), grid, h_star=0.05)
    out = gpa_query_grid(t, [0.2, 0.6])
    assert out.shape == (2, 3, 4)
    assert out[1, 2, 3] == gpa_query(t, 0.6, (2, 3))


# --- statistical properties -------------------------------------------------

@pytest.mark.slow
def test_ds_variance_matches_leading_term():
    """Monte Carlo DS variance is within a factor 2 of nu0^3 f / (N M h^3)."""
    p = q = 32
    n, reps, sigma, x = 200, 100, 0.16, 0.5
    h = ds_bandwidth(n, p * q, sigma)
    rng = np.random.default_rng(123)
    vals = []
    for _ in range(reps):
        stack = FrameStack(sample_truncnorm_array(0.5, sigma, rng, size=(n, p, q)))
        vals.append(ds_smooth(cd_grid(stack, [x], h), h)[0, 16, 16])
    theory = kernel_moments().nu[0] ** 3 * truncnorm_pdf(x, 0.5, sigma) / (n * p * q * h**3)
    ratio = np.var(vals, ddof=1) / theory
    assert 0.5 < ratio < 2.0
