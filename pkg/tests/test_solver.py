import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from burgers_amr.fields import ProblemConfig, allocate_block
from burgers_amr.solver import (ShapeMismatch, calculate_fluxes, compute_fluxes, divergence,
                                estimate_timestep, flux_divergence, hll_flux, physical_flux,
                                refinement_indicator, rk2_advance, tag_refinement,
                                weighted_sum_data, weno5_reconstruct)
from burgers_amr.tree import LogicalLocation, Tag

import oracles


# -- WENO5 ---------------------------------------------------------------------------
def test_weno_constant():
    assert weno5_reconstruct([3, 3, 3, 3, 3]) == 3.0


def test_weno_linear():
    assert weno5_reconstruct([1, 2, 3, 4, 5]) == pytest.approx(3.5, abs=1e-14)


def test_weno_matches_textbook_form():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(1000, 5))
    want = oracles.weno5_right(*s.T)
    np.testing.assert_allclose(weno5_reconstruct(s), want, rtol=1e-14, atol=1e-15)


def test_weno_order_on_sine():
    errs = []
    for n in (32, 64, 128):
        h = 1.0 / n
        i = np.arange(n)
        # exact cell averages of sin(2 pi x)
        avg = (np.cos(2 * np.pi * i * h) - np.cos(2 * np.pi * (i + 1) * h)) / (2 * np.pi * h)
        st_ = np.stack([np.roll(avg, -k) for k in (-2, -1, 0, 1, 2)], axis=-1)
        face = weno5_reconstruct(st_)
        errs.append(np.abs(face - np.sin(2 * np.pi * (i + 1) * h)).max())
    for a, b in zip(errs, errs[1:]):
        assert a / b >= 2 ** 4.5


def test_weno_shape_check():
    with pytest.raises(ShapeMismatch):
        weno5_reconstruct([1, 2, 3])


# -- HLL -------------------------------------------------------------------------------
def test_hll_consistency_example():
    assert hll_flux([2, 0, 0], [2, 0, 0], 0)[0] == 2.0


def test_hll_transonic():
    assert hll_flux([1.0, 0, 0], [-1.0, 0, 0], 0)[0] == 1.5


def test_hll_upwind():
    assert hll_flux([2.0, 0, 0], [1.0, 0, 0], 0)[0] == 2.0


@settings(max_examples=100, deadline=None)
@given(w=st.lists(st.floats(-10, 10), min_size=5, max_size=5), d=st.integers(0, 2))
def test_hll_consistent(w, d):
    np.testing.assert_array_equal(hll_flux(w, w, d, 3), physical_flux(w, d, 3))


def test_hll_scalar_flux():
    f = hll_flux([1.0, 0, 0, 2.0], [1.0, 0, 0, 2.0], 0, 3)
    assert f[3] == 2.0


def test_hll_shape_check():
    with pytest.raises(ShapeMismatch):
        hll_flux([1, 2], [1, 2, 3], 0)


# -- fluxes and divergence --------------------------------------------------------------------
def periodic_block(cfg, interior):
    """Block with ghosts filled by periodic wrap of ``interior`` (nvar, z, y, x)."""
    blk = allocate_block(cfg, LogicalLocation(0, (0,) * cfg.dim))
    g = [cfg.ghosts(d) for d in (2, 1, 0)]
    pad = [(0, 0)] + [(gg, gg) for gg in g]
    blk.U[...] = np.pad(interior, pad, mode="wrap")
    return blk


def single_block_cfg(dim=3, n=16, ns=1, **kw):
    return ProblemConfig(dim=dim, mesh_cells=n, nx1=n, num_scalar=ns, max_levels=1, **kw)


def test_constant_state_fluxes():
    cfg = single_block_cfg()
    w = np.array([0.3, -0.2, 0.5, 1.7])
    blk = periodic_block(cfg, np.broadcast_to(w[:, None, None, None], (4,) + cfg.interior_shape))
    fl = calculate_fluxes(blk, cfg)
    for d in range(3):
        want = physical_flux(w, d, 3)
        assert np.all(fl[d] == want[:, None, None, None])


def test_zero_velocity_zero_flux():
    cfg = single_block_cfg()
    rng = np.random.default_rng(2)
    data = np.zeros((4,) + cfg.interior_shape)
    data[3] = rng.random(cfg.interior_shape)
    blk = periodic_block(cfg, data)
    for F in calculate_fluxes(blk, cfg):
        assert not F.any()


@pytest.mark.parametrize("dim", [2, 3])
def test_single_block_residual_matches_monolithic(dim):
    cfg = single_block_cfg(dim=dim, n=16, ns=2)
    rng = np.random.default_rng(3)
    data = 0.5 + rng.random((cfg.nvar,) + cfg.interior_shape)
    data[:dim] -= 0.5
    blk = periodic_block(cfg, data)
    calculate_fluxes(blk, cfg)
    L = flux_divergence(blk, cfg)
    want = oracles.residual(data, blk.dx, dim)
    np.testing.assert_allclose(L, want, rtol=0, atol=1e-14 * np.abs(want).max())


def test_uniform_fluxes_zero_residual():
    cfg = single_block_cfg(dim=2, n=16)
    flux = [np.full((1, cfg.nvar) + cfg.face_shape(d), 2.5) for d in range(2)]
    L = divergence(flux, np.full((1, 3), 0.1), cfg)
    assert not L.any()


def test_one_cell_divergence():
    cfg = single_block_cfg(dim=2, n=16)
    flux = [np.zeros((1, cfg.nvar) + cfg.face_shape(d)) for d in range(2)]
    flux[0][0, 0, 0, 0, 1] = 2.0  # right face of cell (0, 0)
    flux[0][0, 0, 0, 0, 0] = 1.0  # left face
    L = divergence(flux, np.array([[0.5, 0.5, 1.0]]), cfg)
    assert L[0, 0, 0, 0, 0] == -2.0


def test_residual_telescopes_on_periodic_block():
    cfg = single_block_cfg(dim=3, n=16)
    rng = np.random.default_rng(4)
    data = rng.random((4,) + cfg.interior_shape)
    blk = periodic_block(cfg, data)
    calculate_fluxes(blk, cfg)
    L = flux_divergence(blk, cfg)
    vol = np.prod(blk.dx)
    scale = np.abs(L).sum() * vol
    for v in range(4):
        assert abs(L[v].sum() * vol) <= 1e-13 * scale


# -- time integration ---------------------------------------------------------------------
def test_weighted_sum_examples():
    X = np.arange(6.0)
    Y = np.ones(6)
    np.testing.assert_array_equal(weighted_sum_data(X, Y, 1.0, 0.0), X)
    np.testing.assert_array_equal(weighted_sum_data(X, X, 0.5, 0.5), X)
    np.testing.assert_array_equal(weighted_sum_data(X, Y, 1.0, 0.1), X + 0.1 * Y)


def test_weighted_sum_in_place_alias():
    X = np.arange(4.0)
    Y = np.full(4, 2.0)
    weighted_sum_data(X, Y, 0.5, 0.5, out=Y)
    np.testing.assert_array_equal(Y, 0.5 * np.arange(4.0) + 1.0)


def test_weighted_sum_shape_check():
    with pytest.raises(ShapeMismatch):
        weighted_sum_data(np.ones(3), np.ones(4), 1, 1)


def test_rk2_zero_residual():
    U0 = np.arange(5.0)
    np.testing.assert_array_equal(rk2_advance(U0, 0.3, np.zeros_like), U0)


@pytest.mark.parametrize("dt", [0.1, 0.01, 0.5])
def test_rk2_linear_decay(dt):
    u = rk2_advance(np.array([1.0]), dt, lambda v: -v)[0]
    assert u == pytest.approx(1 - dt + dt * dt / 2, abs=1e-15)


def test_rk2_temporal_order():
    # u' = -u integrated to t=1: halving dt cuts the error ~4x
    errs = []
    for n in (20, 40, 80):
        u = np.array([1.0])
        for _ in range(n):
            u = rk2_advance(u, 1.0 / n, lambda v: -v)
        errs.append(abs(u[0] - np.exp(-1)))
    for a, b in zip(errs, errs[1:]):
        assert 3.5 < a / b < 4.5


# -- timestep ----------------------------------------------------------------------------------
def test_timestep_single_cell():
    cfg = single_block_cfg(dim=3, n=16, cfl=0.5)
    U = np.zeros((1, 4) + cfg.block_shape)
    U[0, 0][cfg.interior] = 2.0
    dx = np.array([[0.1, 0.1, 0.1]])
    assert estimate_timestep(U, dx, cfg) == pytest.approx(0.025, rel=1e-12)


def test_timestep_cap():
    cfg = single_block_cfg(dim=3, n=16, dt_max=0.3)
    U = np.zeros((1, 4) + cfg.block_shape)
    assert estimate_timestep(U, np.full((1, 3), 0.1), cfg) == 0.3


def test_refined_block_halves_dt():
    cfg = single_block_cfg(dim=2, n=16)
    U = np.zeros((2, 3) + cfg.block_shape)
    U[:, 0][(slice(None),) + cfg.interior] = 1.0
    coarse = estimate_timestep(U[:1], np.array([[0.1, 0.1, 1.0]]), cfg)
    both = estimate_timestep(U, np.array([[0.1, 0.1, 1.0], [0.05, 0.05, 1.0]]), cfg)
    assert both == pytest.approx(coarse / 2, rel=1e-12)


# -- tagging -------------------------------------------------------------------------------------
def tag_block(cfg, field):
    blk = periodic_block(cfg, field)
    return blk, tag_refinement(blk, cfg)


def test_constant_field_derefines():
    cfg = single_block_cfg(dim=2, n=16, refine_tol=0.1, derefine_tol=0.01)
    _, tag = tag_block(cfg, np.ones((3,) + cfg.interior_shape))
    assert tag == Tag.DEREFINE


def test_step_refines():
    cfg = single_block_cfg(dim=2, n=16, refine_tol=0.1, derefine_tol=0.01)
    f = np.ones((3,) + cfg.interior_shape)
    f[:, :, :, 8:] = 2.0  # jump of 1 on a background of 1
    blk, tag = tag_block(cfg, f)
    # direct evaluation: |2 - 1| / (2 * max(|1|, floor)) at the step
    assert refinement_indicator(blk.U[None], cfg)[0] == pytest.approx(0.5)
    assert tag == Tag.REFINE


def test_mid_band_ripple_keeps():
    cfg = single_block_cfg(dim=2, n=16, refine_tol=0.1, derefine_tol=0.01)
    x = (np.arange(16) + 0.5) / 16
    ripple = 1.0 + 0.05 * np.sin(2 * np.pi * x)
    f = np.broadcast_to(ripple, (3,) + cfg.interior_shape).copy()
    blk, tag = tag_block(cfg, f)
    s = refinement_indicator(blk.U[None], cfg)[0]
    # max |f(i+1)-f(i-1)| / (2|f|) ~ 0.05 * sin(2 pi h) / 1 ~ 0.0196
    assert 0.01 < s < 0.1
    assert tag == Tag.NONE


def test_indicator_matches_numpy_formula():
    cfg = single_block_cfg(dim=3, n=8, ns=1)
    rng = np.random.default_rng(5)
    blk = periodic_block(cfg, rng.normal(size=(4,) + cfg.interior_shape))
    W = blk.U
    g = cfg.ng
    mid = W[:, g:-g, g:-g, g:-g]
    den = 2 * np.maximum(np.abs(mid), 1e-10)
    best = 0.0
    for ax in (1, 2, 3):
        hi = np.roll(W, -1, axis=ax)[:, g:-g, g:-g, g:-g]
        lo = np.roll(W, 1, axis=ax)[:, g:-g, g:-g, g:-g]
        best = max(best, (np.abs(hi - lo) / den).max())
    assert refinement_indicator(W[None], cfg)[0] == best
