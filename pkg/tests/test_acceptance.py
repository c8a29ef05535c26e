"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The long 3D runs are shared through module-level caches so the conservation,
2:1 and determinism checks reuse the same baseline trajectory.
"""

import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from burgers_amr import (InitProfile, MemoryModelParams, ProblemConfig, Simulation, load_deck,
                         memory_model, parse_deck, run)
from burgers_amr.harness import sweep
from burgers_amr.metrics import RunMetrics, zone_cycles
from burgers_amr.solver import weno5_reconstruct

import oracles
from test_driver import SMALL_2D

DECKS = Path(__file__).resolve().parent.parent / "decks"


@lru_cache(maxsize=None)
def gaussian_deck():
    return load_deck(DECKS / "gaussian3d.deck")


@lru_cache(maxsize=None)
def gaussian_run(workers=1, parts=1, flux_correction=True):
    deck = gaussian_deck().with_values(run__workers=workers, run__num_partitions=parts,
                                       burgers__flux_correction=flux_correction)
    t0 = time.perf_counter()
    metrics, mesh = run(deck, track_conservation=True, check_nesting=True)
    return metrics, time.perf_counter() - t0


def drift(metrics):
    c = metrics.conservation
    return abs(c[-1] - c[0]) / abs(c[0])


# -- 1 -----------------------------------------------------------------------------------
def test_c01_memory_model_worked_example(report):
    p = MemoryModelParams(n_meshblocks=4096, n_threadblocks=1024, B=8, nx1=8, ng=4,
                          dimension=3, d=2, num_scalar=8)
    t0 = time.perf_counter()
    before = memory_model(p, optimized=False)
    after = memory_model(p, optimized=True)
    elapsed = time.perf_counter() - t0
    ok = before == 8_858_370_048 and after == 138_412_032 and elapsed < 1e-3
    report(1, "memory model", ok, f"{before} / {after} bytes in {elapsed * 1e6:.1f} us")
    assert ok


# -- 2 -----------------------------------------------------------------------------------
@settings(max_examples=200)
@given(trace=st.lists(st.integers(0, 2000), max_size=60),
       side=st.sampled_from([4, 8, 16, 32]), dim=st.sampled_from([2, 3]))
def _zone_cycle_property(trace, side, dim):
    block = (side,) * dim
    count = 0
    for nb in trace:
        for _ in range(nb):
            count += side ** dim
    assert zone_cycles(trace, block) == count
    m = RunMetrics(cells_per_block=side ** dim)
    for nb in trace:
        m.add_cycle(nb)
    assert m.zone_cycles == count


def test_c02_zone_cycles(report):
    example = zone_cycles([20], (16, 16, 16))
    ok = example == 81_920
    try:
        _zone_cycle_property()
    except AssertionError as exc:
        ok = False
        example = f"{example}; property failed: {exc}"
    report(2, "zone-cycle definition", ok, f"20 x 16^3 x 1 = {example}; random traces agree")
    assert ok


# -- 3 -----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c03_conservation(report):
    with_fc, seconds = gaussian_run()
    without, _ = gaussian_run(flux_correction=False)
    d_fc, d_no = drift(with_fc), drift(without)
    levels = with_fc.blocks_processed_per_cycle
    ok = (with_fc.cycles == 50 and d_fc <= 1e-11 and d_no >= 10 * d_fc and d_no > 0
          and seconds < 120)
    report(3, "conservation", ok,
           f"drift {d_fc:.2e} with flux correction, {d_no:.2e} without; "
           f"{with_fc.cycles} cycles, {min(levels)}-{max(levels)} blocks, {seconds:.1f} s")
    assert ok


# -- 4 -----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c04_two_to_one_every_cycle(report):
    metrics, _ = gaussian_run()
    v = metrics.nesting_violations
    ok = len(v) == 50 and not any(v)
    report(4, "2:1 nesting", ok, f"{sum(v)} violations over {len(v)} cycles")
    assert ok


# -- 5 -----------------------------------------------------------------------------------
def test_c05_monolithic_oracle(report):
    prof = InitProfile("sine", amplitude=0.6, velocity_offset=(0.3, -0.2, 0.1), scalar_offset=1.0)
    cfg = ProblemConfig(dim=3, mesh_cells=32, nx1=32, num_scalar=1, max_levels=1, profile=prof)
    sim = Simulation(cfg)
    U0 = sim.mesh.interior()[0].copy()
    sim.advance(10)
    want = oracles.run_monolithic(U0, sim.mesh.dx[0], 3, cfg.cfl, cfg.dt_max, 10)
    err = float(np.abs(sim.mesh.interior()[0] - want).max())
    ok = err <= 1e-13 and sim.cycle == 10
    report(5, "monolithic oracle", ok, f"max-norm difference {err:.2e} after 10 cycles")
    assert ok


# -- 6 -----------------------------------------------------------------------------------
def test_c06_weno_order(report):
    errs = []
    for n in (32, 64, 128):
        h = 1.0 / n
        i = np.arange(n)
        avg = (np.cos(2 * np.pi * i * h) - np.cos(2 * np.pi * (i + 1) * h)) / (2 * np.pi * h)
        stencil = np.stack([np.roll(avg, -k) for k in (-2, -1, 0, 1, 2)], axis=-1)
        errs.append(np.abs(weno5_reconstruct(stencil) - np.sin(2 * np.pi * (i + 1) * h)).max())
    orders = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = all(o >= 4.5 for o in orders)
    report(6, "WENO5 order", ok, "max-norm orders " + ", ".join(f"{o:.2f}" for o in orders))
    assert ok


# -- 7, 8 --------------------------------------------------------------------------------------
def trend_deck():
    """Wider bump than the conservation deck so every block size sees refinement."""
    return gaussian_deck().with_values(run__nlim=2, burgers__width=0.1, amr__refine_tol=0.1,
                                       amr__derefine_tol=0.01)


@lru_cache(maxsize=None)
def block_sweep():
    return sweep(trend_deck(), "block_size", [32, 16, 8])


@pytest.mark.slow
def test_c07_block_size_trend(report):
    res = block_sweep()
    c = [r.metrics.counters for r in res.rows]
    ratio = [x.comm_to_comp_ratio for x in c]
    sent = [x.cells_sent_total for x in c]
    upd = [x.cell_updates for x in c]
    ok = (res.ok and ratio[0] < ratio[1] < ratio[2] and ratio[2] / ratio[0] >= 5
          and sent[0] < sent[1] < sent[2] and upd[0] > upd[1] > upd[2])
    report(7, "block-size trend", ok,
           f"ratio {[round(r, 3) for r in ratio]} (x{ratio[2] / ratio[0]:.1f}), sent {sent}, "
           f"updates {upd}")
    assert ok


@pytest.mark.slow
def test_c08_sparsity(report):
    res = block_sweep()
    upd = {r.axis_value: r.metrics.counters.cell_updates for r in res.rows}
    factor = upd[32] / upd[16]
    ok = factor >= 1.5
    report(8, "sparsity", ok, f"cell updates block 32 / block 16 = {factor:.2f}")
    assert ok


# -- 9 -----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c09_amr_depth(report):
    res = sweep(trend_deck().with_values(block__nx1=8), "amr_levels", [1, 2, 3])
    sent = [r.metrics.counters.cells_sent_total for r in res.rows]
    ok = res.ok and sent[0] <= sent[1] <= sent[2]
    report(9, "AMR depth", ok, f"cells sent for levels 1,2,3: {sent}")
    assert ok


# -- 10 ----------------------------------------------------------------------------------
@pytest.mark.slow
def test_c10_determinism(report):
    base, _ = gaussian_run()
    runs = {(w, p): gaussian_run(workers=w, parts=p)[0] for w in (1, 2, 4) for p in (1, 4)}
    problems = []
    for (w, p), m in runs.items():
        if m.checksum != base.checksum:
            problems.append(f"checksum differs at workers={w} partitions={p}")
        if m.zone_cycles != base.zone_cycles:
            problems.append(f"zone_cycles differ at workers={w} partitions={p}")
        if (m.counters.cells_sent_total, m.counters.cell_updates) != \
                (base.counters.cells_sent_total, base.counters.cell_updates):
            problems.append(f"totals differ at workers={w} partitions={p}")
        ref = runs[(1, p)].counters
        if m.counters.history != ref.history:
            problems.append(f"local/remote split differs across workers at partitions={p}")
    remote = runs[(1, 4)].counters.cells_sent_remote
    ok = not problems and remote > 0
    report(10, "determinism", ok,
           "; ".join(problems) or f"6 runs agree (checksum {base.checksum[:12]}, "
                                   f"{remote} remote cells at 4 partitions)")
    assert ok


# -- 11 ----------------------------------------------------------------------------------
def gap_deck(gap):
    # the derefine band sits just under the refine threshold, so freshly refined
    # blocks keep asking to coarsen and the gap is what holds them back
    return parse_deck(SMALL_2D).with_values(amr__refine_tol=0.1, amr__derefine_tol=0.07,
                                            amr__derefine_gap=gap, run__nlim=40)


def coarsen_gaps(log):
    """Cycles between a block's creation by coarsening and the next coarsening that
    consumes it (or a descendant, which inherits the creation cycle)."""
    born = {}
    gaps = []
    for cycle, kind, loc, sources in log:
        if kind == "refined":
            born[loc] = born.get(sources[0])
        elif kind == "coarsened":
            for kid in sources:
                if born.get(kid) is not None:
                    gaps.append(cycle - born[kid])
            born[loc] = cycle
    return gaps


def test_c11_derefinement_gap(report):
    metrics, _ = run(gap_deck(10))
    gaps = coarsen_gaps(metrics.lineage_log)
    witness, _ = run(gap_deck(0))
    free = coarsen_gaps(witness.lineage_log)
    ok = bool(gaps) and min(gaps) >= 10 and bool(free) and min(free) < 10
    report(11, "derefinement gap", ok,
           f"{len(gaps)} re-coarsenings, shortest gap {min(gaps) if gaps else None} cycles "
           f"(without the gap: {min(free) if free else None})")
    assert ok
