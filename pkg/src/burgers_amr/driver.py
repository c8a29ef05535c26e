"""Timestep loop: estimate dt, advance with RK2, then tag/regrid/rebalance."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from .exchange import CommCounters, build_buffer_schedule, exchange_ghosts, flux_correction
from .fields import ProblemConfig, prolong_box, restrict_box
from .mesh import Mesh
from .metrics import RunMetrics
from .parallel import map_chunks
from .solver import (compute_fluxes, divergence, estimate_timestep, refinement_indicator,
                     tag_from_indicator, weighted_sum_data)
from .tree import RefinementFlags, Tag, enforce_proper_nesting, nesting_violations, update_tree

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    pass


class Simulation:
    """Owns the mesh, the exchange schedule, the metrics and the worker pool."""

    def __init__(self, config: ProblemConfig, num_partitions: int = 1, workers: int = 1,
                 cost_hook: Optional[Callable] = None, initial_refinement: bool = True):
        self.config = config
        self.num_partitions = num_partitions
        self.workers = workers
        self.cost_hook = cost_hook
        self.pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        self.metrics = RunMetrics(cells_per_block=int(np.prod(config.interior_shape)))
        self.cycle = 0
        self.time = 0.0
        self.mesh = Mesh(config, config.make_tree(), num_partitions)
        self.mesh.initialize()
        if initial_refinement:
            self._initial_refinement()
        self._new_schedule()
        self.exchange(counted=False)
        self.mesh.fill_derived()

    @property
    def counters(self) -> CommCounters:
        return self.metrics.counters

    @property
    def tree(self):
        return self.mesh.tree

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def _new_schedule(self):
        self.schedule = build_buffer_schedule(self.mesh.tree, self.config, self.mesh.owner_map(),
                                              self.mesh.locs)
        self.ghosts_current = False

    def _initial_refinement(self):
        """Refine towards the initial profile, re-sampling it on every new block."""
        for _ in range(self.config.max_levels - 1):
            self._new_schedule()
            self.exchange(counted=False)
            s = refinement_indicator(self.mesh.U, self.config)
            tags = {loc: Tag.REFINE if si > self.config.refine_tol else Tag.NONE
                    for loc, si in zip(self.mesh.locs, s)}
            flags = enforce_proper_nesting(self.mesh.tree, RefinementFlags(tags))
            tree, _ = update_tree(self.mesh.tree, flags)
            if tree == self.mesh.tree:
                break
            self.mesh = Mesh(self.config, tree, self.num_partitions)
            self.mesh.initialize()

    # -- ghost exchange -------------------------------------------------
    def exchange(self, counted: bool = True):
        if counted:
            exchange_ghosts(self.mesh, self.schedule, self.counters, self.metrics.timed, self.pool)
        else:
            exchange_ghosts(self.mesh, self.schedule, None, None, self.pool)
        self.ghosts_current = True

    # -- Step -----------------------------------------------------------
    def residual(self, L: np.ndarray) -> np.ndarray:
        m, cfg, pool = self.mesh, self.config, self.pool
        if not self.ghosts_current:
            self.exchange()
        with self.metrics.timed("CalculateFluxes"):
            map_chunks(pool, len(m), lambda lo, hi: compute_fluxes(
                m.U[lo:hi], [f[lo:hi] for f in m.flux], cfg))
        if cfg.flux_correction:
            with self.metrics.timed("FluxCorrection"):
                flux_correction(m.flux, self.schedule)
        with self.metrics.timed("FluxDivergence"):
            map_chunks(pool, len(m), lambda lo, hi: divergence(
                [f[lo:hi] for f in m.flux], m.dx[lo:hi], cfg, out=L[lo:hi]))
        return L

    def step(self, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        m = self.mesh
        interior = m.interior()
        U0 = interior.copy()
        L = np.empty_like(U0)
        pool = self.pool

        self.residual(L)
        with self.metrics.timed("WeightedSumData"):
            map_chunks(pool, len(m), lambda lo, hi: weighted_sum_data(
                U0[lo:hi], L[lo:hi], 1.0, dt, out=interior[lo:hi]))
        self.ghosts_current = False

        self.residual(L)
        with self.metrics.timed("WeightedSumData"):
            def combine(lo, hi):
                weighted_sum_data(interior[lo:hi], L[lo:hi], 1.0, dt, out=interior[lo:hi])
                weighted_sum_data(U0[lo:hi], interior[lo:hi], 0.5, 0.5, out=interior[lo:hi])
            map_chunks(pool, len(m), combine)
        self.ghosts_current = False
        self.exchange()
        with self.metrics.timed("FillDerived"):
            map_chunks(pool, len(m), lambda lo, hi: m.fill_derived(slice(lo, hi)))
        self.counters.cell_updates += 2 * m.total_cells()

    # -- LoadBalancingAndAMR ---------------------------------------------
    def load_balancing_and_amr(self, cycle: int) -> bool:
        """Tag, regrid and repartition; returns True when the tree changed."""
        m, cfg = self.mesh, self.config
        if not self.ghosts_current:
            self.exchange()
        with self.metrics.timed("RefinementTag"):
            parts = map_chunks(self.pool, len(m),
                               lambda lo, hi: refinement_indicator(m.U[lo:hi], cfg))
            s = np.concatenate(parts) if parts else np.zeros(0)
            tags = {loc: tag_from_indicator(si, cfg.refine_tol, cfg.derefine_tol)
                    for loc, si in zip(m.locs, s)}
        with self.metrics.timed("UpdateMeshBlockTree"):
            flags = enforce_proper_nesting(m.tree, RefinementFlags(tags), cycle, cfg.derefine_gap)
            tree, lineage = update_tree(m.tree, flags, cycle, cfg.derefine_gap)
        if tree == m.tree:
            with self.metrics.timed("RedistributeAndRefineMeshBlocks"):
                m.tree = tree  # carries the updated derefinement history
                if self.cost_hook is not None:
                    m.repartition(cost_hook=self.cost_hook)
                    self._new_schedule()
            return False
        with self.metrics.timed("RedistributeAndRefineMeshBlocks"):
            new = Mesh(cfg, tree, self.num_partitions)
            if self.cost_hook is not None:
                new.repartition(cost_hook=self.cost_hook)
        with self.metrics.timed("Prolong.Restr.Loop"):
            self._transfer(m, new, lineage, cycle)
        with self.metrics.timed("RedistributeAndRefineMeshBlocks"):
            self.mesh = new
            self._new_schedule()
        return True

    def _transfer(self, old: Mesh, new: Mesh, lineage, cycle: int):
        cfg = self.config
        n, g, dim = cfg.nx1, cfg.ng, cfg.dim
        axes = tuple(3 - d for d in range(dim))
        h = n // 2
        for i, loc in enumerate(new.locs):
            lin = lineage[loc]
            if lin.kind == "same":
                new.U[i] = old.U[old.index[lin.sources[0]]]
                continue
            self.metrics.lineage_log.append((cycle, lin.kind, loc, lin.sources))
            if lin.kind == "refined":
                parent = old.U[old.index[lin.sources[0]]]
                rng = [(0, 1)] * 3
                for d in range(dim):
                    b = loc.coords[d] & 1
                    rng[d] = (g + b * h - 1, g + (b + 1) * h + 1)
                box = parent[(slice(None),) + tuple(slice(a, c) for a, c in reversed(rng))]
                new.U[i][(slice(None),) + cfg.interior] = prolong_box(box, axes)
            else:
                for kid in lin.sources:
                    child = old.U[old.index[kid]][(slice(None),) + cfg.interior]
                    rng = [(0, 1)] * 3
                    for d in range(dim):
                        b = kid.coords[d] & 1
                        rng[d] = (g + b * h, g + (b + 1) * h)
                    sub = (slice(None),) + tuple(slice(a, c) for a, c in reversed(rng))
                    new.U[i][sub] = restrict_box(child, axes)
        new.fill_derived()

    # -- diagnostics -------------------------------------------------------
    def check_finite(self):
        bad = ~np.isfinite(self.mesh.interior()).reshape(len(self.mesh), -1).all(axis=1)
        if bad.any():
            loc = self.mesh.locs[int(np.argmax(bad))]
            raise NumericalFailure(f"non-finite state at cycle {self.cycle} in block {loc}")

    def estimate_timestep(self, dt_max: Optional[float] = None) -> float:
        with self.metrics.timed("EstimateTimestep"):
            return estimate_timestep(self.mesh.U, self.mesh.dx, self.config, dt_max)

    def advance(self, nlim: int, tlim: float = float("inf"), check_every: int = 10,
                track_conservation: bool = False, check_nesting: bool = False):
        """Run cycles until ``nlim`` cycles or time ``tlim``; accumulates wall time."""
        metrics = self.metrics
        q0 = self.config.dim if self.config.num_scalar else 0
        if track_conservation and not metrics.conservation:
            metrics.conservation.append(self.mesh.total(q0))
        t_start = time.perf_counter()
        try:
            while self.cycle < nlim and self.time < tlim:
                dt = self.estimate_timestep(min(self.config.dt_max, tlim - self.time))
                nblocks = len(self.mesh)
                self.step(dt)
                self.cycle += 1
                self.time += dt
                metrics.add_cycle(nblocks)
                self.load_balancing_and_amr(self.cycle)
                self.counters.record_cycle()
                if track_conservation:
                    metrics.conservation.append(self.mesh.total(q0))
                if check_nesting:
                    metrics.nesting_violations.append(len(nesting_violations(self.mesh.tree)))
                if check_every and self.cycle % check_every == 0:
                    self.check_finite()
            self.check_finite()
        finally:
            metrics.wall_seconds += time.perf_counter() - t_start
            metrics.time = self.time
            metrics.checksum = self.mesh.checksum()
        return metrics


def run(deck, track_conservation: bool = False, check_nesting: bool = False,
        cost_hook: Optional[Callable] = None):
    """Run an input deck; returns ``(metrics, mesh)``."""
    sim = Simulation(deck.config, deck.num_partitions, deck.workers, cost_hook)
    try:
        check_every = 1 if deck.debug else 10
        metrics = sim.advance(deck.nlim, deck.tlim, check_every, track_conservation, check_nesting)
    finally:
        sim.close()
    log.info("ran %d cycles, %d zone-cycles, FOM %.4g", metrics.cycles, metrics.zone_cycles,
             metrics.fom)
    return metrics, sim.mesh
