"""Phase timers, zone-cycle accounting and the auxiliary-memory model."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .exchange import CommCounters

PHASES = (
    "CalculateFluxes",
    "FluxCorrection",
    "FluxDivergence",
    "WeightedSumData",
    "SendBoundBufs",
    "ReceiveBoundBufs",
    "SetBounds",
    "RedistributeAndRefineMeshBlocks",
    "UpdateMeshBlockTree",
    "RefinementTag",
    "EstimateTimestep",
    "FillDerived",
    "Prolong.Restr.Loop",
)

# Phases whose work is a per-block loop (the rest is driver-side bookkeeping).
BLOCK_PARALLEL_PHASES = (
    "CalculateFluxes",
    "FluxDivergence",
    "WeightedSumData",
    "FillDerived",
    "RefinementTag",
    "EstimateTimestep",
)


@dataclass
class RunMetrics:
    phase_seconds: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(PHASES, 0.0))
    zone_cycles: int = 0
    wall_seconds: float = 0.0
    counters: CommCounters = field(default_factory=CommCounters)
    cycles: int = 0
    blocks_processed_per_cycle: List[int] = field(default_factory=list)
    cells_per_block: int = 0
    time: float = 0.0
    conservation: List[float] = field(default_factory=list)
    nesting_violations: List[int] = field(default_factory=list)
    lineage_log: List[tuple] = field(default_factory=list)
    checksum: str = ""

    @contextmanager
    def timed(self, phase: str):
        if phase not in self.phase_seconds:
            raise KeyError(f"unknown phase {phase!r}")
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phase_seconds[phase] += time.perf_counter() - t0

    def add_cycle(self, nblocks: int):
        self.cycles += 1
        self.blocks_processed_per_cycle.append(nblocks)
        self.zone_cycles += nblocks * self.cells_per_block

    @property
    def fom(self) -> float:
        return fom(self)

    @property
    def parallel_seconds(self) -> float:
        return sum(self.phase_seconds[p] for p in BLOCK_PARALLEL_PHASES)

    @property
    def serial_seconds(self) -> float:
        return max(0.0, self.wall_seconds - self.parallel_seconds)


def zone_cycles(blocks_per_cycle, block_cells) -> int:
    """Zone-cycles for a trace of per-cycle block counts and (bx, by[, bz]) block size."""
    cells = 1
    for b in block_cells:
        cells *= int(b)
    return sum(int(nb) for nb in blocks_per_cycle) * cells


def fom(metrics: RunMetrics) -> float:
    """Zone-cycles per wall-clock second (0 when nothing ran)."""
    if metrics.zone_cycles == 0:
        return 0.0
    if metrics.wall_seconds <= 0:
        raise ValueError("positive wall time required when zone_cycles > 0")
    return metrics.zone_cycles / metrics.wall_seconds


@dataclass
class MemoryModelParams:
    n_meshblocks: int = 1
    n_threadblocks: int = 1024
    B: int = 8
    nx1: int = 8
    ng: int = 4
    dimension: int = 3
    d: int = 2
    num_scalar: int = 8


def memory_model(params: MemoryModelParams, optimized: bool = False) -> int:
    """Bytes of flux-kernel scratch storage before/after the reduced-dimension rewrite.

    before: n_meshblocks   * B * 6 * (nx1 + 2 ng)^dimension * (3 + num_scalar)
    after:  n_threadblocks * B * 6 * (nx1 + 2 ng)^d         * (3 + num_scalar)
    """
    p = params
    side = p.nx1 + 2 * p.ng
    nvar = 3 + p.num_scalar
    if optimized:
        if p.d >= p.dimension:
            raise ValueError("reduced loop dimension must be below the spatial dimension")
        return p.n_threadblocks * p.B * 6 * side ** p.d * nvar
    return p.n_meshblocks * p.B * 6 * side ** p.dimension * nvar
