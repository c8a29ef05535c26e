"""In-process model of ghost-cell communication between blocks.

A schedule lists one entry per (sender, receiver, offset).  Filling ghosts
runs in two passes: first same-level copies and restricted fine-to-coarse
sends, then coarse-to-fine sends.  A coarse-to-fine payload carries one extra
coarse cell on every side so the receiver can build limited slopes; those
extra cells may sit in the coarse sender's own ghost zone, which the first
pass has already made current.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fields import ProblemConfig, prolong_box, restrict_box
from .parallel import map_chunks
from .tree import LogicalLocation, MeshTree, find_neighbors, morton_order


class MissingBuffer(RuntimeError):
    pass


class ScheduleMismatch(RuntimeError):
    pass


Box = Tuple[slice, slice, slice]


@dataclass
class ScheduleEntry:
    sender: LogicalLocation
    receiver: LogicalLocation
    offset: Tuple[int, ...]  # where the sender sits as seen from the receiver
    level_delta: int  # receiver level minus sender level
    send_idx: int
    recv_idx: int
    send_box: Box
    recv_box: Box
    cells: int
    axes: Tuple[int, ...] = ()  # per-block array axes that get restricted/prolonged
    crop: Optional[Box] = None
    uid: int = -1

    @property
    def kind(self) -> str:
        return {0: "same", -1: "restrict", 1: "prolong"}[self.level_delta]

    @property
    def restricted(self) -> bool:
        return self.level_delta == -1

    @property
    def payload_shape(self) -> Tuple[int, ...]:
        shape = [s.stop - s.start for s in self.send_box]
        if self.restricted:
            for ax in self.axes:
                shape[ax - 1] //= 2
        return tuple(shape)


@dataclass
class FluxEntry:
    coarse_idx: int
    fine_idx: int
    dim: int
    coarse_face: Box
    fine_face: Box
    axes: Tuple[int, ...]


@dataclass
class BoundaryBuffer:
    entry: ScheduleEntry
    payload: np.ndarray
    remote: bool

    @property
    def sender(self):
        return self.entry.sender

    @property
    def receiver(self):
        return self.entry.receiver

    @property
    def offset(self):
        return self.entry.offset

    @property
    def level_delta(self):
        return self.entry.level_delta

    @property
    def restricted(self):
        return self.entry.restricted


@dataclass
class CommCounters:
    cells_sent_local: int = 0
    cells_sent_remote: int = 0
    cell_updates: int = 0
    history: List[Tuple[int, int, int]] = field(default_factory=list)

    @property
    def cells_sent_total(self) -> int:
        return self.cells_sent_local + self.cells_sent_remote

    @property
    def comm_to_comp_ratio(self) -> float:
        return self.cells_sent_total / self.cell_updates if self.cell_updates else 0.0

    def record_cycle(self):
        self.history.append((self.cells_sent_local, self.cells_sent_remote, self.cell_updates))


@dataclass
class Schedule:
    entries: List[ScheduleEntry]
    flux_entries: List[FluxEntry]
    physical: List[Tuple[int, int, int]]  # (block, dim, side) on non-periodic boundaries

    @property
    def first_pass(self) -> List[ScheduleEntry]:
        return [e for e in self.entries if e.level_delta <= 0]

    @property
    def second_pass(self) -> List[ScheduleEntry]:
        return [e for e in self.entries if e.level_delta == 1]

    def payload_cells(self) -> int:
        return sum(e.cells for e in self.entries)

    def for_receiver(self, idx: int) -> List[ScheduleEntry]:
        return [e for e in self.entries if e.recv_idx == idx]


def _ghost_range(o, n, g):
    if o < 0:
        return 0, g
    if o == 0:
        return g, g + n
    return g + n, n + 2 * g


def _same_level(o, n, g):
    recv = _ghost_range(o, n, g)
    send = (n, n + g) if o < 0 else (g, g + n) if o == 0 else (g, 2 * g)
    return recv, send


def _from_finer(o, n, g, bit):
    if o == 0:
        recv = (g + bit * n // 2, g + (bit + 1) * n // 2)
    else:
        recv = _ghost_range(o, n, g)
    send = (n - g, n + g) if o < 0 else (g, g + n) if o == 0 else (g, 3 * g)
    return recv, send


def _from_coarser(o, n, g, rcoord):
    """Ghost range of the fine receiver, sender box (with slop) and crop window."""
    r0, r1 = _ghost_range(o, n, g)
    origin_f = rcoord * n - g  # global fine index of receiver array index 0
    s = (rcoord + o) // 2  # unwrapped coarse block coordinate of the sender
    c0 = (origin_f + r0) // 2 - 1
    c1 = (origin_f + r1 - 1) // 2 + 1
    send = (c0 - s * n + g, c1 - s * n + g + 1)
    first_fine = 2 * (c0 + 1)
    crop = (origin_f + r0 - first_fine, origin_f + r1 - first_fine)
    return (r0, r1), send, crop


def build_buffer_schedule(tree: MeshTree, config: ProblemConfig,
                          owners: Optional[Dict[LogicalLocation, int]] = None,
                          order: Optional[Sequence[LogicalLocation]] = None) -> Schedule:
    order = list(order) if order is not None else morton_order(tree)
    index = {loc: i for i, loc in enumerate(order)}
    n, g, dim = config.nx1, config.ng, config.dim
    entries, fluxes, physical = [], [], []
    for r_idx, recv in enumerate(order):
        for d in range(dim):
            if not tree.periodic[d]:
                nblk = tree.blocks_at(recv.level)[d]
                if recv.coords[d] == 0:
                    physical.append((r_idx, d, -1))
                if recv.coords[d] == nblk - 1:
                    physical.append((r_idx, d, 1))
        for nb in find_neighbors(tree, recv, owners=owners):
            send = nb.neighbor_loc
            o = nb.offset
            rng_recv, rng_send = [(0, 1)] * 3, [(0, 1)] * 3
            crop = None
            axes: Tuple[int, ...] = ()
            if nb.level_delta == 0:
                for d in range(dim):
                    rng_recv[d], rng_send[d] = _same_level(o[d], n, g)
            elif nb.level_delta == 1:
                for d in range(dim):
                    rng_recv[d], rng_send[d] = _from_finer(o[d], n, g, send.coords[d] & 1)
                axes = tuple(3 - d for d in range(dim))
            else:
                crop = [(0, 1)] * 3
                for d in range(dim):
                    rng_recv[d], rng_send[d], crop[d] = _from_coarser(o[d], n, g, recv.coords[d])
                axes = tuple(3 - d for d in range(dim))
                crop = _box(crop)
            entry = ScheduleEntry(
                sender=send, receiver=recv, offset=o, level_delta=-nb.level_delta,
                send_idx=index[send], recv_idx=r_idx, send_box=_box(rng_send),
                recv_box=_box(rng_recv), cells=0, axes=axes, crop=crop)
            entry.cells = int(np.prod(entry.payload_shape))
            entries.append(entry)
            if nb.level_delta == 1 and sum(1 for x in o if x) == 1:
                fluxes.append(_flux_entry(r_idx, index[send], send, o, config))
    entries.sort(key=lambda e: (e.send_idx, tuple(-x for x in reversed(e.offset)), e.recv_idx))
    for uid, e in enumerate(entries):
        e.uid = uid
    return Schedule(entries, fluxes, physical)


def _box(ranges) -> Box:
    """Per-dimension (x, y, z) ranges to array slices in (z, y, x) order."""
    return tuple(slice(a, b) for a, b in reversed(ranges))


def _flux_entry(coarse_idx, fine_idx, fine_loc, o, config) -> FluxEntry:
    n, dim = config.nx1, config.dim
    d = next(k for k in range(dim) if o[k])
    side = o[d]
    cr, fr = [(0, 1)] * 3, [(0, 1)] * 3
    for e in range(dim):
        if e == d:
            cr[e] = (n, n + 1) if side > 0 else (0, 1)
            fr[e] = (0, 1) if side > 0 else (n, n + 1)
        else:
            bit = fine_loc.coords[e] & 1
            cr[e] = (bit * n // 2, (bit + 1) * n // 2)
            fr[e] = (0, n)
    axes = tuple(3 - e for e in range(dim) if e != d)
    return FluxEntry(coarse_idx, fine_idx, d, _box(cr), _box(fr), axes)


def pack_send(U: np.ndarray, entries: Sequence[ScheduleEntry], owners: Sequence[int],
              counters: Optional[CommCounters] = None, pool=None) -> List[BoundaryBuffer]:
    """Copy (or restrict) sender interiors into payloads and count the traffic."""

    def work(lo, hi):
        out, local, remote = [], 0, 0
        for e in entries[lo:hi]:
            if e.send_idx >= len(U) or e.recv_idx >= len(U):
                raise ScheduleMismatch(f"schedule entry {e.uid} points past the block list")
            view = U[e.send_idx][(slice(None),) + e.send_box]
            payload = restrict_box(view, e.axes) if e.restricted else view.copy()
            is_remote = bool(owners[e.send_idx] != owners[e.recv_idx])
            if is_remote:
                remote += e.cells
            else:
                local += e.cells
            out.append(BoundaryBuffer(e, payload, is_remote))
        return out, local, remote

    buffers = []
    for part, local, remote in map_chunks(pool, len(entries), work):
        buffers.extend(part)
        if counters is not None:
            counters.cells_sent_local += local
            counters.cells_sent_remote += remote
    return buffers


def receive_buffers(buffers: Sequence[BoundaryBuffer]) -> Dict[int, BoundaryBuffer]:
    """Deliver buffers; remote payloads go through a staging copy."""
    got = {}
    for buf in buffers:
        if buf.remote:
            buf = BoundaryBuffer(buf.entry, np.array(buf.payload, copy=True), True)
        got[buf.entry.uid] = buf
    return got


def set_bounds(U: np.ndarray, delivered: Dict[int, BoundaryBuffer],
               entries: Sequence[ScheduleEntry], pool=None) -> None:
    for e in entries:
        if e.uid not in delivered:
            raise MissingBuffer(f"no buffer for {e.sender} -> {e.receiver} offset {e.offset}")
    by_recv: Dict[int, List[ScheduleEntry]] = {}
    for e in entries:
        by_recv.setdefault(e.recv_idx, []).append(e)
    receivers = sorted(by_recv)

    def work(lo, hi):
        for r in receivers[lo:hi]:
            for e in by_recv[r]:
                payload = delivered[e.uid].payload
                if payload.shape[1:] != e.payload_shape:
                    raise ScheduleMismatch(f"payload shape {payload.shape} for entry {e.uid}")
                target = U[r][(slice(None),) + e.recv_box]
                if e.level_delta == 1:
                    fine = prolong_box(payload, e.axes)
                    target[...] = fine[(slice(None),) + e.crop]
                else:
                    target[...] = payload

    map_chunks(pool, len(receivers), work)


def apply_physical_bounds(U: np.ndarray, schedule: Schedule, config: ProblemConfig) -> None:
    """Zero-gradient (outflow) ghosts on non-periodic domain faces."""
    n, g = config.nx1, config.ng
    for d in range(config.dim):
        ax = 3 - d
        for idx, dd, side in schedule.physical:
            if dd != d:
                continue
            blk = U[idx]
            src = [slice(None)] * 4
            dst = [slice(None)] * 4
            if side < 0:
                src[ax] = slice(g, g + 1)
                dst[ax] = slice(0, g)
            else:
                src[ax] = slice(g + n - 1, g + n)
                dst[ax] = slice(g + n, n + 2 * g)
            blk[tuple(dst)] = blk[tuple(src)]


def exchange_ghosts(mesh, schedule: Schedule, counters: Optional[CommCounters] = None,
                    timer=None, pool=None) -> None:
    """Full ghost fill: same-level/restricted pass, then prolongation pass."""
    from contextlib import nullcontext

    t = timer if timer is not None else (lambda name: nullcontext())
    U = mesh.U
    for entries, set_phase in ((schedule.first_pass, "SetBounds"),
                               (schedule.second_pass, "Prolong.Restr.Loop")):
        with t("SendBoundBufs"):
            buffers = pack_send(U, entries, mesh.owners, counters, pool)
        with t("ReceiveBoundBufs"):
            delivered = receive_buffers(buffers)
        with t(set_phase):
            set_bounds(U, delivered, entries, pool)
        with t("SetBounds"):
            apply_physical_bounds(U, schedule, mesh.config)


def flux_correction(fluxes: Sequence[np.ndarray], schedule: Schedule) -> None:
    """Overwrite coarse faces at coarse/fine interfaces with averaged fine fluxes."""
    for fe in schedule.flux_entries:
        fine = fluxes[fe.dim][fe.fine_idx][(slice(None),) + fe.fine_face]
        avg = restrict_box(fine, fe.axes) if fe.axes else fine
        fluxes[fe.dim][fe.coarse_idx][(slice(None),) + fe.coarse_face] = avg
