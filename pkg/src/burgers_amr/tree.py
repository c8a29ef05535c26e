"""Tree bookkeeping for block-structured AMR.

Blocks live at the leaves of a binary/quad/oct tree.  The physical domain is
laid out as a rectangular array of base blocks which is padded up to the next
power of two; slots of that padded layout that fall outside the domain are
kept as explicit *empty* leaves.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple


class NonMultipleMesh(ValueError):
    """Mesh size is not an exact multiple of the block size."""


class BadDimension(ValueError):
    pass


class UnknownLeaf(KeyError):
    pass


@dataclass(frozen=True, order=True)
class LogicalLocation:
    level: int
    coords: Tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        n = 1 << self.level
        for c in self.coords:
            if not 0 <= c < n:
                raise ValueError(f"coordinate {c} outside [0, {n}) at level {self.level}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def parent(self) -> "LogicalLocation":
        if self.level == 0:
            raise ValueError("root has no parent")
        return LogicalLocation(self.level - 1, tuple(c >> 1 for c in self.coords))

    def child_bits(self) -> Tuple[int, ...]:
        """Position of this location inside its parent, one bit per dimension."""
        return tuple(c & 1 for c in self.coords)

    def children(self) -> List["LogicalLocation"]:
        """All 2^dim children, x bit fastest (z-order)."""
        out = []
        for idx in range(1 << self.dim):
            bits = tuple((idx >> d) & 1 for d in range(self.dim))
            out.append(self.child(bits))
        return out

    def child(self, bits: Sequence[int]) -> "LogicalLocation":
        return LogicalLocation(self.level + 1, tuple(2 * c + b for c, b in zip(self.coords, bits)))

    def __repr__(self):
        return f"Loc({self.level}, {self.coords})"


class Tag(enum.IntEnum):
    DEREFINE = -1
    NONE = 0
    REFINE = 1


@dataclass
class NeighborInfo:
    neighbor_loc: LogicalLocation
    level_delta: int
    offset: Tuple[int, ...]
    owner_partition: int = 0
    same_partition: bool = True


@dataclass
class RefinementFlags:
    tags: Dict[LogicalLocation, Tag]
    last_derefine_cycle: Dict[LogicalLocation, Optional[int]] = field(default_factory=dict)

    def tag(self, loc: LogicalLocation) -> Tag:
        return self.tags.get(loc, Tag.NONE)


@dataclass(frozen=True)
class Lineage:
    """How a leaf of a freshly updated tree relates to the previous tree."""

    kind: str  # "same" | "refined" | "coarsened"
    sources: Tuple[LogicalLocation, ...]


def offsets(dim: int) -> List[Tuple[int, ...]]:
    """Every non-zero direction in {-1,0,1}^dim, x varying fastest."""
    out = []
    for off in itertools.product((-1, 0, 1), repeat=dim):
        off = tuple(reversed(off))
        if any(off):
            out.append(off)
    return out


class MeshTree:
    def __init__(self, dim: int, base_level: int, base_layout: Tuple[int, ...],
                 leaves: Iterable[LogicalLocation], empty: Iterable[LogicalLocation],
                 max_levels: int, periodic: Optional[Sequence[bool]] = None,
                 last_derefine: Optional[Dict[LogicalLocation, Optional[int]]] = None):
        self.dim = dim
        self.base_level = base_level
        self.base_layout = tuple(base_layout)
        self.leaves = set(leaves)
        self.empty = set(empty)
        self.max_levels = max_levels
        self.periodic = tuple(periodic) if periodic is not None else (True,) * dim
        self.last_derefine = dict(last_derefine or {})

    def __contains__(self, loc):
        return loc in self.leaves

    def __len__(self):
        return len(self.leaves)

    def __eq__(self, other):
        return (isinstance(other, MeshTree) and self.dim == other.dim
                and self.base_level == other.base_level and self.leaves == other.leaves
                and self.empty == other.empty)

    def physical_level(self, loc: LogicalLocation) -> int:
        return loc.level - self.base_level

    def blocks_at(self, level: int) -> Tuple[int, ...]:
        """Number of physical block slots per dimension at a logical level >= base."""
        shift = level - self.base_level
        return tuple(n << shift for n in self.base_layout)

    @property
    def finest_level(self) -> int:
        return self.base_level + self.max_levels - 1

    def shift(self, loc: LogicalLocation, off: Sequence[int],
              periodic: Optional[Sequence[bool]] = None) -> Optional[LogicalLocation]:
        """Same-level slot at ``loc + off``, wrapped where periodic, None outside the domain."""
        periodic = self.periodic if periodic is None else periodic
        n = self.blocks_at(loc.level)
        coords = []
        for c, o, nd, per in zip(loc.coords, off, n, periodic):
            c += o
            if c < 0 or c >= nd:
                if not per:
                    return None
                c %= nd
            coords.append(c)
        return LogicalLocation(loc.level, tuple(coords))

    def copy(self) -> "MeshTree":
        return MeshTree(self.dim, self.base_level, self.base_layout, self.leaves, self.empty,
                        self.max_levels, self.periodic, self.last_derefine)


def build_base_tree(mesh_cells_per_dim, block_cells_per_dim, dim: int, max_levels: int,
                    periodic: Optional[Sequence[bool]] = None) -> MeshTree:
    if dim not in (2, 3):
        raise BadDimension(f"dim must be 2 or 3, got {dim}")
    if max_levels < 1:
        raise BadDimension(f"max_levels must be >= 1, got {max_levels}")
    mesh = _per_dim(mesh_cells_per_dim, dim)
    block = _per_dim(block_cells_per_dim, dim)
    layout = []
    for m, b in zip(mesh, block):
        if b <= 0 or m <= 0 or m % b:
            raise NonMultipleMesh(f"mesh size {m} is not a positive multiple of block size {b}")
        layout.append(m // b)
    base_level = max(0, math.ceil(math.log2(max(layout))))
    while (1 << base_level) < max(layout):  # guard against float log error
        base_level += 1
    leaves, empty = set(), set()
    side = 1 << base_level
    for coords in itertools.product(range(side), repeat=dim):
        loc = LogicalLocation(base_level, tuple(coords))
        if all(c < n for c, n in zip(coords, layout)):
            leaves.add(loc)
        else:
            empty.add(loc)
    return MeshTree(dim, base_level, tuple(layout), leaves, empty, max_levels, periodic)


def _per_dim(value, dim):
    if isinstance(value, int):
        return (value,) * dim
    value = tuple(int(v) for v in value)
    if len(value) != dim:
        raise BadDimension(f"expected {dim} values, got {len(value)}")
    return value


def find_neighbors(tree: MeshTree, loc: LogicalLocation, periodic=None,
                   owners: Optional[Dict[LogicalLocation, int]] = None) -> List[NeighborInfo]:
    if loc not in tree.leaves:
        raise UnknownLeaf(loc)
    my_owner = owners.get(loc, 0) if owners else 0
    out = []
    for off in offsets(tree.dim):
        slot = tree.shift(loc, off, periodic)
        if slot is None:
            continue
        found = []
        if slot in tree.leaves:
            found.append((slot, 0))
        elif tree.physical_level(slot) > 0 and slot.parent() in tree.leaves:
            found.append((slot.parent(), -1))
        else:
            choices = [(1,) if o < 0 else (0,) if o > 0 else (0, 1) for o in off]
            for bits in itertools.product(*choices):
                child = slot.child(bits)
                if child not in tree.leaves:
                    raise ValueError(f"tree violates 2:1 nesting near {loc} (offset {off})")
                found.append((child, 1))
        for nloc, delta in found:
            owner = owners.get(nloc, 0) if owners else 0
            out.append(NeighborInfo(nloc, delta, off, owner, owner == my_owner))
    return out


def adjacent_leaves(tree: MeshTree, loc: LogicalLocation) -> set:
    return {n.neighbor_loc for n in find_neighbors(tree, loc)} - {loc}


def morton_key(loc: LogicalLocation, finest_level: int) -> int:
    shift = finest_level - loc.level
    key = 0
    scaled = [c << shift for c in loc.coords]
    dim = len(scaled)
    for bit in range(finest_level + 1):
        for d in range(dim):
            key |= ((scaled[d] >> bit) & 1) << (bit * dim + d)
    return key


def morton_order(tree: MeshTree) -> List[LogicalLocation]:
    finest = max([tree.finest_level] + [loc.level for loc in tree.leaves])
    return sorted(tree.leaves, key=lambda loc: morton_key(loc, finest))


def assign_partitions(ordered_leaves: Sequence[LogicalLocation], costs: Optional[Sequence[float]],
                      num_partitions: int) -> Dict[LogicalLocation, int]:
    """Cut the Morton-ordered block list into contiguous, cost-balanced runs."""
    if num_partitions < 1:
        raise ValueError("num_partitions must be >= 1")
    n = len(ordered_leaves)
    if costs is None:
        costs = [1.0] * n
    if len(costs) != n:
        raise ValueError("one cost per leaf required")
    target = math.ceil(sum(costs) / num_partitions) if n else 0
    owners = {}
    part, acc = 0, 0.0
    for i, (loc, cost) in enumerate(zip(ordered_leaves, costs)):
        if acc > 0 and acc + cost > target and part < num_partitions - 1:
            part += 1
            acc = 0.0
        owners[loc] = part
        acc += cost
    return owners


def enforce_proper_nesting(tree: MeshTree, flags: RefinementFlags, cycle: Optional[int] = None,
                           derefine_gap: Optional[int] = None) -> RefinementFlags:
    """Adjust tags so that applying them keeps adjacent leaves within one level.

    Refinement ripples outward until no leaf would end up two levels coarser
    than a neighbour.  Derefinement only survives for complete sibling sets
    that keep 2:1 nesting (and, when ``cycle`` is given, satisfy the gap).
    """
    top = tree.max_levels - 1
    tags = {}
    for loc in tree.leaves:
        t = flags.tag(loc)
        plev = tree.physical_level(loc)
        if t == Tag.REFINE and plev >= top:
            t = Tag.NONE
        if t == Tag.DEREFINE and plev == 0:
            t = Tag.NONE
        tags[loc] = t

    neighbors = {loc: adjacent_leaves(tree, loc) for loc in tree.leaves}

    work = [loc for loc, t in tags.items() if t == Tag.REFINE]
    while work:
        loc = work.pop()
        for nb in neighbors[loc]:
            if nb.level < loc.level and tags[nb] != Tag.REFINE:
                tags[nb] = Tag.REFINE
                work.append(nb)

    last = dict(tree.last_derefine)
    last.update(flags.last_derefine_cycle)
    groups: Dict[LogicalLocation, List[LogicalLocation]] = {}
    for loc, t in tags.items():
        if t == Tag.DEREFINE:
            groups.setdefault(loc.parent(), []).append(loc)
    alive = set()
    for parent, kids in groups.items():
        ok = len(kids) == 1 << tree.dim
        if ok and cycle is not None and derefine_gap is not None:
            ok = all(last.get(k) is None or cycle - last[k] >= derefine_gap for k in kids)
        if ok:
            alive.add(parent)
        else:
            for k in kids:
                tags[k] = Tag.NONE

    def target(loc):
        if tags[loc] == Tag.REFINE:
            return loc.level + 1
        if tags[loc] == Tag.DEREFINE and loc.parent() in alive:
            return loc.level - 1
        return loc.level

    changed = True
    while changed:
        changed = False
        for parent in sorted(alive):
            kids = groups[parent]
            kidset = set(kids)
            bad = any(target(nb) > parent.level + 1
                      for k in kids for nb in neighbors[k] if nb not in kidset)
            if bad:
                alive.discard(parent)
                for k in kids:
                    tags[k] = Tag.NONE
                changed = True
    return RefinementFlags(tags, dict(flags.last_derefine_cycle))


def update_tree(tree: MeshTree, flags: RefinementFlags, cycle: int = 0, derefine_gap: int = 0):
    """Apply (already nested) tags; returns the new tree and its lineage map."""
    last = dict(tree.last_derefine)
    last.update(flags.last_derefine_cycle)
    new_leaves = set()
    lineage: Dict[LogicalLocation, Lineage] = {}
    new_last: Dict[LogicalLocation, Optional[int]] = {}

    groups: Dict[LogicalLocation, List[LogicalLocation]] = {}
    for loc in tree.leaves:
        if flags.tag(loc) == Tag.DEREFINE and tree.physical_level(loc) > 0:
            groups.setdefault(loc.parent(), []).append(loc)
    coarsen = {}
    for parent, kids in groups.items():
        if len(kids) != 1 << tree.dim:
            continue
        if any(last.get(k) is not None and cycle - last[k] < derefine_gap for k in kids):
            continue
        coarsen[parent] = tuple(sorted(kids, key=lambda k: morton_key(k, k.level)))
    coarsened_kids = {k for kids in coarsen.values() for k in kids}

    for loc in tree.leaves:
        if loc in coarsened_kids:
            continue
        if flags.tag(loc) == Tag.REFINE and tree.physical_level(loc) < tree.max_levels - 1:
            for child in loc.children():
                new_leaves.add(child)
                lineage[child] = Lineage("refined", (loc,))
                new_last[child] = last.get(loc)
        else:
            new_leaves.add(loc)
            lineage[loc] = Lineage("same", (loc,))
            new_last[loc] = last.get(loc)
    for parent, kids in coarsen.items():
        new_leaves.add(parent)
        lineage[parent] = Lineage("coarsened", kids)
        new_last[parent] = cycle

    new_last = {k: v for k, v in new_last.items() if v is not None}
    new = MeshTree(tree.dim, tree.base_level, tree.base_layout, new_leaves, tree.empty,
                   tree.max_levels, tree.periodic, new_last)
    return new, lineage


def nesting_violations(tree: MeshTree) -> List[Tuple[LogicalLocation, LogicalLocation]]:
    """Exhaustive geometric scan for adjacent leaves more than one level apart.

    Works on integer boxes at the finest level present, independent of the
    neighbour-finding code path.
    """
    if not tree.leaves:
        return []
    finest = max(loc.level for loc in tree.leaves)
    extent = tree.blocks_at(finest)
    boxes = []
    for loc in tree.leaves:
        s = 1 << (finest - loc.level)
        boxes.append((loc, [c * s for c in loc.coords], s))
    bad = []
    shifts = [(-e, 0, e) if per else (0,) for e, per in zip(extent, tree.periodic)]
    for i, (a, lo_a, sa) in enumerate(boxes):
        for b, lo_b, sb in boxes[i + 1:]:
            if abs(a.level - b.level) <= 1:
                continue
            for sh in itertools.product(*shifts):
                if all(la <= lb + s + sb and lb + s <= la + sa
                       for la, lb, s in zip(lo_a, lo_b, sh)):
                    bad.append((a, b))
                    break
    return bad
