"""Container holding every leaf block's arrays stacked along a leading axis."""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional

import numpy as np

from .fields import MeshBlock, ProblemConfig, block_geometry, init_conditions, calculate_derived
from .tree import LogicalLocation, MeshTree, assign_partitions, morton_order


class Mesh:
    """Leaf blocks in Morton order with stacked state, flux and derived arrays.

    ``U[i]`` is the ``(nvar, nz, ny, nx)`` array of block ``locs[i]``.
    """

    def __init__(self, config: ProblemConfig, tree: MeshTree, num_partitions: int = 1):
        self.config = config
        self.tree = tree
        self.num_partitions = num_partitions
        self.locs: List[LogicalLocation] = morton_order(tree)
        self.index: Dict[LogicalLocation, int] = {loc: i for i, loc in enumerate(self.locs)}
        nb = len(self.locs)
        self.U = np.zeros((nb, config.nvar) + config.block_shape)
        self.flux = [np.zeros((nb, config.nvar) + config.face_shape(d)) for d in range(config.dim)]
        self.derived = np.zeros((nb,) + config.interior_shape)
        self.dx = np.ones((nb, 3))
        self.origin = np.zeros((nb, 3))
        for i, loc in enumerate(self.locs):
            dx, origin = block_geometry(config, loc)
            self.dx[i] = dx
            self.origin[i] = origin
        self.costs = np.ones(nb)
        self.owners = np.zeros(nb, dtype=int)
        self.repartition(num_partitions)

    def __len__(self):
        return len(self.locs)

    def repartition(self, num_partitions: Optional[int] = None, cost_hook=None):
        if num_partitions is not None:
            self.num_partitions = num_partitions
        if cost_hook is not None:
            self.costs = np.array([float(cost_hook(loc)) for loc in self.locs])
        owners = assign_partitions(self.locs, list(self.costs), self.num_partitions)
        self.owners = np.array([owners[loc] for loc in self.locs], dtype=int)

    def owner_map(self) -> Dict[LogicalLocation, int]:
        return {loc: int(o) for loc, o in zip(self.locs, self.owners)}

    def block(self, i: int) -> MeshBlock:
        return MeshBlock(self.locs[i], self.U[i], self.derived[i], [f[i] for f in self.flux],
                         tuple(self.dx[i]), tuple(self.origin[i]), int(self.owners[i]),
                         float(self.costs[i]))

    @property
    def blocks(self) -> Iterator[MeshBlock]:
        return (self.block(i) for i in range(len(self)))

    def interior(self, arr: Optional[np.ndarray] = None) -> np.ndarray:
        arr = self.U if arr is None else arr
        return arr[(slice(None), slice(None)) + self.config.interior]

    def cell_volumes(self) -> np.ndarray:
        return np.prod(self.dx[:, : self.config.dim], axis=1)

    def total(self, var: int) -> float:
        """Sum of ``var * cell volume`` over all leaf interiors."""
        per_block = self.interior()[:, var].reshape(len(self), -1).sum(axis=1)
        return math.fsum(per_block * self.cell_volumes())

    def fill_derived(self, blocks=slice(None)):
        U = self.U[blocks]
        self.derived[blocks] = calculate_derived(U, self.config.dim, self.config.interior)

    def initialize(self, profile=None):
        for blk in self.blocks:
            init_conditions(blk, self.config, profile)

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for loc in self.locs:
            h.update(repr(loc).encode())
        h.update(np.ascontiguousarray(self.interior()).tobytes())
        return h.hexdigest()

    def total_cells(self) -> int:
        return len(self) * int(np.prod(self.config.interior_shape))
