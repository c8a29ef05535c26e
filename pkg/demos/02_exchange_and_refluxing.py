"""Ghost exchange across a coarse/fine boundary, then flux correction."""
import numpy as np

from burgers_amr.exchange import (CommCounters, build_buffer_schedule, exchange_ghosts,
                                  flux_correction)
from burgers_amr.fields import ProblemConfig
from burgers_amr.mesh import Mesh
from burgers_amr.solver import compute_fluxes
from burgers_amr.tree import LogicalLocation, RefinementFlags, Tag, enforce_proper_nesting, update_tree

cfg = ProblemConfig(dim=2, mesh_cells=64, nx1=16, num_scalar=1, max_levels=2, periodic=False)
tree = cfg.make_tree()
flags = enforce_proper_nesting(tree, RefinementFlags({LogicalLocation(2, (1, 1)): Tag.REFINE}))
tree, _ = update_tree(tree, flags)

mesh = Mesh(cfg, tree, num_partitions=2)
schedule = build_buffer_schedule(tree, cfg, mesh.owner_map(), mesh.locs)
kinds = {}
for e in schedule.entries:
    kinds[e.kind] = kinds.get(e.kind, 0) + 1
print("schedule entries by kind:", kinds)

# a linear field: prolongation and restriction both reproduce it exactly
mesh.U[...] = np.nan
for i, blk in enumerate(mesh.blocks):
    x = blk.cell_centers(cfg, 0)
    y = blk.cell_centers(cfg, 1)
    mesh.U[i][(slice(None),) + cfg.interior] = 1.0 + 2.0 * x[None, None, :] - y[None, :, None]

counters = CommCounters()
exchange_ghosts(mesh, schedule, counters)
fine = mesh.index[LogicalLocation(3, (2, 2))]
blk = mesh.block(fine)
xg = blk.cell_centers(cfg, 0, with_ghosts=True)
yg = blk.cell_centers(cfg, 1, with_ghosts=True)
exact = 1.0 + 2.0 * xg[None, :] - yg[:, None]
print("west ghost error on a fine block:", np.abs(mesh.U[fine, 0, 0, 4:20, :4] - exact[4:20, :4]).max())
print("cells sent local/remote:", counters.cells_sent_local, counters.cells_sent_remote)

# flux correction: the coarse face ends up with the mean of the fine faces
compute_fluxes(mesh.U, mesh.flux, cfg)
coarse = mesh.index[LogicalLocation(2, (0, 1))]
before = mesh.flux[0][coarse, 0, 0, :, 16].copy()
flux_correction(mesh.flux, schedule)
after = mesh.flux[0][coarse, 0, 0, :, 16]
print("largest coarse-face change:", np.abs(after - before).max())
