"""Build a block tree, refine one block, and look at what its neighbours are."""
from burgers_amr.tree import (LogicalLocation, RefinementFlags, Tag, build_base_tree,
                              enforce_proper_nesting, find_neighbors, morton_order,
                              nesting_violations, update_tree)

# 80 x 64 cells in blocks of 16: a 5 x 4 layout padded to an 8 x 8 slot grid
tree = build_base_tree((80, 64), 16, dim=2, max_levels=3)
print("base level", tree.base_level, "layout", tree.base_layout)
print(len(tree.leaves), "blocks,", len(tree.empty), "empty slots")

# refine one block twice; the second round drags its coarse neighbours along
target = LogicalLocation(3, (2, 1))
for round_ in range(2):
    flags = enforce_proper_nesting(tree, RefinementFlags({target: Tag.REFINE}))
    forced = [loc for loc, t in flags.tags.items() if t == Tag.REFINE and loc != target]
    tree, lineage = update_tree(tree, flags)
    print(f"round {round_}: {len(tree.leaves)} blocks, {len(forced)} extra refinements")
    target = target.children()[3]

print("2:1 violations:", len(nesting_violations(tree)))

fine = LogicalLocation(4, (4, 2))  # a sibling of the block refined in round 1
for nb in find_neighbors(tree, fine):
    print(f"  offset {nb.offset}: {nb.neighbor_loc} level delta {nb.level_delta:+d}")

order = morton_order(tree)
print("first blocks in Morton order:", order[:6])
