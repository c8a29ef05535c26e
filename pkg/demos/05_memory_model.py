"""Scratch memory of the flux kernel before and after the loop rewrite."""
from burgers_amr import MemoryModelParams, memory_model

p = MemoryModelParams(n_meshblocks=4096, n_threadblocks=1024, B=8, nx1=8, ng=4,
                      dimension=3, d=2, num_scalar=8)
before = memory_model(p)
after = memory_model(p, optimized=True)
print(f"before: {before:,} bytes ({before / 1e9:.3f} GB)")
print(f"after:  {after:,} bytes ({after / 1e9:.3f} GB)")
print(f"saving: {before / after:.0f}x")

for ns in (0, 4, 8, 16):
    p.num_scalar = ns
    print(f"num_scalar={ns:2d}: {memory_model(p) / 1e9:7.3f} GB -> {memory_model(p, True) / 1e9:.3f} GB")
