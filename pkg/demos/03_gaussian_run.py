"""Run the 3D Gaussian deck for a few cycles and report conservation and timings."""
from pathlib import Path

from burgers_amr import load_deck, run

deck = load_deck(Path(__file__).resolve().parent.parent / "decks" / "gaussian3d.deck")
deck = deck.with_values(run__nlim=5)

metrics, mesh = run(deck, track_conservation=True, check_nesting=True)
c = metrics.conservation
print(f"{metrics.cycles} cycles, blocks per cycle {metrics.blocks_processed_per_cycle}")
print(f"relative drift of the first scalar: {abs(c[-1] - c[0]) / abs(c[0]):.2e}")
print(f"2:1 violations per cycle: {metrics.nesting_violations}")
print(f"FOM {metrics.fom:.4g} zone-cycles/s")
print(f"comm/comp ratio {metrics.counters.comm_to_comp_ratio:.3f}")

for phase, sec in sorted(metrics.phase_seconds.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  {phase:34s} {sec:7.3f} s")
print(f"parallel-capable {metrics.parallel_seconds:.2f} s, serial {metrics.serial_seconds:.2f} s")
