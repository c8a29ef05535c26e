"""Smaller blocks refine more tightly but pay for it in ghost traffic."""
import tempfile
from pathlib import Path

from burgers_amr import load_deck
from burgers_amr.harness import sweep

deck = load_deck(Path(__file__).resolve().parent.parent / "decks" / "gaussian3d.deck")
deck = deck.with_values(run__nlim=2, burgers__width=0.1, amr__refine_tol=0.1,
                        amr__derefine_tol=0.01)

out = Path(tempfile.mkdtemp())
result = sweep(deck, "block_size", [32, 16, 8], out_dir=out)
print(result.summary())
print()
print((out / "fom.csv").read_text())
