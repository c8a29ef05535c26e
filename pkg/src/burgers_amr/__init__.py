"""Block-structured AMR solver for the vector inviscid Burgers equation."""

from .deck import InputDeck, load_deck, parse_deck, serialize_deck
from .driver import NumericalFailure, Simulation, run
from .fields import InitProfile, ProblemConfig, allocate_block
from .harness import SweepResult, sweep
from .mesh import Mesh
from .metrics import MemoryModelParams, RunMetrics, fom, memory_model
from .tree import LogicalLocation, MeshTree, build_base_tree

__version__ = "0.1.0"
