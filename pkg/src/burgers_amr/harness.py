"""Parameter sweeps and CSV/summary emission.

``fom.csv`` columns::

    config-id, axis-value, zone_cycles, wall_seconds, fom, cells_sent_local,
    cells_sent_remote, cell_updates, comm_to_comp_ratio, errors

``phases.csv`` columns::

    config-id, phase, seconds

Rows are sorted by config-id.  Numbers use ``.`` as the decimal point and no
thousands separators.  Only ``wall_seconds``, ``fom`` and ``phases.csv``
seconds depend on the machine.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .deck import InputDeck, ValidationError
from .driver import NumericalFailure, run
from .metrics import PHASES, RunMetrics

FOM_COLUMNS = ("config-id", "axis-value", "zone_cycles", "wall_seconds", "fom",
               "cells_sent_local", "cells_sent_remote", "cell_updates",
               "comm_to_comp_ratio", "errors")
PHASE_COLUMNS = ("config-id", "phase", "seconds")

# axis name -> deck key it overrides
AXES = {
    "mesh_size": "mesh__nx",
    "block_size": "block__nx1",
    "amr_levels": "amr__max_levels",
    "num_partitions": "run__num_partitions",
    "workers": "run__workers",
}


class UnknownAxis(ValueError):
    pass


@dataclass
class SweepRow:
    config_id: str
    axis_value: int
    metrics: Optional[RunMetrics] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def fom_record(self) -> Dict[str, object]:
        rec = {"config-id": self.config_id, "axis-value": self.axis_value, "errors": self.error}
        m = self.metrics
        if m is None:
            for c in FOM_COLUMNS[2:-1]:
                rec[c] = ""
            return rec
        c = m.counters
        rec.update({
            "zone_cycles": m.zone_cycles,
            "wall_seconds": f"{m.wall_seconds:.6f}",
            "fom": f"{m.fom:.6g}",
            "cells_sent_local": c.cells_sent_local,
            "cells_sent_remote": c.cells_sent_remote,
            "cell_updates": c.cell_updates,
            "comm_to_comp_ratio": repr(c.comm_to_comp_ratio),
        })
        return rec


@dataclass
class SweepResult:
    axis: str
    rows: List[SweepRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def fom_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, FOM_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in sorted(self.rows, key=lambda r: r.config_id):
            w.writerow(r.fom_record())
        return buf.getvalue()

    def phases_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PHASE_COLUMNS)
        for r in sorted(self.rows, key=lambda r: r.config_id):
            if r.metrics is None:
                continue
            for phase in PHASES:
                w.writerow([r.config_id, phase, f"{r.metrics.phase_seconds[phase]:.6f}"])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in (("fom.csv", self.fom_csv()), ("phases.csv", self.phases_csv())):
            with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)

    def summary(self) -> str:
        done = [r for r in self.rows if r.metrics is not None]
        lines = [f"sweep over {self.axis}: {len(done)}/{len(self.rows)} configurations completed"]
        for r in self.rows:
            if r.metrics is None:
                lines.append(f"  {r.config_id} {self.axis}={r.axis_value}: skipped ({r.error})")
                continue
            m = r.metrics
            lines.append(
                f"  {r.config_id} {self.axis}={r.axis_value}: FOM {m.fom:.4g} zone-cycles/s"
                f"  (parallel {m.parallel_seconds:.3f} s, serial {m.serial_seconds:.3f} s)")
        if len(done) >= 2:
            lines.append(f"trends as {self.axis} goes {_direction([r.axis_value for r in done])}:")
            for name, get in (
                    ("fom", lambda m: m.fom),
                    ("cells_sent_total", lambda m: m.counters.cells_sent_total),
                    ("cell_updates", lambda m: m.counters.cell_updates),
                    ("comm_to_comp_ratio", lambda m: m.counters.comm_to_comp_ratio),
                    ("serial_seconds", lambda m: m.serial_seconds)):
                lines.append(f"  {name}: {_direction([get(r.metrics) for r in done])}")
        return "\n".join(lines)


def _direction(values: Sequence[float]) -> str:
    pairs = list(zip(values, values[1:]))
    if all(b == a for a, b in pairs):
        return "constant"
    if all(b > a for a, b in pairs):
        return "increasing"
    if all(b < a for a, b in pairs):
        return "decreasing"
    if all(b >= a for a, b in pairs):
        return "non-decreasing"
    if all(b <= a for a, b in pairs):
        return "non-increasing"
    return "mixed"


def axis_deck(base: InputDeck, axis: str, value: int) -> InputDeck:
    if axis not in AXES:
        raise UnknownAxis(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    key = AXES[axis]
    if axis == "mesh_size":
        value = (int(value),)
    return base.with_values(**{key: value})


def sweep(base: InputDeck, axis: str, values: Sequence[int], out_dir=None,
          progress=None) -> SweepResult:
    """Run one configuration per axis value, sequentially.

    Configurations that fail validation or blow up are recorded in the
    ``errors`` column and the sweep moves on.
    """
    if axis not in AXES:
        raise UnknownAxis(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    result = SweepResult(axis)
    for i, value in enumerate(values):
        row = SweepRow(f"c{i:03d}", value)
        try:
            deck = axis_deck(base, axis, value)
            row.metrics, _ = run(deck)
        except ValidationError as exc:
            row.error = f"invalid: {exc}"
        except (NumericalFailure, MemoryError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        result.rows.append(row)
        if progress is not None:
            progress(row)
    if out_dir is not None:
        result.write(out_dir)
    return result
