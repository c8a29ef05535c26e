"""Command line: ``run``, ``sweep`` and ``mem-model``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .deck import ParseError, ValidationError, load_deck
from .harness import AXES, SweepResult, SweepRow, sweep
from .metrics import MemoryModelParams, memory_model


def _int_list(text: str):
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _mem_params(text: str) -> MemoryModelParams:
    fields = {f.name for f in dataclasses.fields(MemoryModelParams)}
    kw = {}
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        if key not in fields or not value:
            raise argparse.ArgumentTypeError(
                f"bad parameter {item!r}; expected key=value with key in {sorted(fields)}")
        kw[key] = int(value)
    return MemoryModelParams(**kw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="burgers-amr", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one input deck")
    r.add_argument("--deck", required=True)
    r.add_argument("--workers", type=int)
    r.add_argument("--csv-dir")

    s = sub.add_parser("sweep", help="run a deck once per value of one axis")
    s.add_argument("--deck", required=True)
    s.add_argument("--axis", required=True, choices=sorted(AXES))
    s.add_argument("--values", required=True, type=_int_list)
    s.add_argument("--csv-dir")

    m = sub.add_parser("mem-model", help="flux-kernel scratch memory before/after optimization")
    m.add_argument("--params", default="", type=_mem_params,
                   help="comma list of key=value, e.g. n_meshblocks=4096,nx1=8")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    if args.verb == "mem-model":
        before = memory_model(args.params, optimized=False)
        after = memory_model(args.params, optimized=True)
        print(f"pre-optimization bytes:  {before}")
        print(f"post-optimization bytes: {after}")
        return 0

    try:
        deck = load_deck(args.deck)
        if args.verb == "run" and args.workers is not None:
            deck = deck.with_values(run__workers=args.workers)
    except (OSError, ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    csv_dir = args.csv_dir or deck.get("output", "csv_dir")
    verbose = deck.get("output", "verbosity") > 0

    if args.verb == "run":
        from .driver import NumericalFailure, run

        result = SweepResult("run")
        row = SweepRow("c000", 0)
        try:
            row.metrics, _ = run(deck)
        except NumericalFailure as exc:
            row.error = f"NumericalFailure: {exc}"
        result.rows.append(row)
    else:
        def progress(row):
            if verbose:
                state = "ok" if row.ok else row.error
                print(f"{row.config_id} {args.axis}={row.axis_value}: {state}", file=sys.stderr)

        result = sweep(deck, args.axis, args.values, progress=progress)

    if csv_dir:
        result.write(csv_dir)
    print(result.summary())
    if verbose and args.verb == "run" and row.metrics is not None:
        m = row.metrics
        print(f"FOM {m.fom:.6g} zone-cycles/s over {m.cycles} cycles")
        for phase, sec in m.phase_seconds.items():
            print(f"  {phase:34s} {sec:9.4f} s")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
