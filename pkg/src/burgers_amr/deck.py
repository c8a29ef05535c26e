"""Input decks: ``[section]`` headers, ``key = value`` lines and ``#`` comments.

Every key has a documented default (see ``SCHEMA``); unknown sections or
keys are rejected with the offending line number.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

from .fields import InitProfile, ProblemConfig
from .tree import BadDimension, NonMultipleMesh, build_base_tree


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(ValueError):
    def __init__(self, key: str, reason: str, line: Optional[int] = None):
        where = f" (line {line})" if line else ""
        super().__init__(f"{key}{where}: {reason}")
        self.key = key
        self.reason = reason
        self.line = line


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    # float() is locale-independent; reject forms like '1,5'
    return float(text.strip())


def _list(kind: Callable) -> Callable:
    def parse(text: str):
        items = [p for p in text.replace(" ", "").split(",") if p]
        if not items:
            raise ValueError("empty list")
        return tuple(kind(p) for p in items)

    parse.__name__ = f"list_{kind.__name__}"
    return parse


def _optional(kind: Callable) -> Callable:
    def parse(text: str):
        if text.strip().lower() in ("none", ""):
            return None
        return kind(text)

    parse.__name__ = f"optional_{kind.__name__}"
    return parse


def _str(text: str) -> str:
    return text.strip()


# section -> key -> (parser, default)
SCHEMA: Dict[str, Dict[str, Tuple[Callable, Any]]] = {
    "mesh": {
        "dim": (int, 3),
        "nx": (_list(int), (64,)),
        "extent": (_list(_float), (1.0,)),
        "lower": (_list(_float), (0.0,)),
        "periodic": (_list(_bool), (True,)),
    },
    "block": {
        "nx1": (int, 16),
        "ng": (int, 4),
    },
    "amr": {
        "max_levels": (int, 3),
        "refine_tol": (_float, 0.05),
        "derefine_tol": (_float, 0.01),
        "derefine_gap": (int, 10),
    },
    "burgers": {
        "num_scalar": (int, 8),
        "profile": (_str, "gaussian"),
        "amplitude": (_float, 1.0),
        "scalar_amplitude": (_optional(_float), None),
        "width": (_float, 0.1),
        "center": (_optional(_list(_float)), None),
        "velocity_offset": (_list(_float), (0.0,)),
        "scalar_offset": (_float, 0.0),
        "cfl": (_float, 0.4),
        "dt_max": (_float, 1.0),
        "flux_correction": (_bool, True),
        "tag_vars": (_optional(_list(int)), None),
    },
    "run": {
        "nlim": (int, 10),
        "tlim": (_float, math.inf),
        "workers": (int, 1),
        "num_partitions": (int, 1),
        "deterministic": (_bool, True),
        "debug": (_bool, False),
    },
    "output": {
        "csv_dir": (_optional(_str), None),
        "verbosity": (int, 1),
    },
}


@dataclass
class InputDeck:
    values: Dict[str, Dict[str, Any]]
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "InputDeck":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    def get(self, section: str, key: str):
        return self.values[section][key]

    def with_values(self, **overrides) -> "InputDeck":
        """Copy with ``section__key=value`` overrides, re-validated."""
        new = InputDeck(copy.deepcopy(self.values), dict(self.lines))
        for name, value in overrides.items():
            section, key = name.split("__", 1)
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ValidationError(name, "unknown key")
            new.values[section][key] = value
        new.validate()
        return new

    def __eq__(self, other):
        return isinstance(other, InputDeck) and self.values == other.values

    # -- derived views ----------------------------------------------------
    @property
    def config(self) -> ProblemConfig:
        m, b, a, p = (self.values[s] for s in ("mesh", "block", "amr", "burgers"))
        profile = InitProfile(
            name=p["profile"], amplitude=p["amplitude"], scalar_amplitude=p["scalar_amplitude"],
            width=p["width"], center=p["center"], velocity_offset=p["velocity_offset"],
            scalar_offset=p["scalar_offset"])
        return ProblemConfig(
            dim=m["dim"], mesh_cells=m["nx"], nx1=b["nx1"], ng=b["ng"],
            num_scalar=p["num_scalar"], max_levels=a["max_levels"], cfl=p["cfl"],
            dt_max=p["dt_max"], refine_tol=a["refine_tol"], derefine_tol=a["derefine_tol"],
            derefine_gap=a["derefine_gap"], extent=m["extent"], lower=m["lower"],
            periodic=m["periodic"], flux_correction=p["flux_correction"],
            tag_vars=p["tag_vars"], profile=profile)

    @property
    def nlim(self) -> int:
        return self.values["run"]["nlim"]

    @property
    def tlim(self) -> float:
        return self.values["run"]["tlim"]

    @property
    def workers(self) -> int:
        return self.values["run"]["workers"]

    @property
    def num_partitions(self) -> int:
        return self.values["run"]["num_partitions"]

    @property
    def debug(self) -> bool:
        return self.values["run"]["debug"]

    def validate(self):
        def fail(section, key, reason):
            raise ValidationError(f"{section}.{key}", reason, self.lines.get((section, key)))

        m = self.values["mesh"]
        if m["dim"] not in (2, 3):
            fail("mesh", "dim", "must be 2 or 3")
        for key in ("nx", "extent", "lower", "periodic"):
            if len(m[key]) not in (1, m["dim"]):
                fail("mesh", key, f"needs 1 or {m['dim']} values")
        if self.values["burgers"]["profile"] not in ("gaussian", "sine", "constant"):
            fail("burgers", "profile", "unknown profile")
        r = self.values["run"]
        for key in ("workers", "num_partitions"):
            if r[key] < 1:
                fail("run", key, "must be >= 1")
        if r["nlim"] < 0:
            fail("run", "nlim", "must be >= 0")
        try:
            build_base_tree(m["nx"] if len(m["nx"]) > 1 else m["nx"][0],
                            self.values["block"]["nx1"], m["dim"],
                            self.values["amr"]["max_levels"])
        except NonMultipleMesh as exc:
            fail("block", "nx1", str(exc))
        except BadDimension as exc:
            fail("amr", "max_levels", str(exc))
        try:
            self.config
        except ValueError as exc:
            fail("config", "", str(exc))


def parse_deck(text: str) -> InputDeck:
    deck = InputDeck.defaults()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, f"malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ParseError(lineno, f"unknown section [{section}]")
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ParseError(lineno, "key outside of any section")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ParseError(lineno, f"unknown key {key!r} in [{section}]")
        parser = SCHEMA[section][key][0]
        try:
            deck.values[section][key] = parser(value)
        except ValueError as exc:
            raise ParseError(lineno, f"bad value for {key}: {exc}") from None
        deck.lines[(section, key)] = lineno
    deck.validate()
    return deck


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_deck(deck: InputDeck) -> str:
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key in keys:
            out.append(f"{key} = {_format(deck.values[section][key])}")
        out.append("")
    return "\n".join(out)


def load_deck(path) -> InputDeck:
    with open(path, encoding="utf-8") as fh:
        return parse_deck(fh.read())
