"""Extruded-solid-model (ESM) text format.

A neutral, open stand-in for proprietary B-rep files: the device is a
multiset of layer-tagged prisms, which is all a surface-micromachined part
needs::

    esm 1
    stack soi
    name gyro
    prism layer=STRUCT z0=2000 z1=52000 poly=(0,0 100000,0 100000,100000 0,100000)

Coordinates are integer nanometers. ``name`` is optional.
"""

import re

from ._text import logical_lines, split_args
from .errors import GeometryError, ParseError
from .geometry import Polygon, Prism, SolidModel, normalize_polygon

_INT = re.compile(r"-?\d+\Z")


def emit_esm(solid):
    lines = ["esm 1", f"stack {solid.stack_ref}"]
    if solid.name:
        lines.append(f"name {solid.name}")
    for pr in solid.prisms:
        pts = " ".join(f"{x},{y}" for x, y in pr.footprint.vertices)
        lines.append(f"prism layer={pr.layer} z0={pr.z0} z1={pr.z1} poly=({pts})")
    return "\n".join(lines) + "\n"


def _int(tok, lineno):
    if not _INT.match(tok):
        raise ParseError("expected an integer nanometer value", lineno, tok)
    return int(tok)


def parse_esm(text):
    header = False
    stack_ref = None
    name = ""
    prisms = []
    for lineno, tokens in logical_lines(text):
        words, kv = split_args(tokens, lineno)
        head = words[0] if words else tokens[0]
        if not header:
            if words != ["esm", "1"] or kv:
                raise ParseError("bad header, expected 'esm 1'", lineno, tokens[0])
            header = True
        elif head == "stack" and len(words) == 2 and not kv:
            stack_ref = words[1]
        elif head == "name" and len(words) == 2 and not kv:
            name = words[1]
        elif head == "prism" and len(words) == 1:
            for key in ("layer", "z0", "z1", "poly"):
                if key not in kv:
                    raise ParseError(f"prism missing {key!r}", lineno, tokens[0])
            extra = set(kv) - {"layer", "z0", "z1", "poly"}
            if extra:
                raise ParseError("unknown prism field", lineno, sorted(extra)[0])
            z0, z1 = _int(kv["z0"], lineno), _int(kv["z1"], lineno)
            if z1 <= z0:
                raise ParseError("prism with z1 <= z0", lineno, f"z1={kv['z1']}")
            poly = kv["poly"]
            if not (poly.startswith("(") and poly.endswith(")")):
                raise ParseError("malformed polygon", lineno, poly)
            pts = []
            for pair in poly[1:-1].split():
                xy = pair.split(",")
                if len(xy) != 2:
                    raise ParseError("malformed polygon vertex", lineno, pair)
                pts.append((_int(xy[0], lineno), _int(xy[1], lineno)))
            try:
                footprint = normalize_polygon(Polygon(tuple(pts)))
            except GeometryError as exc:
                raise ParseError(f"malformed polygon: {exc}", lineno, poly) from None
            prisms.append(Prism(kv["layer"], z0, z1, footprint))
        else:
            raise ParseError("unexpected line", lineno, tokens[0])
    if not header:
        raise ParseError("bad header, expected 'esm 1'", 1)
    if stack_ref is None:
        raise ParseError("missing 'stack' line")
    return SolidModel(stack_ref, tuple(prisms), name)
