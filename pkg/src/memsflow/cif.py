"""Caltech Intermediate Form (CIF 2.0 subset) reader and canonical writer.

Supported commands: ``DS``, ``DF``, ``L``, ``B``, ``P``, ``C``, ``E`` and
comments. ``9`` user extensions are skipped with a warning. Coordinates are
centimicrons (10 nm); the writer refuses shapes off that grid.
"""

import re
import warnings
from fractions import Fraction

from .errors import GeometryError, ParseError
from .geometry import Layout, Polygon, normalize_polygon

CIF_UNIT_NM = 10

_INT = re.compile(r"-?\d+\Z")


def _to_cu(v):
    if v % CIF_UNIT_NM:
        raise GeometryError(f"coordinate {v} nm is not a multiple of {CIF_UNIT_NM} nm")
    return v // CIF_UNIT_NM


def _shape_command(poly):
    x0, y0, x1, y1 = poly.bbox()
    if len(poly) == 4 and poly.is_rectangle() and (x0 + x1) % 20 == 0 and (y0 + y1) % 20 == 0:
        for v in (x0, y0, x1, y1):
            _to_cu(v)
        return (f"B {(x1 - x0) // CIF_UNIT_NM} {(y1 - y0) // CIF_UNIT_NM} "
                f"{(x0 + x1) // 20} {(y0 + y1) // 20};")
    pts = " ".join(f"{_to_cu(x)} {_to_cu(y)}" for x, y in poly.vertices)
    return f"P {pts};"


def emit_cif(layout):
    """Canonical CIF text: layers sorted by name, shapes in normalized order."""
    if not re.fullmatch(r"\d+", layout.cell_name) or int(layout.cell_name) < 1:
        raise GeometryError(f"CIF symbol number must be a positive integer, got {layout.cell_name!r}")
    sym = int(layout.cell_name)
    lines = [f"DS {sym} 1 1;"]
    for layer, polys in layout.shapes.items():
        if not re.fullmatch(r"[A-Za-z0-9_]+", layer):
            raise GeometryError(f"layer name {layer!r} cannot be written to CIF")
        lines.append(f"L {layer};")
        lines.extend(_shape_command(p) for p in polys)
    lines += ["DF;", f"C {sym};", "E"]
    return "\n".join(lines) + "\n"


def _commands(text):
    """Split CIF text into ``(lineno, command)`` pairs, dropping comments."""
    out = []
    depth = 0
    buf = []
    line = 1
    start = None
    for ch in text:
        if depth:
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
        elif ch == "(":
            depth = 1
        elif ch == ";":
            out.append((start or line, "".join(buf).strip()))
            buf, start = [], None
        else:
            if start is None and not ch.isspace():
                start = line
            buf.append(ch)
        if ch == "\n":
            line += 1
    tail = "".join(buf).strip()
    if depth:
        raise ParseError("unterminated comment", line)
    if tail:
        out.append((start, tail))
    return out


def _ints(fields, lineno, scale):
    vals = []
    for f in fields:
        if not _INT.match(f):
            raise ParseError("non-integer coordinate", lineno, f)
        v = Fraction(int(f)) * CIF_UNIT_NM * scale
        if v.denominator != 1:
            raise ParseError("coordinate does not land on the 1 nm grid", lineno, f)
        vals.append(int(v))
    return vals


def parse_cif(text):
    """Parse a CIF file holding one symbol definition into a ``Layout``."""
    symbol = None
    scale = Fraction(1)
    inside = False
    layer = None
    pairs = []
    ended = False
    for lineno, cmd in _commands(text):
        if not cmd:
            continue
        if ended:
            raise ParseError("content after E", lineno, cmd)
        if cmd == "E":
            ended = True
            continue
        fields = cmd.replace(",", " ").split()
        head = fields[0]
        if head.startswith("9"):
            warnings.warn(f"CIF line {lineno}: ignoring user extension {cmd!r}")
            continue
        if head == "DS":
            if inside:
                raise ParseError("nested symbol definition", lineno, cmd)
            if symbol is not None:
                raise ParseError("only one symbol definition is supported", lineno, cmd)
            nums = fields[1:]
            if len(nums) not in (1, 3) or not all(_INT.match(n) for n in nums):
                raise ParseError("malformed DS", lineno, cmd)
            symbol = int(nums[0])
            if len(nums) == 3:
                if int(nums[2]) == 0:
                    raise ParseError("zero DS scale denominator", lineno, cmd)
                scale = Fraction(int(nums[1]), int(nums[2]))
            inside = True
            layer = None
        elif head == "DF":
            if not inside:
                raise ParseError("DF without DS", lineno, cmd)
            inside = False
        elif head[0] == "L" and head not in ("LAYER",):
            name = cmd[1:].strip()
            if not name or not re.fullmatch(r"[A-Za-z0-9_]+", name):
                raise ParseError("malformed layer command", lineno, cmd)
            layer = name
        elif head in ("B", "P"):
            if not inside:
                raise ParseError("geometry outside a symbol definition", lineno, cmd)
            if layer is None:
                raise ParseError("geometry before any layer command", lineno, cmd)
            if head == "B":
                if len(fields) not in (5, 7):
                    raise ParseError("malformed box", lineno, cmd)
                length, width, cx, cy = _ints(fields[1:5], lineno, scale)
                if len(fields) == 7:
                    d = tuple(int(f) for f in fields[5:7] if _INT.match(f))
                    if len(d) != 2 or (d[0] != 0 and d[1] != 0) or d == (0, 0):
                        raise ParseError("only axis-aligned box directions are supported", lineno, cmd)
                    if d[0] == 0:
                        length, width = width, length
                if length <= 0 or width <= 0:
                    raise ParseError("box with non-positive size", lineno, cmd)
                poly = Polygon.rect(cx - length // 2, cy - width // 2,
                                    cx + length - length // 2, cy + width - width // 2)
            else:
                nums = _ints(fields[1:], lineno, scale)
                if len(nums) < 6 or len(nums) % 2:
                    raise ParseError("polygon needs an even number (>= 6) of coordinates", lineno, cmd)
                poly = Polygon(tuple(zip(nums[0::2], nums[1::2])))
            try:
                normalize_polygon(poly)
            except GeometryError as exc:
                raise ParseError(str(exc), lineno, cmd) from None
            pairs.append((layer, poly))
        elif head == "C":
            if len(fields) != 2:
                raise ParseError("call transformations are not supported", lineno, cmd)
            if not _INT.match(fields[1]) or int(fields[1]) != symbol:
                raise ParseError("call of an undefined symbol", lineno, cmd)
        else:
            raise ParseError("unsupported CIF command", lineno, cmd)
    if inside:
        raise ParseError("unterminated symbol definition (missing DF)")
    return Layout.from_pairs(pairs, cell_name=str(symbol if symbol is not None else 1))
