"""Integer-grid polygons, mask layouts, process stacks and extruded solids.

All coordinates are signed integer nanometers. Polygons are kept in a
normalized form (counter-clockwise, no collinear or repeated vertices,
lexicographically smallest vertex first) so that shape multisets can be
compared exactly.
"""

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ._text import logical_lines, parse_float, split_args, unquote
from .errors import GeometryError, ParseError
from .materials import IDENT, Material
from .units import format_um, parse_length

Point = tuple[int, int]


@dataclass(frozen=True, order=True)
class Polygon:
    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple((int(x), int(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(verts)}")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def rect(cls, x0, y0, x1, y1):
        """Axis-aligned rectangle from two opposite corners (normalized)."""
        xa, xb = sorted((x0, x1))
        ya, yb = sorted((y0, y1))
        return cls(((xa, ya), (xb, ya), (xb, yb), (xa, yb)))

    def __len__(self):
        return len(self.vertices)

    def area2(self):
        """Twice the signed area (shoelace); positive for counter-clockwise."""
        v = self.vertices
        n = len(v)
        return sum(v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]
                   for i in range(n))

    def bbox(self):
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def is_rectilinear(self):
        v = self.vertices
        n = len(v)
        return all(v[i][0] == v[(i + 1) % n][0] or v[i][1] == v[(i + 1) % n][1]
                   for i in range(n))

    def is_rectangle(self):
        """True for an axis-aligned rectangle (any vertex order or redundancy)."""
        if not self.is_rectilinear():
            return False
        x0, y0, x1, y1 = self.bbox()
        return abs(self.area2()) == 2 * (x1 - x0) * (y1 - y0) and x1 > x0 and y1 > y0

    def translated(self, dx, dy):
        return Polygon(tuple((x + dx, y + dy) for x, y in self.vertices))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p1, p2, p3, p4):
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and \
            ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and \
            min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return (d1 == 0 and on_seg(p3, p4, p1)) or (d2 == 0 and on_seg(p3, p4, p2)) or \
        (d3 == 0 and on_seg(p1, p2, p3)) or (d4 == 0 and on_seg(p1, p2, p4))


def is_simple(vertices):
    """Brute-force check that no two non-adjacent edges touch."""
    n = len(vertices)
    if n == 4 and Polygon(vertices).is_rectilinear():
        return True
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def normalize_polygon(p):
    """Return the canonical form of ``p``.

    Repeated and collinear vertices are dropped, orientation is made
    counter-clockwise and the vertex list is rotated to start at the
    lexicographically smallest vertex. Raises ``GeometryError`` for
    zero-area or self-intersecting input.
    """
    pts = list(p.vertices)
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        dedup = [q for i, q in enumerate(pts) if q != pts[i - 1]]
        if len(dedup) != len(pts):
            pts, changed = dedup, True
            continue
        n = len(pts)
        for i in range(n):
            if _cross(pts[i - 1], pts[i], pts[(i + 1) % n]) == 0:
                del pts[i]
                changed = True
                break
    if len(pts) < 3:
        raise GeometryError(f"degenerate polygon {p.vertices!r}")
    q = Polygon(tuple(pts))
    a2 = q.area2()
    if a2 == 0:
        raise GeometryError(f"degenerate polygon {p.vertices!r}")
    if a2 < 0:
        pts.reverse()
    if not is_simple(pts):
        raise GeometryError(f"self-intersecting polygon {p.vertices!r}")
    k = pts.index(min(pts))
    return Polygon(tuple(pts[k:] + pts[:k]))


def polygon_set_equal(a: Iterable[Polygon], b: Iterable[Polygon]) -> bool:
    """Exact multiset equality after normalization."""
    return sorted(map(normalize_polygon, a)) == sorted(map(normalize_polygon, b))


@dataclass(frozen=True)
class Layout:
    """A single-cell mask layout: layer name -> sorted tuple of polygons."""

    cell_name: str = "1"
    shapes: Mapping[str, tuple[Polygon, ...]] = field(default_factory=dict)

    def __post_init__(self):
        canon = {}
        for layer, polys in self.shapes.items():
            if not layer:
                raise GeometryError("empty layer name")
            polys = tuple(sorted(normalize_polygon(p) for p in polys))
            if polys:
                canon[layer] = polys
        object.__setattr__(self, "shapes", dict(sorted(canon.items())))

    @classmethod
    def from_pairs(cls, pairs, cell_name="1"):
        groups = {}
        for layer, poly in pairs:
            groups.setdefault(layer, []).append(poly)
        return cls(cell_name, groups)

    def pairs(self):
        for layer, polys in self.shapes.items():
            for p in polys:
                yield layer, p

    @property
    def layers(self):
        return tuple(self.shapes)

    def shape_count(self):
        return sum(len(v) for v in self.shapes.values())


@dataclass(frozen=True)
class StackLayer:
    mask: str
    z0: int  # nm
    thickness: int  # nm
    material: str

    @property
    def z1(self):
        return self.z0 + self.thickness


@dataclass(frozen=True)
class ProcessStack:
    """Ordered fabrication layers; optionally carries the material table."""

    name: str
    layers: tuple[StackLayer, ...]
    materials: tuple[Material, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "materials", tuple(self.materials))
        masks = [ly.mask for ly in self.layers]
        if len(set(masks)) != len(masks):
            raise GeometryError(f"stack {self.name}: duplicate mask names")
        for ly in self.layers:
            if ly.thickness <= 0:
                raise GeometryError(f"stack {self.name}: layer {ly.mask} has non-positive thickness")
        z0s = [ly.z0 for ly in self.layers]
        if z0s != sorted(z0s):
            raise GeometryError(f"stack {self.name}: layers not sorted by z0")

    def __contains__(self, mask):
        return any(ly.mask == mask for ly in self.layers)

    def layer(self, mask):
        for ly in self.layers:
            if ly.mask == mask:
                return ly
        raise GeometryError(f"unknown layer {mask!r} in stack {self.name}")

    def material(self, name):
        for m in self.materials:
            if m.name == name:
                return m
        raise GeometryError(f"unknown material {name!r} in stack {self.name}")


@dataclass(frozen=True, order=True)
class Prism:
    layer: str
    z0: int
    z1: int
    footprint: Polygon

    def __post_init__(self):
        if self.z1 <= self.z0:
            raise GeometryError(f"prism on {self.layer}: z1 must exceed z0")


@dataclass(frozen=True)
class SolidModel:
    """Device-level solid: a multiset of layer-tagged extruded prisms."""

    stack_ref: str
    prisms: tuple[Prism, ...] = ()
    name: str = ""

    def __post_init__(self):
        canon = tuple(sorted(
            Prism(p.layer, p.z0, p.z1, normalize_polygon(p.footprint)) for p in self.prisms))
        object.__setattr__(self, "prisms", canon)


def extrude_polygon(p, layer, stack):
    """Extrude a mask polygon through the z-interval of its stack layer."""
    ly = stack.layer(layer)
    return Prism(layer, ly.z0, ly.z1, normalize_polygon(p))


def project_prism(pr, stack=None):
    """Mask shape that reproduces ``pr``.

    With a ``stack`` the prism's z-interval must equal its layer's
    interval; a mismatch means the solid cannot be built by the process.
    """
    if stack is not None:
        if pr.layer not in stack:
            raise GeometryError(f"prism layer {pr.layer!r} not in stack {stack.name}")
        ly = stack.layer(pr.layer)
        if (pr.z0, pr.z1) != (ly.z0, ly.z1):
            raise GeometryError(
                f"prism on {pr.layer} spans z=[{pr.z0}, {pr.z1}] nm, "
                f"stack layer spans [{ly.z0}, {ly.z1}] nm")
    return pr.layer, pr.footprint


# ---------------------------------------------------------------- stack files

def parse_material(kv, words, lineno):
    if len(words) != 2:
        raise ParseError("expected 'material <name> E=.. nu=.. rho=..'", lineno,
                         words[2] if len(words) > 2 else words[0])
    for key in kv:
        if key not in ("E", "nu", "rho"):
            raise ParseError(f"unknown material field {key!r}", lineno, f"{key}={kv[key]}")
    for key in ("E", "nu", "rho"):
        if key not in kv:
            raise ParseError(f"material {words[1]}: missing parameter {key!r}", lineno, key)
    try:
        return Material(words[1], parse_float(kv["E"], lineno, kv["E"]),
                        parse_float(kv["nu"], lineno, kv["nu"]),
                        parse_float(kv["rho"], lineno, kv["rho"]))
    except ValueError as exc:
        raise ParseError(str(exc), lineno, words[1]) from None


def parse_stack(text):
    """Read a process-stack file.

    Format::

        stack "soi"
        material si E=1.6e11 nu=0.22 rho=2330
        layer ANCHOR z0=0u t=2u material=sio2
        layer STRUCT z0=2u t=50u material=si
    """
    name = None
    layers, materials = [], []
    for lineno, tokens in logical_lines(text):
        words, kv = split_args(tokens, lineno)
        if not words:
            raise ParseError("missing keyword", lineno, tokens[0])
        head = words[0]
        if head == "stack":
            if len(words) != 2 or kv:
                raise ParseError("expected 'stack \"<name>\"'", lineno, tokens[-1])
            name = unquote(words[1], lineno)
        elif head == "material":
            materials.append(parse_material(kv, words, lineno))
        elif head == "layer":
            if len(words) != 2 or not IDENT.match(words[1]):
                raise ParseError("expected 'layer <mask> z0=.. t=.. material=..'", lineno, tokens[0])
            for key in ("z0", "t", "material"):
                if key not in kv:
                    raise ParseError(f"layer {words[1]}: missing {key!r}", lineno, key)
            extra = set(kv) - {"z0", "t", "material"}
            if extra:
                key = sorted(extra)[0]
                raise ParseError(f"unknown layer field {key!r}", lineno, f"{key}={kv[key]}")
            try:
                z0 = parse_length(kv["z0"])
                t = parse_length(kv["t"])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, kv["t"]) from None
            layers.append(StackLayer(words[1], z0, t, kv["material"]))
        else:
            raise ParseError(f"unknown keyword {head!r}", lineno, head)
    if name is None:
        raise ParseError("missing 'stack' line")
    try:
        return ProcessStack(name, tuple(layers), tuple(materials))
    except GeometryError as exc:
        raise ParseError(str(exc)) from None


def emit_stack(stack):
    lines = [f'stack "{stack.name}"']
    lines += [m.to_line() for m in stack.materials]
    lines += [f"layer {ly.mask} z0={format_um(ly.z0)} t={format_um(ly.thickness)} "
              f"material={ly.material}" for ly in stack.layers]
    return "\n".join(lines) + "\n"
