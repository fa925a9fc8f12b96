"""System-level netlist: parameterized component library and its text format.

A netlist line looks like::

    beam b1 node=(m1,a1) l=150u w=4u pos=(12u,200u) layer=STRUCT angle=90

Lengths are held as integer nanometers. ``u`` and ``n`` suffixes select
micrometers and nanometers; a bare number is meters.
"""

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

from scipy.constants import epsilon_0

from ._text import logical_lines, parse_float, parse_tuple, split_args, unquote
from .errors import GeometryError, ParseError
from .geometry import Polygon, normalize_polygon, parse_material
from .materials import IDENT, Material
from .units import format_um, nm_to_m, parse_length


class Kind(str, Enum):
    BEAM = "beam"
    RIGID_MASS = "mass"
    LINEAR_COMB = "lcomb"
    BIAS_COMB = "bcomb"
    ANCHOR = "anchor"

    @property
    def is_comb(self):
        return self in (Kind.LINEAR_COMB, Kind.BIAS_COMB)


ORIENTS = ("+x", "-x", "+y", "-y")

# Parameter schema per kind, in canonical (serialization) order.
SCHEMA = {
    Kind.BEAM: ("l", "w"),
    Kind.RIGID_MASS: ("w", "h"),
    Kind.LINEAR_COMB: ("fingers", "fl", "fw", "gap", "overlap", "orient"),
    Kind.BIAS_COMB: ("fingers", "fl", "fw", "gap", "overlap", "orient"),
    Kind.ANCHOR: ("w", "h", "anchor_layer"),
}
LENGTH_PARAMS = {"l", "w", "h", "fl", "fw", "gap", "overlap"}


class NetlistError(ValueError):
    pass


@dataclass(frozen=True)
class ComponentInstance:
    kind: Kind
    name: str
    nodes: tuple[str, ...]
    params: dict
    position: tuple[int, int] = (0, 0)  # nm
    layer: str = "STRUCT"
    angle: float = 0.0  # degrees, counter-clockwise

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "position", (int(self.position[0]), int(self.position[1])))
        object.__setattr__(self, "angle", float(self.angle))
        if not IDENT.match(self.name):
            raise NetlistError(f"bad instance name {self.name!r}")
        for key in SCHEMA[kind]:
            if key not in self.params:
                raise NetlistError(f"{self.name}: missing parameter {key!r}")
        extra = set(self.params) - set(SCHEMA[kind])
        if extra:
            raise NetlistError(f"{self.name}: unknown parameter {sorted(extra)[0]!r}")
        for key in SCHEMA[kind]:
            if key in LENGTH_PARAMS and not self.params[key] > 0:
                raise NetlistError(f"{self.name}: {key} must be positive")
        if kind.is_comb:
            if not (isinstance(self.params["fingers"], int) and self.params["fingers"] >= 1):
                raise NetlistError(f"{self.name}: finger count must be a positive integer")
            if self.params["orient"] not in ORIENTS:
                raise NetlistError(f"{self.name}: orient must be one of {ORIENTS}")
        if kind is Kind.BEAM and len(self.nodes) != 2:
            raise NetlistError(f"{self.name}: a beam has exactly 2 nodes")
        if len(self.nodes) < 1:
            raise NetlistError(f"{self.name}: at least one node required")
        for n in self.nodes:
            if not IDENT.match(n):
                raise NetlistError(f"{self.name}: bad node name {n!r}")
        if not IDENT.match(self.layer):
            raise NetlistError(f"{self.name}: bad layer name {self.layer!r}")

    def length_m(self, key):
        return nm_to_m(self.params[key])


@dataclass(frozen=True)
class Netlist:
    instances: tuple[ComponentInstance, ...] = ()
    materials: tuple[Material, ...] = ()
    process_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "materials", tuple(self.materials))
        names = [c.name for c in self.instances]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise NetlistError(f"duplicate instance name {dup!r}")
        mnames = [m.name for m in self.materials]
        if len(set(mnames)) != len(mnames):
            raise NetlistError("duplicate material name")

    @property
    def nodes(self):
        return sorted({n for c in self.instances for n in c.nodes})

    def instance(self, name):
        for c in self.instances:
            if c.name == name:
                return c
        raise KeyError(name)

    def material(self, name):
        for m in self.materials:
            if m.name == name:
                return m
        raise KeyError(name)

    def count(self, kind):
        return sum(1 for c in self.instances if c.kind is Kind(kind))


# ------------------------------------------------------------------ text I/O

def parse_netlist(text):
    """Parse netlist text. Errors carry the 1-based line and offending token."""
    process = ""
    materials, instances, seen = [], [], set()
    for lineno, tokens in logical_lines(text):
        words, kv = split_args(tokens, lineno)
        if not words:
            raise ParseError("line must start with a keyword", lineno, tokens[0])
        head = words[0]
        if head == "process":
            if len(words) != 2 or kv:
                raise ParseError("expected 'process \"<name>\"'", lineno, tokens[-1])
            process = unquote(words[1], lineno)
            continue
        if head == "material":
            materials.append(parse_material(kv, words, lineno))
            continue
        try:
            kind = Kind(head)
        except ValueError:
            raise ParseError("unknown component kind", lineno, head) from None
        if len(words) != 2:
            raise ParseError("expected '<kind> <name> key=value ...'", lineno,
                             words[2] if len(words) > 2 else head)
        name = words[1]
        if not IDENT.match(name):
            raise ParseError("bad instance name", lineno, name)
        if name in seen:
            raise ParseError(f"duplicate instance name {name!r}", lineno, name)
        seen.add(name)
        params = {}
        for key in SCHEMA[kind]:
            if key not in kv:
                err = ParseError(f"{name}: missing parameter {key!r}", lineno, key)
                err.param = key
                raise err
            raw = kv[key]
            tok = f"{key}={raw}"
            if key in LENGTH_PARAMS:
                try:
                    params[key] = parse_length(raw)
                except ValueError as exc:
                    raise ParseError(str(exc), lineno, tok) from None
            elif key == "fingers":
                if not raw.isdigit():
                    raise ParseError("finger count must be a positive integer", lineno, tok)
                params[key] = int(raw)
            else:
                params[key] = raw
        for key in ("node", "layer"):
            if key not in kv:
                err = ParseError(f"{name}: missing parameter {key!r}", lineno, key)
                err.param = key
                raise err
        nodes = parse_tuple(kv["node"], lineno, f"node={kv['node']}")
        pos = (0, 0)
        if "pos" in kv:
            items = parse_tuple(kv["pos"], lineno, f"pos={kv['pos']}")
            if len(items) != 2:
                raise ParseError("pos needs two coordinates", lineno, f"pos={kv['pos']}")
            try:
                pos = (parse_length(items[0]), parse_length(items[1]))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, f"pos={kv['pos']}") from None
        angle = parse_float(kv["angle"], lineno, f"angle={kv['angle']}") if "angle" in kv else 0.0
        known = set(SCHEMA[kind]) | {"node", "pos", "layer", "angle"}
        for key in kv:
            if key not in known:
                raise ParseError(f"unknown parameter {key!r} for {kind.value}", lineno, f"{key}={kv[key]}")
        try:
            instances.append(ComponentInstance(kind, name, tuple(nodes), params, pos, kv["layer"], angle))
        except NetlistError as exc:
            raise ParseError(str(exc), lineno, name) from None
    try:
        return Netlist(tuple(instances), tuple(materials), process)
    except NetlistError as exc:
        raise ParseError(str(exc)) from None


def _fmt_param(key, value):
    if key in LENGTH_PARAMS:
        return format_um(value)
    return str(value)


def _fmt_angle(a):
    return str(int(a)) if float(a).is_integer() else repr(float(a))


def serialize_netlist(n):
    """Canonical text: header, materials, then one instance per line."""
    lines = [f'process "{n.process_ref}"']
    lines += [m.to_line() for m in n.materials]
    for c in n.instances:
        parts = [c.kind.value, c.name, f"node=({','.join(c.nodes)})"]
        parts += [f"{k}={_fmt_param(k, c.params[k])}" for k in SCHEMA[c.kind]]
        parts.append(f"pos=({format_um(c.position[0])},{format_um(c.position[1])})")
        parts.append(f"layer={c.layer}")
        if c.angle != 0:
            parts.append(f"angle={_fmt_angle(c.angle)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Issue:
    code: str  # dangling-node | unknown-layer | unknown-material | param-range
    subject: str
    message: str


def validate_netlist(n, stack):
    """Return a list of ``Issue``; an empty list means the netlist is flow-ready."""
    issues = []
    refs = {}
    anchor_nodes = set()
    for c in n.instances:
        for node in set(c.nodes):
            refs[node] = refs.get(node, 0) + 1
        if c.kind is Kind.ANCHOR:
            anchor_nodes.update(c.nodes)
    for node in sorted(refs):
        if refs[node] == 1 and node not in anchor_nodes:
            issues.append(Issue("dangling-node", node, f"node {node} is referenced by one instance only"))
    mat_names = {m.name for m in n.materials} | {m.name for m in stack.materials}
    used_layers = set()
    for c in n.instances:
        layers = [c.layer] + ([c.params["anchor_layer"]] if c.kind is Kind.ANCHOR else [])
        for ly in layers:
            if ly not in stack:
                issues.append(Issue("unknown-layer", c.name, f"{c.name}: layer {ly} not in stack {stack.name}"))
            else:
                used_layers.add(ly)
        p = c.params
        if c.kind is Kind.BEAM and p["l"] <= p["w"]:
            issues.append(Issue("param-range", c.name, f"{c.name}: beam length must exceed its width"))
        if c.kind.is_comb and p["overlap"] > p["fl"]:
            issues.append(Issue("param-range", c.name, f"{c.name}: overlap exceeds finger length"))
        if c.angle % 90:
            issues.append(Issue("param-range", c.name, f"{c.name}: angle {c.angle} is not Manhattan"))
    for ly in sorted(used_layers):
        mat = stack.layer(ly).material
        if mat not in mat_names:
            issues.append(Issue("unknown-material", ly, f"layer {ly} uses undefined material {mat}"))
    return issues


# ----------------------------------------------------------------- footprint

def _local_rects(c):
    p = c.params
    if c.kind is Kind.RIGID_MASS:
        return [(c.layer, (0, 0, p["w"], p["h"]))]
    if c.kind is Kind.ANCHOR:
        box = (0, 0, p["w"], p["h"])
        return [(p["anchor_layer"], box), (c.layer, box)]
    if c.kind is Kind.BEAM:
        w = p["w"]
        return [(c.layer, (0, -(w // 2), p["l"], w - w // 2))]
    n, fl, fw, gap = p["fingers"], p["fl"], p["fw"], p["gap"]
    span = n * fw + (n - 1) * gap
    pitch = fw + gap
    orient = p["orient"]
    if orient in ("+y", "-y"):
        rects = [(0, 0, span, fw)]
        y0, y1 = (fw, fw + fl) if orient == "+y" else (-fl, 0)
        rects += [(i * pitch, y0, i * pitch + fw, y1) for i in range(n)]
    else:
        rects = [(0, 0, fw, span)]
        x0, x1 = (fw, fw + fl) if orient == "+x" else (-fl, 0)
        rects += [(x0, i * pitch, x1, i * pitch + fw) for i in range(n)]
    return [(c.layer, r) for r in rects]


def _rotate_quarter(x, y, k):
    for _ in range(k % 4):
        x, y = -y, x
    return x, y


def component_footprint(c, stack=None):
    """2D mask shapes of one component as ``[(layer, Polygon), ...]``.

    Placement: ``position`` is the local origin (lower-left corner of a mass,
    anchor or comb spine; start of a beam's centerline) and the shapes are
    rotated by ``angle`` about it. Non-Manhattan angles are snapped to the
    nm grid with a warning.
    """
    if stack is not None and c.layer not in stack:
        raise GeometryError(f"{c.name}: layer {c.layer} not in stack {stack.name}")
    px, py = c.position
    out = []
    if c.angle % 90 == 0:
        k = int(c.angle // 90)
        for layer, (x0, y0, x1, y1) in _local_rects(c):
            ax, ay = _rotate_quarter(x0, y0, k)
            bx, by = _rotate_quarter(x1, y1, k)
            out.append((layer, Polygon.rect(ax + px, ay + py, bx + px, by + py)))
        return out
    warnings.warn(f"{c.name}: angle {c.angle} deg is not a multiple of 90; vertices snapped to 1 nm grid")
    th = math.radians(c.angle)
    cs, sn = math.cos(th), math.sin(th)
    for layer, (x0, y0, x1, y1) in _local_rects(c):
        pts = []
        for x, y in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)):
            pts.append((round(px + cs * x - sn * y), round(py + sn * x + cs * y)))
        out.append((layer, normalize_polygon(Polygon(tuple(pts)))))
    return out


# ------------------------------------------------------------ lumped params

@dataclass(frozen=True)
class LumpedParams:
    """Lumped physical quantities of one component; unused fields are None."""

    kind: Kind
    k_axial: float = None  # N/m
    k_lateral: float = None
    k_out: float = None
    mass: float = None  # kg
    inertia: tuple = None  # (Jx, Jy, Jz) about the centroid, kg m^2
    dcdx: float = None  # F/m
    c0: float = None  # F
    grounded: bool = False


def lumped_params(c, m, stack):
    """Stiffness, mass or capacitance gradient contributed by ``c``.

    Beams use fixed-guided Euler-Bernoulli stiffness (lateral ``E t w^3/L^3``,
    out-of-plane ``E w t^3/L^3``, axial ``E w t/L``); combs the parallel-plate
    gradient ``2 n eps0 t / gap``. Thickness always comes from the layer.
    """
    t = nm_to_m(stack.layer(c.layer).thickness)
    if t <= 0:
        raise GeometryError(f"{c.name}: zero-thickness layer {c.layer}")
    E, rho = m.youngs_modulus, m.density
    if c.kind is Kind.BEAM:
        L, w = c.length_m("l"), c.length_m("w")
        return LumpedParams(c.kind, k_axial=E * w * t / L, k_lateral=E * t * w**3 / L**3,
                            k_out=E * w * t**3 / L**3, mass=rho * L * w * t)
    if c.kind is Kind.RIGID_MASS:
        w, h = c.length_m("w"), c.length_m("h")
        mass = rho * t * w * h
        inertia = (mass * (h * h + t * t) / 12, mass * (w * w + t * t) / 12, mass * (w * w + h * h) / 12)
        return LumpedParams(c.kind, mass=mass, inertia=inertia)
    if c.kind.is_comb:
        n, gap = c.params["fingers"], c.length_m("gap")
        dcdx = 2 * n * epsilon_0 * t / gap
        return LumpedParams(c.kind, dcdx=dcdx, c0=dcdx * c.length_m("overlap"))
    return LumpedParams(c.kind, grounded=True)
