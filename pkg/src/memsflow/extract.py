"""Layout-to-netlist extraction: recognize library components in mask geometry.

The recognizer inverts the footprint generator of ``memsflow.schematic`` on
Manhattan layouts. Anything it cannot map onto a component is returned in
``ExtractionReport.unrecognized`` together with a reason; no shape is ever
dropped silently.
"""

from dataclasses import dataclass, field

import numpy as np

from ._text import logical_lines, split_args
from .errors import FlowError, ParseError
from .geometry import Polygon
from .schematic import ComponentInstance, Kind, Netlist
from .units import parse_length


@dataclass(frozen=True)
class ExtractionRules:
    beam_max_width: int = 10_000  # nm
    beam_min_aspect: float = 5.0
    comb_min_fingers: int = 2
    anchor_layer: str = "ANCHOR"
    struct_layer: str = "STRUCT"

    def __post_init__(self):
        if self.beam_max_width <= 0:
            raise ValueError("beam_max_width must be positive")
        if not self.beam_min_aspect > 1:
            raise ValueError("beam_min_aspect must exceed 1")
        if self.comb_min_fingers < 2:
            raise ValueError("comb_min_fingers must be at least 2")


def parse_rules(text):
    """Read extraction rules from ``key=value`` lines."""
    kv = {}
    for lineno, tokens in logical_lines(text):
        words, pairs = split_args(tokens, lineno)
        if words:
            raise ParseError("expected key=value", lineno, words[0])
        kv.update(pairs)
    conv = {"beam_max_width": parse_length, "beam_min_aspect": float,
            "comb_min_fingers": int, "anchor_layer": str, "struct_layer": str}
    out = {}
    for key, value in kv.items():
        if key not in conv:
            raise ParseError(f"unknown rule {key!r}", token=key)
        try:
            out[key] = conv[key](value)
        except ValueError as exc:
            raise ParseError(str(exc), token=value) from None
    try:
        return ExtractionRules(**out)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


@dataclass
class ExtractionReport:
    recognized: Netlist
    unrecognized: list = field(default_factory=list)  # (layer, Polygon, reason)

    @property
    def ok(self):
        return not self.unrecognized


class _UnionFind:
    def __init__(self):
        self.parent = []

    def add(self):
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class _Comp:
    kind: Kind
    shapes: list  # indices into the struct rect list (plus anchor-layer index)
    params: dict
    position: tuple
    angle: float = 0.0
    ports: list = field(default_factory=list)
    order_key: tuple = ()


def _relations(boxes):
    """Pairwise touch (shared edge of positive length) and overlap matrices."""
    b = np.asarray(boxes, dtype=np.int64).reshape(-1, 4)
    ox = np.minimum(b[:, None, 2], b[None, :, 2]) - np.maximum(b[:, None, 0], b[None, :, 0])
    oy = np.minimum(b[:, None, 3], b[None, :, 3]) - np.maximum(b[:, None, 1], b[None, :, 1])
    overlap = (ox > 0) & (oy > 0)
    touch = ((ox == 0) & (oy > 0)) | ((oy == 0) & (ox > 0))
    np.fill_diagonal(overlap, False)
    np.fill_diagonal(touch, False)
    return touch, overlap


def _find_comb(s, boxes, touch_nb, free, rules):
    """Try to read rect ``s`` as a comb spine; return (orient, fingers) or None."""
    x0, y0, x1, y1 = boxes[s]
    w, h = x1 - x0, y1 - y0
    horizontal = w > h
    fw = h if horizontal else w
    if horizontal:
        sides = (("+y", lambda b: b[1] == y1), ("-y", lambda b: b[3] == y0))
    else:
        sides = (("+x", lambda b: b[0] == x1), ("-x", lambda b: b[2] == x0))
    for orient, on_side in sides:
        cand = [j for j in touch_nb[s] if on_side(boxes[j])]
        if len(cand) < rules.comb_min_fingers:
            continue
        if not all(free[j] and touch_nb[j] == [s] for j in cand):
            continue
        dims = {(boxes[j][2] - boxes[j][0], boxes[j][3] - boxes[j][1]) for j in cand}
        if len(dims) != 1:
            continue
        fx, fy = dims.pop()
        if (fx if horizontal else fy) != fw:
            continue
        starts = sorted(boxes[j][0] if horizontal else boxes[j][1] for j in cand)
        lo, hi = (x0, x1) if horizontal else (y0, y1)
        if starts[0] != lo or starts[-1] + fw != hi:
            continue
        pitches = {b - a for a, b in zip(starts, starts[1:])}
        if len(pitches) != 1 or pitches.pop() <= fw:
            continue
        fl = fy if horizontal else fx
        cand.sort(key=lambda j: boxes[j])
        return orient, cand, fl, (starts[1] - starts[0]) - fw
    return None


def _beam_port(comp, box, other):
    """0 for the beam's start end, 1 for its far end, judged by the contact."""
    axis = 0 if comp.angle == 0 else 1
    lo, hi = box[axis], box[axis + 2]
    mid = (max(lo, other[axis]) + min(hi, other[axis + 2])) / 2
    return 0 if mid - lo <= hi - mid else 1


def _beam_end_overlap(beam_box, other, axis):
    """Overlap of a beam with ``other`` confined to one beam end, covering its width."""
    c = 1 - axis
    if not (other[c] <= beam_box[c] and beam_box[c + 2] <= other[c + 2]):
        return False
    lo, hi = beam_box[axis], beam_box[axis + 2]
    at_start = other[axis] <= lo < other[axis + 2]
    at_end = other[axis] < hi <= other[axis + 2]
    return at_start != at_end


def layout_to_netlist(layout, stack, rules=ExtractionRules()):
    """Recognize beams, masses, combs and anchors in a Manhattan layout.

    Returns an ``ExtractionReport``. Node names ``n1, n2, ...`` follow the
    canonical shape order; connectivity comes from shared edges, and from
    beam ends overlapping a mass or anchor.
    """
    for layer, p in layout.pairs():
        if not p.is_rectilinear():
            raise FlowError(f"non-Manhattan polygon on {layer}: {p.vertices}")

    unrec = []
    boxes = []  # struct-layer rectangles, canonical order
    struct_polys = []
    anchor_rects = []
    for layer, p in layout.pairs():
        if len(p) != 4:
            unrec.append((layer, p, "non-rectangular"))
        elif layer == rules.struct_layer:
            boxes.append(p.bbox())
            struct_polys.append(p)
        elif layer == rules.anchor_layer:
            anchor_rects.append(p)
        else:
            unrec.append((layer, p, "layer not extractable"))

    n = len(boxes)
    anchor_of = {}  # struct index -> anchor-layer polygon
    by_box = {}
    for i, b in enumerate(boxes):
        by_box.setdefault(b, []).append(i)
    for p in anchor_rects:
        slots = [i for i in by_box.get(p.bbox(), []) if i not in anchor_of]
        if slots:
            anchor_of[slots[0]] = p
        else:
            unrec.append((rules.anchor_layer, p, "anchor without structure"))

    if n:
        touch, overlap = _relations(boxes)
    else:
        touch = overlap = np.zeros((0, 0), dtype=bool)
    touch_nb = [[int(j) for j in np.flatnonzero(touch[i])] for i in range(n)]
    overlapped = overlap.any(axis=1) if n else np.zeros(0, dtype=bool)

    owner = [None] * n
    comps = []
    free = [not overlapped[i] and i not in anchor_of for i in range(n)]

    for i in range(n):
        if i in anchor_of:
            x0, y0, x1, y1 = boxes[i]
            c = _Comp(Kind.ANCHOR, [i], {"w": x1 - x0, "h": y1 - y0,
                                         "anchor_layer": rules.anchor_layer}, (x0, y0))
            owner[i] = c
            comps.append(c)

    avail = [free[i] and owner[i] is None for i in range(n)]
    for s in range(n):
        if not avail[s]:
            continue
        found = _find_comb(s, boxes, touch_nb, avail, rules)
        if found is None:
            continue
        orient, fingers, fl, gap = found
        x0, y0, x1, y1 = boxes[s]
        fw = (y1 - y0) if orient in ("+y", "-y") else (x1 - x0)
        c = _Comp(Kind.LINEAR_COMB, [s] + fingers,
                  {"fingers": len(fingers), "fl": fl, "fw": fw, "gap": gap,
                   "overlap": fl, "orient": orient}, (x0, y0))
        for j in c.shapes:
            owner[j] = c
            avail[j] = False
        comps.append(c)

    for i in range(n):
        if owner[i] is not None:
            continue
        x0, y0, x1, y1 = boxes[i]
        w, h = x1 - x0, y1 - y0
        short, long_ = min(w, h), max(w, h)
        if short <= rules.beam_max_width and long_ >= rules.beam_min_aspect * short:
            if w > h:
                c = _Comp(Kind.BEAM, [i], {"l": w, "w": h}, (x0, y0 + h // 2), 0.0)
            else:
                c = _Comp(Kind.BEAM, [i], {"l": h, "w": w}, (x1 - w // 2, y0), 90.0)
        else:
            c = _Comp(Kind.RIGID_MASS, [i], {"w": w, "h": h}, (x0, y0))
        owner[i] = c
        comps.append(c)

    # overlaps: a beam end buried in a mass or anchor is a connection,
    # anything else is ambiguous
    contacts = [(int(i), int(j)) for i, j in np.argwhere(np.triu(touch))]
    bad = set()
    for i, j in np.argwhere(np.triu(overlap)):
        ci, cj = owner[i], owner[j]
        ok = False
        for beam_i, other_i in ((i, j), (j, i)):
            cb, co = owner[beam_i], owner[other_i]
            if cb.kind is Kind.BEAM and co.kind in (Kind.RIGID_MASS, Kind.ANCHOR):
                axis = 0 if cb.angle == 0 else 1
                if _beam_end_overlap(boxes[beam_i], boxes[other_i], axis):
                    ok = True
        if ok:
            contacts.append((i, j))
        else:
            bad.update((id(ci), id(cj)))
    rejected = [c for c in comps if id(c) in bad]
    comps = [c for c in comps if id(c) not in bad]
    for c in rejected:
        for i in c.shapes:
            unrec.append((rules.struct_layer, struct_polys[i], "ambiguous overlap"))
            if i in anchor_of:
                unrec.append((rules.anchor_layer, anchor_of[i], "ambiguous overlap"))

    # scan order: first shape of each component in (layer, polygon) order
    def first_key(c):
        keys = [(rules.struct_layer, struct_polys[i]) for i in c.shapes]
        keys += [(rules.anchor_layer, anchor_of[i]) for i in c.shapes if i in anchor_of]
        return min(keys)

    for c in comps:
        c.order_key = first_key(c)
    comps.sort(key=lambda c: c.order_key)

    uf = _UnionFind()
    for c in comps:
        c.ports = [uf.add() for _ in range(2 if c.kind is Kind.BEAM else 1)]
    alive = {id(c) for c in comps}

    def port(c, idx, other_idx):
        if c.kind is Kind.BEAM:
            return c.ports[_beam_port(c, boxes[idx], boxes[other_idx])]
        return c.ports[0]

    for i, j in contacts:
        ci, cj = owner[i], owner[j]
        if ci is cj or id(ci) not in alive or id(cj) not in alive:
            continue
        uf.union(port(ci, i, j), port(cj, j, i))

    node_names = {}
    prefix = {Kind.BEAM: "b", Kind.RIGID_MASS: "m", Kind.LINEAR_COMB: "c", Kind.ANCHOR: "a"}
    counters = {k: 0 for k in prefix}
    instances = []
    layer = rules.struct_layer
    for c in comps:
        nodes = []
        for pid in c.ports:
            root = uf.find(pid)
            if root not in node_names:
                node_names[root] = f"n{len(node_names) + 1}"
            nodes.append(node_names[root])
        counters[c.kind] += 1
        name = f"{prefix[c.kind]}{counters[c.kind]}"
        instances.append(ComponentInstance(c.kind, name, tuple(nodes), c.params,
                                           c.position, layer, c.angle))
    unrec.sort(key=lambda t: (t[0], t[1], t[2]))
    netlist = Netlist(tuple(instances), stack.materials, stack.name)
    return ExtractionReport(netlist, unrec)
