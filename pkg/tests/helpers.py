"""Random netlist and layout generators shared by the test modules."""

import random

from memsflow.fixtures import soi_stack
from memsflow.geometry import Layout, Polygon
from memsflow.materials import SILICON
from memsflow.schematic import ComponentInstance, Kind, Netlist

UM = 1000


def _comb(rng, kind, name, node, pos, orient, angle=0):
    fl = rng.randint(20, 60) * UM
    params = {"fingers": rng.randint(2, 8), "fl": fl, "fw": rng.randint(2, 4) * UM,
              "gap": rng.randint(2, 4) * UM, "overlap": fl, "orient": orient}
    return ComponentInstance(kind, name, (node,), params, pos, angle=angle)


def random_device(rng, max_instances=50):
    """A valid (anchored, no dangling node) netlist of random mass cells.

    Each cell is anchor - beam - mass [- beam - anchor] with optional combs
    on the mass. Shapes may overlap: the geometric flows do not care.
    """
    out = []
    k = 0
    while True:
        k += 1
        cell = []
        g, m = f"g{k}", f"m{k}"
        pos = lambda: (rng.randint(-500, 500) * UM, rng.randint(-500, 500) * UM)
        angle = lambda: 90 * rng.randint(0, 3)
        anchor = {"w": rng.randint(10, 60) * UM, "h": rng.randint(10, 60) * UM, "anchor_layer": "ANCHOR"}
        cell.append(ComponentInstance(Kind.ANCHOR, f"a{k}", (g,), anchor, pos(), angle=angle()))
        w = rng.randint(2, 8) * UM
        cell.append(ComponentInstance(Kind.BEAM, f"b{k}", (g, m), {"l": rng.randint(40, 300) * UM, "w": w},
                                      pos(), angle=angle()))
        cell.append(ComponentInstance(Kind.RIGID_MASS, f"mass{k}", (m,),
                                      {"w": rng.randint(20, 400) * UM, "h": rng.randint(20, 400) * UM},
                                      pos(), angle=angle()))
        if rng.random() < 0.5:
            g2 = f"h{k}"
            cell.append(ComponentInstance(Kind.BEAM, f"c{k}", (m, g2),
                                          {"l": rng.randint(40, 300) * UM, "w": rng.randint(2, 8) * UM},
                                          pos(), angle=angle()))
            cell.append(ComponentInstance(Kind.ANCHOR, f"d{k}", (g2,), dict(anchor), pos(), angle=angle()))
        for j in range(rng.randint(0, 2)):
            kind = rng.choice((Kind.LINEAR_COMB, Kind.BIAS_COMB))
            cell.append(_comb(rng, kind, f"cb{k}_{j}", m, pos(), rng.choice(("+x", "-x", "+y", "-y")),
                              angle()))
        if len(out) + len(cell) > max_instances:
            break
        out.extend(cell)
        if rng.random() < 0.25:
            break
    return Netlist(tuple(out), (SILICON,), "soi")


def random_separated(rng, n_max=40):
    """Non-touching components on a 1 mm pitch grid at Manhattan angles.

    Masses and anchors keep angle 0 so that (w, h) read back unswapped;
    comb overlap equals the finger length, the only value extraction can
    infer from geometry.
    """
    out = []
    n = rng.randint(1, n_max)
    for i in range(n):
        pos = ((i % 8) * 1000 * UM, (i // 8) * 1000 * UM)
        kind = rng.choice(list(Kind))
        name = f"x{i}"
        if kind is Kind.BEAM:
            w = rng.randint(2, 8) * UM
            c = ComponentInstance(kind, name, (f"p{i}", f"q{i}"), {"l": rng.randint(60, 400) * UM, "w": w},
                                  pos, angle=rng.choice((0, 90)))
        elif kind is Kind.RIGID_MASS:
            c = ComponentInstance(kind, name, (f"p{i}",),
                                  {"w": rng.randint(20, 400) * UM, "h": rng.randint(20, 400) * UM}, pos)
        elif kind is Kind.ANCHOR:
            c = ComponentInstance(kind, name, (f"p{i}",), {"w": rng.randint(12, 60) * UM,
                                                          "h": rng.randint(12, 60) * UM,
                                                          "anchor_layer": "ANCHOR"}, pos)
        else:
            # bias and linear combs share geometry; extraction reports lcomb
            c = _comb(rng, Kind.LINEAR_COMB, name, f"p{i}", pos, rng.choice(("+x", "-x", "+y", "-y")))
        out.append(c)
    return Netlist(tuple(out), (SILICON,), "soi")


def signature(netlist):
    """Sorted per-kind multiset of (kind, geometric params)."""
    return sorted((c.kind.value, tuple(sorted(c.params.items()))) for c in netlist.instances)


def random_rect_polygon(rng, span=200):
    x0, y0 = rng.randint(-span, span) * 10, rng.randint(-span, span) * 10
    return Polygon.rect(x0, y0, x0 + rng.randint(1, 50) * 10, y0 + rng.randint(1, 50) * 10)


def random_rectilinear(rng):
    """A random simple rectilinear polygon: a staircase under a random profile."""
    n = rng.randint(1, 6)
    xs = sorted(rng.sample(range(0, 400), n + 1))
    heights = [rng.randint(1, 40) for _ in range(n)]
    pts = [(xs[0], 0)]
    for i in range(n):
        pts.append((xs[i], heights[i]))
        pts.append((xs[i + 1], heights[i]))
    pts.append((xs[-1], 0))
    dx, dy = rng.randint(-100, 100), rng.randint(-100, 100)
    if rng.random() < 0.5:
        pts = pts[::-1]
    k = rng.randrange(len(pts))
    pts = pts[k:] + pts[:k]
    return Polygon(tuple(((x + dx) * 10, (y + dy) * 10) for x, y in pts))


def random_layout(rng, layers=("ANCHOR", "STRUCT")):
    pairs = []
    for _ in range(rng.randint(0, 20)):
        poly = random_rectilinear(rng) if rng.random() < 0.5 else random_rect_polygon(rng)
        pairs.append((rng.choice(layers), poly))
    return Layout.from_pairs(pairs, str(rng.randint(1, 9)))


def stack():
    return soi_stack()


def seeded(seed):
    return random.Random(seed)
