"""Bundled demonstration devices.

``gyro``: a four-mass comb-driven gyroscope netlist (16 beams, 4 masses,
6 linear combs, 4 bias combs, 8 anchors) on a two-layer SOI stack.
``accel``: a z-axis accelerometer layout whose proof mass hangs on four
ten-fold serpentine flexures. ``marks``: a small alignment-mark layout
exercising polygon and box records. The shipped copies in ``data/`` are
regenerated by ``python -m memsflow.fixtures <dir>``.
"""

import sys
from importlib import resources
from pathlib import Path

from .geometry import Layout, Polygon, ProcessStack, StackLayer, emit_stack, parse_stack
from .materials import SILICON
from .schematic import ComponentInstance, Kind, Netlist, serialize_netlist, parse_netlist
from .cif import emit_cif, parse_cif
from .flows import netlist_to_layout

UM = 1000  # nm


def soi_stack():
    return ProcessStack("soi", (StackLayer("ANCHOR", 0, 2 * UM, "si"),
                                StackLayer("STRUCT", 2 * UM, 50 * UM, "si")), (SILICON,))


def accel_stack():
    return ProcessStack("accel", (StackLayer("ANCHOR", 0, 2 * UM, "si"),
                                  StackLayer("STRUCT", 2 * UM, 5 * UM, "si")), (SILICON,))


def _comb(kind, name, node, x, y, orient):
    params = {"fingers": 10, "fl": 30 * UM, "fw": 2 * UM, "gap": 2 * UM, "overlap": 20 * UM, "orient": orient}
    return ComponentInstance(kind, name, (node,), params, (x, y))


def gyro_netlist():
    """Four 200 um proof masses, each on four 150 um fixed-guided beams."""
    out = []
    lcomb = bcomb = 0
    for i, (ox, oy) in enumerate(((0, 0), (600, 0), (0, 600), (600, 600)), start=1):
        ox, oy = ox * UM, oy * UM
        m, gb, gt = f"m{i}", f"g{i}b", f"g{i}t"
        anchor = {"w": 200 * UM, "h": 20 * UM, "anchor_layer": "ANCHOR"}
        out.append(ComponentInstance(Kind.ANCHOR, f"a{i}b", (gb,), dict(anchor), (ox, oy)))
        out.append(ComponentInstance(Kind.ANCHOR, f"a{i}t", (gt,), dict(anchor), (ox, oy + 520 * UM)))
        out.append(ComponentInstance(Kind.RIGID_MASS, f"mass{i}", (m,), {"w": 200 * UM, "h": 200 * UM},
                                     (ox, oy + 170 * UM)))
        for j, xc in enumerate((12, 188)):
            beam = {"l": 150 * UM, "w": 4 * UM}
            out.append(ComponentInstance(Kind.BEAM, f"b{i}{j}b", (gb, m), dict(beam),
                                         (ox + xc * UM, oy + 20 * UM), angle=90))
            out.append(ComponentInstance(Kind.BEAM, f"b{i}{j}t", (m, gt), dict(beam),
                                         (ox + xc * UM, oy + 370 * UM), angle=90))
        left, right = ox - 2 * UM, ox + 200 * UM
        lcomb += 1
        out.append(_comb(Kind.LINEAR_COMB, f"lc{lcomb}", m, left, oy + 180 * UM, "-x"))
        bcomb += 1
        if i <= 2:
            out.append(_comb(Kind.BIAS_COMB, f"bc{bcomb}", m, left, oy + 300 * UM, "-x"))
            lcomb += 1
            out.append(_comb(Kind.LINEAR_COMB, f"lc{lcomb}", m, right, oy + 180 * UM, "+x"))
        else:
            out.append(_comb(Kind.BIAS_COMB, f"bc{bcomb}", m, right, oy + 180 * UM, "+x"))
    return Netlist(tuple(out), (SILICON,), "soi")


def _flexure_rects():
    """One ten-fold flexure right of a 400 um mass at the origin, as (layer, box)."""
    rects = []
    y = [108 + 20 * i for i in range(10)]
    for i, yi in enumerate(y):
        x0 = 400 if i == 0 else 420
        rects.append(("STRUCT", (x0, yi, 720, yi + 4)))
    for i in range(9):
        x0 = 720 if i % 2 == 0 else 412
        rects.append(("STRUCT", (x0, y[i], x0 + 8, y[i + 1] + 4)))
    anchor = (404, y[9] - 8, 420, y[9] + 20)
    rects += [("ANCHOR", anchor), ("STRUCT", anchor)]
    return rects


def _rotate_about_center(box, k, c=400):
    x0, y0, x1, y1 = box
    for _ in range(k):
        # 90 deg about (c/2, c/2): (x, y) -> (c - y, x)
        x0, y0, x1, y1 = c - y1, x0, c - y0, x1
    return x0, y0, x1, y1


def accel_layout():
    pairs = [("STRUCT", Polygon.rect(0, 0, 400 * UM, 400 * UM))]
    for k in range(4):
        for layer, box in _flexure_rects():
            x0, y0, x1, y1 = _rotate_about_center(box, k)
            pairs.append((layer, Polygon.rect(x0 * UM, y0 * UM, x1 * UM, y1 * UM)))
    return Layout.from_pairs(pairs, "2")


def marks_layout():
    """Alignment crosses, an L-shaped pad and a box off the centimicron centre grid."""
    pairs = []
    for cx, cy in ((0, 0), (500 * UM, 0)):
        pairs.append(("STRUCT", Polygon(((cx - 20 * UM, cy - 2 * UM), (cx - 2 * UM, cy - 2 * UM),
                                         (cx - 2 * UM, cy - 20 * UM), (cx + 2 * UM, cy - 20 * UM),
                                         (cx + 2 * UM, cy - 2 * UM), (cx + 20 * UM, cy - 2 * UM),
                                         (cx + 20 * UM, cy + 2 * UM), (cx + 2 * UM, cy + 2 * UM),
                                         (cx + 2 * UM, cy + 20 * UM), (cx - 2 * UM, cy + 20 * UM),
                                         (cx - 2 * UM, cy + 2 * UM), (cx - 20 * UM, cy + 2 * UM)))))
    pairs.append(("STRUCT", Polygon(((100 * UM, 0), (160 * UM, 0), (160 * UM, 20 * UM),
                                     (120 * UM, 20 * UM), (120 * UM, 60 * UM), (100 * UM, 60 * UM)))))
    pairs.append(("ANCHOR", Polygon.rect(200 * UM, 0, 260 * UM + 10, 40 * UM)))
    pairs.append(("ANCHOR", Polygon.rect(300 * UM, 0, 340 * UM, 40 * UM)))
    return Layout.from_pairs(pairs, "3")


def generate():
    """Fixture file name -> text."""
    return {
        "gyro.net": serialize_netlist(gyro_netlist()),
        "soi.stack": emit_stack(soi_stack()),
        "gyro.cif": emit_cif(netlist_to_layout(gyro_netlist(), soi_stack())),
        "accel.stack": emit_stack(accel_stack()),
        "accel.cif": emit_cif(accel_layout()),
        "marks.cif": emit_cif(marks_layout()),
    }


def read_text(name):
    return resources.files("memsflow").joinpath("data", name).read_text()


def data_path(name):
    return Path(str(resources.files("memsflow").joinpath("data", name)))


def load(name):
    """Parsed bundled fixture: ``gyro``, ``gyro_layout``, ``soi``, ``accel``,
    ``accel_stack`` or ``marks``."""
    if name == "gyro":
        return parse_netlist(read_text("gyro.net"))
    if name in ("soi", "accel_stack"):
        return parse_stack(read_text("soi.stack" if name == "soi" else "accel.stack"))
    if name in ("accel", "marks", "gyro_layout"):
        if name == "gyro_layout":
            name = "gyro"
        return parse_cif(read_text(f"{name}.cif"))
    raise KeyError(name)


if __name__ == "__main__":
    target = Path(sys.argv[1] if len(sys.argv) > 1 else "src/memsflow/data")
    target.mkdir(parents=True, exist_ok=True)
    for fname, text in generate().items():
        (target / fname).write_text(text)
        print(f"wrote {target / fname}")
