"""Interfaces between the three design levels (netlist, solid, layout).

Macromodeling, the device-to-system interface, lives in ``memsflow.mor``;
layout-to-netlist extraction lives in ``memsflow.extract``.
"""

from .errors import FlowError, GeometryError
from .geometry import Layout, SolidModel, extrude_polygon, project_prism
from .schematic import component_footprint, validate_netlist


def _require_valid(n, stack):
    issues = validate_netlist(n, stack)
    if issues:
        detail = "; ".join(i.message for i in issues[:5])
        raise FlowError(f"netlist is not flow-ready ({len(issues)} issue(s)): {detail}")


def _footprints(n, stack):
    # resolve placement -> instantiate footprints -> (normalization and
    # layer grouping happen in Layout / SolidModel construction)
    for c in n.instances:
        try:
            yield from component_footprint(c, stack)
        except GeometryError as exc:
            raise FlowError(f"{c.name}: {exc}") from None


def netlist_to_layout(n, stack, cell_name="1"):
    """Mask layout holding the footprint of every instance."""
    _require_valid(n, stack)
    return Layout.from_pairs(_footprints(n, stack), cell_name=cell_name)


def netlist_to_solid(n, stack, name=""):
    """Solid model with one prism per footprint shape, extruded through its layer."""
    _require_valid(n, stack)
    prisms = [extrude_polygon(poly, layer, stack) for layer, poly in _footprints(n, stack)]
    return SolidModel(stack.name, tuple(prisms), name)


def solid_to_layout(s, stack, cell_name="1"):
    """Project every prism back onto its mask layer.

    A prism whose z-interval does not match its stack layer cannot be made
    by the process; the error names the prism index.
    """
    pairs = []
    for i, pr in enumerate(s.prisms):
        try:
            pairs.append(project_prism(pr, stack))
        except GeometryError as exc:
            raise FlowError(f"prism {i}: {exc}") from None
    return Layout.from_pairs(pairs, cell_name=cell_name)


def layout_to_solid(layout, stack, name=""):
    missing = [ly for ly in layout.layers if ly not in stack]
    if missing:
        raise FlowError(f"layout layer {missing[0]!r} not in stack {stack.name}")
    prisms = [extrude_polygon(p, layer, stack) for layer, p in layout.pairs()]
    return SolidModel(stack.name, tuple(prisms), name)
