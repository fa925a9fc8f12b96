import pytest

from helpers import random_device, random_separated, seeded, signature
from memsflow import fixtures
from memsflow.cif import emit_cif
from memsflow.errors import FlowError, ParseError
from memsflow.esm import emit_esm
from memsflow.extract import ExtractionRules, layout_to_netlist, parse_rules
from memsflow.flows import layout_to_solid, netlist_to_layout, netlist_to_solid, solid_to_layout
from memsflow.geometry import Layout, Polygon, Prism, SolidModel
from memsflow.schematic import ComponentInstance, Kind, Netlist, component_footprint

UM = 1000
STACK = fixtures.soi_stack()


def _layout_of(netlist):
    return Layout.from_pairs([p for c in netlist.instances for p in component_footprint(c, STACK)])


def test_empty_flows():
    assert netlist_to_layout(Netlist(), STACK).shapes == {}
    assert netlist_to_solid(Netlist(), STACK).prisms == ()


def test_single_mass():
    anchor = ComponentInstance(Kind.ANCHOR, "a", ("m",), {"w": 10 * UM, "h": 10 * UM, "anchor_layer": "ANCHOR"},
                               (200 * UM, 0))
    mass = ComponentInstance(Kind.RIGID_MASS, "m1", ("m",), {"w": 100 * UM, "h": 100 * UM})
    n = Netlist((mass, anchor))
    text = emit_cif(netlist_to_layout(n, STACK))
    assert "B 10000 10000 5000 5000;" in text
    solid = netlist_to_solid(n, STACK)
    struct = [p for p in solid.prisms if p.layer == "STRUCT"]
    assert (struct[0].z0, struct[0].z1) == (2000, 52000)


def test_gyro_shape_groups():
    n = fixtures.load("gyro")
    layout = netlist_to_layout(n, STACK)
    expect = {Kind.BEAM: 1, Kind.RIGID_MASS: 1, Kind.LINEAR_COMB: 11, Kind.BIAS_COMB: 11, Kind.ANCHOR: 2}
    total = sum(expect[c.kind] for c in n.instances)
    assert layout.shape_count() == total
    assert len(layout.shapes["ANCHOR"]) == 8
    assert len(netlist_to_solid(n, STACK).prisms) == total


def test_invalid_netlist_rejected():
    beam = ComponentInstance(Kind.BEAM, "b", ("x", "y"), {"l": 100 * UM, "w": 2 * UM})
    with pytest.raises(FlowError):
        netlist_to_layout(Netlist((beam,)), STACK)


def test_solid_to_layout_projection():
    sq = Polygon.rect(0, 0, 1000, 1000)
    solid = SolidModel("soi", (Prism("ANCHOR", 0, 2000, sq), Prism("STRUCT", 2000, 52000, sq)))
    lay = solid_to_layout(solid, STACK)
    assert lay.shapes == {"ANCHOR": (sq,), "STRUCT": (sq,)}


def test_solid_to_layout_mismatch_names_prism():
    solid = SolidModel("soi", (Prism("STRUCT", 0, 10, Polygon.rect(0, 0, 10, 10)),))
    with pytest.raises(FlowError, match="prism 0"):
        solid_to_layout(solid, STACK)


def test_layout_to_solid_unknown_layer():
    lay = Layout.from_pairs([("METAL9", Polygon.rect(0, 0, 10, 10))])
    with pytest.raises(FlowError, match="METAL9"):
        layout_to_solid(lay, STACK)


def test_accel_prism_count():
    lay = fixtures.load("accel")
    solid = layout_to_solid(lay, fixtures.accel_stack())
    assert len(solid.prisms) == lay.shape_count() == 85


def test_gyro_solid_triangle():
    n = fixtures.load("gyro")
    via = solid_to_layout(netlist_to_solid(n, STACK), STACK)
    assert via == netlist_to_layout(n, STACK)


def test_flows_deterministic():
    n = random_device(seeded(3))
    a = emit_esm(netlist_to_solid(n, STACK)), emit_cif(netlist_to_layout(n, STACK))
    b = emit_esm(netlist_to_solid(n, STACK)), emit_cif(netlist_to_layout(n, STACK))
    assert a == b


def test_instance_order_irrelevant():
    n = random_device(seeded(4))
    rev = Netlist(tuple(reversed(n.instances)), n.materials, n.process_ref)
    assert netlist_to_layout(rev, STACK) == netlist_to_layout(n, STACK)


# --------------------------------------------------------------- extraction

def test_extract_single_mass():
    mass = ComponentInstance(Kind.RIGID_MASS, "m1", ("a",), {"w": 120 * UM, "h": 80 * UM})
    rep = layout_to_netlist(_layout_of(Netlist((mass,))), STACK)
    assert rep.ok
    [c] = rep.recognized.instances
    assert c.kind is Kind.RIGID_MASS and (c.params["w"], c.params["h"]) == (120 * UM, 80 * UM)


def test_extract_comb():
    params = {"fingers": 3, "fl": 30 * UM, "fw": 2 * UM, "gap": 3 * UM, "overlap": 30 * UM, "orient": "-y"}
    comb = ComponentInstance(Kind.LINEAR_COMB, "c", ("a",), params)
    rep = layout_to_netlist(_layout_of(Netlist((comb,))), STACK)
    assert rep.ok
    [c] = rep.recognized.instances
    assert c.kind is Kind.LINEAR_COMB
    assert (c.params["fingers"], c.params["fw"], c.params["gap"]) == (3, 2 * UM, 3 * UM)


def test_extract_l_shape_unrecognized():
    L = Polygon(((0, 0), (20, 0), (20, 10), (10, 10), (10, 20), (0, 20)))
    rep = layout_to_netlist(Layout.from_pairs([("STRUCT", L)]), STACK)
    assert rep.recognized.instances == ()
    assert rep.unrecognized == [("STRUCT", L, "non-rectangular")]


def test_extract_non_manhattan_rejected():
    tri = Polygon(((0, 0), (10, 0), (0, 10)))
    with pytest.raises(FlowError):
        layout_to_netlist(Layout.from_pairs([("STRUCT", tri)]), STACK)


def test_extract_conservation_marks():
    lay = fixtures.load("marks")
    rep = layout_to_netlist(lay, STACK)
    counts = {Kind.BEAM: 1, Kind.RIGID_MASS: 1, Kind.ANCHOR: 2, Kind.LINEAR_COMB: 0, Kind.BIAS_COMB: 0}
    used = sum(counts[c.kind] for c in rep.recognized.instances)
    assert used + len(rep.unrecognized) == lay.shape_count()
    assert all(reason for _, _, reason in rep.unrecognized)


def test_extract_ambiguous_overlap():
    a = Polygon.rect(0, 0, 100_000, 100_000)
    b = Polygon.rect(50_000, 50_000, 150_000, 150_000)
    rep = layout_to_netlist(Layout.from_pairs([("STRUCT", a), ("STRUCT", b)]), STACK)
    assert [r for _, _, r in rep.unrecognized] == ["ambiguous overlap"] * 2


def test_extract_gyro_connectivity():
    rep = layout_to_netlist(fixtures.load("gyro_layout"), STACK)
    assert rep.ok
    n = rep.recognized
    assert (n.count(Kind.BEAM), n.count(Kind.RIGID_MASS), n.count(Kind.ANCHOR)) == (16, 4, 8)
    # bias and linear combs are geometrically identical
    assert n.count(Kind.LINEAR_COMB) == 10
    for mass in (c for c in n.instances if c.kind is Kind.RIGID_MASS):
        node = mass.nodes[0]
        assert sum(node in c.nodes for c in n.instances if c.kind is Kind.BEAM) == 4


def test_extract_accel_topology():
    rep = layout_to_netlist(fixtures.load("accel"), fixtures.accel_stack())
    assert rep.ok
    n = rep.recognized
    # ten flexure segments per fold; the short fold trusses read back as small rigid masses
    assert (n.count(Kind.BEAM), n.count(Kind.RIGID_MASS), n.count(Kind.ANCHOR)) == (40, 37, 4)


def test_extract_node_names_deterministic():
    lay = fixtures.load("accel")
    a = layout_to_netlist(lay, fixtures.accel_stack()).recognized
    b = layout_to_netlist(lay, fixtures.accel_stack()).recognized
    assert a == b
    assert all(node.startswith("n") for node in a.nodes)


@pytest.mark.parametrize("seed", range(5))
def test_extract_inverse_separated(seed):
    n = random_separated(seeded(seed))
    rep = layout_to_netlist(_layout_of(n), STACK)
    assert rep.ok
    assert signature(rep.recognized) == signature(n)


def test_rules_file():
    rules = parse_rules("beam_max_width=6u\nbeam_min_aspect=8 # slender only\n")
    assert rules == ExtractionRules(beam_max_width=6000, beam_min_aspect=8.0)
    with pytest.raises(ParseError):
        parse_rules("beam_min_aspect=0.5")
    with pytest.raises(ParseError):
        parse_rules("colour=red")


def test_rules_change_classification():
    beam = Polygon.rect(0, 0, 100_000, 8_000)
    lay = Layout.from_pairs([("STRUCT", beam)])
    assert layout_to_netlist(lay, STACK).recognized.instances[0].kind is Kind.BEAM
    strict = ExtractionRules(beam_max_width=5_000)
    assert layout_to_netlist(lay, STACK, strict).recognized.instances[0].kind is Kind.RIGID_MASS
