import math

import numpy as np
import pytest

from memsflow import fixtures
from memsflow.errors import ParseError
from memsflow.fea import FeaModel, BeamElement, assemble, static_solve
from memsflow.geometry import Polygon, ProcessStack, StackLayer
from memsflow.materials import SILICON, Material
from memsflow.schematic import (ComponentInstance, Kind, Netlist, NetlistError, component_footprint,
                                lumped_params, parse_netlist, serialize_netlist, validate_netlist)
from memsflow.units import format_um, parse_length

UM = 1000
THIN = ProcessStack("thin", (StackLayer("ANCHOR", 0, 2 * UM, "si"), StackLayer("STRUCT", 2 * UM, 2 * UM, "si")),
                    (SILICON,))

CHAIN = """\
process "thin"
material si E=160e9 nu=0.22 rho=2330
anchor a1 node=(g) w=20u h=20u anchor_layer=ANCHOR pos=(0u,0u) layer=STRUCT
beam b1 node=(g,m) l=200u w=2u pos=(20u,10u) layer=STRUCT
mass m1 node=(m) w=100u h=100u pos=(220u,0u) layer=STRUCT
"""


def test_units():
    assert parse_length("200u") == 200_000
    assert parse_length("50n") == 50
    assert parse_length("2e-6") == 2000
    assert parse_length("1.5u") == 1500
    assert format_um(1500) == "1.5u"
    assert format_um(0) == "0u"
    assert format_um(-2000) == "-2u"
    with pytest.raises(ValueError):
        parse_length("0.5n")
    with pytest.raises(ValueError):
        parse_length("abc")


def test_empty_netlist():
    n = parse_netlist("")
    assert n.instances == () and n.materials == ()
    text = serialize_netlist(n)
    assert "beam" not in text and text.startswith("process")
    assert parse_netlist(text) == n


def test_gyro_counts():
    n = fixtures.load("gyro")
    assert len(n.instances) == 38
    counts = [n.count(k) for k in (Kind.BEAM, Kind.RIGID_MASS, Kind.LINEAR_COMB, Kind.BIAS_COMB, Kind.ANCHOR)]
    assert counts == [16, 4, 6, 4, 8]


def test_missing_parameter_names_w():
    with pytest.raises(ParseError) as err:
        parse_netlist("beam b1 l=200u")
    assert "'w'" in str(err.value)
    assert err.value.line == 1


@pytest.mark.parametrize("text, token", [
    ("beam b1 node=(a,b) l=200u w=2u\nbeam b1 node=(a,b) l=200u w=2u", "b1"),
    ("spring s1 node=(a) k=3", "spring"),
    ("mass m1 node=(a) w=10u h=abc", "abc"),
])
def test_parse_errors(text, token):
    with pytest.raises(ParseError) as err:
        parse_netlist(text)
    assert err.value.line is not None


def test_serialize_round_trip_gyro():
    n = fixtures.load("gyro")
    text = serialize_netlist(n)
    assert parse_netlist(text) == n
    assert serialize_netlist(parse_netlist(text)) == text


def test_position_in_micrometers():
    c = ComponentInstance(Kind.RIGID_MASS, "m", ("a",), {"w": 10 * UM, "h": 10 * UM}, (1500, 0))
    text = serialize_netlist(Netlist((c,)))
    assert "pos=(1.5u,0u)" in text


def test_validate_clean_chain():
    assert validate_netlist(parse_netlist(CHAIN), THIN) == []


def test_validate_dangling_and_unknown_layer():
    n = parse_netlist(CHAIN + "beam b2 node=(m,n9) l=100u w=2u pos=(0u,0u) layer=METAL9\n")
    issues = validate_netlist(n, THIN)
    assert any(i.code == "dangling-node" and i.subject == "n9" for i in issues)
    assert any(i.code == "unknown-layer" and i.subject == "b2" for i in issues)


def test_instance_invariants():
    with pytest.raises(NetlistError):
        ComponentInstance(Kind.BEAM, "b", ("a",), {"l": 10, "w": 1})
    with pytest.raises(NetlistError):
        ComponentInstance(Kind.RIGID_MASS, "m", ("a",), {"w": 0, "h": 1})
    with pytest.raises(NetlistError):
        Netlist((ComponentInstance(Kind.RIGID_MASS, "m", ("a",), {"w": 1, "h": 1}),) * 2)


def test_mass_footprint():
    c = ComponentInstance(Kind.RIGID_MASS, "m", ("a",), {"w": 100 * UM, "h": 50 * UM})
    assert component_footprint(c, THIN) == [("STRUCT", Polygon.rect(0, 0, 100_000, 50_000))]


def test_comb_footprint_fingers():
    params = {"fingers": 3, "fl": 30 * UM, "fw": 2 * UM, "gap": 2 * UM, "overlap": 20 * UM, "orient": "+y"}
    c = ComponentInstance(Kind.LINEAR_COMB, "c", ("a",), params)
    shapes = [p for _, p in component_footprint(c, THIN)]
    spine, fingers = shapes[0], shapes[1:]
    assert len(fingers) == 3
    x0s = sorted(f.bbox()[0] for f in fingers)
    assert np.diff(x0s).tolist() == [4000, 4000]
    span = max(f.bbox()[2] for f in fingers) - min(f.bbox()[0] for f in fingers)
    assert span == 3 * 2000 + 2 * 2000 == 10_000
    total = sum(p.area2() for p in shapes) // 2
    x0, y0, x1, y1 = spine.bbox()
    assert total == (x1 - x0) * (y1 - y0) + 3 * 30_000 * 2000


def test_beam_footprint_rotated():
    c = ComponentInstance(Kind.BEAM, "b", ("a", "b"), {"l": 200 * UM, "w": 4 * UM}, angle=90)
    [(layer, poly)] = component_footprint(c, THIN)
    assert poly == Polygon.rect(-2000, 0, 2000, 200_000)


def test_anchor_footprint_two_layers():
    c = ComponentInstance(Kind.ANCHOR, "a", ("g",), {"w": 20 * UM, "h": 10 * UM, "anchor_layer": "ANCHOR"})
    out = component_footprint(c, THIN)
    assert [ly for ly, _ in out] == ["ANCHOR", "STRUCT"]
    assert out[0][1] == out[1][1]


def test_non_manhattan_angle_warns():
    c = ComponentInstance(Kind.BEAM, "b", ("a", "b"), {"l": 100 * UM, "w": 2 * UM}, angle=30)
    with pytest.warns(UserWarning):
        out = component_footprint(c)
    assert len(out[0][1]) == 4


def test_beam_stiffness():
    c = ComponentInstance(Kind.BEAM, "b", ("a", "b"), {"l": 200 * UM, "w": 2 * UM})
    lp = lumped_params(c, SILICON, THIN)
    assert lp.k_lateral == pytest.approx(0.32, rel=1e-12)


def test_beam_stiffness_matches_fea():
    # one fixed-guided element: clamp node 0, guide node 1 (free only in uy)
    E = SILICON.youngs_modulus
    L, w, t = 200e-6, 2e-6, 2e-6
    model = FeaModel([[0, 0, 0], [L, 0, 0]], [BeamElement(0, 1, w, t, SILICON)],
                     fixed_dofs={(0, d) for d in range(6)} | {(1, d) for d in (0, 2, 3, 4, 5)})
    sysm = assemble(model)
    u = static_solve(sysm, np.array([1.0]))
    c = ComponentInstance(Kind.BEAM, "b", ("a", "b"), {"l": 200 * UM, "w": 2 * UM})
    assert 1.0 / u[0] == pytest.approx(lumped_params(c, SILICON, THIN).k_lateral, rel=1e-9)
    assert 1.0 / u[0] == pytest.approx(E * t * w**3 / L**3, rel=1e-9)


def test_mass_value():
    c = ComponentInstance(Kind.RIGID_MASS, "m", ("a",), {"w": 400 * UM, "h": 400 * UM})
    assert lumped_params(c, SILICON, THIN).mass == pytest.approx(7.456e-10, rel=1e-12)


def test_comb_gradient():
    params = {"fingers": 20, "fl": 30 * UM, "fw": 2 * UM, "gap": 2 * UM, "overlap": 20 * UM, "orient": "+x"}
    c = ComponentInstance(Kind.LINEAR_COMB, "c", ("a",), params)
    lp = lumped_params(c, SILICON, THIN)
    assert lp.dcdx == pytest.approx(40 * 8.8541878128e-12, rel=1e-9)
    assert lp.dcdx == pytest.approx(3.5416e-10, rel=1e-4)
    assert lp.c0 == pytest.approx(lp.dcdx * 20e-6)


def test_anchor_is_grounded():
    c = ComponentInstance(Kind.ANCHOR, "a", ("g",), {"w": 1, "h": 1, "anchor_layer": "ANCHOR"})
    assert lumped_params(c, SILICON, THIN).grounded


def test_material_invariants():
    with pytest.raises(ValueError):
        Material("x", 0.0, 0.2, 1.0)
    with pytest.raises(ValueError):
        Material("x", 1.0, 0.5, 1.0)
    assert SILICON.shear_modulus == pytest.approx(160e9 / (2 * 1.22))


def test_footprint_ignores_names():
    a = ComponentInstance(Kind.BEAM, "b1", ("p", "q"), {"l": 100 * UM, "w": 2 * UM}, (5000, 7000), angle=180)
    b = ComponentInstance(Kind.BEAM, "zz", ("r", "s"), {"l": 100 * UM, "w": 2 * UM}, (5000, 7000), angle=180)
    assert component_footprint(a) == component_footprint(b)
    assert math.isclose(a.length_m("l"), 1e-4)
