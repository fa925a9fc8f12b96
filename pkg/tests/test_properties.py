"""Property-based checks of the stated invariants."""

import random

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import random_device, random_layout, random_rectilinear, random_separated, signature, stack
from memsflow.cif import emit_cif, parse_cif
from memsflow.esm import emit_esm, parse_esm
from memsflow.extract import layout_to_netlist
from memsflow.fea import BeamElement, FeaModel, assemble, static_solve
from memsflow.flows import layout_to_solid, netlist_to_layout, netlist_to_solid, solid_to_layout
from memsflow.geometry import Layout, Polygon, extrude_polygon, normalize_polygon, polygon_set_equal, project_prism
from memsflow.materials import SILICON
from memsflow.mor import StateSpace, arnoldi, reduce
from memsflow.schematic import ComponentInstance, Kind, component_footprint, lumped_params, parse_netlist, \
    serialize_netlist

STACK = stack()
seeds = st.integers(min_value=0, max_value=2**32 - 1)
fast = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def test_normalize_idempotent_thousand():
    rng = random.Random(2024)
    for _ in range(1000):
        p = random_rectilinear(rng)
        once = normalize_polygon(p)
        assert normalize_polygon(once) == once


@fast
@given(seeds)
def test_normalize_preserves_area_and_orients(seed):
    p = random_rectilinear(random.Random(seed))
    q = normalize_polygon(p)
    assert abs(p.area2()) == q.area2() > 0
    assert q.vertices[0] == min(q.vertices)
    assert normalize_polygon(q) == q


@fast
@given(seeds, st.integers(0, 11))
def test_normalize_ignores_start_and_direction(seed, shift):
    p = normalize_polygon(random_rectilinear(random.Random(seed)))
    v = list(p.vertices)
    k = shift % len(v)
    rolled = Polygon(tuple(v[k:] + v[:k]))
    flipped = Polygon(tuple(reversed(v)))
    assert normalize_polygon(rolled) == p == normalize_polygon(flipped)


@fast
@given(seeds)
def test_polygon_set_equal_is_equivalence(seed):
    rng = random.Random(seed)
    a = [random_rectilinear(rng) for _ in range(rng.randint(0, 4))]
    b = [Polygon(tuple(reversed(p.vertices))) for p in reversed(a)]
    c = [normalize_polygon(p) for p in a]
    d = a + [random_rectilinear(rng)]
    assert polygon_set_equal(a, a)
    assert polygon_set_equal(a, b) and polygon_set_equal(b, a)
    assert polygon_set_equal(b, c) and polygon_set_equal(a, c)
    assert not polygon_set_equal(a, d) and not polygon_set_equal(d, a)


@fast
@given(seeds)
def test_cif_round_trips(seed):
    lay = random_layout(random.Random(seed))
    text = emit_cif(lay)
    assert parse_cif(text) == lay
    assert emit_cif(parse_cif(text)) == text


@fast
@given(seeds)
def test_esm_round_trip_and_projection(seed):
    lay = random_layout(random.Random(seed))
    solid = layout_to_solid(lay, STACK, "s")
    assert parse_esm(emit_esm(solid)) == solid
    assert solid_to_layout(solid, STACK, lay.cell_name) == lay
    assert layout_to_solid(solid_to_layout(solid, STACK), STACK, "s") == solid
    for layer, p in lay.pairs():
        assert project_prism(extrude_polygon(p, layer, STACK), STACK) == (layer, normalize_polygon(p))


@fast
@given(seeds)
def test_netlist_round_trip(seed):
    n = random_device(random.Random(seed))
    text = serialize_netlist(n)
    assert parse_netlist(text) == n
    assert serialize_netlist(parse_netlist(text)) == text


@fast
@given(seeds)
def test_triangle_commutes(seed):
    n = random_device(random.Random(seed))
    direct = netlist_to_layout(n, STACK)
    via = solid_to_layout(netlist_to_solid(n, STACK), STACK)
    for layer in set(direct.layers) | set(via.layers):
        assert polygon_set_equal(direct.shapes.get(layer, ()), via.shapes.get(layer, ()))


@fast
@given(seeds)
def test_footprints_valid(seed):
    for c in random_device(random.Random(seed)).instances:
        for _, p in component_footprint(c, STACK):
            assert normalize_polygon(p) == p and p.area2() > 0


@fast
@given(seeds)
def test_extraction_inverse_and_conservation(seed):
    n = random_separated(random.Random(seed))
    lay = Layout.from_pairs([p for c in n.instances for p in component_footprint(c, STACK)])
    rep = layout_to_netlist(lay, STACK)
    assert rep.ok
    assert signature(rep.recognized) == signature(n)
    relay = Layout.from_pairs([p for c in rep.recognized.instances for p in component_footprint(c, STACK)])
    assert relay.shape_count() + len(rep.unrecognized) == lay.shape_count()


@fast
@given(seeds)
def test_extraction_conservation_arbitrary(seed):
    lay = random_layout(random.Random(seed))
    rep = layout_to_netlist(lay, STACK)
    regenerated = sum(len(component_footprint(c)) for c in rep.recognized.instances)
    assert regenerated + len(rep.unrecognized) == lay.shape_count()


@fast
@given(st.integers(2, 40), st.integers(1, 8), st.integers(10, 400))
def test_beam_stiffness_matches_fea(w_um, t_um, l_um):
    from memsflow.geometry import ProcessStack, StackLayer
    w_um = min(w_um, l_um - 1)
    stk = ProcessStack("p", (StackLayer("STRUCT", 0, t_um * 1000, "si"),))
    c = ComponentInstance(Kind.BEAM, "b", ("a", "b"), {"l": l_um * 1000, "w": w_um * 1000})
    L, w, t = l_um * 1e-6, w_um * 1e-6, t_um * 1e-6
    model = FeaModel([[0, 0, 0], [L, 0, 0]], [BeamElement(0, 1, w, t, SILICON)],
                     fixed_dofs={(0, d) for d in range(6)} | {(1, d) for d in (0, 2, 3, 4, 5)})
    sysm = assemble(model)
    k = 1.0 / static_solve(sysm, np.array([1.0]))[0]
    assert abs(k - lumped_params(c, SILICON, stk).k_lateral) <= 1e-9 * k


def _random_stable(rng, n):
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    A -= (np.linalg.eigvals(A).real.max() + 0.5) * np.eye(n)
    return StateSpace(A, rng.standard_normal(n), rng.standard_normal((1, n)))


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(10, 50), st.integers(1, 10))
def test_moment_matching(seed, n, q):
    rng = np.random.default_rng(seed)
    ss = _random_stable(rng, n)
    d = reduce(ss, q, "direct")
    x, xr = ss.b, d.b_r
    for _ in range(d.q):
        ref = (ss.c @ x)[0]
        assert abs((d.c_r @ xr)[0] - ref) <= 1e-8 * max(abs(ref), 1e-300) + 1e-14 * np.linalg.norm(ss.c) * np.linalg.norm(x)
        x, xr = ss.A @ x, d.A_r @ xr
    s = reduce(ss, q, "shift_invert")
    x, xr = np.linalg.solve(ss.A, ss.b), np.linalg.solve(s.A_r, s.b_r)
    for _ in range(s.q):
        ref = (ss.c @ x)[0]
        assert abs((s.c_r @ xr)[0] - ref) <= 1e-8 * max(abs(ref), 1e-300) + 1e-14 * np.linalg.norm(ss.c) * np.linalg.norm(x)
        x, xr = np.linalg.solve(ss.A, x), np.linalg.solve(s.A_r, xr)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 50), st.integers(1, 60))
def test_arnoldi_orthonormal(seed, n, q):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    basis = arnoldi(lambda x: A @ x, rng.standard_normal(n), q)
    V = basis.V
    assert basis.k <= min(q, n)
    assert np.abs(V.T @ V - np.eye(basis.k)).max() < 1e-12
    assert np.allclose(np.tril(basis.H, -2), 0)
