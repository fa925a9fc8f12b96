"""End-to-end pipelines over the bundled gyroscope and accelerometer."""

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import fixtures
from .cif import emit_cif, parse_cif
from .esm import emit_esm, parse_esm
from .errors import MemsflowError
from .extract import layout_to_netlist
from .fea import assemble, build_fea_model, export_matrices, modal_analysis
from .flows import layout_to_solid, netlist_to_layout, netlist_to_solid, solid_to_layout
from .geometry import polygon_set_equal
from .mor import export_reduced, reduce, reduction_report, to_first_order
from .schematic import Kind, lumped_params, serialize_netlist, validate_netlist
from .sim import Attachment, Source, build_sim_model, compare_results, frequency_response, stable_step, transient
from .io import atomic_write


class StageError(MemsflowError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Report:
    which: str
    stages: list = field(default_factory=list)  # [(name, summary dict)]
    metrics: dict = field(default_factory=dict)

    def stage(self, name):
        for n, s in self.stages:
            if n == name:
                return s
        raise KeyError(name)

    def lines(self):
        out = []
        for name, summary in self.stages:
            body = " ".join(f"{k}={_fmt(v)}" for k, v in summary.items())
            out.append(f"{self.which} {name}: {body}")
        return out


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


class _Runner:
    def __init__(self, report):
        self.report = report

    def __call__(self, name, fn):
        t0 = time.perf_counter()
        try:
            summary, value = fn()
        except Exception as exc:  # any stage failure aborts with the stage name
            raise StageError(name, exc) from exc
        summary["seconds"] = round(time.perf_counter() - t0, 4)
        self.report.stages.append((name, summary))
        return value


def triangle_check(netlist, stack):
    """Per-layer equality of netlist->layout and netlist->solid->layout."""
    direct = netlist_to_layout(netlist, stack)
    via = solid_to_layout(netlist_to_solid(netlist, stack), stack)
    layers = sorted(set(direct.layers) | set(via.layers))
    equal = {ly: polygon_set_equal(direct.shapes.get(ly, ()), via.shapes.get(ly, ())) for ly in layers}
    return equal


def _gyro(workdir, report, run):
    netlist = fixtures.load("gyro")
    stack = fixtures.load("soi")
    si = stack.material("si")

    def s_netlist():
        issues = validate_netlist(netlist, stack)
        if issues:
            raise ValueError(issues[0].message)
        counts = {k.value: netlist.count(k) for k in Kind}
        return dict(instances=len(netlist.instances), **counts), None

    def s_solid():
        solid = netlist_to_solid(netlist, stack, "gyro")
        atomic_write(os.path.join(workdir, "gyro.esm"), emit_esm(solid))
        return {"prisms": len(solid.prisms)}, solid

    run("netlist", s_netlist)
    solid = run("solid", s_solid)

    def s_layout():
        layout = solid_to_layout(parse_esm(emit_esm(solid)), stack)
        text = emit_cif(layout)
        atomic_write(os.path.join(workdir, "gyro.cif"), text)
        if parse_cif(text).shapes != layout.shapes:
            raise ValueError("CIF round trip changed the layout")
        return {"shapes": layout.shape_count(), "layers": ",".join(layout.layers)}, layout

    run("layout", s_layout)

    def s_triangle():
        equal = triangle_check(netlist, stack)
        if not all(equal.values()):
            raise ValueError(f"layers differ: {[k for k, v in equal.items() if not v]}")
        return {ly: "equal" for ly in equal}, None

    run("triangle", s_triangle)

    def s_ac():
        model = build_sim_model(netlist, si, stack, axes="x", beta=1e-8)
        freqs = np.linspace(40e3, 80e3, 2001)
        h = frequency_response(model, "lc1", "m1:x", freqs, bias=10.0)
        peak = float(freqs[np.nanargmax(np.abs(h))])
        rows = ["f,mag,phase"] + [f"{f:.17g},{abs(v):.17g},{np.angle(v):.17g}" for f, v in zip(freqs, h)]
        atomic_write(os.path.join(workdir, "gyro_ac.csv"), "\n".join(rows) + "\n")
        fea = build_fea_model(netlist, si, stack, refine=4, planar="in")
        f_fea = modal_analysis(assemble(fea), 1)[0][0]
        err = abs(peak - f_fea) / f_fea
        report.metrics.update(drive_peak_hz=peak, fea_drive_hz=f_fea, drive_rel_diff=err)
        if err > 0.05:
            raise ValueError(f"drive-mode peak {peak:.6g} Hz is {err:.3%} from FEA {f_fea:.6g} Hz")
        return {"peak_hz": peak, "fea_hz": f_fea, "rel_diff": err}, None

    run("ac", s_ac)


def _proof_mass(netlist):
    masses = [c for c in netlist.instances if c.kind is Kind.RIGID_MASS]
    return max(masses, key=lambda c: c.params["w"] * c.params["h"])


def accel_sources(node, mass, f0):
    """A 10 g quarter-period shock plus a 5 g sine at a third of the resonance."""
    period = 1.0 / f0
    return [Source("pulse", f"{node}:z", "F", 10 * 9.81 * mass, t_on=0.0, t_off=period / 4),
            Source("sine", f"{node}:z", "F", 5 * 9.81 * mass, frequency=f0 / 3)]


def _fundamental(model):
    ev = np.linalg.eigvals(model.A)
    ev = ev[np.abs(ev) > 1e-6 * np.abs(ev).max()]
    return float(np.abs(ev.imag).min() / (2 * math.pi))


def _accel(workdir, report, run, q, refine, periods):
    stack = fixtures.load("accel_stack")
    si = stack.material("si")

    def s_layout():
        layout = fixtures.load("accel")
        return {"shapes": layout.shape_count()}, layout

    layout = run("layout", s_layout)

    def s_solid():
        solid = layout_to_solid(layout, stack, "accel")
        atomic_write(os.path.join(workdir, "accel.esm"), emit_esm(solid))
        if solid_to_layout(solid, stack).shapes != layout.shapes:
            raise ValueError("solid does not project back onto the layout")
        return {"prisms": len(solid.prisms)}, solid

    solid = run("solid", s_solid)

    def s_extract():
        rep = layout_to_netlist(solid_to_layout(solid, stack), stack)
        if not rep.ok:
            raise ValueError(f"{len(rep.unrecognized)} unrecognized shapes")
        n = rep.recognized
        atomic_write(os.path.join(workdir, "accel.net"), serialize_netlist(n))
        return {k.value: n.count(k) for k in Kind} | {"nodes": len(n.nodes)}, n

    netlist = run("extract", s_extract)
    proof = _proof_mass(netlist)
    port_node = proof.nodes[0]
    covers = tuple(c.name for c in netlist.instances
                   if c.kind in (Kind.BEAM, Kind.RIGID_MASS) and c.name != proof.name)

    def s_fea():
        model = build_fea_model(netlist, si, stack, refine=refine, planar="out", massless=(proof.name,))
        port = model.groups[port_node]
        sysm = assemble(model, [(port, 2, 1.0)], [(port, 2)])
        export_matrices(sysm, os.path.join(workdir, "fea"))
        return {"nodes": model.n_nodes, "elements": len(model.elements), "dofs": sysm.n}, sysm

    sysm = run("fea", s_fea)
    full_ss = to_first_order(sysm, mass_normalized=True)

    def s_mor():
        r = reduce(full_ss, min(q, full_ss.N))
        r.dof_map = [[lab, idx] for idx, lab in enumerate(sysm.labels)]
        export_reduced(r, os.path.join(workdir, "reduced"))
        probe = 2j * math.pi * np.logspace(2, 4, 9)
        rep = reduction_report(full_ss, r, probe)
        return {"N": full_ss.N, "q": r.q, "breakdown": r.breakdown,
                "tf_max_rel_error": rep["max_rel_error"], "max_real_pole": rep["max_real_pole"]}, r

    reduced = run("mor", s_mor)

    def build(mm):
        return build_sim_model(netlist, si, stack, [Attachment(mm, port_node, "z", covers)], axes="z")

    def s_transient():
        full = build(full_ss)
        red = build(reduced)
        f0 = _fundamental(full)
        mass = lumped_params(proof, si, stack).mass
        sources = accel_sources(port_node, mass, f0)
        t_end = periods / f0
        probes = [f"{port_node}:z"]
        dt_full = min(stable_step(full), 1 / (200 * f0))
        dt_red = min(stable_step(red), 1 / (200 * f0))
        r_full = transient(full, sources, t_end, dt_full, probes=probes)
        r_red = transient(red, sources, t_end, dt_red, probes=probes)
        atomic_write(os.path.join(workdir, "transient_full.csv"), r_full.to_csv())
        atomic_write(os.path.join(workdir, "transient_reduced.csv"), r_red.to_csv())
        return {"f0_hz": f0, "full_states": full.n_states, "reduced_states": red.n_states,
                "full_steps": r_full.stats["steps"], "reduced_steps": r_red.stats["steps"]}, (r_full, r_red)

    r_full, r_red = run("transient", s_transient)

    def s_compare():
        cmp = compare_results(r_full, r_red)
        worst = max(p["rel_l2"] for p in cmp["probes"].values())
        report.metrics.update(rel_l2=worst, wall_time_ratio=cmp["wall_time_ratio"], q=reduced.q)
        return {"rel_l2": worst, "wall_time_ratio": cmp["wall_time_ratio"]}, cmp

    run("compare", s_compare)


def demo_pipeline(which, workdir, q=10, refine=1, periods=3.0):
    """Run the ``gyro`` (system->solid->layout) or ``accel`` (layout->solid->system) flow.

    Artifacts land in ``workdir``; the returned Report lists each stage's
    summary in execution order. A failing stage raises StageError.
    """
    os.makedirs(workdir, exist_ok=True)
    report = Report(which)
    run = _Runner(report)
    if which == "gyro":
        _gyro(workdir, report, run)
    elif which == "accel":
        _accel(workdir, report, run, q, refine, periods)
    else:
        raise ValueError(f"unknown demo {which!r}")
    atomic_write(os.path.join(workdir, "report.txt"), "\n".join(report.lines()) + "\n")
    return report
