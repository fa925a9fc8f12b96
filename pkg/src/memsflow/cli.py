"""``memsflow`` command-line driver.

Exit status: 0 success, 2 parse error, 3 flow/semantic error, 4 I/O error.
Failures print one ``error: <class>: <detail>`` line to standard error.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .cif import emit_cif, parse_cif
from .demo import StageError, demo_pipeline, triangle_check
from .errors import MemsflowError, ParseError
from .esm import emit_esm, parse_esm
from .extract import ExtractionRules, layout_to_netlist, parse_rules
from .fea import DOF_NAMES, assemble, build_fea_model, export_matrices, load_matrices
from .flows import layout_to_solid, netlist_to_layout, netlist_to_solid, solid_to_layout
from .geometry import parse_stack
from .io import atomic_dir, atomic_write
from .mor import export_reduced, load_reduced, reduce, reduction_report, sweep_order, to_first_order
from .schematic import Kind, parse_netlist, serialize_netlist
from .sim import Attachment, build_sim_model, frequency_response, parse_run_config, transient


class CliError(Exception):
    def __init__(self, code, kind, detail):
        super().__init__(detail)
        self.code = code
        self.kind = kind


def _read(path, parser=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError:
        raise CliError(4, "io", path) from None
    if parser is None:
        return text
    try:
        return parser(text)
    except ParseError as exc:
        raise CliError(2, "parse", f"{path}: {exc}") from None


def _check_outputs(inputs, outputs):
    ins = {os.path.realpath(p) for p in inputs}
    for out in outputs:
        if os.path.realpath(out) in ins:
            raise CliError(3, "flow", f"output {out} would overwrite an input")


def _write(path, text):
    try:
        atomic_write(path, text)
    except OSError:
        raise CliError(4, "io", path) from None


def _material(netlist, stack):
    layer = next((c.layer for c in netlist.instances if c.kind in (Kind.BEAM, Kind.RIGID_MASS)), None)
    if layer is None:
        raise CliError(3, "flow", "netlist has no structural components")
    name = stack.layer(layer).material
    for table in (netlist.materials, stack.materials):
        for m in table:
            if m.name == name:
                return m
    raise CliError(3, "flow", f"material {name} undefined")


def _mode(text):
    if text == "direct":
        return "direct", 0.0
    if text.startswith("shift"):
        _, _, s0 = text.partition(":")
        try:
            return "shift_invert", float(s0) if s0 else 0.0
        except ValueError:
            pass
    raise CliError(2, "parse", f"--mode must be direct or shift:<s0>, got {text!r}")


# ------------------------------------------------------------------ commands

def cmd_synth_layout(a):
    n, st = _read(a.netlist, parse_netlist), _read(a.stack, parse_stack)
    _check_outputs([a.netlist, a.stack], [a.output])
    layout = netlist_to_layout(n, st, a.cell)
    _write(a.output, emit_cif(layout))
    per = " ".join(f"{ly}={len(layout.shapes[ly])}" for ly in layout.layers)
    return f"synth-layout: {len(n.instances)} instances -> {layout.shape_count()} shapes ({per})"


def cmd_synth_solid(a):
    n, st = _read(a.netlist, parse_netlist), _read(a.stack, parse_stack)
    _check_outputs([a.netlist, a.stack], [a.output])
    solid = netlist_to_solid(n, st)
    _write(a.output, emit_esm(solid))
    return f"synth-solid: {len(n.instances)} instances -> {len(solid.prisms)} prisms"


def cmd_solid2layout(a):
    solid, st = _read(a.solid, parse_esm), _read(a.stack, parse_stack)
    _check_outputs([a.solid, a.stack], [a.output])
    layout = solid_to_layout(solid, st, a.cell)
    _write(a.output, emit_cif(layout))
    return f"solid2layout: {len(solid.prisms)} prisms -> {layout.shape_count()} shapes"


def cmd_layout2solid(a):
    layout, st = _read(a.layout, parse_cif), _read(a.stack, parse_stack)
    _check_outputs([a.layout, a.stack], [a.output])
    solid = layout_to_solid(layout, st)
    _write(a.output, emit_esm(solid))
    return f"layout2solid: {layout.shape_count()} shapes -> {len(solid.prisms)} prisms"


def cmd_extract(a):
    layout, st = _read(a.layout, parse_cif), _read(a.stack, parse_stack)
    rules = _read(a.rules, parse_rules) if a.rules else ExtractionRules()
    side = a.output + ".unrecognized"
    _check_outputs([a.layout, a.stack] + ([a.rules] if a.rules else []), [a.output, side])
    rep = layout_to_netlist(layout, st, rules)
    _write(a.output, serialize_netlist(rep.recognized))
    if rep.unrecognized:
        lines = [f"{ly} {' '.join(f'{x},{y}' for x, y in poly.vertices)} # {why}" for ly, poly, why in rep.unrecognized]
        _write(side, "\n".join(lines) + "\n")
    elif os.path.exists(side):
        os.unlink(side)
    n = rep.recognized
    counts = " ".join(f"{k.value}={n.count(k)}" for k in Kind if n.count(k))
    return f"extract: {len(n.instances)} instances ({counts}), {len(rep.unrecognized)} unrecognized"


def _port(model, spec):
    node, _, dof = spec.partition(":")
    if node not in model.groups:
        raise CliError(3, "flow", f"port node {node!r} not in FEA model")
    if dof not in DOF_NAMES:
        raise CliError(2, "parse", f"port DOF must be one of {DOF_NAMES}, got {dof!r}")
    return model.groups[node], DOF_NAMES.index(dof)


def cmd_fea_assemble(a):
    n, st = _read(a.netlist, parse_netlist), _read(a.stack, parse_stack)
    _check_outputs([a.netlist, a.stack], [a.output])
    mat = _material(n, st)
    planar = None if a.planar == "none" else a.planar
    massless = tuple(x for x in a.massless.split(",") if x) if a.massless else ()
    model = build_fea_model(n, mat, st, a.refine, planar=planar, massless=massless)
    ports = a.port
    if not ports:
        masses = [c for c in n.instances if c.kind is Kind.RIGID_MASS]
        if not masses:
            raise CliError(3, "flow", "no --port given and no rigid mass to default to")
        big = max(masses, key=lambda c: c.params["w"] * c.params["h"])
        ports = [f"{big.nodes[0]}:{'uz' if planar == 'out' else 'ux'}"]
    dofs = [_port(model, p) for p in ports]
    sysm = assemble(model, [(node, d, 1.0) for node, d in dofs], dofs, a.alpha, a.beta)
    try:
        with atomic_dir(a.output) as tmp:
            export_matrices(sysm, tmp)
    except OSError:
        raise CliError(4, "io", a.output) from None
    return (f"fea-assemble: {model.n_nodes} nodes, {len(model.elements)} elements, "
            f"{len(model.rigid_links)} rigid links, N={sysm.n} DOFs, ports={','.join(ports)}")


def _load_fea(path):
    if not os.path.isfile(os.path.join(path, "manifest.json")):
        raise CliError(4, "io", os.path.join(path, "manifest.json"))
    try:
        return load_matrices(path)
    except OSError:
        raise CliError(4, "io", path) from None
    except (ValueError, KeyError) as exc:
        raise CliError(2, "parse", f"{path}: {exc}") from None


def cmd_mor_reduce(a):
    sysm = _load_fea(a.matrices)
    _check_outputs([a.matrices], [a.output])
    mode, s0 = _mode(a.mode)
    ss = to_first_order(sysm, a.input_index, mass_normalized=(a.coords == "mass"))
    probe = 2j * math.pi * np.logspace(math.log10(a.fmin), math.log10(a.fmax), 9)
    if a.sweep is not None:
        r, rep = sweep_order(ss, probe, a.sweep, q0=ss.N if a.q == "full" else int(a.q), mode=mode, s0=s0)
    else:
        q = ss.N if a.q == "full" else int(a.q)
        r = reduce(ss, q, mode, s0)
        rep = reduction_report(ss, r, probe)
    r.dof_map = [[lab, idx] for idx, lab in enumerate(sysm.labels)]
    try:
        with atomic_dir(a.output) as tmp:
            export_reduced(r, tmp)
    except OSError:
        raise CliError(4, "io", a.output) from None
    return (f"mor-reduce: N={ss.N} -> q={r.q} mode={r.mode} s0={r.s0:g} breakdown={r.breakdown} "
            f"tf_max_rel_error={rep['max_rel_error']:.3e} max_real_pole={rep['max_real_pole']:.3e} "
            f"stable={rep['stable']}")


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.join(base, path)


def _sim_setup(a):
    cfg = _read(a.config, parse_run_config)
    base = os.path.dirname(os.path.abspath(a.config))
    for key in ("netlist", "stack"):
        if key not in cfg:
            raise CliError(2, "parse", f"{a.config}: missing {key}=")
    n = _read(_resolve(base, cfg["netlist"]), parse_netlist)
    st = _read(_resolve(base, cfg["stack"]), parse_stack)
    mat = _material(n, st)
    macros = []
    for mm in cfg.get("macromodels", []):
        path = _resolve(base, mm["path"])
        if os.path.isfile(os.path.join(path, "A_r.mtx")):
            model = load_reduced(path)
        else:
            model = to_first_order(_load_fea(path), mass_normalized=True)
        node, _, axis = mm["port"].partition(":")
        covers = mm.get("covers", ())
        if covers == ("auto",):
            covers = tuple(c.name for c in n.instances if c.kind is Kind.BEAM
                           or (c.kind is Kind.RIGID_MASS and node not in c.nodes))
        macros.append(Attachment(model, node, axis or "z", covers))
    model = build_sim_model(n, mat, st, macros, cfg.get("axes", "x"), cfg.get("alpha", 0.0), cfg.get("beta", 0.0))
    inputs = [a.config, _resolve(base, cfg["netlist"]), _resolve(base, cfg["stack"])]
    return cfg, model, inputs


def cmd_sim_transient(a):
    cfg, model, inputs = _sim_setup(a)
    _check_outputs(inputs, [a.output])
    dt = a.dt if a.dt is not None else cfg.get("dt")
    t_end = a.tend if a.tend is not None else cfg.get("t_end")
    if dt is None or t_end is None:
        raise CliError(2, "parse", f"{a.config}: dt and t_end are required")
    res = transient(model, cfg["sources"], t_end, dt, probes=cfg.get("probes"))
    _write(a.output, res.to_csv())
    return (f"sim-transient: {model.n_states} states, {res.stats['steps']} steps, "
            f"{len(res.signals)} probes, {res.stats['wall_time']:.3f} s")


def cmd_sim_ac(a):
    cfg, model, inputs = _sim_setup(a)
    _check_outputs(inputs, [a.output])
    for key in ("input", "output", "fmin", "fmax"):
        if key not in cfg:
            raise CliError(2, "parse", f"{a.config}: missing {key}=")
    points = int(cfg.get("points", 201))
    if cfg.get("scale", "log") == "log":
        freqs = np.logspace(math.log10(cfg["fmin"]), math.log10(cfg["fmax"]), points)
    else:
        freqs = np.linspace(cfg["fmin"], cfg["fmax"], points)
    h = frequency_response(model, cfg["input"], cfg["output"], freqs, cfg.get("bias", 0.0))
    rows = ["f,re,im,mag"] + [f"{f:.17g},{v.real:.17g},{v.imag:.17g},{abs(v):.17g}" for f, v in zip(freqs, h)]
    _write(a.output, "\n".join(rows) + "\n")
    peak = freqs[np.nanargmax(np.abs(h))] if np.isfinite(h).any() else float("nan")
    return f"sim-ac: {points} points, peak |H| at {peak:.6g} Hz, {int((~np.isfinite(h)).sum())} singular"


def cmd_verify_triangle(a):
    n, st = _read(a.netlist, parse_netlist), _read(a.stack, parse_stack)
    equal = triangle_check(n, st)
    body = " ".join(f"{ly}={'equal' if ok else 'DIFFERENT'}" for ly, ok in equal.items())
    if not all(equal.values()):
        raise CliError(3, "flow", f"triangle check failed: {body}")
    return f"verify-triangle: ok {body}"


def _demo(which, a):
    kw = {}
    if which == "accel":
        kw = {"q": math.inf if a.q == "full" else int(a.q), "refine": a.refine}
    try:
        rep = demo_pipeline(which, a.output, **kw)
    except StageError as exc:
        raise CliError(3, "flow", str(exc)) from None
    for line in rep.lines():
        print(line)
    metrics = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in rep.metrics.items())
    return f"demo-{which}: ok {len(rep.stages)} stages {metrics}"


# ------------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="memsflow", description="MEMS design-flow toolkit.")
    p.add_argument("--version", action="version", version=f"memsflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def two_in(name, first, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument(first)
        sp.add_argument("stack")
        sp.add_argument("-o", "--output", required=True)
        sp.set_defaults(func=func)
        return sp

    two_in("synth-layout", "netlist", cmd_synth_layout, "netlist -> CIF layout").add_argument("--cell", default="1")
    two_in("synth-solid", "netlist", cmd_synth_solid, "netlist -> ESM solid")
    two_in("solid2layout", "solid", cmd_solid2layout, "ESM solid -> CIF layout").add_argument("--cell", default="1")
    two_in("layout2solid", "layout", cmd_layout2solid, "CIF layout -> ESM solid")
    sp = two_in("extract", "layout", cmd_extract, "CIF layout -> netlist")
    sp.add_argument("--rules")

    sp = two_in("fea-assemble", "netlist", cmd_fea_assemble, "netlist -> FEA matrices directory")
    sp.add_argument("--refine", type=int, default=1)
    sp.add_argument("--planar", choices=("in", "out", "none"), default="none")
    sp.add_argument("--port", action="append", default=[], help="NODE:DOF (ux..rz), repeatable")
    sp.add_argument("--massless", default="", help="comma list of masses to drop translational mass from")
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--beta", type=float, default=0.0)

    sp = sub.add_parser("mor-reduce", help="FEA matrices -> reduced model bundle")
    sp.add_argument("matrices")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--q", default="10")
    sp.add_argument("--mode", default="shift:0")
    sp.add_argument("--coords", choices=("mass", "physical"), default="mass")
    sp.add_argument("--input-index", type=int, default=0)
    sp.add_argument("--sweep", type=float, help="double q until the probe-frequency error drops below this")
    sp.add_argument("--fmin", type=float, default=1e2)
    sp.add_argument("--fmax", type=float, default=1e4)
    sp.set_defaults(func=cmd_mor_reduce)

    for name, func, what in (("sim-transient", cmd_sim_transient, "transient run"),
                             ("sim-ac", cmd_sim_ac, "small-signal frequency response")):
        sp = sub.add_parser(name, help=f"{what} described by a key=value config")
        sp.add_argument("config")
        sp.add_argument("-o", "--output", required=True)
        if name == "sim-transient":
            sp.add_argument("--dt", type=float)
            sp.add_argument("--tend", type=float)
        sp.set_defaults(func=func)

    sp = sub.add_parser("verify-triangle", help="check netlist->layout == netlist->solid->layout")
    sp.add_argument("netlist")
    sp.add_argument("stack")
    sp.set_defaults(func=cmd_verify_triangle)

    sp = sub.add_parser("demo-gyro", help="system -> solid -> layout demo")
    sp.add_argument("-o", "--output", default="demo-gyro")
    sp.set_defaults(func=lambda a: _demo("gyro", a))
    sp = sub.add_parser("demo-accel", help="layout -> solid -> system demo")
    sp.add_argument("-o", "--output", default="demo-accel")
    sp.add_argument("--q", default="10")
    sp.add_argument("--refine", type=int, default=1)
    sp.set_defaults(func=lambda a: _demo("accel", a))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        summary = args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except ParseError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc.filename or exc}", file=sys.stderr)
        return 4
    except (MemsflowError, ValueError, KeyError) as exc:
        print(f"error: flow: {exc}", file=sys.stderr)
        return 3
    print(f"{summary} [{time.perf_counter() - t0:.3f} s]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
