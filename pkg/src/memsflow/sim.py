"""Lumped behavioral simulation: masses, beam springs, comb drives, macromodels.

Probes are named ``<node>:<axis>`` (displacement), ``C(<comb>)``
(capacitance) and ``I(<comb>)`` (motional current).
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParseError
from .mor import StateSpace, transfer_function
from .schematic import Kind, lumped_params
from ._text import logical_lines, parse_float, split_args

AXES = "xyz"
SOURCE_KINDS = ("step", "pulse", "sine", "dc")
_ORIENT_AXIS = {"+x": ("x", 1.0), "-x": ("x", -1.0), "+y": ("y", 1.0), "-y": ("y", -1.0)}


@dataclass(frozen=True)
class Source:
    """Voltage (``quantity="V"``) on a comb or force (``"F"``) on ``node:axis``."""

    kind: str
    target: str
    quantity: str = "F"
    amplitude: float = 1.0
    t_on: float = 0.0
    t_off: float = math.inf
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.quantity not in ("V", "F"):
            raise ValueError("source quantity must be V or F")
        if self.kind == "sine" and not self.frequency > 0:
            raise ValueError("sine frequency must be positive")
        if self.kind == "pulse" and not self.t_off > self.t_on:
            raise ValueError("pulse needs t_off > t_on")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        a = self.amplitude
        if self.kind == "dc":
            return np.full(t.shape, a)
        if self.kind == "step":
            return np.where(t >= self.t_on, a, 0.0)
        if self.kind == "pulse":
            return np.where((t >= self.t_on) & (t < self.t_off), a, 0.0)
        return a * np.sin(2 * math.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class Attachment:
    """A force-in / displacement-out macromodel tied to ``node`` along ``axis``.

    ``covers`` names the netlist instances the macromodel replaces.
    """

    model: object
    node: str
    axis: str = "z"
    covers: tuple = ()


@dataclass
class CombTerm:
    name: str
    dof: int  # None when the comb moves along a grounded or unsimulated axis
    dcdx: float
    c0: float
    sign: float


@dataclass
class SimModel:
    dofs: list  # [(node, axis)]
    M: np.ndarray  # lumped mass (no macromodel contribution)
    K: np.ndarray
    C: np.ndarray
    A: np.ndarray  # full state matrix
    Bf: np.ndarray  # state derivative per unit DOF force
    states: list
    combs: dict = field(default_factory=dict)
    macro_orders: tuple = ()

    @property
    def n_dofs(self):
        return len(self.dofs)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def probes(self):
        names = [f"{n}:{a}" for n, a in self.dofs]
        for c in self.combs:
            names += [f"C({c})", f"I({c})"]
        return names

    def dof_index(self, name):
        node, _, axis = name.rpartition(":")
        try:
            return self.dofs.index((node, axis))
        except ValueError:
            raise KeyError(f"no simulated DOF {name!r}") from None

    def energy(self, state):
        """Mechanical energy of the lumped part (macromodel states excluded)."""
        n = self.n_dofs
        x, v = state[..., :n], state[..., n:2 * n]
        return 0.5 * np.einsum("...i,ij,...j", v, self.M, v) + 0.5 * np.einsum("...i,ij,...j", x, self.K, x)

    @classmethod
    def from_matrices(cls, M, K, C=None, labels=None):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        K = np.atleast_2d(np.asarray(K, dtype=float))
        n = M.shape[0]
        C = np.zeros((n, n)) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
        labels = labels or [f"d{i}" for i in range(n)]
        return _assemble([(lab, "x") for lab in labels], M, K, C, [], {})


@dataclass
class SimResult:
    time: np.ndarray
    signals: dict
    stats: dict

    def to_csv(self):
        names = list(self.signals)
        rows = [",".join(["t"] + names)]
        cols = [self.time] + [self.signals[n] for n in names]
        for row in zip(*cols):
            rows.append(",".join(format(float(v), ".17g") for v in row))
        return "\n".join(rows) + "\n"


def _assemble(dofs, M, K, C, macros, combs):
    n = len(dofs)
    q_total = sum(mm.A.shape[0] for mm, _ in macros)
    ns = 2 * n + q_total
    Meff = M.copy()
    for mm, d in macros:
        g = float(mm.c[0] @ mm.A @ mm.b)
        Meff[d, d] += 1.0 / g
    Minv = np.linalg.inv(Meff) if n else np.zeros((0, 0))
    A = np.zeros((ns, ns))
    Bf = np.zeros((ns, n))
    A[:n, n:2 * n] = np.eye(n)
    A[n:2 * n, :n] = -Minv @ K
    A[n:2 * n, n:2 * n] = -Minv @ C
    Bf[n:2 * n] = Minv
    states = [f"x:{a}:{b}" for a, b in dofs] + [f"v:{a}:{b}" for a, b in dofs]
    slices = []
    off = 2 * n
    for mm, d in macros:
        q = mm.A.shape[0]
        sl = slice(off, off + q)
        a = mm.c[0] @ mm.A @ mm.A
        g = float(mm.c[0] @ mm.A @ mm.b)
        # lumped rows gain the port acceleration feedback a.z / g
        A[n:2 * n, sl] += np.outer(Minv[:, d], a) / g
        slices.append((sl, a, g))
        off += q
    for i, ((mm, d), (sl, a, g)) in enumerate(zip(macros, slices)):
        # z' = A z + b F, with F = (e_d . v' - a.z) / g
        A[sl, sl] += mm.A - np.outer(mm.b, a) / g
        A[sl, :] += np.outer(mm.b, A[n + d, :]) / g
        Bf[sl] += np.outer(mm.b, Bf[n + d]) / g
        states += [f"z{i}:{j}" for j in range(mm.A.shape[0])]
    return SimModel(list(dofs), M, K, C, A, Bf, states, combs, tuple(mm.A.shape[0] for mm, _ in macros))


def _beam_stiffness(lp, angle_deg, axes):
    th = math.radians(angle_deg)
    e = np.array([math.cos(th), math.sin(th), 0.0])
    p = np.array([-math.sin(th), math.cos(th), 0.0])
    z = np.array([0.0, 0.0, 1.0])
    k3 = lp.k_axial * np.outer(e, e) + lp.k_lateral * np.outer(p, p) + lp.k_out * np.outer(z, z)
    idx = [AXES.index(a) for a in axes]
    return k3[np.ix_(idx, idx)]


def build_sim_model(netlist, material, stack, macromodels=(), axes="x", alpha=0.0, beta=0.0):
    """Lumped equations of motion for ``netlist`` along ``axes``.

    Masses lump at their node; each beam's own mass is split between its
    ends. Macromodels (``Attachment``) replace the instances they cover and
    couple through a force/displacement port at their node.
    """
    if not axes or any(a not in AXES for a in axes) or len(set(axes)) != len(axes):
        raise ValueError(f"axes must be a subset of {AXES!r}")
    covered = {name for att in macromodels for name in att.covers}
    for name in covered:
        netlist.instance(name)
    grounded = {n for c in netlist.instances if c.kind is Kind.ANCHOR for n in c.nodes}
    active = [c for c in netlist.instances if c.name not in covered]
    nodes = []
    for c in active:
        if c.kind in (Kind.BEAM, Kind.RIGID_MASS):
            nodes += [n for n in c.nodes if n not in grounded and n not in nodes]
    for att in macromodels:
        if att.node in grounded:
            raise ValueError(f"macromodel node {att.node!r} is grounded")
        if att.node not in netlist.nodes:
            raise ValueError(f"macromodel node {att.node!r} not in netlist")
        if att.node not in nodes:
            nodes.append(att.node)
    dofs = [(n, a) for n in nodes for a in axes]
    nd = len(dofs)
    where = {d: i for i, d in enumerate(dofs)}
    M = np.zeros((nd, nd))
    K = np.zeros((nd, nd))
    for c in active:
        if c.kind is Kind.RIGID_MASS:
            lp = lumped_params(c, material, stack)
            for node in c.nodes:
                if node not in grounded:
                    for a in axes:
                        M[where[(node, a)], where[(node, a)]] += lp.mass / len(c.nodes)
        elif c.kind is Kind.BEAM:
            lp = lumped_params(c, material, stack)
            kb = _beam_stiffness(lp, c.angle, axes)
            ends = [[where.get((node, a)) for a in axes] for node in c.nodes]
            for i, ei in enumerate(ends):
                for j, ej in enumerate(ends):
                    sign = 1.0 if i == j else -1.0
                    for r, ir in enumerate(ei):
                        for s, js in enumerate(ej):
                            if ir is not None and js is not None:
                                K[ir, js] += sign * kb[r, s]
                for ir in ei:
                    if ir is not None:
                        M[ir, ir] += lp.mass / 2
    for i, d in enumerate(dofs):
        if M[i, i] <= 0 and not any(att.node == d[0] and att.axis == d[1] for att in macromodels):
            raise NumericalError(f"node {d[0]!r} carries no mass")
    combs = {}
    for c in active:
        if not c.kind.is_comb:
            continue
        lp = lumped_params(c, material, stack)
        axis, sign = _ORIENT_AXIS[c.params["orient"]]
        dof = where.get((c.nodes[0], axis))
        combs[c.name] = CombTerm(c.name, dof, lp.dcdx, lp.c0, sign)
    macros = []
    for att in macromodels:
        mm = att.model
        if mm.c.shape[0] != 1:
            raise ValueError("macromodel port/DOF mismatch: need exactly one output")
        if (att.node, att.axis) not in where:
            raise ValueError(f"macromodel port/DOF mismatch: {att.node}:{att.axis} is not simulated")
        cb = float(mm.c[0] @ mm.b)
        if abs(cb) > 1e-9 * np.linalg.norm(mm.c) * np.linalg.norm(mm.b):
            raise ValueError("macromodel port/DOF mismatch: output responds to force without inertia (c.b != 0)")
        if not float(mm.c[0] @ mm.A @ mm.b) > 0:
            raise ValueError("macromodel port/DOF mismatch: c.A.b must be positive for a force/displacement port")
        macros.append((mm, where[(att.node, att.axis)]))
    C = alpha * M + beta * K
    return _assemble(dofs, M, K, C, macros, combs)


def _forces(model, sources, t):
    """DOF force history ``(len(t), n_dofs)`` plus comb voltage histories."""
    F = np.zeros((t.size, model.n_dofs))
    volts = {}
    for s in sources:
        if s.quantity == "V":
            if s.target not in model.combs:
                raise KeyError(f"voltage source target {s.target!r} is not a comb")
            volts[s.target] = volts.get(s.target, 0.0) + s.value(t)
        else:
            F[:, model.dof_index(s.target)] += s.value(t)
    for name, v in volts.items():
        cb = model.combs[name]
        if cb.dof is not None:
            F[:, cb.dof] += 0.5 * cb.dcdx * cb.sign * v * v
    return F, volts


def _check_targets(model, sources):
    for s in sources:
        if s.quantity == "F":
            try:
                model.dof_index(s.target)
            except KeyError:
                raise ValueError(f"force source target {s.target!r} is grounded or not simulated") from None


def transient(model, sources, t_end, dt, x0=None, probes=None):
    """Fixed-step classical RK4 from rest (or ``x0``)."""
    if not dt > 0 or not t_end > 0:
        raise ValueError("dt and t_end must be positive")
    _check_targets(model, sources)
    steps = int(round(t_end / dt))
    if steps < 1:
        raise ValueError("t_end shorter than one step")
    probes = list(model.probes if probes is None else probes)
    n = model.n_dofs
    need = set()
    for p in probes:
        if p.startswith("C(") or p.startswith("I("):
            cb = model.combs[p[2:-1]]
            if cb.dof is not None:
                need.add(cb.dof if p[0] == "C" else n + cb.dof)
        else:
            need.add(model.dof_index(p))
    need = sorted(need)
    t = np.arange(steps + 1) * dt
    th = t[:-1] + 0.5 * dt
    F, volts = _forces(model, sources, t)
    Fh, _ = _forces(model, sources, th)
    A, Bf = model.A, model.Bf
    G = F @ Bf.T if steps * model.n_states < 5_000_000 else None
    Gh = Fh @ Bf.T if G is not None else None
    s = np.zeros(model.n_states)
    if x0 is not None:
        if isinstance(x0, dict):
            for name, val in x0.items():
                s[model.dof_index(name)] = val
        else:
            s[:] = x0
    rec = np.empty((steps + 1, len(need)))
    rec[0] = s[need]
    h2, h6 = 0.5 * dt, dt / 6.0
    start = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        for k in range(steps):
            if G is not None:
                g0, gh, g1 = G[k], Gh[k], G[k + 1]
            else:
                g0, gh, g1 = Bf @ F[k], Bf @ Fh[k], Bf @ F[k + 1]
            k1 = A @ s + g0
            k2 = A @ (s + h2 * k1) + gh
            k3 = A @ (s + h2 * k2) + gh
            k4 = A @ (s + dt * k3) + g1
            s = s + h6 * (k1 + 2.0 * (k2 + k3) + k4)
            if not math.isfinite(s.sum()):
                raise NumericalError(f"non-finite state at t={t[k + 1]:.6g} s")
            rec[k + 1] = s[need]
    wall = time.perf_counter() - start
    col = {i: j for j, i in enumerate(need)}
    signals = {}
    for p in probes:
        if p.startswith("C(") or p.startswith("I("):
            cb = model.combs[p[2:-1]]
            if p[0] == "C":
                x = rec[:, col[cb.dof]] if cb.dof is not None else 0.0
                signals[p] = cb.c0 + cb.dcdx * cb.sign * x + np.zeros(t.size)
            else:
                v = rec[:, col[n + cb.dof]] if cb.dof is not None else 0.0
                signals[p] = volts.get(cb.name, np.zeros(t.size)) * cb.dcdx * cb.sign * v + np.zeros(t.size)
        else:
            signals[p] = rec[:, col[model.dof_index(p)]].copy()
    return SimResult(t, signals, {"steps": steps, "wall_time": wall, "dt": dt, "states": model.n_states,
                                  "final_state": s})


def stable_step(model, safety=0.5):
    """Largest RK4 step keeping every eigenvalue inside the stability region, times ``safety``."""
    rho = np.abs(np.linalg.eigvals(model.A)).max()
    if rho == 0:
        return math.inf
    return safety * 2.78 / rho


def linearized(model, input, output, bias=0.0):
    """Single-input single-output ``StateSpace`` about the rest state.

    ``input`` is ``node:axis`` (force) or a comb name (voltage, small-signal
    gain ``dC/dx * bias``); ``output`` is a probe name.
    """
    n = model.n_dofs
    if input in model.combs:
        cb = model.combs[input]
        if cb.dof is None:
            raise ValueError(f"comb {input!r} does not drive a simulated DOF")
        b = model.Bf[:, cb.dof] * cb.dcdx * cb.sign * bias
    else:
        b = model.Bf[:, model.dof_index(input)]
    c = np.zeros(model.n_states)
    if output.startswith("C(") or output.startswith("I("):
        cb = model.combs[output[2:-1]]
        if cb.dof is not None:
            if output[0] == "C":
                c[cb.dof] = cb.dcdx * cb.sign
            else:
                c[n + cb.dof] = cb.dcdx * cb.sign * bias
    else:
        c[model.dof_index(output)] = 1.0
    return StateSpace(model.A, b, c)


def frequency_response(model, input, output, freqs, bias=0.0):
    """``H(j 2 pi f)``; points on an undamped pole come back as NaN with a warning."""
    ss = linearized(model, input, output, bias)
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    out = np.empty(freqs.size, dtype=complex)
    bad = []
    for i, f in enumerate(freqs):
        try:
            out[i] = transfer_function(ss, [2j * math.pi * f])[0, 0]
        except NumericalError:
            out[i] = complex(math.nan, math.nan)
            bad.append(float(f))
    if bad:
        warnings.warn(f"singular response at {len(bad)} frequencies: {bad[:5]}")
    return out


def compare_results(ref, cand):
    """Per-probe relative L2 / max-abs error of ``cand`` against ``ref``.

    Both are compared on the coarser of the two time grids (the finer one is
    linearly interpolated). ``wall_time_ratio`` is ref over cand.
    """
    common = [p for p in ref.signals if p in cand.signals]
    if not common:
        raise ValueError("results share no probes")
    if ref.time.size <= cand.time.size:
        grid = ref.time
        pick = lambda r, p: r.signals[p] if r is ref else np.interp(grid, r.time, r.signals[p])
    else:
        grid = cand.time
        pick = lambda r, p: r.signals[p] if r is cand else np.interp(grid, r.time, r.signals[p])
    probes = {}
    for p in common:
        a, b = pick(ref, p), pick(cand, p)
        norm = np.linalg.norm(a)
        diff = np.linalg.norm(b - a)
        probes[p] = {"rel_l2": float(diff / norm) if norm > 0 else (0.0 if diff == 0 else math.inf),
                     "max_abs": float(np.abs(b - a).max())}
    wr = ref.stats.get("wall_time", 0.0)
    wc = cand.stats.get("wall_time", 0.0)
    ratio = 1.0 if wr == wc else (wr / wc if wc > 0 else math.inf)
    return {"probes": probes, "wall_time_ratio": ratio}


# ------------------------------------------------------------ run config

def parse_run_config(text):
    """Key=value run description.

    Scalar lines read ``key=value`` (``netlist``, ``stack``, ``dt``,
    ``t_end``, ``probes``, ``axes``, ``alpha``, ``beta`` and, for AC runs,
    ``input``, ``output``, ``fmin``, ``fmax``, ``points``, ``scale``,
    ``bias``). Each ``source <kind> ...`` line adds a Source; each
    ``macromodel path=... port=node:axis covers=a,b|auto`` line an attachment.
    """
    cfg = {"sources": [], "macromodels": []}
    floats = ("dt", "t_end", "beta", "alpha", "fmin", "fmax", "bias")
    strings = ("netlist", "stack", "axes", "input", "output", "scale")
    for lineno, tokens in logical_lines(text):
        words, kv = split_args(tokens, lineno)
        if words and words[0] == "source":
            if len(words) != 2:
                raise ParseError("expected 'source <kind> key=value...'", lineno, tokens[0])
            args = {}
            for key, value in kv.items():
                if key in ("target", "quantity"):
                    args[key] = value
                elif key in ("amplitude", "t_on", "t_off", "frequency", "phase"):
                    args[key] = parse_float(value, lineno, f"{key}={value}")
                else:
                    raise ParseError(f"unknown source key {key!r}", lineno, f"{key}={value}")
            if "target" not in args:
                raise ParseError("source needs target=", lineno, tokens[0])
            try:
                cfg["sources"].append(Source(words[1], **args))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, words[1]) from None
            continue
        if words and words[0] == "macromodel":
            if len(words) != 1 or "path" not in kv or "port" not in kv:
                raise ParseError("expected 'macromodel path=... port=node:axis'", lineno, tokens[0])
            extra = set(kv) - {"path", "port", "covers"}
            if extra:
                raise ParseError(f"unknown macromodel key {sorted(extra)[0]!r}", lineno, sorted(extra)[0])
            entry = dict(kv)
            entry["covers"] = tuple(x for x in kv.get("covers", "").split(",") if x)
            cfg["macromodels"].append(entry)
            continue
        if words:
            raise ParseError("unexpected word", lineno, words[0])
        for key, value in kv.items():
            if key in floats:
                cfg[key] = parse_float(value, lineno, f"{key}={value}")
            elif key in strings:
                cfg[key] = value
            elif key == "points":
                try:
                    cfg[key] = int(value)
                except ValueError:
                    raise ParseError("expected an integer", lineno, f"{key}={value}") from None
            elif key == "probes":
                cfg[key] = [p for p in value.split(",") if p]
            else:
                raise ParseError(f"unknown key {key!r}", lineno, f"{key}={value}")
    return cfg
