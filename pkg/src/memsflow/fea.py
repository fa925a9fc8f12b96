"""Structural finite elements: 3D Euler-Bernoulli beams plus rigid plates.

Six DOFs per node, ordered ``(ux, uy, uz, rx, ry, rz)``. Rigid plates are a
master node carrying lumped mass and inertia, tied to their attachment
points by kinematic rigid links that are eliminated master-slave style.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla

from .errors import FlowError, NumericalError
from .schematic import Kind
from .units import nm_to_m

DOF_NAMES = ("ux", "uy", "uz", "rx", "ry", "rz")


@dataclass(frozen=True)
class BeamElement:
    n1: int
    n2: int
    width: float  # m, in-plane
    thickness: float  # m, out-of-plane
    material: object


@dataclass(frozen=True)
class PointMass:
    node: int
    mass: float
    inertia: tuple = (0.0, 0.0, 0.0)  # about x, y, z through the node


@dataclass
class FeaModel:
    nodes: np.ndarray  # (n, 3) coordinates in m
    elements: list
    point_masses: list = field(default_factory=list)
    fixed_dofs: set = field(default_factory=set)  # {(node, dof)}
    rigid_links: list = field(default_factory=list)  # [(master, slave)]
    labels: list = field(default_factory=list)
    groups: dict = field(default_factory=dict)  # netlist node / mass name -> FEA node

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        if not self.labels:
            self.labels = [f"n{i}" for i in range(len(self.nodes))]
        for e in self.elements:
            if e.n1 == e.n2:
                raise ValueError("beam element with coincident end nodes")
        for node, dof in self.fixed_dofs:
            if not 0 <= node < len(self.nodes) or not 0 <= dof < 6:
                raise ValueError(f"fixed DOF ({node}, {dof}) out of range")
        slaves = [s for _, s in self.rigid_links]
        if len(set(slaves)) != len(slaves):
            raise ValueError("a rigid-link slave has more than one master")
        masters = dict((s, m) for m, s in self.rigid_links)
        for s in masters:
            seen = {s}
            m = masters[s]
            while m in masters:
                if m in seen:
                    raise ValueError("cyclic rigid links")
                seen.add(m)
                m = masters[m]

    @property
    def n_nodes(self):
        return len(self.nodes)


@dataclass
class SystemMatrices:
    M: np.ndarray
    K: np.ndarray
    Cd: np.ndarray
    B_load: np.ndarray  # (N, m)
    C_out: np.ndarray  # (p, N)
    dof_map: dict  # (node, dof) -> index
    labels: list = field(default_factory=list)

    @property
    def n(self):
        return self.M.shape[0]


def torsion_constant(w, t):
    a, b = max(w, t), min(w, t)
    return a * b**3 * (1.0 / 3.0 - 0.21 * (b / a) * (1.0 - b**4 / (12.0 * a**4)))


def beam_element_matrices(length, width, thickness, material):
    """Local 12x12 stiffness and consistent mass of a 3D Euler-Bernoulli beam.

    Local x runs along the beam, local y across its width (in-plane) and
    local z through its thickness.
    """
    L, E, G, rho = length, material.youngs_modulus, material.shear_modulus, material.density
    A = width * thickness
    Iz = thickness * width**3 / 12.0  # bending in local xy (deflection along y)
    Iy = width * thickness**3 / 12.0  # bending in local xz (deflection along z)
    J = torsion_constant(width, thickness)
    k = np.zeros((12, 12))
    m = np.zeros((12, 12))

    def put(mat, idx, block):
        mat[np.ix_(idx, idx)] += block

    bar = np.array([[1.0, -1.0], [-1.0, 1.0]])
    put(k, [0, 6], E * A / L * bar)
    put(k, [3, 9], G * J / L * bar)
    bend = np.array([[12, 6 * L, -12, 6 * L],
                     [6 * L, 4 * L * L, -6 * L, 2 * L * L],
                     [-12, -6 * L, 12, -6 * L],
                     [6 * L, 2 * L * L, -6 * L, 4 * L * L]])
    flip = np.diag([1.0, -1.0, 1.0, -1.0])  # theta_y = -dw/dx
    put(k, [1, 5, 7, 11], E * Iz / L**3 * bend)
    put(k, [2, 4, 8, 10], E * Iy / L**3 * flip @ bend @ flip)

    pair = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    put(m, [0, 6], rho * A * L * pair)
    put(m, [3, 9], rho * (Iy + Iz) * L * pair)
    cm = np.array([[156, 22 * L, 54, -13 * L],
                   [22 * L, 4 * L * L, 13 * L, -3 * L * L],
                   [54, 13 * L, 156, -22 * L],
                   [-13 * L, -3 * L * L, -22 * L, 4 * L * L]]) * (rho * A * L / 420.0)
    put(m, [1, 5, 7, 11], cm)
    put(m, [2, 4, 8, 10], flip @ cm @ flip)
    return k, m


def _rotation(p1, p2):
    e1 = p2 - p1
    L = np.linalg.norm(e1)
    e1 = e1 / L
    ref = np.array([0.0, 0.0, 1.0])
    if abs(e1 @ ref) > 0.999:
        ref = np.array([1.0, 0.0, 0.0])
    e2 = np.cross(ref, e1)
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return L, np.vstack([e1, e2, e3])


def _link_matrix(model):
    """Full-DOF <- retained-DOF map after rigid links and fixed DOFs."""
    nn = model.n_nodes
    master_of = dict((s, m) for m, s in model.rigid_links)

    def root(i):
        while i in master_of:
            i = master_of[i]
        return i

    fixed = set(model.fixed_dofs)
    for node, dof in fixed:
        if node in master_of:
            raise FlowError(f"DOF {dof} of node {model.labels[node]} is both fixed and rigidly linked")
    retained = [(i, d) for i in range(nn) if i not in master_of for d in range(6) if (i, d) not in fixed]
    col = {key: j for j, key in enumerate(retained)}
    T = np.zeros((6 * nn, len(retained)))
    for i in range(nn):
        r = root(i)
        if r == i:
            for d in range(6):
                if (i, d) in col:
                    T[6 * i + d, col[(i, d)]] = 1.0
            continue
        rx, ry, rz = model.nodes[i] - model.nodes[r]
        # u_s = u_m + theta_m x r ; theta_s = theta_m
        coupling = {0: {0: 1.0, 4: rz, 5: -ry},
                    1: {1: 1.0, 5: rx, 3: -rz},
                    2: {2: 1.0, 3: ry, 4: -rx},
                    3: {3: 1.0}, 4: {4: 1.0}, 5: {5: 1.0}}
        for d, terms in coupling.items():
            for md, coef in terms.items():
                if (r, md) in col and coef != 0.0:
                    T[6 * i + d, col[(r, md)]] = coef
    return T, retained


def full_matrices(model):
    """Unconstrained global mass and stiffness (6 DOFs per node)."""
    n = 6 * model.n_nodes
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for e in model.elements:
        L, R = _rotation(model.nodes[e.n1], model.nodes[e.n2])
        k, m = beam_element_matrices(L, e.width, e.thickness, e.material)
        T = np.kron(np.eye(4), R)
        idx = list(range(6 * e.n1, 6 * e.n1 + 6)) + list(range(6 * e.n2, 6 * e.n2 + 6))
        K[np.ix_(idx, idx)] += T.T @ k @ T
        M[np.ix_(idx, idx)] += T.T @ m @ T
    for pm in model.point_masses:
        b = 6 * pm.node
        M[b:b + 3, b:b + 3] += pm.mass * np.eye(3)
        M[b + 3:b + 6, b + 3:b + 6] += np.diag(pm.inertia)
    return M, K


def assemble(model, inputs=(), outputs=(), alpha=0.0, beta=0.0):
    """Constrained system matrices.

    ``inputs`` are ``(node, dof, scale)`` load entries forming the columns of
    ``B_load`` (one column per entry); ``outputs`` are ``(node, dof)`` rows of
    ``C_out``. Damping is Rayleigh, ``Cd = alpha*M + beta*K``.
    """
    Mf, Kf = full_matrices(model)
    T, retained = _link_matrix(model)
    M = T.T @ Mf @ T
    K = T.T @ Kf @ T
    M = 0.5 * (M + M.T)
    K = 0.5 * (K + K.T)
    if M.size:
        try:
            sla.cholesky(M)
        except sla.LinAlgError:
            raise NumericalError("mass matrix is singular after constraint elimination") from None
    B = np.zeros((len(retained), len(inputs)))
    for j, (node, dof, scale) in enumerate(inputs):
        B[:, j] = scale * T[6 * node + dof, :]
    C = np.vstack([T[6 * node + dof, :] for node, dof in outputs]) if outputs else np.zeros((0, len(retained)))
    dof_map = {key: j for j, key in enumerate(retained)}
    labels = [f"{model.labels[i]}.{DOF_NAMES[d]}" for i, d in retained]
    return SystemMatrices(M, K, alpha * M + beta * K, B, C, dof_map, labels)


def modal_analysis(sys, n_modes):
    """Lowest ``n_modes`` of ``K phi = w^2 M phi``: [(frequency Hz, shape)], M-orthonormal."""
    n = sys.n
    if not 1 <= n_modes <= n:
        raise ValueError(f"n_modes must lie in [1, {n}]")
    lam, phi = sla.eigh(sys.K, sys.M, subset_by_index=[0, n_modes - 1])
    freqs = np.sqrt(np.clip(lam, 0.0, None)) / (2 * math.pi)
    return [(float(f), phi[:, i]) for i, f in enumerate(freqs)]


def static_solve(sys, load):
    load = np.asarray(load, dtype=float)
    try:
        factor = sla.cho_factor(sys.K)
    except sla.LinAlgError:
        raise NumericalError("stiffness matrix is singular (unconstrained structure?)") from None
    u = sla.cho_solve(factor, load)
    u = u + sla.cho_solve(factor, load - sys.K @ u)  # one refinement step
    norm_f = np.linalg.norm(load)
    if norm_f > 0 and np.linalg.norm(sys.K @ u - load) > 1e-10 * norm_f:
        raise NumericalError("static solve residual exceeds 1e-10")
    return u


# ------------------------------------------------------- netlist -> model

def _uf_find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def build_fea_model(netlist, material, stack, refine=1, planar=None, massless=()):
    """Beam-graph FEA model of a netlist.

    Each beam becomes ``refine`` elements; rigid masses sharing netlist nodes
    form one rigid body whose master sits at the first mass's centroid;
    anchors clamp every beam end on their node. Combs carry no stiffness.
    ``planar="in"`` keeps only in-plane DOFs, ``planar="out"`` only the
    out-of-plane ones. Masses named in ``massless`` keep their rotary inertia
    but drop their translational mass, which a system model then lumps itself.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1")
    coords, labels = [], []
    groups = {}

    def new_node(xyz, label):
        coords.append(np.asarray(xyz, dtype=float))
        labels.append(label)
        return len(coords) - 1

    elements = []
    endpoints = {}  # netlist node -> [(fea node, xyz)]

    def endpoint(name, xyz):
        for idx, p in endpoints.get(name, []):
            if np.allclose(p, xyz, rtol=0, atol=1e-12):
                return idx
        idx = new_node(xyz, f"{name}#{len(endpoints.get(name, []))}")
        endpoints.setdefault(name, []).append((idx, np.asarray(xyz)))
        return idx

    for c in netlist.instances:
        if c.kind is not Kind.BEAM:
            continue
        t = nm_to_m(stack.layer(c.layer).thickness)
        L, w = c.length_m("l"), c.length_m("w")
        th = math.radians(c.angle)
        start = np.array([nm_to_m(c.position[0]), nm_to_m(c.position[1]), 0.0])
        direction = np.array([math.cos(th), math.sin(th), 0.0])
        a = endpoint(c.nodes[0], start)
        chain = [a]
        for i in range(1, refine):
            chain.append(new_node(start + direction * L * i / refine, f"{c.name}.{i}"))
        chain.append(endpoint(c.nodes[1], start + direction * L))
        for n1, n2 in zip(chain, chain[1:]):
            elements.append(BeamElement(n1, n2, w, t, material))

    masses = [c for c in netlist.instances if c.kind is Kind.RIGID_MASS]
    parent = list(range(len(masses)))
    owner = {}
    for i, c in enumerate(masses):
        for node in c.nodes:
            if node in owner:
                ra, rb = _uf_find(parent, owner[node]), _uf_find(parent, i)
                parent[max(ra, rb)] = min(ra, rb)
            else:
                owner[node] = i

    point_masses, links = [], []
    masters = {}
    centers = {}
    for i, c in enumerate(masses):
        t = nm_to_m(stack.layer(c.layer).thickness)
        w, h = c.length_m("w"), c.length_m("h")
        th = math.radians(c.angle)
        cx, cy = w / 2, h / 2
        center = np.array([nm_to_m(c.position[0]) + cx * math.cos(th) - cy * math.sin(th),
                           nm_to_m(c.position[1]) + cx * math.sin(th) + cy * math.cos(th), 0.0])
        node = new_node(center, c.name)
        centers[c.name] = node
        groups[c.name] = node
        mass = material.density * t * w * h
        jx = mass * (h * h + t * t) / 12
        jy = mass * (w * w + t * t) / 12
        jz = mass * (w * w + h * h) / 12
        if th % (math.pi / 2):
            # in-plane rotation mixes Jx and Jy; use the rotated tensor's diagonal
            cs, sn = math.cos(th) ** 2, math.sin(th) ** 2
            jx, jy = jx * cs + jy * sn, jx * sn + jy * cs
        point_masses.append(PointMass(node, 0.0 if c.name in massless else mass, (jx, jy, jz)))
        r = _uf_find(parent, i)
        if r == i:
            masters[i] = node
    for i, c in enumerate(masses):
        master = masters[_uf_find(parent, i)]
        if centers[c.name] != master:
            links.append((master, centers[c.name]))
        groups[c.name] = master
    for node, i in owner.items():
        master = masters[_uf_find(parent, i)]
        groups[node] = master
        for idx, _ in endpoints.get(node, []):
            links.append((master, idx))

    fixed = set()
    anchor_nodes = {n for c in netlist.instances if c.kind is Kind.ANCHOR for n in c.nodes}
    for node in anchor_nodes:
        if node in owner:
            fixed.update((groups[node], d) for d in range(6))
            continue
        for idx, _ in endpoints.get(node, []):
            fixed.update((idx, d) for d in range(6))
            groups.setdefault(node, idx)
    # beam-only joints: tie every endpoint of a name to its first occurrence
    for node, eps in endpoints.items():
        if node in owner or node in anchor_nodes:
            continue
        groups[node] = eps[0][0]
        for idx, _ in eps[1:]:
            links.append((eps[0][0], idx))

    slaves = {s for _, s in links}
    if planar is not None:
        keep = {"in": (0, 1, 5), "out": (2, 3, 4)}[planar]
        for i in range(len(coords)):
            if i not in slaves:
                fixed.update((i, d) for d in range(6) if d not in keep)
    # a master that is itself fixed pins its slaves; drop their fixed entries
    fixed = {(i, d) for i, d in fixed if i not in slaves}

    model = FeaModel(np.array(coords).reshape(-1, 3), elements, point_masses, fixed, links, labels, groups)
    _check_supported(model)
    return model


def _check_supported(model):
    n = model.n_nodes
    parent = list(range(n))
    for e in model.elements:
        a, b = _uf_find(parent, e.n1), _uf_find(parent, e.n2)
        parent[max(a, b)] = min(a, b)
    for m, s in model.rigid_links:
        a, b = _uf_find(parent, m), _uf_find(parent, s)
        parent[max(a, b)] = min(a, b)
    clamped = {_uf_find(parent, i) for i, _ in model.fixed_dofs}
    free = sorted({_uf_find(parent, i) for i in range(n)} - clamped)
    if free:
        raise FlowError(f"structure part containing {model.labels[free[0]]} has no anchor")


# ------------------------------------------------------------- file export

def export_matrices(sys, directory):
    """Write M, K, Cd (Matrix Market coordinate), B_load, C_out (array) and a manifest."""
    os.makedirs(directory, exist_ok=True)
    from scipy.sparse import coo_matrix
    for name in ("M", "K", "Cd"):
        scipy.io.mmwrite(os.path.join(directory, f"{name}.mtx"), coo_matrix(getattr(sys, name)), precision=17)
    scipy.io.mmwrite(os.path.join(directory, "B_load.mtx"), sys.B_load, precision=17)
    scipy.io.mmwrite(os.path.join(directory, "C_out.mtx"), sys.C_out, precision=17)
    manifest = {
        "N": sys.n,
        "dof_map": [[int(node), int(dof), int(idx)] for (node, dof), idx in sorted(sys.dof_map.items(), key=lambda kv: kv[1])],
        "labels": list(sys.labels),
        "units": {"M": "kg", "K": "N/m", "Cd": "N s/m", "B_load": "1", "C_out": "1"},
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_matrices(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)

    def read(name):
        a = scipy.io.mmread(os.path.join(directory, f"{name}.mtx"))
        return np.asarray(a.toarray() if hasattr(a, "toarray") else a, dtype=float)

    dof_map = {(node, dof): idx for node, dof, idx in manifest["dof_map"]}
    return SystemMatrices(read("M"), read("K"), read("Cd"), read("B_load"), read("C_out"),
                          dof_map, manifest.get("labels", []))
