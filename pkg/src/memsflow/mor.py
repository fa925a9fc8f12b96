"""First-order realizations and Arnoldi model order reduction."""

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla

from .errors import NumericalError


@dataclass
class StateSpace:
    """Single-input system ``x' = A x + b u``, ``y = c x``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        n = self.A.shape[0]
        if n < 1 or self.A.shape != (n, n):
            raise ValueError("A must be square with N >= 1")
        if self.b.shape != (n,) or self.c.shape[1] != n:
            raise ValueError("A, b, c dimensions disagree")

    @property
    def N(self):
        return self.A.shape[0]


@dataclass
class ArnoldiBasis:
    V: np.ndarray  # N x k
    H: np.ndarray  # (k+1) x k, or k x k on breakdown
    k: int
    breakdown: bool


@dataclass
class ReducedModel:
    A_r: np.ndarray
    b_r: np.ndarray
    c_r: np.ndarray
    V: np.ndarray
    mode: str = "shift_invert"
    s0: float = 0.0
    breakdown: bool = False
    dof_map: list = field(default_factory=list)

    def __post_init__(self):
        self.A_r = np.atleast_2d(np.asarray(self.A_r, dtype=float))
        self.b_r = np.asarray(self.b_r, dtype=float).reshape(-1)
        self.c_r = np.atleast_2d(np.asarray(self.c_r, dtype=float))
        if self.mode not in ("direct", "shift_invert"):
            raise ValueError(f"unknown reduction mode {self.mode!r}")

    @property
    def q(self):
        return self.A_r.shape[0]

    # duck-type as a StateSpace
    A = property(lambda self: self.A_r)
    b = property(lambda self: self.b_r)
    c = property(lambda self: self.c_r)
    N = q

    def as_state_space(self):
        return StateSpace(self.A_r, self.b_r, self.c_r)


def to_first_order(sys, input_index=0, mass_normalized=False):
    """``x = (u, u')`` realization of ``M u'' + Cd u' + K u = B_load[:, i] f``.

    With ``mass_normalized`` the state is ``(L^T u, L^T u')`` where
    ``M = L L^T``: the same transfer function, but Euclidean orthogonality of
    a Krylov basis then means orthogonality in kinetic energy, and projecting
    an undamped structure yields another mass-spring system.
    """
    M, K, Cd = sys.M, sys.K, sys.Cd
    n = M.shape[0]
    try:
        L = sla.cholesky(M, lower=True)
    except sla.LinAlgError:
        raise NumericalError("mass matrix is not positive definite") from None
    B = sys.B_load[:, [input_index]]
    if mass_normalized:
        def sandwich(X):
            Y = sla.solve_triangular(L, X, lower=True)
            return sla.solve_triangular(L, Y.T, lower=True).T
        lower = np.hstack([-sandwich(K), -sandwich(Cd)])
        bv = sla.solve_triangular(L, B, lower=True)[:, 0]
        cu = sla.solve_triangular(L, sys.C_out.T, lower=True).T
    else:
        rhs = np.hstack([-K, -Cd, B])
        sol = sla.cho_solve((L, True), rhs)
        scale = max(np.abs(rhs).max(), 1e-300)
        if np.abs(M @ sol - rhs).max() > 1e-10 * scale:
            raise NumericalError("mass solve residual exceeds 1e-10")
        lower, bv, cu = sol[:, :2 * n], sol[:, 2 * n], sys.C_out
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :] = lower
    b = np.concatenate([np.zeros(n), bv])
    c = np.hstack([cu, np.zeros_like(cu)])
    return StateSpace(A, b, c)


def arnoldi(apply_A, b, q, deflation_tol=1e-12):
    """Orthonormal basis of the Krylov space ``span{b, Ab, ..., A^(q-1) b}``.

    Modified Gram-Schmidt followed by one blocked reorthogonalization pass. Returns
    early (``breakdown=True``) once the space becomes invariant.
    """
    b = np.asarray(b, dtype=float)
    beta = np.linalg.norm(b)
    if beta == 0.0:
        raise ValueError("starting vector is zero")
    if q < 1:
        raise ValueError("q must be >= 1")
    N = b.shape[0]
    m = min(q, N)
    Q = np.zeros((m + 1, N))  # basis vectors as contiguous rows
    H = np.zeros((m + 1, m))
    Q[0] = b / beta
    for j in range(q):
        w = np.array(apply_A(Q[j]), dtype=float)
        norm_aw = np.linalg.norm(w)
        for i in range(j + 1):
            h = Q[i] @ w
            H[i, j] = h
            w -= h * Q[i]
        corr = Q[:j + 1] @ w  # reorthogonalization pass, blocked
        H[:j + 1, j] += corr
        w -= corr @ Q[:j + 1]
        h_next = np.linalg.norm(w)
        if h_next <= deflation_tol * norm_aw or j + 1 == N:
            # invariant subspace (or the whole space) reached
            k = j + 1
            return ArnoldiBasis(Q[:k].T.copy(), H[:k, :k].copy(), k, k < q)
        H[j + 1, j] = h_next
        Q[j + 1] = w / h_next
    return ArnoldiBasis(Q[:q].T.copy(), H.copy(), q, False)


def _shift_solver(A, s0):
    shifted = A - s0 * np.eye(A.shape[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(shifted)
    if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0):
        raise NumericalError(f"A - s0*I is singular at s0={s0}")
    return lambda x: sla.lu_solve(lu, x)


def reduce(ss, q, mode="shift_invert", s0=0.0, deflation_tol=1e-12):
    """Order-``q`` Arnoldi projection of ``ss``.

    ``direct`` matches the first ``k`` Markov parameters ``c A^j b``;
    ``shift_invert`` matches the first ``k`` moments of ``H`` about ``s0``.
    """
    if q > ss.N:
        raise ValueError(f"q={q} exceeds system order {ss.N}")
    if mode == "direct":
        basis = arnoldi(lambda x: ss.A @ x, ss.b, q, deflation_tol)
    elif mode == "shift_invert":
        solve = _shift_solver(ss.A, s0)
        basis = arnoldi(solve, solve(ss.b), q, deflation_tol)
    else:
        raise ValueError(f"unknown reduction mode {mode!r}")
    V = basis.V
    return ReducedModel(V.T @ ss.A @ V, V.T @ ss.b, ss.c @ V, V, mode,
                        float(s0) if mode == "shift_invert" else 0.0, basis.breakdown)


def transfer_function(model, s):
    """``H(s) = c (sI - A)^-1 b`` at each point; shape ``(len(s), p)``."""
    A, b, c = model.A, model.b, model.c
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    out = np.empty((s.size, c.shape[0]), dtype=complex)
    eye = np.eye(A.shape[0])
    for i, si in enumerate(s):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(si * eye - A)
        if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0):
            raise NumericalError(f"sI - A is singular at s={si}")
        out[i] = c @ sla.lu_solve(lu, b.astype(complex))
    return out


def reduction_report(full, reduced, s):
    """Transfer-function error and reduced-spectrum data (stability is reported, not assumed)."""
    h = transfer_function(full, s)
    hr = transfer_function(reduced, s)
    denom = np.maximum(np.abs(h), np.finfo(float).tiny)
    poles = np.linalg.eigvals(reduced.A)
    return {
        "q": int(reduced.A.shape[0]),
        "max_rel_error": float((np.abs(hr - h) / denom).max()),
        "max_real_pole": float(poles.real.max()),
        "stable": bool(poles.real.max() <= 1e-9 * max(np.abs(poles).max(), 1.0)),
        "poles": poles,
    }


def sweep_order(ss, s, target, q0=2, mode="shift_invert", s0=0.0):
    """Double ``q`` until the transfer-function error at ``s`` drops below ``target``."""
    q = max(1, q0)
    while True:
        r = reduce(ss, min(q, ss.N), mode, s0)
        rep = reduction_report(ss, r, s)
        if rep["max_rel_error"] < target or q >= ss.N or r.breakdown:
            return r, rep
        q *= 2


# ---------------------------------------------------------------- file I/O

def export_reduced(r, directory):
    os.makedirs(directory, exist_ok=True)
    scipy.io.mmwrite(os.path.join(directory, "A_r.mtx"), r.A_r, precision=17)
    scipy.io.mmwrite(os.path.join(directory, "b_r.mtx"), r.b_r.reshape(-1, 1), precision=17)
    scipy.io.mmwrite(os.path.join(directory, "c_r.mtx"), r.c_r, precision=17)
    manifest = {"q": r.q, "mode": r.mode, "s0": r.s0, "breakdown": r.breakdown,
                "p": int(r.c_r.shape[0]), "dof_map": list(r.dof_map)}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_reduced(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)

    def read(name):
        return np.asarray(scipy.io.mmread(os.path.join(directory, f"{name}.mtx")), dtype=float)

    A = read("A_r")
    return ReducedModel(A, read("b_r").reshape(-1), read("c_r"), np.zeros((0, A.shape[0])),
                        manifest["mode"], float(manifest["s0"]), bool(manifest.get("breakdown", False)),
                        manifest.get("dof_map", []))
