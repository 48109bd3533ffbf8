"""Polynomial structural systems ``M u'' + C u' + K u + G(u,u) + H(u,u,u) = f beta cos(w t)``.

Quadratic and cubic internal forces are stored as sparse monomial lists:
a G entry ``(i, j, k, c)`` with ``j <= k`` contributes ``c * u_j * u_k`` to
force component ``i``; an H entry ``(i, j, k, l, c)`` with ``j <= k <= l``
contributes ``c * u_j * u_k * u_l``. Raw entries in any index order are
accepted and folded into this canonical form.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from romforge import kernels
from romforge.errors import ContractError

__all__ = [
    "PolySystem",
    "MaterialGeometry",
    "REFERENCE_BEAM",
    "eval_internal_force",
    "eval_jacobian",
    "make_duffing",
    "make_vk_beam",
    "eigen_analysis",
    "system_to_dict",
    "system_from_dict",
    "save_system",
    "load_system",
]


def _canonical_entries(entries, order):
    """Sort trailing indices, merge duplicates and drop exact zeros."""
    arr = np.asarray(entries, dtype=float)
    width = order + 1
    if arr.size == 0:
        return np.zeros((0, order + 1), dtype=np.int64), np.zeros(0)
    arr = arr.reshape(-1, width + 1) if arr.ndim == 1 else arr
    if arr.shape[1] != width + 1:
        raise ContractError(f"expected entries with {width + 1} columns, got {arr.shape[1]}")
    idx = arr[:, :width]
    if np.any(idx != np.round(idx)) or np.any(idx < 0):
        raise ContractError("tensor indices must be nonnegative integers")
    idx = idx.astype(np.int64)
    idx[:, 1:] = np.sort(idx[:, 1:], axis=1)
    keys, inverse = np.unique(idx, axis=0, return_inverse=True)
    vals = np.zeros(len(keys))
    np.add.at(vals, inverse.ravel(), arr[:, width])
    keep = vals != 0.0
    return keys[keep], vals[keep]


class PolySystem:
    """Discrete dynamical system with linear, quadratic and cubic internal forces.

    Parameters
    ----------
    M, C, K : (n, n) array_like
        Mass, damping and linear stiffness matrices.
    G : array_like, shape (m, 4)
        Quadratic monomials ``(i, j, k, value)``.
    H : array_like, shape (m, 5)
        Cubic monomials ``(i, j, k, l, value)``.
    forcing : (n,) array_like
        Spatial load pattern ``f``; the external force is ``f * beta * cos(w t)``.
    meta : dict, optional
        Free-form metadata (``monitor_dof``, ``omega_ref``, ``name``...).

    Instances are immutable: all arrays are flagged read-only.
    """

    def __init__(self, M, C, K, G=(), H=(), forcing=None, meta=None):
        M = np.array(M, dtype=float, ndmin=2)
        C = np.array(C, dtype=float, ndmin=2)
        K = np.array(K, dtype=float, ndmin=2)
        n = M.shape[0]
        for name, mat in (("M", M), ("C", C), ("K", K)):
            if mat.shape != (n, n):
                raise ContractError(f"{name} has shape {mat.shape}, expected {(n, n)}")
        scale = np.max(np.abs(M))
        if scale == 0 or np.max(np.abs(M - M.T)) > 1e-12 * scale:
            raise ContractError("mass matrix must be symmetric and nonzero")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ContractError("mass matrix is not positive definite") from None

        self.M, self.C, self.K = M, C, K
        self.G_idx, self.G_val = _canonical_entries(G, 2)
        self.H_idx, self.H_val = _canonical_entries(H, 3)
        for idx in (self.G_idx, self.H_idx):
            if idx.size and idx.max() >= n:
                raise ContractError("tensor index out of range")
        f = np.zeros(n) if forcing is None else np.array(forcing, dtype=float).ravel()
        if f.shape != (n,):
            raise ContractError(f"forcing has shape {f.shape}, expected {(n,)}")
        self.forcing = f
        self.meta = dict(meta or {})
        for arr in (self.M, self.C, self.K, self.G_idx, self.G_val,
                    self.H_idx, self.H_val, self.forcing):
            arr.setflags(write=False)

    @property
    def n_dof(self):
        return self.M.shape[0]

    @property
    def is_linear(self):
        return self.G_val.size == 0 and self.H_val.size == 0

    def G_entries(self):
        return [(*map(int, i), float(v)) for i, v in zip(self.G_idx, self.G_val)]

    def H_entries(self):
        return [(*map(int, i), float(v)) for i, v in zip(self.H_idx, self.H_val)]

    def _check_state(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_dof:
            raise ContractError(f"state has {u.shape[0]} rows, system has {self.n_dof} dofs")
        return u

    # -- nonlinear force on a batch of states -------------------------------------------
    def nonlinear_force(self, U):
        """``G(u,u) + H(u,u,u)`` for every column of ``U`` (shape ``(n, m)``)."""
        U = np.ascontiguousarray(self._check_state(U), dtype=float)
        squeeze = U.ndim == 1
        if squeeze:
            U = U[:, None]
        out = np.zeros((self.n_dof, U.shape[1]))
        if self.G_val.size:
            g = self.G_idx
            kernels.scatter_quad(g[:, 0].copy(), self.G_val, g[:, 1].copy(), g[:, 2].copy(), U, out)
        if self.H_val.size:
            h = self.H_idx
            kernels.scatter_cubic(h[:, 0].copy(), self.H_val, h[:, 1].copy(),
                                  h[:, 2].copy(), h[:, 3].copy(), U, out)
        return out[:, 0] if squeeze else out

    def internal_force(self, u):
        u = self._check_state(u)
        return self.K @ u + self.nonlinear_force(u)

    @cached_property
    def _jac_terms(self):
        """Derivative contributions regrouped by Jacobian slot ``(row, col)``."""
        rows, cols, lin, quad = [], [], [], []
        g, gv = self.G_idx, self.G_val
        # d/du_j (c u_j u_k) = c u_k ; d/du_k = c u_j
        for wrt, other in ((1, 2), (2, 1)):
            rows.append(g[:, 0]); cols.append(g[:, wrt])
            lin.append(np.column_stack([gv, g[:, other]]))
        h, hv = self.H_idx, self.H_val
        for wrt, o1, o2 in ((1, 2, 3), (2, 1, 3), (3, 1, 2)):
            rows.append(h[:, 0]); cols.append(h[:, wrt])
            quad.append(np.column_stack([hv, h[:, o1], h[:, o2]]))
        n_lin = sum(len(x) for x in lin)
        all_rows = np.concatenate(rows).astype(np.int64)
        all_cols = np.concatenate(cols).astype(np.int64)
        slots, slot_of = np.unique(np.column_stack([all_rows, all_cols]), axis=0,
                                   return_inverse=True)
        slot_of = slot_of.ravel()
        lin_terms = np.concatenate(lin) if lin else np.zeros((0, 2))
        quad_terms = np.concatenate(quad) if quad else np.zeros((0, 3))
        s_lin, s_quad = slot_of[:n_lin], slot_of[n_lin:]
        o_lin, o_quad = np.argsort(s_lin, kind="stable"), np.argsort(s_quad, kind="stable")
        return {
            "rows": slots[:, 0].copy() if len(slots) else np.zeros(0, np.int64),
            "cols": slots[:, 1].copy() if len(slots) else np.zeros(0, np.int64),
            "lin": (s_lin[o_lin].astype(np.int64), lin_terms[o_lin, 0].copy(),
                    lin_terms[o_lin, 1].astype(np.int64)),
            "quad": (s_quad[o_quad].astype(np.int64), quad_terms[o_quad, 0].copy(),
                     quad_terms[o_quad, 1].astype(np.int64),
                     quad_terms[o_quad, 2].astype(np.int64)),
        }

    @property
    def jacobian_pattern(self):
        """Row and column indices of the nonlinear Jacobian's structural nonzeros."""
        t = self._jac_terms
        return t["rows"], t["cols"]

    def nonlinear_jacobian_data(self, U):
        """Values of the nonlinear Jacobian at each column of ``U``.

        Returns an array of shape ``(n_slots, m)`` aligned with
        :attr:`jacobian_pattern`.
        """
        U = np.ascontiguousarray(self._check_state(U), dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        t = self._jac_terms
        out = np.zeros((len(t["rows"]), U.shape[1]))
        slot, coef, a = t["lin"]
        if coef.size:
            kernels.scatter_lin(slot, coef, a, U, out)
        slot, coef, a, b = t["quad"]
        if coef.size:
            kernels.scatter_quad(slot, coef, a, b, U, out)
        return out

    def jacobian(self, u):
        u = self._check_state(u)
        J = np.array(self.K, dtype=float)
        if not self.is_linear:
            rows, cols = self.jacobian_pattern
            np.add.at(J, (rows, cols), self.nonlinear_jacobian_data(u)[:, 0])
        return J

    def strain_energy(self, u):
        """Quartic potential ``u.K.u/2 + u.G(u,u)/3 + u.H(u,u,u)/4``.

        Its gradient equals the internal force only for conservative tensors
        (true for the beam built by :func:`make_vk_beam`).
        """
        u = self._check_state(u)
        U = u[:, None]
        out_g = np.zeros((self.n_dof, 1))
        out_h = np.zeros((self.n_dof, 1))
        if self.G_val.size:
            g = self.G_idx
            kernels.scatter_quad(g[:, 0].copy(), self.G_val, g[:, 1].copy(), g[:, 2].copy(),
                                 np.ascontiguousarray(U), out_g)
        if self.H_val.size:
            h = self.H_idx
            kernels.scatter_cubic(h[:, 0].copy(), self.H_val, h[:, 1].copy(), h[:, 2].copy(),
                                  h[:, 3].copy(), np.ascontiguousarray(U), out_h)
        return 0.5 * u @ self.K @ u + u @ out_g[:, 0] / 3.0 + u @ out_h[:, 0] / 4.0

    def with_forcing(self, forcing):
        return PolySystem(self.M, self.C, self.K, self._raw_G(), self._raw_H(), forcing, self.meta)

    def linear_part(self):
        return PolySystem(self.M, self.C, self.K, (), (), self.forcing, self.meta)

    def _raw_G(self):
        return np.column_stack([self.G_idx, self.G_val]) if self.G_val.size else ()

    def _raw_H(self):
        return np.column_stack([self.H_idx, self.H_val]) if self.H_val.size else ()

    def __repr__(self):
        return (f"PolySystem(n_dof={self.n_dof}, G={len(self.G_val)} terms, "
                f"H={len(self.H_val)} terms, name={self.meta.get('name')!r})")


def eval_internal_force(sys, u):
    """``K u + G(u,u) + H(u,u,u)``."""
    return sys.internal_force(u)


def eval_jacobian(sys, u):
    """``d/du`` of :func:`eval_internal_force`."""
    return sys.jacobian(u)


def make_duffing(omega0=1.0, xi=0.05, k3=0.5, eps=1.0, forcing_unit=1.0):
    """Single-dof Duffing resonator ``u'' + w0^2 u + eps (2 xi w0 u' + k3 u^3) = eps beta cos(w t)``."""
    if omega0 <= 0:
        raise ContractError("omega0 must be positive")
    if xi < 0:
        raise ContractError("xi must be nonnegative")
    H = [(0, 0, 0, 0, eps * k3)] if k3 != 0 else ()
    return PolySystem(
        M=[[1.0]],
        C=[[2.0 * eps * xi * omega0]],
        K=[[omega0**2]],
        H=H,
        forcing=[eps * forcing_unit],
        meta={"name": "duffing", "monitor_dof": 0, "omega_ref": omega0,
              "omega0": omega0, "xi": xi, "k3": k3, "eps": eps},
    )


@dataclass(frozen=True)
class MaterialGeometry:
    """Beam geometry and material in SI units.

    ``thickness`` is the dimension in the bending plane.
    """

    length: float
    width: float
    thickness: float
    density: float
    young_modulus: float
    poisson: float
    quality_factor: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ContractError(f"{name} must be strictly positive, got {value}")
        if not self.poisson < 0.5:
            raise ContractError("poisson must lie in (0, 0.5)")

    @property
    def area(self):
        return self.width * self.thickness

    @property
    def inertia(self):
        return self.width * self.thickness**3 / 12.0


REFERENCE_BEAM = MaterialGeometry(
    length=1000e-6, width=24e-6, thickness=10e-6,
    density=2330.0, young_modulus=167e9, poisson=0.22, quality_factor=50.0,
)

# 5-point Gauss-Legendre on [0, 1]; exact through degree 9 (w'^4 is degree 8).
_GP, _GW = np.polynomial.legendre.leggauss(5)
_GP = 0.5 * (_GP + 1.0)
_GW = 0.5 * _GW


def _element_operators(le, mg):
    """Element matrices and monomial tensors for dofs ``[u1, w1, r1, u2, w2, r2]``.

    ``r = le * w'`` is the nodal slope scaled by the element length, so every
    dof carries displacement units and POD energies are not dominated by
    rotations.
    """
    EA = mg.young_modulus * mg.area
    EI = mg.young_modulus * mg.inertia
    rhoA = mg.density * mg.area
    Ke = np.zeros((6, 6))
    Me = np.zeros((6, 6))
    Ge = np.zeros((6, 6, 6))
    He = np.zeros((6, 6, 6, 6))
    a = np.array([-1.0, 0, 0, 1.0, 0, 0]) / le
    for s, wg in zip(_GP, _GW):
        Nu = np.array([1 - s, 0, 0, s, 0, 0])
        Nw = np.array([0, 1 - 3 * s**2 + 2 * s**3, s - 2 * s**2 + s**3,
                       0, 3 * s**2 - 2 * s**3, -s**2 + s**3])
        b = np.array([0, -6 * s + 6 * s**2, 1 - 4 * s + 3 * s**2,
                      0, 6 * s - 6 * s**2, -2 * s + 3 * s**2]) / le
        kap = np.array([0, -6 + 12 * s, -4 + 6 * s,
                        0, 6 - 12 * s, -2 + 6 * s]) / le**2
        w = wg * le
        Ke += w * (EA * np.outer(a, a) + EI * np.outer(kap, kap))
        Me += w * rhoA * (np.outer(Nu, Nu) + np.outer(Nw, Nw))
        # E3 = EA/2 (a.q)(b.q)^2  ->  f_i = EA/2 [a_i (b.q)^2 + 2 b_i (a.q)(b.q)]
        Ge += w * 0.5 * EA * (np.einsum("i,j,k->ijk", a, b, b)
                              + 2.0 * np.einsum("i,j,k->ijk", b, a, b))
        # E4 = EA/8 (b.q)^4  ->  f_i = EA/2 b_i (b.q)^3
        He += w * 0.5 * EA * np.einsum("i,j,k,l->ijkl", b, b, b, b)
    return Ke, Me, Ge, He


def _scatter_tensor(Te, dofmaps):
    """Global monomial entries from an element tensor replicated over elements."""
    nz = np.argwhere(np.abs(Te) > 0)
    vals = Te[tuple(nz.T)]
    glob = dofmaps[:, nz]  # (n_elem, n_nz, order+1)
    keep = np.all(glob >= 0, axis=2)
    idx = glob[keep]
    v = np.broadcast_to(vals, keep.shape)[keep]
    return np.column_stack([idx, v])


def make_vk_beam(n_elem=64, mg=REFERENCE_BEAM, reference_mode=1):
    """Clamped-clamped von Karman beam with exact quadratic and cubic internal forces.

    Each node carries axial displacement ``u``, transverse deflection ``w`` and
    the length-scaled slope ``le * w'``. Damping is ``C = (w_ref / Q) M`` and the load pattern is
    ``M phi_ref`` with ``phi_ref`` the mass-normalised ``reference_mode``
    (1-based) bending mode.
    """
    if n_elem < 8:
        raise ContractError("n_elem must be >= 8")
    le = mg.length / n_elem
    Ke, Me, Ge, He = _element_operators(le, mg)
    n_nodes = n_elem + 1
    free = np.full(3 * n_nodes, -1, dtype=np.int64)
    interior = np.arange(3, 3 * (n_nodes - 1))
    free[interior] = np.arange(len(interior))
    n = len(interior)
    elem_dofs = np.array([[3 * e + d for d in range(6)] for e in range(n_elem)])
    dofmaps = free[elem_dofs]

    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for dm in dofmaps:
        sel = dm >= 0
        ix = np.ix_(dm[sel], dm[sel])
        K[ix] += Ke[np.ix_(sel, sel)]
        M[ix] += Me[np.ix_(sel, sel)]
    M = 0.5 * (M + M.T)
    K = 0.5 * (K + K.T)
    G = _scatter_tensor(Ge, dofmaps)
    H = _scatter_tensor(He, dofmaps)

    mid_node = n_elem // 2
    meta = {
        "name": "vk_beam",
        "n_elem": n_elem,
        "geometry": asdict(mg),
        "monitor_dof": int(free[3 * mid_node + 1]),
        "reference_mode": reference_mode,
    }
    linear = PolySystem(M, np.zeros_like(M), K, (), (), None, meta)
    try:
        modes = eigen_analysis(linear, reference_mode)
    except np.linalg.LinAlgError as exc:
        raise ContractError(f"constrained stiffness is singular: {exc}") from None
    freq, phi = modes[reference_mode - 1]
    omega_ref = 2 * np.pi * freq
    if phi[meta["monitor_dof"]] < 0:
        phi = -phi
    meta["omega_ref"] = omega_ref
    meta["reference_frequency_hz"] = freq
    return PolySystem(M, (omega_ref / mg.quality_factor) * M, K, G, H, M @ phi, meta)


def eigen_analysis(sys, k):
    """Lowest ``k`` eigenpairs of ``K phi = w^2 M phi`` as ``(frequency_hz, mode)``.

    Modes are mass-normalised; each mode's largest-magnitude entry is positive.
    """
    if not 1 <= k <= sys.n_dof:
        raise ContractError(f"k must be in [1, {sys.n_dof}]")
    lam, Z = scipy.linalg.eigh(sys.K, sys.M, subset_by_index=[0, k - 1])
    out = []
    for j in range(k):
        z = Z[:, j]
        if z[np.argmax(np.abs(z))] < 0:
            z = -z
        out.append((float(np.sqrt(max(lam[j], 0.0)) / (2 * np.pi)), z))
    return out


def system_to_dict(sys):
    return {
        "format": "romforge.polysystem",
        "version": 1,
        "n_dof": sys.n_dof,
        "M": sys.M.ravel().tolist(),
        "C": sys.C.ravel().tolist(),
        "K": sys.K.ravel().tolist(),
        "G": [[*map(int, i), float(v)] for i, v in zip(sys.G_idx, sys.G_val)],
        "H": [[*map(int, i), float(v)] for i, v in zip(sys.H_idx, sys.H_val)],
        "forcing": sys.forcing.tolist(),
        "meta": sys.meta,
    }


def system_from_dict(doc):
    n = int(doc["n_dof"])
    mats = [np.array(doc[k], dtype=float).reshape(n, n) for k in ("M", "C", "K")]
    return PolySystem(*mats, doc["G"], doc["H"], doc["forcing"], doc.get("meta"))


def save_system(path, sys):
    from romforge.io import atomic_write_text

    atomic_write_text(path, json.dumps(system_to_dict(sys)))


def load_system(path):
    with open(path) as fh:
        return system_from_dict(json.load(fh))
