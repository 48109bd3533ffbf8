"""Snapshot matrices, POD bases and POD-Galerkin projection of polynomial systems."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from romforge.dynsys import PolySystem
from romforge.errors import ContractError, RankDeficient
from romforge.hb import extract_phase, sample_orbit
from romforge.io import atomic_write_text, read_matrix_file, write_matrix_file

__all__ = [
    "SnapshotSet",
    "PodBasis",
    "ReducedPolySystem",
    "build_snapshots",
    "compute_pod",
    "project_system",
    "reconstruct",
    "save_snapshots",
    "load_snapshots",
    "save_basis",
    "load_basis",
    "save_reduced",
    "load_reduced",
]


@dataclass
class SnapshotSet:
    """State snapshots ``S_u`` with aligned parameter columns ``L = (tau, beta, phi)``.

    ``n_t`` is the number of consecutive columns per parameter instance.
    """

    S_u: np.ndarray
    L: np.ndarray
    n_t: int

    def __post_init__(self):
        self.S_u = np.atleast_2d(np.asarray(self.S_u, dtype=float))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if self.S_u.shape[1] != self.L.shape[1]:
            raise ContractError("S_u and L column counts differ")
        if np.isnan(self.S_u).any() or np.isnan(self.L).any():
            raise ContractError("snapshot data contains NaN")
        if self.n_t < 1 or self.S_u.shape[1] % self.n_t:
            raise ContractError("column count is not a multiple of n_t")

    @property
    def n_snapshots(self):
        return self.S_u.shape[1]

    @property
    def n_instances(self):
        return self.n_snapshots // self.n_t

    def instance_columns(self, i):
        return slice(i * self.n_t, (i + 1) * self.n_t)

    def subset(self, instances):
        cols = np.concatenate([np.arange(i * self.n_t, (i + 1) * self.n_t) for i in instances])
        return SnapshotSet(self.S_u[:, cols], self.L[:, cols], self.n_t)


def build_snapshots(orbits, N_t, dof=None, weights=None):
    """Stack one sampled period per ``(orbit, beta)`` pair.

    Parameter rows are ``tau_k = 2 pi k / N_t``, ``beta`` and the first-harmonic
    phase of the monitored signal.
    """
    orbits = list(orbits)
    if not orbits:
        raise ContractError("need at least one orbit")
    n = orbits[0][0].n_dof
    tau = 2 * np.pi * np.arange(N_t) / N_t
    cols, params = [], []
    for orbit, beta in orbits:
        if orbit.n_dof != n:
            raise ContractError("orbits have inconsistent n_dof")
        try:
            phi = extract_phase(orbit, dof, weights)
        except Exception:
            phi = 0.0
        cols.append(sample_orbit(orbit, N_t))
        params.append(np.vstack([tau, np.full(N_t, beta), np.full(N_t, phi)]))
    return SnapshotSet(np.hstack(cols), np.hstack(params), N_t)


@dataclass
class PodBasis:
    V: np.ndarray
    singular_values: np.ndarray

    @property
    def N(self):
        return self.V.shape[1]

    @property
    def N_h(self):
        return self.V.shape[0]

    def energy_fraction(self, N=None):
        s2 = self.singular_values**2
        return float(s2[: N or self.N].sum() / s2.sum())


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def compute_pod(snap, N, rank_tol=1e-7):
    """Leading ``N`` left singular vectors of ``S_u`` via a Gram eigenproblem.

    The smaller of ``S S^T`` and ``S^T S`` is decomposed. A singular value is
    counted as significant when it exceeds ``rank_tol * sigma_1``.
    """
    S = snap.S_u if isinstance(snap, SnapshotSet) else np.atleast_2d(snap)
    Nh, Ns = S.shape
    if not 1 <= N <= min(Nh, Ns):
        raise ContractError(f"N must be in [1, {min(Nh, Ns)}]")
    if Nh <= Ns:
        lam, U = np.linalg.eigh(S @ S.T)
        order = np.argsort(lam)[::-1]
        lam, U = np.clip(lam[order], 0, None), U[:, order]
        sigma = np.sqrt(lam)
        V = U[:, :N]
    else:
        lam, Z = np.linalg.eigh(S.T @ S)
        order = np.argsort(lam)[::-1]
        lam, Z = np.clip(lam[order], 0, None), Z[:, order]
        sigma = np.sqrt(lam)
        sig_n = sigma[:N]
        if sig_n[-1] <= rank_tol * sigma[0]:
            raise RankDeficient(int(np.sum(sigma > rank_tol * sigma[0])), N)
        V = (S @ Z[:, :N]) / sig_n
        # one re-orthonormalisation pass removes Gram round-off
        Q, R = np.linalg.qr(V)
        V = Q * np.sign(np.diag(R))
    sigma = sigma[: min(Nh, Ns)]
    if sigma[0] == 0 or sigma[N - 1] <= rank_tol * sigma[0]:
        raise RankDeficient(int(np.sum(sigma > rank_tol * sigma[0])) if sigma[0] else 0, N)
    return PodBasis(_fix_signs(V), sigma)


def reconstruct(basis, u_N):
    """Full state ``V u_N`` for a vector or a matrix of reduced columns."""
    u_N = np.asarray(u_N, dtype=float)
    if u_N.shape[0] != basis.N:
        raise ContractError(f"u_N has {u_N.shape[0]} rows, basis has {basis.N} modes")
    return basis.V @ u_N


class ReducedPolySystem:
    """POD-Galerkin system with dense reduced operators.

    ``g[i, j, k]`` is symmetric in ``(j, k)`` and ``h[i, j, k, l]`` in
    ``(j, k, l)``; the reduced force is ``K q + g(q, q) + h(q, q, q)``.
    """

    def __init__(self, M, C, K, g, h, forcing, meta=None):
        self.M = np.asarray(M, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.K = np.asarray(K, dtype=float)
        N = self.M.shape[0]
        self.g = np.asarray(g, dtype=float).reshape(N, N, N)
        self.h = np.asarray(h, dtype=float).reshape(N, N, N, N)
        self.forcing = np.asarray(forcing, dtype=float).ravel()
        self.meta = dict(meta or {})
        try:
            np.linalg.cholesky(self.M)
        except np.linalg.LinAlgError:
            raise ContractError("reduced mass matrix is not positive definite") from None
        self._poly = None

    @property
    def n_dof(self):
        return self.M.shape[0]

    def internal_force(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[0] != self.n_dof:
            raise ContractError("reduced state has wrong length")
        return (self.K @ q + np.einsum("ijk,j...,k...->i...", self.g, q, q)
                + np.einsum("ijkl,j...,k...,l...->i...", self.h, q, q, q))

    def to_poly_system(self):
        """Equivalent sparse-monomial :class:`PolySystem` (used by the HB solver)."""
        if self._poly is None:
            N = self.n_dof
            G, H = [], []
            for i in range(N):
                for j in range(N):
                    for k in range(j, N):
                        c = self.g[i, j, k] * (1 if j == k else 2)
                        if c:
                            G.append((i, j, k, c))
                        for l in range(k, N):
                            mult = len(set(permutations((j, k, l))))
                            c = self.h[i, j, k, l] * mult
                            if c:
                                H.append((i, j, k, l, c))
            self._poly = PolySystem(self.M, self.C, self.K, G, H, self.forcing, self.meta)
        return self._poly

    def to_dict(self):
        return {
            "format": "romforge.reduced",
            "version": 1,
            "N": self.n_dof,
            "M": self.M.ravel().tolist(),
            "C": self.C.ravel().tolist(),
            "K": self.K.ravel().tolist(),
            "g": self.g.ravel().tolist(),
            "h": self.h.ravel().tolist(),
            "forcing": self.forcing.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc):
        N = int(doc["N"])
        return cls(*(np.array(doc[k]).reshape(N, N) for k in ("M", "C", "K")),
                   doc["g"], doc["h"], doc["forcing"], doc.get("meta"))


def _sym_trailing(T):
    order = T.ndim - 1
    perms = list(permutations(range(1, order + 1)))
    return sum(T.transpose(0, *p) for p in perms) / len(perms)


def project_system(sys, basis):
    """Galerkin projection onto ``span(V)``; all reduced tensors are precomputed here."""
    V = basis.V if isinstance(basis, PodBasis) else np.asarray(basis, dtype=float)
    if V.shape[0] != sys.n_dof:
        raise ContractError("basis rows differ from system dofs")
    N = V.shape[1]
    Mr = V.T @ sys.M @ V
    Cr = V.T @ sys.C @ V
    Kr = V.T @ sys.K @ V
    g = np.zeros((N, N, N))
    if sys.G_val.size:
        a, b, c = sys.G_idx.T
        g = np.einsum("e,ei,ej,ek->ijk", sys.G_val, V[a], V[b], V[c], optimize=True)
    h = np.zeros((N, N, N, N))
    if sys.H_val.size:
        a, b, c, d = sys.H_idx.T
        h = np.einsum("e,ei,ej,ek,el->ijkl", sys.H_val, V[a], V[b], V[c], V[d], optimize=True)
    meta = dict(sys.meta)
    mon = sys.meta.get("monitor_dof")
    if mon is not None:
        meta["monitor_weights"] = V[mon].tolist()
        meta["full_monitor_dof"] = int(mon)
    meta.pop("monitor_dof", None)
    return ReducedPolySystem(0.5 * (Mr + Mr.T), Cr, Kr, _sym_trailing(g), _sym_trailing(h),
                             V.T @ sys.forcing, meta)


def save_snapshots(path, snap):
    write_matrix_file(path, b"SNAP", [snap.S_u, snap.L, np.array([[snap.n_t]])])


def load_snapshots(path):
    S, L, nt = read_matrix_file(path, b"SNAP")
    return SnapshotSet(S, L, int(nt[0, 0]))


def save_basis(path, basis):
    write_matrix_file(path, b"PODB", [basis.V, basis.singular_values[None, :]])


def load_basis(path):
    V, s = read_matrix_file(path, b"PODB")
    return PodBasis(V, s[0])


def save_reduced(path, rom):
    atomic_write_text(path, json.dumps(rom.to_dict()))


def load_reduced(path):
    with open(path) as fh:
        return ReducedPolySystem.from_dict(json.load(fh))
