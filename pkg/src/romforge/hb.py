"""Harmonic balance for polynomial systems.

A periodic orbit is stored as a coefficient array of shape ``(n_dof, 2H+1)``
whose columns are ``[a0, a_1..a_H, b_1..b_H]`` with

    u(t) = a0 + sum_h a_h cos(h w t) + b_h sin(h w t).

Nonlinear terms are evaluated by alternating frequency/time (AFT): synthesise
``N_t`` samples over one period, apply the polynomial pointwise, project back.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from romforge.errors import ContractError, NonConvergence, PhaseUndefined, StepCollapse
from romforge.io import atomic_write_bytes, check_magic, f64_bytes, pack_header

__all__ = [
    "FourierOrbit",
    "ContinuationConfig",
    "HBProblem",
    "hb_residual",
    "hb_solve",
    "hb_solve_phase",
    "continue_frf",
    "phase_sweep",
    "time_march",
    "extract_phase",
    "sample_orbit",
    "orbit_amplitude",
    "energy_balance",
    "aft_samples",
    "save_orbits",
    "load_orbits",
]

DEFAULT_H = 7
DENSE_LIMIT = 600


def aft_samples(H):
    """Number of AFT time samples used for ``H`` harmonics."""
    return max(8 * H, 32)


@dataclass
class FourierOrbit:
    """Truncated Fourier series of a periodic response at angular frequency ``omega``."""

    omega: float
    coeffs: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        P = self.coeffs.shape[1]
        if not self.omega > 0:
            raise ContractError("omega must be positive")
        if P < 3 or P % 2 == 0:
            raise ContractError(f"coefficient width {P} is not 2H+1 with H >= 1")

    @property
    def n_dof(self):
        return self.coeffs.shape[0]

    @property
    def H(self):
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def mean(self):
        return self.coeffs[:, 0]

    @property
    def cos(self):
        return self.coeffs[:, 1:self.H + 1]

    @property
    def sin(self):
        return self.coeffs[:, self.H + 1:]

    def harmonic_amplitude(self, h, dof=None, weights=None):
        y = _monitor(self, dof, weights)
        if h == 0:
            return abs(y[0])
        return float(np.hypot(y[h], y[self.H + h]))

    @classmethod
    def zeros(cls, n_dof, H, omega, beta=None):
        return cls(omega, np.zeros((n_dof, 2 * H + 1)), beta)


@dataclass
class ContinuationConfig:
    """Pseudo-arclength settings; step lengths are in scaled (dimensionless) units."""

    initial_step: float = 0.01
    min_step: float = 1e-6
    max_step: float = 0.05
    newton_tol: float = 1e-10
    max_newton_iters: int = 12
    max_points: int = 5000
    H: int = DEFAULT_H

    def __post_init__(self):
        if not 0 < self.min_step <= self.initial_step <= self.max_step:
            raise ContractError("need 0 < min_step <= initial_step <= max_step")
        if not self.newton_tol > 0:
            raise ContractError("newton_tol must be positive")
        if self.H < 1:
            raise ContractError("H must be >= 1")


def _synthesis(H, Nt):
    """``E`` with ``U = X @ E`` mapping coefficients to ``Nt`` samples over one period."""
    tau = 2 * np.pi * np.arange(Nt) / Nt
    h = np.arange(1, H + 1)[:, None]
    return np.vstack([np.ones((1, Nt)), np.cos(h * tau), np.sin(h * tau)])


def _analysis(H, Nt):
    """``D`` with ``X = U @ D`` (exact for band-limited samples, ``Nt > 2H``)."""
    E = _synthesis(H, Nt)
    D = E.T * (2.0 / Nt)
    D[:, 0] = 1.0 / Nt
    return D


def _monitor(orbit, dof=None, weights=None):
    if weights is not None:
        return np.asarray(weights, dtype=float) @ orbit.coeffs
    if dof is None:
        dof = 0
    return orbit.coeffs[dof]


class HBProblem:
    """Harmonic balance residual and Jacobians for one system and harmonic count."""

    def __init__(self, sys, H=DEFAULT_H, Nt=None):
        if H < 1:
            raise ContractError("H must be >= 1")
        self.sys = sys
        self.H = H
        self.P = 2 * H + 1
        self.Nt = Nt or aft_samples(H)
        self.E = _synthesis(H, self.Nt)
        self.D = _analysis(H, self.Nt)
        self.n = sys.n_dof
        self.size = self.n * self.P
        self.dense = self.size <= DENSE_LIMIT
        h = np.arange(1, H + 1, dtype=float)
        self._h = h
        self._absK, self._absM, self._absC = (np.abs(sys.K), np.abs(sys.M), np.abs(sys.C))
        if not self.dense:
            self._absK, self._absM, self._absC = (
                sp.csr_matrix(m) for m in (self._absK, self._absM, self._absC))
            self._K = sp.csr_matrix(sys.K)
            self._M = sp.csr_matrix(sys.M)
            self._C = sp.csr_matrix(sys.C)
        if not sys.is_linear:
            r, c = sys.jacobian_pattern
            p, q = np.meshgrid(np.arange(self.P), np.arange(self.P), indexing="ij")
            self._nl_rows = (r[:, None, None] * self.P + p[None]).ravel()
            self._nl_cols = (c[:, None, None] * self.P + q[None]).ravel()

    def _ops(self, omega):
        """Coefficient-space derivative ``A1`` and second derivative ``A2``."""
        H, P = self.H, self.P
        A1 = np.zeros((P, P))
        hw = self._h * omega
        ic = np.arange(1, H + 1)
        isn = ic + H
        A1[ic, isn] = hw
        A1[isn, ic] = -hw
        A2 = np.diag(np.r_[0.0, -hw**2, -hw**2])
        return A1, A2

    def coeffs(self, x):
        return np.asarray(x).reshape(self.n, self.P)

    def residual(self, x, omega, beta):
        X = self.coeffs(x)
        A1, A2 = self._ops(omega)
        # row-vector convention: derivative coefficients are X @ A1.T
        R = self.sys.K @ X + self.sys.M @ (X @ A2.T) + self.sys.C @ (X @ A1.T)
        if not self.sys.is_linear:
            U = X @ self.E
            R = R + self.sys.nonlinear_force(U) @ self.D
        R[:, 1] -= beta * self.sys.forcing
        return R.ravel()

    def roundoff(self, x, omega):
        """Floating-point noise level of :meth:`residual` at ``x``."""
        X = np.abs(self.coeffs(x))
        A1, A2 = self._ops(omega)
        lin = self._absK @ X + self._absM @ (X @ np.abs(A2)) + self._absC @ (X @ np.abs(A1).T)
        return 64 * np.finfo(float).eps * np.linalg.norm(lin)

    def d_omega(self, x, omega):
        X = self.coeffs(x)
        A1, _ = self._ops(omega)
        dA2 = np.diag(np.r_[0.0, -2 * self._h**2 * omega, -2 * self._h**2 * omega])
        return (self.sys.M @ (X @ dA2.T) + self.sys.C @ (X @ (A1 / omega).T)).ravel()

    def _nl_blocks(self, x):
        X = self.coeffs(x)
        U = X @ self.E
        data = self.sys.nonlinear_jacobian_data(U)
        # W[s, p, q] = sum_k D[k, p] data[s, k] E[q, k]
        return (data[:, None, :] * self.D.T[None, :, :]) @ self.E.T

    def jacobian(self, x, omega):
        A1, A2 = self._ops(omega)
        P = self.P
        if self.dense:
            S = self.sys
            J = np.kron(S.K, np.eye(P)) + np.kron(S.M, A2) + np.kron(S.C, A1)
            if not S.is_linear:
                np.add.at(J, (self._nl_rows, self._nl_cols), self._nl_blocks(x).ravel())
            return J
        J = (sp.kron(self._K, sp.identity(P), format="csr")
             + sp.kron(self._M, sp.csr_matrix(A2), format="csr")
             + sp.kron(self._C, sp.csr_matrix(A1), format="csr"))
        if not self.sys.is_linear:
            J = J + sp.csr_matrix((self._nl_blocks(x).ravel(), (self._nl_rows, self._nl_cols)),
                                  shape=J.shape)
        return J.tocsc()

    def solve(self, J, rhs):
        if self.dense:
            return np.linalg.solve(J, rhs)
        return spla.splu(J).solve(rhs)

    def linear_guess(self, omega, beta):
        """First-harmonic response of the linearised system."""
        S = self.sys
        Z = S.K - omega**2 * S.M + 1j * omega * S.C
        rhs = beta * S.forcing.astype(complex)
        z = spla.spsolve(sp.csc_matrix(Z), rhs) if not self.dense else np.linalg.solve(Z, rhs)
        # u = Re(z exp(i w t)): cosine coefficient Re z, sine coefficient -Im z
        X = np.zeros((self.n, self.P))
        X[:, 1] = z.real
        X[:, self.H + 1] = -z.imag
        return X.ravel()


def _problem(sys, H, cache=None):
    if isinstance(sys, HBProblem):
        return sys
    return HBProblem(sys, H)


def hb_residual(sys, orbit, beta, Nt=None):
    """Residual of the harmonic balance equations, shape ``(n_dof, 2H+1)`` raveled."""
    if orbit.n_dof != sys.n_dof:
        raise ContractError("orbit and system dof counts differ")
    prob = HBProblem(sys, orbit.H, Nt)
    return prob.residual(orbit.coeffs.ravel(), orbit.omega, beta)


def _res_scale(prob, beta):
    s = abs(beta) * np.linalg.norm(prob.sys.forcing)
    return s if s > 0 else 1.0


def hb_solve(sys, omega, beta, guess=None, H=None, tol=1e-10, max_iter=25):
    """Newton solve of the HB equations at fixed ``(omega, beta)``.

    ``tol`` is relative to ``|beta| * ||f||``. Raises :class:`NonConvergence`.
    """
    if H is None:
        H = guess.H if guess is not None else DEFAULT_H
    prob = _problem(sys, H)
    if guess is None:
        x = prob.linear_guess(omega, beta)
    else:
        if guess.n_dof != prob.n or guess.H != prob.H:
            raise ContractError("guess dimensions do not match the system / H")
        x = guess.coeffs.ravel().copy()
    scale = _res_scale(prob, beta)
    r = prob.residual(x, omega, beta)
    for it in range(max_iter + 1):
        rn = np.linalg.norm(r) / scale
        if rn < tol + prob.roundoff(x, omega) / scale:
            return FourierOrbit(omega, prob.coeffs(x).copy(), beta)
        if it == max_iter or not np.isfinite(rn):
            break
        x = x - prob.solve(prob.jacobian(x, omega), r)
        r = prob.residual(x, omega, beta)
    raise NonConvergence(max_iter, float(rn))


def hb_solve_phase(sys, phase, beta, guess, dof=None, weights=None, tol=1e-10, max_iter=25):
    """Solve for the orbit whose monitored first harmonic lags the forcing by ``phase``.

    Frequency is an unknown; the extra equation is
    ``cos_1 * sin(phase) - sin_1 * cos(phase) = 0`` on the monitored signal.
    """
    prob = _problem(sys, guess.H)
    c = np.zeros(prob.n) if weights is None else np.asarray(weights, dtype=float)
    if weights is None:
        c[0 if dof is None else dof] = 1.0
    row = np.zeros((prob.n, prob.P))
    row[:, 1] = c * np.sin(phase)
    row[:, prob.H + 1] = -c * np.cos(phase)
    row = row.ravel()
    x = guess.coeffs.ravel().copy()
    w = float(guess.omega)
    scale = _res_scale(prob, beta)
    amp = max(np.linalg.norm(x), 1e-300)
    for it in range(max_iter + 1):
        r = prob.residual(x, w, beta)
        g = row @ x
        rn = np.linalg.norm(r) / scale
        if rn < tol + prob.roundoff(x, w) / scale and abs(g) <= tol * amp:
            return FourierOrbit(w, prob.coeffs(x).copy(), beta)
        if it == max_iter or not np.isfinite(rn):
            break
        J = prob.jacobian(x, w)
        Jw = prob.d_omega(x, w)
        if prob.dense:
            A = np.block([[J, Jw[:, None]], [row[None, :], np.zeros((1, 1))]])
            dy = np.linalg.solve(A, np.r_[r, g])
        else:
            A = sp.bmat([[J, sp.csc_matrix(Jw[:, None])], [sp.csr_matrix(row[None, :]), None]],
                        format="csc")
            dy = spla.splu(A).solve(np.r_[r, g])
        x = x - dy[:-1]
        w = w - dy[-1]
        if not w > 0:
            break
    raise NonConvergence(max_iter, float(rn))


def phase_sweep(sys, beta, phases, start=None, dof=None, weights=None, H=None,
                max_dphi=0.05, min_dphi=1e-5, tol=1e-10):
    """Orbits at prescribed phase lags by natural continuation in the phase.

    The response is single-valued in the phase, so marching ``phi`` needs no
    fold handling. The march starts from ``start`` (an orbit, or a frequency
    at which a fixed-frequency solve is made; default ``0.8 * omega_ref``) and
    uses a secant predictor with step halving.

    Returns
    -------
    list of FourierOrbit
        One orbit per entry of ``phases``, in the given order.
    """
    phases = np.asarray(phases, dtype=float).ravel()
    if phases.size == 0:
        return []
    if np.any((phases <= 0) | (phases >= np.pi)):
        raise ContractError("target phases must lie strictly inside (0, pi)")
    H = H or (start.H if isinstance(start, FourierOrbit) else DEFAULT_H)
    prob = _problem(sys, H)
    if not isinstance(start, FourierOrbit):
        w0 = start if start is not None else 0.8 * sys.meta["omega_ref"]
        start = hb_solve(prob, float(w0), beta, H=H, tol=tol)
    cur, cur_phi = start, extract_phase(start, dof, weights)
    prev = None
    out = {}
    for k in np.argsort(phases, kind="stable"):
        target = phases[k]
        while abs(target - cur_phi) > 1e-14:
            step = np.clip(target - cur_phi, -max_dphi, max_dphi)
            while True:
                nxt = cur_phi + step
                guess = cur
                if prev is not None and prev[1] != cur_phi:
                    lam = (nxt - cur_phi) / (cur_phi - prev[1])
                    guess = FourierOrbit(cur.omega + lam * (cur.omega - prev[0].omega),
                                         cur.coeffs + lam * (cur.coeffs - prev[0].coeffs), beta)
                try:
                    orb = hb_solve_phase(prob, nxt, beta, guess, dof, weights, tol=tol)
                    break
                except NonConvergence:
                    step *= 0.5
                    if abs(step) < min_dphi:
                        raise StepCollapse(f"phase march stalled at phi={cur_phi:.6g} (beta={beta})")
            prev = (cur, cur_phi)
            cur, cur_phi = orb, nxt
        out[k] = FourierOrbit(cur.omega, cur.coeffs.copy(), beta)
    return [out[k] for k in range(phases.size)]


def _linear_scale(prob, beta, w0, w1, extra=()):
    grid = np.r_[np.linspace(w0, w1, 21), [w for w in extra if min(w0, w1) <= w <= max(w0, w1)]]
    return max(np.linalg.norm(prob.linear_guess(w, beta)) for w in grid)


def continue_frf(sys, beta, omega_start, omega_end, cfg=None):
    """Trace the frequency response at fixed ``beta`` by pseudo-arclength continuation.

    The returned list of orbits follows the branch through folds, including
    the unstable middle segment.
    """
    cfg = cfg or ContinuationConfig()
    if omega_start == omega_end:
        raise ContractError("omega_start must differ from omega_end")
    prob = _problem(sys, cfg.H)
    direction = 1.0 if omega_end > omega_start else -1.0
    first = hb_solve(prob, omega_start, beta, H=cfg.H, tol=cfg.newton_tol,
                     max_iter=cfg.max_newton_iters * 2)
    orbits = [first]
    if beta == 0:
        for w in np.linspace(omega_start, omega_end, 11)[1:]:
            orbits.append(FourierOrbit.zeros(prob.n, cfg.H, w, beta))
        return orbits

    omega_ref = sys.meta.get("omega_ref") if hasattr(sys, "meta") else None
    xs = _linear_scale(prob, beta, omega_start, omega_end, [omega_ref] if omega_ref else [])
    ws = abs(omega_end - omega_start)
    rs = _res_scale(prob, beta)

    def unpack(y):
        return y[:-1] * xs, y[-1] * ws

    def F(y):
        x, w = unpack(y)
        return prob.residual(x, w, beta) / rs

    y = np.r_[first.coeffs.ravel() / xs, omega_start / ws]
    x, w = unpack(y)
    Jx = prob.jacobian(x, w)
    v = prob.solve(Jx, -prob.d_omega(x, w) * ws / xs)
    t = np.r_[v, 1.0] * direction
    t /= np.linalg.norm(t)

    ds = cfg.initial_step
    while len(orbits) < cfg.max_points:
        y_pred = y + ds * t
        yk = y_pred.copy()
        ok = False
        for it in range(1, cfg.max_newton_iters + 1):
            x, w = unpack(yk)
            if not w > 0:
                break
            r = F(yk)
            g = t @ (yk - y_pred)
            if np.linalg.norm(r) < cfg.newton_tol + prob.roundoff(x, w) / rs and it > 1:
                ok = True
                break
            J = prob.jacobian(x, w)
            Jw = prob.d_omega(x, w) * ws / rs
            if prob.dense:
                A = np.vstack([np.hstack([J * (xs / rs), Jw[:, None]]), t[None, :]])
                dy = np.linalg.solve(A, np.r_[r, g])
            else:
                A = sp.bmat([[J * (xs / rs), sp.csc_matrix(Jw[:, None])],
                             [sp.csr_matrix(t[None, :-1]), sp.csr_matrix(t[None, -1:])]],
                            format="csc")
                dy = spla.splu(A).solve(np.r_[r, g])
            yk = yk - dy
            if not np.all(np.isfinite(yk)):
                break
        if not ok:
            ds *= 0.5
            if ds < cfg.min_step:
                raise StepCollapse(
                    f"continuation step collapsed near omega={y[-1] * ws:.6g} (beta={beta})")
            continue
        t_new = yk - y
        t = t_new / np.linalg.norm(t_new)
        y = yk
        x, w = unpack(y)
        passed = (w - omega_end) * direction >= 0
        if passed:
            # land exactly on omega_end using the last two points
            prev = orbits[-1]
            lam = (omega_end - prev.omega) / (w - prev.omega)
            guess = FourierOrbit(omega_end, prev.coeffs + lam * (prob.coeffs(x) - prev.coeffs))
            orbits.append(hb_solve(prob, omega_end, beta, guess, tol=cfg.newton_tol,
                                   max_iter=cfg.max_newton_iters * 2))
            break
        orbits.append(FourierOrbit(w, prob.coeffs(x).copy(), beta))
        if it <= 3:
            ds = min(ds * 1.3, cfg.max_step)
    return orbits


def _newmark_step(sys, u, v, a, t1, dt, omega, beta, tol, max_iter):
    c0 = 4.0 / dt**2
    c1 = 2.0 / dt
    F = beta * sys.forcing * np.cos(omega * t1)
    un = u + dt * v + 0.25 * dt**2 * a  # predictor with a_{n+1} = a_n
    scale = max(np.linalg.norm(F), np.linalg.norm(sys.M @ a), 1e-300)
    lin = c0 * sys.M + c1 * sys.C
    for _ in range(max_iter):
        an = c0 * (un - u - dt * v) - a
        vn = c1 * (un - u) - v
        r = sys.M @ an + sys.C @ vn + sys.internal_force(un) - F
        noise = 64 * np.finfo(float).eps * (c0 * np.linalg.norm(sys.M @ (np.abs(un) + np.abs(u)))
                                            + np.linalg.norm(sys.K @ np.abs(un)))
        if np.linalg.norm(r) <= tol * scale + noise:
            return un, vn, an
        un = un - np.linalg.solve(lin + sys.jacobian(un), r)
    raise NonConvergence(max_iter, float(np.linalg.norm(r) / scale),
                         "implicit time step did not converge")


def default_cycles(quality_factor):
    return int(max(10 * quality_factor / np.pi, 200))


def time_march(sys, omega, beta, n_cycles=None, steps_per_cycle=128, H=DEFAULT_H,
               tol=1e-12, max_iter=20, steady_tol=1e-8, max_extra_cycles=0, return_info=False):
    """Integrate from rest with the average-acceleration Newmark scheme.

    After ``n_cycles`` periods (plus up to ``max_extra_cycles`` more until two
    successive periods differ by less than ``steady_tol``) the last period is
    projected onto harmonics ``0..H``.
    """
    if n_cycles is None:
        Q = sys.meta.get("quality_factor") or sys.meta.get("geometry", {}).get("quality_factor", 50)
        n_cycles = default_cycles(Q)
    if n_cycles < 1:
        raise ContractError("n_cycles must be >= 1")
    if steps_per_cycle < 2 * H + 2:
        raise ContractError("steps_per_cycle must exceed 2H+1")
    n = sys.n_dof
    T = 2 * np.pi / omega
    dt = T / steps_per_cycle
    u = np.zeros(n)
    v = np.zeros(n)
    a = np.linalg.solve(sys.M, beta * sys.forcing - sys.internal_force(u))
    prev = None
    change = np.inf
    cycle = 0
    step = 0
    while True:
        period = np.empty((n, steps_per_cycle))
        for k in range(steps_per_cycle):
            period[:, k] = u
            step += 1
            u, v, a = _newmark_step(sys, u, v, a, step * dt, dt, omega, beta, tol, max_iter)
        cycle += 1
        if prev is not None:
            ref = np.linalg.norm(period)
            change = np.linalg.norm(period - prev) / ref if ref > 0 else 0.0
        prev = period
        if cycle >= n_cycles and (change < steady_tol or cycle >= n_cycles + max_extra_cycles):
            break
    orbit = FourierOrbit(omega, period @ _analysis(H, steps_per_cycle), beta)
    if return_info:
        return orbit, {"cycles": cycle, "period_change": change}
    return orbit


def extract_phase(orbit, dof=None, weights=None):
    """Phase lag of the first harmonic with respect to ``cos(w t)`` forcing, in ``[0, pi]``.

    With ``u = A cos(w t - phi)`` the cosine coefficient is ``A cos(phi)`` and the
    sine coefficient ``A sin(phi)``, so ``phi = atan2(sine, cosine)``.
    """
    y = _monitor(orbit, dof, weights)
    c, s = y[1], y[orbit.H + 1]
    if c == 0 and s == 0:
        raise PhaseUndefined("first harmonic vanishes")
    phi = np.arctan2(s, c)
    if phi < 0:
        phi += np.pi
    return float(min(phi, np.pi))


def sample_orbit(orbit, N_t):
    """Orbit values at ``tau_k = 2 pi k / N_t`` over one period, shape ``(n_dof, N_t)``."""
    if N_t < 2:
        raise ContractError("N_t must be >= 2")
    return orbit.coeffs @ _synthesis(orbit.H, N_t)


def fourier_fit(samples, H):
    """Inverse of :func:`sample_orbit` for band-limited samples (``N_t >= 2H+2``)."""
    samples = np.atleast_2d(samples)
    return samples @ _analysis(H, samples.shape[1])


def orbit_amplitude(orbit, dof=None, weights=None, N_t=128):
    """Maximum absolute value of the monitored signal over one sampled period."""
    y = _monitor(orbit, dof, weights)
    return float(np.max(np.abs(y @ _synthesis(orbit.H, N_t))))


def energy_balance(sys, orbit, beta):
    """Work done by the forcing and energy dissipated by damping over one period."""
    w = orbit.omega
    h = np.arange(1, orbit.H + 1)
    a, b = orbit.cos, orbit.sin
    work = np.pi * beta * sys.forcing @ b[:, 0]
    diss = np.pi * w * sum(h[j] ** 2 * (a[:, j] @ sys.C @ a[:, j] + b[:, j] @ sys.C @ b[:, j])
                           for j in range(orbit.H))
    return float(work), float(diss)


# -- serialisation -------------------------------------------------------------------

_ORBIT_MAGIC = b"FORB"


def save_orbits(path, orbits):
    """Binary ``FORB`` file: header ``(version, n_dof, H)`` as u32, ``count`` as u64."""
    if not orbits:
        raise ContractError("no orbits to save")
    n, H = orbits[0].n_dof, orbits[0].H
    parts = [pack_header(_ORBIT_MAGIC, n, H), struct.pack("<Q", len(orbits))]
    for o in orbits:
        if o.n_dof != n or o.H != H:
            raise ContractError("all orbits in a file must share n_dof and H")
        parts.append(struct.pack("<d", o.omega))
        parts.append(f64_bytes(o.coeffs))
    atomic_write_bytes(path, b"".join(parts))


def load_orbits(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    off = check_magic(buf, _ORBIT_MAGIC)
    n, H = struct.unpack_from("<II", buf, off)
    (count,) = struct.unpack_from("<Q", buf, off + 8)
    off += 16
    P = 2 * H + 1
    out = []
    for _ in range(count):
        (w,) = struct.unpack_from("<d", buf, off)
        off += 8
        c = np.frombuffer(buf, dtype="<f8", count=n * P, offset=off).reshape(n, P).copy()
        off += 8 * n * P
        out.append(FourierOrbit(w, c))
    return out
