"""Time-local master equations for the driven qubit, with and without RWA.

The reduced density operator and the effective density operators of the
quantum-regression step are propagated in the Floquet representation: the
coherent part reduces to quasienergy phases, and the second-order dissipator
is assembled from operator Fourier components X_{mu nu, n} and the kernel
integrals Gamma(Delta_{mu nu, n}, a, b) tabulated on a uniform half-step
grid.  The effective density obeys an inhomogeneous equation whose source
term involves the backward-propagated density and the F operator; dropping
that term is supported only for regression self-tests.

Two-time correlators <s+(t1) s-(t2)> (RWA) or <sx(t1) sx(t2)> (full coupling)
are collected on a uniform anchor grid, Hermitian-extended to t1 < t2, and
integrated into per-mode photon numbers

    N(omega_k, t) = (lambda_k^2/4) * double integral over [0,t]^2 of
                    correlator(t1, t2) * exp(-i omega_k (t1 - t2))

by a two-dimensional trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, DiscretizedBath, SIGMA_X, SIGMA_Z
from .floquet import (
    FloquetBasis,
    SigmaXElements,
    GammaKernel,
    operator_elements,
    sigma_x_elements,
)

__all__ = [
    "ReducedDensity",
    "EffectiveDensity",
    "RhoTrajectory",
    "LambdaTrajectory",
    "CorrelatorGrid",
    "SpectrumFrame",
    "evolve_rho",
    "evolve_lambda",
    "evolve_rwa",
    "correlator_grid",
    "spectrum_from_correlator",
]

SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class ReducedDensity:
    """Reduced qubit density matrix in Floquet components rho_{mu nu}(t)."""

    floquet: np.ndarray
    basis: FloquetBasis
    time: float

    def to_z_basis(self) -> np.ndarray:
        u = self.basis.state_matrix(self.time)
        return u @ self.floquet @ u.conj().T

    @classmethod
    def from_z_basis(cls, rho_z, basis: FloquetBasis, time: float) -> "ReducedDensity":
        u = basis.state_matrix(time)
        return cls(u.conj().T @ np.asarray(rho_z, dtype=complex) @ u, basis, time)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.floquet))


@dataclass(frozen=True)
class EffectiveDensity:
    """Regression effective density (Lambda_S or Xi_S) in Floquet components."""

    floquet: np.ndarray
    basis: FloquetBasis
    time: float
    anchor: float


@dataclass
class RhoTrajectory:
    """rho_S Floquet components on the integrator step grid."""

    times: np.ndarray           # (n_steps+1,)
    comps: np.ndarray           # (n_steps+1, 2, 2)
    basis: FloquetBasis

    def state(self, i: int) -> ReducedDensity:
        return ReducedDensity(self.comps[i], self.basis, float(self.times[i]))

    def index_of(self, t: float) -> int:
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        i = int(round((t - self.times[0]) / dt))
        if i < 0 or i >= self.times.size or abs(self.times[i] - t) > 1e-9 * max(dt, 1.0):
            raise ValueError(f"time {t} not on the stored step grid")
        return i

    def population_difference(self) -> np.ndarray:
        """P_z(t) = Tr[sigma_z rho_S(t)] along the trajectory."""
        zel = operator_elements(self.basis, SIGMA_Z)
        out = np.empty(self.times.size)
        for i, t in enumerate(self.times):
            out[i] = float(np.real(np.trace(zel.at(t) @ self.comps[i])))
        return out

    def trace_error(self) -> float:
        return float(np.max(np.abs(np.einsum("tii->t", self.comps) - 1.0)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.comps - self.comps.conj().transpose(0, 2, 1))))


@dataclass
class LambdaTrajectory:
    """Effective-density Floquet components from one anchor time."""

    anchor: float
    times: np.ndarray
    comps: np.ndarray
    basis: FloquetBasis
    kind: str                   # "sigma_x" | "sigma_minus"

    def state(self, i: int) -> EffectiveDensity:
        return EffectiveDensity(self.comps[i], self.basis, float(self.times[i]), self.anchor)


@dataclass
class CorrelatorGrid:
    """Two-time correlator on a uniform square grid, Hermitian-extended.

    values[i, j] = <O+(t_i) O-(t_j)> for t_i >= t_j as propagated; entries
    with t_i < t_j are the conjugates of their mirror images, which makes the
    spectrum double integral real by construction.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str                   # "sigma_x" | "sigma_pm"

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0

    def index_of(self, t: float) -> int:
        i = int(round(t / self.dt))
        if i < 0 or i >= self.times.size or abs(self.times[i] - t) > 1e-9 * self.dt:
            raise ValueError(f"time {t} outside correlator grid coverage")
        return i


@dataclass
class SpectrumFrame:
    """Per-mode photon numbers N(omega_k, t) on a (time x mode) grid."""

    omegas: np.ndarray          # (n_modes,)
    times: np.ndarray           # (n_times,)
    values: np.ndarray          # (n_times, n_modes), real
    method: str                 # davydov | tlme | rwa_tlme

    def at_mode(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def nearest_mode(self, omega: float) -> int:
        return int(np.argmin(np.abs(self.omegas - omega)))


class _KernelWorkspace:
    """Precomputed Floquet/bath tables shared by one propagation sweep.

    Holds the operator Fourier components for (O+, O-, O_init), the
    Gamma(Delta_{mu nu, n}, tau_j, 0) table on the half-step grid, and the
    Fourier phase cache exp(i n omega_x tau_j).
    """

    def __init__(self, cfg: ModelConfig, basis: FloquetBasis, t_final: float,
                 dt: float, rwa: bool):
        self.cfg = cfg
        self.basis = basis
        self.dt = float(dt)
        self.dtau = 0.5 * self.dt
        self.n_steps = int(round(t_final / self.dt))
        if abs(self.n_steps * self.dt - t_final) > 1e-9 * self.dt:
            raise ValueError("t_final must be a multiple of dt")
        self.rwa = rwa
        if rwa:
            self.el_plus = operator_elements(basis, SIGMA_PLUS)
            self.el_minus = operator_elements(basis, SIGMA_MINUS)
            self.el_init = self.el_minus
        else:
            el = sigma_x_elements(basis)
            self.el_plus = self.el_minus = self.el_init = el
        self._check_fourier_tail()
        delta_shift = self.el_plus.delta_shifted              # (2, 2, W)
        n_tau = 2 * self.n_steps + 1
        tau = np.arange(n_tau) * self.dtau
        kern = GammaKernel(cfg, delta_shift.ravel(), tau_max=tau[-1], dtau=self.dtau)
        self.g4 = kern.table.reshape(2, 2, delta_shift.shape[2], n_tau)
        # Gamma(-Delta_{mu nu, n}) = Gamma(Delta_{nu mu, -n})
        self.g4_minus = np.ascontiguousarray(self.g4.transpose(1, 0, 2, 3)[:, :, ::-1, :])
        nvals = basis.n_values
        self.phases = np.exp(1j * np.outer(tau, nvals * cfg.omega_x))   # (n_tau, W)
        self.delta = basis.delta
        self.exp_mdelta = np.exp(-1j * self.delta[None, :, :] * tau[:, None, None])

    def _check_fourier_tail(self):
        for el in (self.el_plus, self.el_minus):
            f = el.fourier
            peak = np.abs(f).max()
            edge = np.abs(f[:, :, [0, -1]]).max()
            if peak > 0 and edge > 1e-10 * peak:
                raise RuntimeError(
                    "operator Fourier components not converged within the basis "
                    f"n window (edge/peak = {edge/peak:.2e}); increase n_max"
                )

    def op_at(self, js: int, el: SigmaXElements) -> np.ndarray:
        return el.fourier @ self.phases[js]

    def w_pair(self, js: int, jdiff: np.ndarray):
        """Dissipator integrals W-(js; jdiff..js grids) per anchor offset.

        Returns (W_minus, W_plus_tilde) of shape (A, 2, 2) where A is the
        anchor count; Gamma limits are (tau_js - anchor, 0).
        """
        ph = self.phases[js]
        gm = self.g4[:, :, :, jdiff]
        gp = self.g4_minus[:, :, :, jdiff]
        wm = np.einsum("n,uvn,uvna->auv", ph, self.el_minus.fourier, gm)
        wp = np.einsum("n,uvn,uvna->auv", ph, self.el_plus.fourier, gp.conj())
        return wm, wp

    def f_pair(self, js: int, jdiff: np.ndarray):
        """Inhomogeneous-term integrals with Gamma limits (tau_js, tau_jdiff)."""
        ph = self.phases[js]
        gm = self.g4[:, :, :, js:js + 1] - self.g4[:, :, :, jdiff]
        gp = self.g4_minus[:, :, :, js:js + 1] - self.g4_minus[:, :, :, jdiff]
        fm = np.einsum("n,uvn,uvna->auv", ph, self.el_minus.fourier, gm)
        fp = np.einsum("n,uvn,uvna->auv", ph, self.el_plus.fourier, gp.conj())
        return fm, fp


def _comm(a, b):
    return a @ b - b @ a


def _rho_rhs(ws: _KernelWorkspace, js: int, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the rho_S Floquet EOM at half-grid index js."""
    op_p = ws.op_at(js, ws.el_plus)
    op_m = ws.op_at(js, ws.el_minus)
    wm, wp = ws.w_pair(js, np.array([js]))
    out = -1j * ws.delta * rho
    out -= _comm(op_p, wm[0] @ rho) - _comm(op_m, rho @ wp[0])
    return out


def evolve_rho(cfg: ModelConfig, basis: FloquetBasis, elements: SigmaXElements | None,
               t_final: float, dt: float, *, rwa: bool = False) -> RhoTrajectory:
    """Propagate rho_S(t) from the configured initial state with RK4.

    ``elements`` may be None (they are rebuilt from the basis); passing the
    sigma_x elements explicitly just avoids recomputation for the non-RWA
    case.  The trace is conserved exactly by the EOM structure.
    """
    ws = _KernelWorkspace(cfg, basis, t_final, dt, rwa)
    rho0 = ReducedDensity.from_z_basis(cfg.initial_density(), basis, 0.0).floquet
    n = ws.n_steps
    comps = np.empty((n + 1, 2, 2), dtype=complex)
    comps[0] = rho0
    rho = rho0
    for m in range(n):
        j0 = 2 * m
        k1 = _rho_rhs(ws, j0, rho)
        k2 = _rho_rhs(ws, j0 + 1, rho + 0.5 * dt * k1)
        k3 = _rho_rhs(ws, j0 + 1, rho + 0.5 * dt * k2)
        k4 = _rho_rhs(ws, j0 + 2, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        comps[m + 1] = rho
    times = np.arange(n + 1) * dt
    return RhoTrajectory(times=times, comps=comps, basis=basis)


class _LambdaSweep:
    """Stacked propagation of effective densities from many anchors at once.

    Anchors activate as the global time passes them; all active stacks share
    the kernel tables, with per-anchor Gamma-index offsets.
    """

    def __init__(self, ws: _KernelWorkspace, rho_traj: RhoTrajectory,
                 anchor_steps: np.ndarray, include_inhomogeneous: bool = True):
        self.ws = ws
        self.rho_traj = rho_traj
        self.anchor_steps = np.asarray(anchor_steps, dtype=int)   # in units of dt
        self.include_inhomogeneous = include_inhomogeneous
        self.anchor_half = 2 * self.anchor_steps
        cfg = ws.cfg
        n_a = self.anchor_steps.size
        self.lam = np.zeros((n_a, 2, 2), dtype=complex)
        # rho components and O_init matrices frozen at each anchor
        self.rho_anchor = np.empty((n_a, 2, 2), dtype=complex)
        self.oin_anchor = np.empty((n_a, 2, 2), dtype=complex)
        for a, step in enumerate(self.anchor_steps):
            self.rho_anchor[a] = rho_traj.comps[step]
            self.oin_anchor[a] = ws.op_at(2 * step, ws.el_init)

    def activate(self, a: int):
        self.lam[a] = self.oin_anchor[a] @ self.rho_anchor[a]

    def rhs(self, js: int, lam: np.ndarray, active: np.ndarray) -> np.ndarray:
        ws = self.ws
        jdiff = np.maximum(js - self.anchor_half[active], 0)
        op_p = ws.op_at(js, ws.el_plus)
        op_m = ws.op_at(js, ws.el_minus)
        sub = lam[active]
        wm, wp = ws.w_pair(js, jdiff)
        out = -1j * ws.delta[None] * sub
        out -= _comm(op_p[None], wm @ sub) - _comm(op_m[None], sub @ wp)
        if self.include_inhomogeneous:
            fm, fp = ws.f_pair(js, jdiff)
            ph = ws.exp_mdelta[jdiff]                          # (A, 2, 2)
            minit = self.oin_anchor[active] * ph
            rb = self.rho_anchor[active] * ph
            out -= _comm(op_p[None], minit @ fm @ rb) - _comm(op_m[None], minit @ (rb @ fp))
        full = np.zeros_like(lam)
        full[active] = out
        return full

    def step(self, m: int):
        """Advance all anchors with anchor_step <= m from t_m to t_{m+1}."""
        ws = self.ws
        dt = ws.dt
        active = self.anchor_steps <= m
        if not np.any(active):
            return
        j0 = 2 * m
        lam = self.lam
        k1 = self.rhs(j0, lam, active)
        k2 = self.rhs(j0 + 1, lam + 0.5 * dt * k1, active)
        k3 = self.rhs(j0 + 1, lam + 0.5 * dt * k2, active)
        k4 = self.rhs(j0 + 2, lam + dt * k3, active)
        self.lam = lam + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def correlator_row(self, js: int, active: np.ndarray) -> np.ndarray:
        op_p = self.ws.op_at(js, self.ws.el_plus)
        return np.einsum("uv,avu->a", op_p, self.lam[active])


def evolve_lambda(cfg: ModelConfig, basis: FloquetBasis, elements: SigmaXElements | None,
                  rho_traj: RhoTrajectory, t_prime: float, t_final: float, dt: float,
                  *, rwa: bool = False, include_inhomogeneous: bool = True) -> LambdaTrajectory:
    """Propagate the effective density anchored at t_prime up to t_final.

    The initial condition is O_init rho_S(t_prime) rotated to Floquet
    components; rho_traj must cover [0, t_prime] on the same step grid.
    """
    ws = _KernelWorkspace(cfg, basis, t_final, dt, rwa)
    step0 = rho_traj.index_of(t_prime)
    sweep = _LambdaSweep(ws, rho_traj, np.array([step0]), include_inhomogeneous)
    sweep.activate(0)
    n = ws.n_steps
    times = [t_prime]
    comps = [sweep.lam[0].copy()]
    for m in range(step0, n):
        sweep.step(m)
        times.append((m + 1) * dt)
        comps.append(sweep.lam[0].copy())
    return LambdaTrajectory(
        anchor=t_prime, times=np.array(times), comps=np.array(comps), basis=basis,
        kind="sigma_minus" if rwa else "sigma_x",
    )


def evolve_rwa(cfg: ModelConfig, basis: FloquetBasis, t_prime: float,
               t_final: float, dt: float):
    """RWA master equation: rho_S trajectory plus Xi_S anchored at t_prime."""
    rho_traj = evolve_rho(cfg, basis, None, t_final, dt, rwa=True)
    xi = evolve_lambda(cfg, basis, None, rho_traj, t_prime, t_final, dt, rwa=True)
    return rho_traj, xi


def correlator_grid(cfg: ModelConfig, basis: FloquetBasis, t_final: float,
                    dt_corr: float, dt: float | None = None, *, rwa: bool = False,
                    include_inhomogeneous: bool = True,
                    rho_traj: RhoTrajectory | None = None) -> CorrelatorGrid:
    """Fill the two-time correlator on a uniform (t1 >= t2) grid.

    Each anchor t2 spawns one effective-density propagation; all anchors are
    advanced together in a single sweep over global time.  Values at t1 < t2
    are filled by Hermitian extension.  ``dt_corr`` must be a multiple of the
    integrator step dt.
    """
    if dt is None:
        dt = cfg.dt
    ratio = int(round(dt_corr / dt))
    if ratio < 1 or abs(ratio * dt - dt_corr) > 1e-9 * dt:
        raise ValueError("dt_corr must be a positive multiple of dt")
    ws = _KernelWorkspace(cfg, basis, t_final, dt, rwa)
    n_steps = ws.n_steps
    if n_steps % ratio:
        raise ValueError("t_final must be a multiple of dt_corr")
    if rho_traj is None:
        rho_traj = evolve_rho(cfg, basis, None, t_final, dt, rwa=rwa)
    n_nodes = n_steps // ratio + 1
    anchor_steps = np.arange(n_nodes) * ratio
    sweep = _LambdaSweep(ws, rho_traj, anchor_steps, include_inhomogeneous)
    values = np.zeros((n_nodes, n_nodes), dtype=complex)

    for m in range(n_steps + 1):
        if m % ratio == 0:
            node = m // ratio
            sweep.activate(node)
            active = np.where(anchor_steps <= m)[0]
            values[node, active] = sweep.correlator_row(2 * m, active)
        if m < n_steps:
            sweep.step(m)

    iu = np.triu_indices(n_nodes, k=1)
    values[iu] = np.conj(values.T[iu])
    times = anchor_steps * dt
    return CorrelatorGrid(times=times, values=values, kind="sigma_pm" if rwa else "sigma_x")


def spectrum_from_correlator(grid: CorrelatorGrid, bath: DiscretizedBath,
                             times, method: str = "tlme") -> SpectrumFrame:
    """2-D trapezoid evaluation of the photon-number double integral.

    The requested times must lie on the correlator grid.  The Hermitian
    extension makes each value real; the imaginary residue is checked against
    1e-8 (relative to the frame peak) and discarded.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    h = grid.dt
    lam2_over4 = 0.25 * bath.couplings**2
    out = np.empty((times.size, bath.n_modes))
    worst_imag = 0.0
    for row, t in enumerate(times):
        m = grid.index_of(t)
        sub = grid.values[:m + 1, :m + 1]
        w = np.ones(m + 1)
        if m > 0:
            w[0] = w[-1] = 0.5
        v = w[:, None] * np.exp(1j * np.outer(grid.times[:m + 1], bath.omegas))
        raw = np.einsum("ik,ij,jk->k", v.conj(), sub, v) * h * h
        worst_imag = max(worst_imag, float(np.abs(raw.imag).max(initial=0.0)))
        out[row] = lam2_over4 * raw.real
    peak = max(np.abs(out).max(), 1e-300)
    if worst_imag * lam2_over4.max() > 1e-8 * peak:
        raise RuntimeError(
            f"spectrum double integral not real: residue {worst_imag:.3e}"
        )
    return SpectrumFrame(omegas=bath.omegas.copy(), times=times, values=out, method=method)
