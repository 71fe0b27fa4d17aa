"""Multi-D1 variational dynamics of the driven qubit plus discretized bath.

The trial state is a superposition of M products of qubit states (in the
sigma_x eigenbasis |+>, |->) with unnormalized multimode Bargmann coherent
states,

    |D_M> = sum_n A_n |+>|f_n> + B_n |->|g_n>,

whose parameters obey linear equations M(y) ydot = b obtained by projecting
the Schroedinger equation onto the tangent space of the ansatz.  The
coefficient matrix decouples into an (A, f) sector and a (B, g) sector; both
are solved by SVD-based least squares with a relative singular-value cutoff,
which regularizes the near-singular Gram matrices that arise whenever two
coherent-state copies approach each other.

Wavefunction-level observables (per-mode photon numbers, the qubit population
difference, the norm) and the squared deviation of the trajectory from the
exact Schroedinger dynamics are evaluated from the same parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import ModelConfig, DiscretizedBath

__all__ = [
    "DavydovState",
    "Derivatives",
    "EomSystem",
    "DeviationReport",
    "DavydovTrajectory",
    "init_state",
    "coherent_overlap",
    "assemble_eom",
    "solve_eom",
    "derivatives",
    "step_rk4",
    "evolve",
    "photon_number",
    "photon_numbers",
    "population_difference",
    "norm",
    "deviation",
]

DEFAULT_SVD_CUTOFF = 1e-10
SEED_NOISE_SCALE = 1e-8
HERMITICITY_TOL = 1e-8


@dataclass
class DavydovState:
    """Variational parameters of the multi-D1 trial state at one time."""

    amp_plus: np.ndarray        # (M,)   A_n
    amp_minus: np.ndarray       # (M,)   B_n
    disp_plus: np.ndarray       # (M, N_b) f_nk
    disp_minus: np.ndarray      # (M, N_b) g_nk
    time: float = 0.0

    def __post_init__(self):
        self.amp_plus = np.asarray(self.amp_plus, dtype=complex)
        self.amp_minus = np.asarray(self.amp_minus, dtype=complex)
        self.disp_plus = np.asarray(self.disp_plus, dtype=complex)
        self.disp_minus = np.asarray(self.disp_minus, dtype=complex)

    @property
    def m(self) -> int:
        return self.amp_plus.size

    @property
    def n_modes(self) -> int:
        return self.disp_plus.shape[1]

    def is_finite(self) -> bool:
        return all(
            bool(np.all(np.isfinite(x)))
            for x in (self.amp_plus, self.amp_minus, self.disp_plus, self.disp_minus)
        )

    def copy(self) -> "DavydovState":
        return DavydovState(
            self.amp_plus.copy(), self.amp_minus.copy(),
            self.disp_plus.copy(), self.disp_minus.copy(), self.time,
        )


@dataclass
class Derivatives:
    """Time derivatives of the variational parameters."""

    amp_plus: np.ndarray
    amp_minus: np.ndarray
    disp_plus: np.ndarray
    disp_minus: np.ndarray


@dataclass
class EomSystem:
    """Linear system for the parameter derivatives, M ydot = rhs.

    Vector layout (columns of the matrix and entries of rhs/solution):
    [A_1..A_M, B_1..B_M, f_{1,1}..f_{1,N}, .., f_{M,N}, g_{1,1}.., g_{M,N}]
    with displacement blocks row-major in (copy, mode).  Equation rows follow
    the same ordering convention.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    m: int
    n_modes: int

    @property
    def dim(self) -> int:
        return 2 * self.m * (self.n_modes + 1)

    def unpack(self, vec: np.ndarray) -> Derivatives:
        m, nb = self.m, self.n_modes
        return Derivatives(
            amp_plus=vec[:m],
            amp_minus=vec[m:2 * m],
            disp_plus=vec[2 * m:2 * m + m * nb].reshape(m, nb),
            disp_minus=vec[2 * m + m * nb:].reshape(m, nb),
        )


@dataclass
class DeviationReport:
    """Squared Schroedinger-equation deviation of the trajectory.

    sigma2 = (<Ddot|Ddot> + <D|H^2|D> - 2 Im<Ddot|H|D>) / omega0^2.
    """

    sigma2: float
    dot_dot: float
    h_squared: float
    dot_h_imag: float


@dataclass
class DavydovTrajectory:
    """Observables sampled along one variational evolution."""

    times: np.ndarray
    pz: np.ndarray
    norms: np.ndarray
    sigma2: np.ndarray | None
    photons: np.ndarray | None      # (n_samples, N_b)
    mode_omegas: np.ndarray
    norm_warnings: list = field(default_factory=list)


def init_state(cfg: ModelConfig, bath: DiscretizedBath, *, seed: int = 12345,
               noise_scale: float = SEED_NOISE_SCALE) -> DavydovState:
    """Factorized initial state: qubit state times reservoir vacuum.

    In the sigma_x basis, A_1 = (c_e + c_g)/sqrt(2) and B_1 = (c_e - c_g)/sqrt(2)
    carry the whole amplitude; copies n > 1 start with zero amplitude and a
    seeded complex displacement jitter of total rms magnitude ``noise_scale``
    (spread over all modes), which breaks the exact Gram degeneracy of
    identical coherent-state copies.  Zero-amplitude copies only reposition
    basis elements, so the represented state and every observable at t = 0
    are independent of the jitter.
    """
    m, nb = cfg.multiplicity, bath.n_modes
    c_e, c_g = cfg.initial_amplitudes()
    amp_p = np.zeros(m, dtype=complex)
    amp_m = np.zeros(m, dtype=complex)
    amp_p[0] = (c_e + c_g) / np.sqrt(2.0)
    amp_m[0] = (c_e - c_g) / np.sqrt(2.0)
    disp_p = np.zeros((m, nb), dtype=complex)
    disp_m = np.zeros((m, nb), dtype=complex)
    if m > 1:
        rng = np.random.default_rng(seed)
        entry = noise_scale / np.sqrt(2.0 * nb)
        shape = (m - 1, nb)
        disp_p[1:] = entry * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        disp_m[1:] = entry * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return DavydovState(amp_p, amp_m, disp_p, disp_m, time=0.0)


def coherent_overlap(left_disp, right_disp) -> complex:
    """Bargmann overlap <f_l|f_r> = exp(sum_k conj(l_k) r_k) (unnormalized)."""
    left = np.asarray(left_disp, dtype=complex)
    right = np.asarray(right_disp, dtype=complex)
    if left.shape != right.shape:
        raise ValueError("displacement vectors must have equal length")
    return complex(np.exp(np.sum(left.conj() * right)))


def _overlap_matrix(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """S[l, n] = exp(sum_k conj(left[l,k]) right[n,k])."""
    return np.exp(left.conj() @ right.T)


def _sector_system(amps, disps, other_amps, other_disps, sign, t,
                   bath: DiscretizedBath, cfg: ModelConfig):
    """Coefficient matrix and rhs for one decoupled sector of the EOMs.

    sign = +1 builds the (A, f) sector, sign = -1 the (B, g) sector; the other
    sector enters only through the sigma_z flip term on the right-hand side.
    """
    m, nb = disps.shape
    om, lam = bath.omegas, bath.couplings
    s_own = _overlap_matrix(disps, disps)
    s_cross = _overlap_matrix(disps, other_disps)
    dc = disps.conj()
    drive = cfg.Omega * np.cos(cfg.omega_x * t)
    w1 = np.einsum("lk,k,nk->ln", dc, om, disps)
    half_lam = 0.5 * lam
    w2 = (dc @ half_lam)[:, None] + (disps @ half_lam)[None, :]
    h = w1 + sign * (drive + w2)

    dim = m * (nb + 1)
    mat = np.zeros((dim, dim), dtype=complex)
    rhs = np.zeros(dim, dtype=complex)

    # amplitude equations (rows l)
    mat[:m, :m] = s_own
    coef = (s_own * amps[None, :])[:, :, None] * dc[:, None, :]          # (l, n, k)
    mat[:m, m:] = coef.reshape(m, m * nb)
    rhs[:m] = -1j * (
        0.5 * cfg.omega0 * (s_cross @ other_amps) + np.sum(s_own * amps[None, :] * h, axis=1)
    )

    # displacement equations (rows (l, p))
    sa = s_own * amps[None, :]                                   # (l, n)
    coef_amp = s_own[:, None, :] * disps.T[None, :, :]           # (l, p, n)
    mat[m:, :m] = coef_amp.reshape(m * nb, m)
    block = np.einsum("ln,pk->lpnk", sa, np.eye(nb, dtype=complex))
    block += np.einsum("ln,lk,np->lpnk", sa, dc, disps)
    mat[m:, m:] = block.reshape(m * nb, m * nb)
    flip = np.einsum("ln,n,np->lp", s_cross, other_amps, other_disps)
    own = np.einsum("ln,ln,np->lp", sa, h, disps)
    own += np.einsum("ln,p,np->lp", sa, om, disps)
    own += np.sum(sa, axis=1)[:, None] * (sign * half_lam)[None, :]
    rhs[m:] = (-1j * (0.5 * cfg.omega0 * flip + own)).ravel()
    return mat, rhs


def assemble_eom(state: DavydovState, t: float, bath: DiscretizedBath,
                 cfg: ModelConfig) -> EomSystem:
    """Full linear system for (Adot, Bdot, fdot, gdot) in the documented layout."""
    if not state.is_finite():
        raise ValueError("state contains non-finite entries")
    m, nb = state.m, state.n_modes
    mat_f, rhs_f = _sector_system(
        state.amp_plus, state.disp_plus, state.amp_minus, state.disp_minus,
        +1.0, t, bath, cfg,
    )
    mat_g, rhs_g = _sector_system(
        state.amp_minus, state.disp_minus, state.amp_plus, state.disp_plus,
        -1.0, t, bath, cfg,
    )
    dim = 2 * m * (nb + 1)
    mat = np.zeros((dim, dim), dtype=complex)
    rhs = np.zeros(dim, dtype=complex)
    a_sl, b_sl = slice(0, m), slice(m, 2 * m)
    f_sl = slice(2 * m, 2 * m + m * nb)
    g_sl = slice(2 * m + m * nb, dim)
    for rows, cols, sector in (((a_sl, f_sl), (a_sl, f_sl), (mat_f, rhs_f)),
                               ((b_sl, g_sl), (b_sl, g_sl), (mat_g, rhs_g))):
        amp_r, dsp_r = rows
        amp_c, dsp_c = cols
        sec_mat, sec_rhs = sector
        mat[amp_r, amp_c] = sec_mat[:m, :m]
        mat[amp_r, dsp_c] = sec_mat[:m, m:]
        mat[dsp_r, amp_c] = sec_mat[m:, :m]
        mat[dsp_r, dsp_c] = sec_mat[m:, m:]
        rhs[amp_r] = sec_rhs[:m]
        rhs[dsp_r] = sec_rhs[m:]
    return EomSystem(matrix=mat, rhs=rhs, m=m, n_modes=nb)


def _svd_lstsq(mat: np.ndarray, rhs: np.ndarray, cutoff: float) -> np.ndarray:
    """Minimum-norm SVD least squares with a relative singular-value cutoff.

    The divide-and-conquer driver can fail to converge on some of the
    near-singular Gram matrices this module produces; fall back to the
    classic (slower, more robust) SVD solver in that case.
    """
    try:
        sol, *_ = np.linalg.lstsq(mat, rhs, rcond=cutoff)
        return sol
    except np.linalg.LinAlgError:
        sol, *_ = scipy.linalg.lstsq(mat, rhs, cond=cutoff, lapack_driver="gelss",
                                     check_finite=False)
        return sol


def solve_eom(system: EomSystem, svd_cutoff: float = DEFAULT_SVD_CUTOFF) -> np.ndarray:
    """Minimum-norm least-squares solution via SVD.

    Singular values below ``svd_cutoff`` times the largest singular value are
    discarded; for a well-conditioned matrix this reproduces the exact solve.
    """
    if not 0.0 < svd_cutoff < 1.0:
        raise ValueError("svd_cutoff must lie in (0, 1)")
    if not np.any(system.matrix):
        raise ValueError("all-zero coefficient matrix")
    return _svd_lstsq(system.matrix, system.rhs, svd_cutoff)


def derivatives(state: DavydovState, t: float, bath: DiscretizedBath,
                cfg: ModelConfig, svd_cutoff: float = DEFAULT_SVD_CUTOFF) -> Derivatives:
    """Parameter derivatives by solving the two decoupled sectors.

    Identical to solving the assembled full system (the sectors are exact
    diagonal blocks of it under the documented permutation) at half the cost.
    """
    if not state.is_finite():
        raise ValueError("state contains non-finite entries")
    m, nb = state.m, state.n_modes
    mat_f, rhs_f = _sector_system(
        state.amp_plus, state.disp_plus, state.amp_minus, state.disp_minus,
        +1.0, t, bath, cfg,
    )
    mat_g, rhs_g = _sector_system(
        state.amp_minus, state.disp_minus, state.amp_plus, state.disp_plus,
        -1.0, t, bath, cfg,
    )
    if not (np.isfinite(mat_f).all() and np.isfinite(mat_g).all()
            and np.isfinite(rhs_f).all() and np.isfinite(rhs_g).all()):
        raise RuntimeError(
            "variational parameters diverged (non-finite coherent overlaps); "
            "reduce dt or the seeding noise"
        )
    sol_f = _svd_lstsq(mat_f, rhs_f, svd_cutoff)
    sol_g = _svd_lstsq(mat_g, rhs_g, svd_cutoff)
    return Derivatives(
        amp_plus=sol_f[:m],
        amp_minus=sol_g[:m],
        disp_plus=sol_f[m:].reshape(m, nb),
        disp_minus=sol_g[m:].reshape(m, nb),
    )


def _advance(state: DavydovState, d: Derivatives, h: float) -> DavydovState:
    return DavydovState(
        state.amp_plus + h * d.amp_plus,
        state.amp_minus + h * d.amp_minus,
        state.disp_plus + h * d.disp_plus,
        state.disp_minus + h * d.disp_minus,
        state.time,
    )


def step_rk4(state: DavydovState, t: float, dt: float, bath: DiscretizedBath,
             cfg: ModelConfig, svd_cutoff: float = DEFAULT_SVD_CUTOFF,
             k1: Derivatives | None = None) -> DavydovState:
    """One classical RK4 step; assemble-and-solve at each of the four stages.

    ``k1`` can reuse derivatives already computed at (state, t), e.g. for
    observable evaluation, saving one linear solve.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if k1 is None:
        k1 = derivatives(state, t, bath, cfg, svd_cutoff)
    k2 = derivatives(_advance(state, k1, 0.5 * dt), t + 0.5 * dt, bath, cfg, svd_cutoff)
    k3 = derivatives(_advance(state, k2, 0.5 * dt), t + 0.5 * dt, bath, cfg, svd_cutoff)
    k4 = derivatives(_advance(state, k3, dt), t + dt, bath, cfg, svd_cutoff)
    new = DavydovState(
        state.amp_plus + (dt / 6.0) * (k1.amp_plus + 2 * k2.amp_plus + 2 * k3.amp_plus + k4.amp_plus),
        state.amp_minus + (dt / 6.0) * (k1.amp_minus + 2 * k2.amp_minus + 2 * k3.amp_minus + k4.amp_minus),
        state.disp_plus + (dt / 6.0) * (k1.disp_plus + 2 * k2.disp_plus + 2 * k3.disp_plus + k4.disp_plus),
        state.disp_minus + (dt / 6.0) * (k1.disp_minus + 2 * k2.disp_minus + 2 * k3.disp_minus + k4.disp_minus),
        time=t + dt,
    )
    return new


def _real_checked(value: complex, what: str, tol: float = HERMITICITY_TOL) -> float:
    scale = max(abs(value), 1.0)
    if abs(value.imag) > tol * scale:
        raise RuntimeError(f"{what} has non-negligible imaginary part {value.imag:.3e}")
    return float(value.real)


def norm(state: DavydovState) -> float:
    """Ansatz norm sqrt(<D_M|D_M>); equals 1 for a normalized initial state."""
    s_ff = _overlap_matrix(state.disp_plus, state.disp_plus)
    s_gg = _overlap_matrix(state.disp_minus, state.disp_minus)
    val = (
        state.amp_plus.conj() @ s_ff @ state.amp_plus
        + state.amp_minus.conj() @ s_gg @ state.amp_minus
    )
    return float(np.sqrt(max(_real_checked(complex(val), "norm^2"), 0.0)))


def population_difference(state: DavydovState) -> float:
    """P_z = <sigma_z>; the sigma_z flip couples the two coherent-state sectors."""
    s_fg = _overlap_matrix(state.disp_plus, state.disp_minus)
    s_gf = _overlap_matrix(state.disp_minus, state.disp_plus)
    val = (
        state.amp_plus.conj() @ s_fg @ state.amp_minus
        + state.amp_minus.conj() @ s_gf @ state.amp_plus
    )
    return _real_checked(complex(val), "P_z", tol=1e-10)


def photon_numbers(state: DavydovState) -> np.ndarray:
    """N(omega_k) = <b_k^dag b_k> for every mode, as a real array."""
    s_ff = _overlap_matrix(state.disp_plus, state.disp_plus)
    s_gg = _overlap_matrix(state.disp_minus, state.disp_minus)
    f, g = state.disp_plus, state.disp_minus
    a, b = state.amp_plus, state.amp_minus
    vals = np.einsum("l,lk,ln,nk,n->k", a.conj(), f.conj(), s_ff, f, a)
    vals += np.einsum("l,lk,ln,nk,n->k", b.conj(), g.conj(), s_gg, g, b)
    if np.abs(vals.imag).max(initial=0.0) > 1e-10 * max(np.abs(vals).max(initial=0.0), 1.0):
        raise RuntimeError("photon numbers acquired a non-negligible imaginary part")
    return vals.real


def photon_number(state: DavydovState, k: int) -> float:
    """Photon number in mode k (0-based index)."""
    if not 0 <= k < state.n_modes:
        raise IndexError(f"mode index {k} out of range [0, {state.n_modes})")
    return float(photon_numbers(state)[k])


def deviation(state: DavydovState, derivs: Derivatives, t: float,
              cfg: ModelConfig, bath: DiscretizedBath) -> DeviationReport:
    """Squared norm of (i d/dt - H)|D_M> from the solved derivatives.

    Uses the explicit inner products <Ddot|Ddot>, <Ddot|H|D>, <D|H^2|D> of the
    ansatz (including the sum_k lambda_k^2/4 vacuum term of H^2), normalized
    by omega0^2.  The derivatives must come from the same (state, t) solve
    that the integrator uses, so sigma^2 measures the followed trajectory.
    """
    a, b = state.amp_plus, state.amp_minus
    f, g = state.disp_plus, state.disp_minus
    da, db = derivs.amp_plus, derivs.amp_minus
    df, dg = derivs.disp_plus, derivs.disp_minus
    if da.shape != a.shape or df.shape != f.shape:
        raise ValueError("derivative dimensions do not match the state")
    om, lam = bath.omegas, bath.couplings
    hl = 0.5 * lam
    w0 = cfg.omega0
    c = cfg.Omega * np.cos(cfg.omega_x * t)

    s_ff = _overlap_matrix(f, f)
    s_gg = _overlap_matrix(g, g)
    s_fg = _overlap_matrix(f, g)
    s_gf = _overlap_matrix(g, f)

    def cross(left, weights, right):
        if weights is None:
            return left.conj() @ right.T
        return np.einsum("lk,k,nk->ln", left.conj(), weights, right)

    def pair_sums(disp, ddisp):
        p1 = cross(disp, None, ddisp)         # sum_k conj(x)_lk xdot_nk
        p2 = cross(ddisp, None, disp)
        p3 = cross(ddisp, None, ddisp)
        w1 = cross(disp, om, disp)
        w2 = (disp.conj() @ hl)[:, None] + (disp @ hl)[None, :]
        q2 = cross(ddisp, om, disp)
        q4 = cross(disp, om**2, disp)
        v1 = (disp.conj() @ (om * hl))[:, None] + (disp @ (om * hl))[None, :]
        ldot = ddisp.conj() @ hl
        return p1, p2, p3, w1, w2, q2, q4, v1, ldot

    p1f, p2f, p3f, w1f, w2f, q2f, q4f, v1f, ldf = pair_sums(f, df)
    p1g, p2g, p3g, w1g, w2g, q2g, q4g, v1g, ldg = pair_sums(g, dg)

    def outer(x, y):
        return x.conj()[:, None] * y[None, :]

    # <Ddot|Ddot>
    dd = np.sum(s_ff * (outer(da, da) + outer(da, a) * p1f + outer(a, da) * p2f
                        + outer(a, a) * (p3f + p1f * p2f)))
    dd += np.sum(s_gg * (outer(db, db) + outer(db, b) * p1g + outer(b, db) * p2g
                         + outer(b, b) * (p3g + p1g * p2g)))
    dd = _real_checked(complex(dd), "<Ddot|Ddot>")

    # <Ddot|H|D>
    dh = 0.5 * w0 * np.sum(s_fg * outer(da, b))
    dh += np.sum(s_ff * outer(da, a) * (c + w1f + w2f))
    dh += 0.5 * w0 * np.sum(s_fg * outer(a, b) * cross(df, None, g))
    dh += np.sum(s_ff * outer(a, a) * (c * p2f + q2f + w1f * p2f + ldf[:, None] + w2f * p2f))
    dh += 0.5 * w0 * np.sum(s_gf * outer(db, a))
    dh -= np.sum(s_gg * outer(db, b) * (c - w1g + w2g))
    dh += 0.5 * w0 * np.sum(s_gf * outer(b, a) * cross(dg, None, f))
    dh -= np.sum(s_gg * outer(b, b) * (c * p2g - q2g - w1g * p2g + ldg[:, None] + w2g * p2g))

    # <D|H^2|D>
    slam = float(np.sum(lam**2)) / 4.0
    hh = (0.25 * w0**2 + c**2) * np.sum(s_ff * outer(a, a) + s_gg * outer(b, b))
    hh += w0 * np.sum(s_fg * outer(a, b) * cross(f, om, g))
    hh += w0 * np.sum(s_gf * outer(b, a) * cross(g, om, f))
    hh += 2.0 * c * np.sum(s_ff * outer(a, a) * (w1f + w2f))
    hh -= 2.0 * c * np.sum(s_gg * outer(b, b) * (w1g - w2g))
    hh += np.sum(s_ff * outer(a, a) * (q4f + slam + w1f**2 + w2f**2 + v1f + 2.0 * w1f * w2f))
    hh += np.sum(s_gg * outer(b, b) * (q4g + slam + w1g**2 + w2g**2 - v1g - 2.0 * w1g * w2g))
    hh = _real_checked(complex(hh), "<D|H^2|D>")

    dh_im = float(np.imag(dh))
    sigma2 = (dd + hh - 2.0 * dh_im) / w0**2
    return DeviationReport(sigma2=sigma2, dot_dot=dd, h_squared=hh, dot_h_imag=dh_im)


def evolve(state: DavydovState, cfg: ModelConfig, bath: DiscretizedBath,
           sample_times=None, *, svd_cutoff: float = DEFAULT_SVD_CUTOFF,
           norm_tolerance: float = 1e-6, with_deviation: bool = True,
           with_photons: bool = True) -> DavydovTrajectory:
    """Fixed-step RK4 evolution with observables sampled at requested times.

    Sample times must lie (within rounding) on the step grid spanned by
    cfg.dt and are clipped to [0, cfg.t_final].  A norm excursion beyond
    ``norm_tolerance`` is recorded as a warning; the run continues.
    """
    dt = cfg.dt
    n_steps = int(round(cfg.t_final / dt)) if cfg.t_final > 0 else 0
    if sample_times is None:
        stride = max(int(round(max(0.1 * cfg.omega0, dt) / dt)), 1)
        sample_steps = list(range(0, n_steps + 1, stride))
        if sample_steps[-1] != n_steps:
            sample_steps.append(n_steps)
    else:
        sample_times = np.atleast_1d(np.asarray(sample_times, dtype=float))
        if np.any(np.diff(sample_times) <= 0):
            raise ValueError("sample_times must be strictly increasing")
        if sample_times[0] < -1e-12 or sample_times[-1] > cfg.t_final + 1e-9:
            raise ValueError("sample_times must lie within [0, t_final]")
        sample_steps = []
        for ts in sample_times:
            step = int(round(ts / dt))
            if abs(step * dt - ts) > 1e-6 * dt:
                raise ValueError(f"sample time {ts} does not lie on the dt grid")
            sample_steps.append(step)
    sample_set = set(sample_steps)

    times, pzs, norms, sig2, phot = [], [], [], [], []
    warnings = []
    cur = state.copy()
    for step in range(n_steps + 1):
        t = step * dt
        k1 = None
        if step in sample_set:
            k1 = derivatives(cur, t, bath, cfg, svd_cutoff)
            times.append(t)
            pzs.append(population_difference(cur))
            nval = norm(cur)
            norms.append(nval)
            if abs(nval - 1.0) > norm_tolerance:
                warnings.append((t, nval))
            if with_deviation:
                sig2.append(deviation(cur, k1, t, cfg, bath).sigma2)
            if with_photons:
                phot.append(photon_numbers(cur))
        if step < n_steps:
            cur = step_rk4(cur, t, dt, bath, cfg, svd_cutoff, k1=k1)
    return DavydovTrajectory(
        times=np.array(times),
        pz=np.array(pzs),
        norms=np.array(norms),
        sigma2=np.array(sig2) if with_deviation else None,
        photons=np.array(phot) if with_photons else None,
        mode_omegas=bath.omegas.copy(),
        norm_warnings=warnings,
    )
