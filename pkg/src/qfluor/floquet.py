"""Floquet machinery for the periodically driven qubit.

Quasienergies and periodic Floquet states are obtained by diagonalizing the
extended (Sambe-space) operator of [H_S(t) - i d/dt] truncated at a finite
Fourier order.  Matrix elements of qubit operators between Floquet states,
their Fourier components, and the bath-kernel integrals

    Gamma(omega, t, t') = int_{t'}^{t} C(tau) exp(-i omega tau) dtau

consumed by the master-equation module are provided here.  The Gamma values
are cached on a uniform tau grid and combined by exact trapezoid sums, which
makes interval additivity hold to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .model import ModelConfig, SIGMA_X, SIGMA_Z, bath_correlation_tlme

__all__ = [
    "FloquetBasis",
    "SigmaXElements",
    "GammaKernel",
    "FloquetConvergenceError",
    "compute_floquet_basis",
    "operator_elements",
    "sigma_x_elements",
    "fold_quasienergy",
]

DEFAULT_N_MAX = 40


class FloquetConvergenceError(RuntimeError):
    """Sambe truncation failed its stability check."""


def fold_quasienergy(eps, omega_x: float):
    """Fold quasienergies into the first Brillouin zone [-omega_x/2, omega_x/2)."""
    return np.mod(np.asarray(eps) + 0.5 * omega_x, omega_x) - 0.5 * omega_x


@dataclass(frozen=True)
class FloquetBasis:
    """Two Floquet states of the driven qubit as Fourier components.

    ``fourier_states[gamma, i, :]`` is the 2-spinor u_gamma^{(n_i)} with
    ``n_i = n_values[i]`` running over [-n_max, n_max]; the time-domain state
    is u_gamma(t) = sum_n u_gamma^{(n)} exp(i n omega_x t).  Quasienergies are
    folded into the first Brillouin zone and sorted ascending.
    """

    quasienergies: np.ndarray       # (2,)
    fourier_states: np.ndarray      # (2, 2*n_max+1, 2)
    n_max: int
    omega_x: float

    @property
    def n_values(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def delta(self) -> np.ndarray:
        """Quasienergy differences Delta[mu, nu] = eps_mu - eps_nu."""
        e = self.quasienergies
        return e[:, None] - e[None, :]

    def state_matrix(self, t: float) -> np.ndarray:
        """2x2 matrix whose columns are |u_gamma(t)> in the sigma_z basis."""
        phases = np.exp(1j * self.n_values * self.omega_x * t)
        return np.einsum("gns,n->sg", self.fourier_states, phases)


@dataclass(frozen=True)
class SigmaXElements:
    """Matrix elements of a qubit operator between the two Floquet states.

    ``fourier[mu, nu, i]`` holds the Fourier component O_{mu nu, n_i} of
    O_{mu nu}(t) = <u_mu(t)|O|u_nu(t)> over the same n window as the basis,
    together with the shifted quasienergy differences
    Delta_{mu nu, n} = eps_mu - eps_nu + n*omega_x.
    """

    basis: FloquetBasis
    fourier: np.ndarray             # (2, 2, 2*n_max+1)

    @property
    def delta(self) -> np.ndarray:
        return self.basis.delta

    @property
    def delta_shifted(self) -> np.ndarray:
        """(2, 2, n_window) array Delta_{mu nu} + n*omega_x."""
        n = self.basis.n_values
        return self.delta[:, :, None] + n[None, None, :] * self.basis.omega_x

    def at(self, t: float) -> np.ndarray:
        """O_{mu nu}(t) reconstructed from the Fourier components."""
        phases = np.exp(1j * self.basis.n_values * self.basis.omega_x * t)
        return self.fourier @ phases


def _sambe_matrix(cfg: ModelConfig, n_max: int) -> np.ndarray:
    """Truncated Sambe-space operator of H_S(t) - i d/dt.

    Blocks: diagonal H0 + n*omega_x, first off-diagonals Omega/2 * sigma_x
    (the two Fourier components of the cosine drive).
    """
    nn = np.arange(-n_max, n_max + 1)
    dim = 2 * nn.size
    h0 = 0.5 * cfg.omega0 * SIGMA_Z
    h1 = 0.5 * cfg.Omega * SIGMA_X
    mat = np.zeros((dim, dim), dtype=complex)
    for i, n in enumerate(nn):
        mat[2 * i:2 * i + 2, 2 * i:2 * i + 2] = h0 + n * cfg.omega_x * np.eye(2)
        if i + 1 < nn.size:
            mat[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4] = h1
            mat[2 * i + 2:2 * i + 4, 2 * i:2 * i + 2] = h1
    return mat


def _diagonalize_sambe(cfg: ModelConfig, n_max: int):
    """Return (quasienergies, fourier_states) for the two physical states."""
    mat = _sambe_matrix(cfg, n_max)
    evals, evecs = np.linalg.eigh(mat)
    wx = cfg.omega_x
    in_zone = np.where((evals >= -0.5 * wx - 1e-12) & (evals < 0.5 * wx - 1e-12))[0]
    if in_zone.size < 2:
        raise FloquetConvergenceError(
            f"only {in_zone.size} quasienergies found in the Brillouin zone "
            f"at n_max={n_max}; truncation too small"
        )
    # Physical states concentrate their Sambe weight in the central Fourier
    # block; truncation artifacts concentrate near the window edges.
    central = slice(2 * n_max, 2 * n_max + 2)
    weight = np.sum(np.abs(evecs[central, :]) ** 2, axis=0)
    i0, i1 = sorted(in_zone, key=lambda i: -weight[i])[:2]
    # Label by quasienergy ascending; a (near-)degenerate pair is ordered by
    # overlap with the sigma_z ground state at t = 0, larger overlap first.
    tie = 1e-9 * wx
    gs_amp = np.abs(np.sum(evecs[1::2, :], axis=0)) ** 2
    if evals[i1] < evals[i0] - tie or (
        abs(evals[i1] - evals[i0]) <= tie and gs_amp[i1] > gs_amp[i0]
    ):
        i0, i1 = i1, i0
    picked = [i0, i1]
    eps = evals[picked]
    states = np.stack([evecs[:, i].reshape(-1, 2) for i in picked])
    # Deterministic global phase: largest Fourier component real positive.
    for s in states:
        flat = s.ravel()
        k = int(np.argmax(np.abs(flat)))
        ph = flat[k] / abs(flat[k])
        s *= ph.conjugate()
    return eps, states


def compute_floquet_basis(cfg: ModelConfig, n_max: int = DEFAULT_N_MAX,
                          reference: FloquetBasis | None = None) -> FloquetBasis:
    """Diagonalize the Sambe-space operator and select the two physical states.

    The truncation is validated by re-diagonalizing at n_max + 4; quasienergy
    drift above 1e-8 (relative to max(|eps|, omega_x)) raises
    FloquetConvergenceError.  Passing the basis of a neighboring parameter
    point as ``reference`` keeps state labels continuous across parameter
    sweeps (maximal-overlap tracking instead of energy ordering), preventing
    label swaps at avoided crossings.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    eps, states = _diagonalize_sambe(cfg, n_max)
    eps_chk, _ = _diagonalize_sambe(cfg, n_max + 4)
    drift = np.abs(np.sort(eps) - np.sort(eps_chk))
    scale = np.maximum(np.abs(eps), cfg.omega_x)
    if np.any(drift / scale > 1e-8):
        raise FloquetConvergenceError(
            f"quasienergies not converged at n_max={n_max}: "
            f"drift {drift} under n_max -> n_max+4; increase n_max"
        )
    if reference is not None:
        if reference.n_max != n_max:
            raise ValueError("reference basis must share the same n_max")
        overlap = np.abs(np.einsum("gns,hns->gh",
                                   reference.fourier_states.conj(), states))
        if overlap[0, 1] + overlap[1, 0] > overlap[0, 0] + overlap[1, 1]:
            eps = eps[::-1]
            states = states[::-1]
    return FloquetBasis(
        quasienergies=eps, fourier_states=states, n_max=n_max, omega_x=cfg.omega_x
    )


def operator_elements(basis: FloquetBasis, op: np.ndarray) -> SigmaXElements:
    """Fourier components of <u_mu(t)|op|u_nu(t)> by exact convolution.

    O_{mu nu, p} = sum_m u_mu^{(m)+} op u_nu^{(m+p)}, truncated to the basis
    n window (the dropped tail is negligible for converged bases).
    """
    u = basis.fourier_states                     # (2, W, 2)
    w = u.shape[1]
    ou = np.einsum("st,gnt->gns", np.asarray(op, dtype=complex), u)
    four = np.zeros((2, 2, w), dtype=complex)
    for i, p in enumerate(basis.n_values):
        lo, hi = max(0, -p), min(w, w - p)
        if lo < hi:
            four[:, :, i] = np.einsum(
                "mns,kns->mk", u[:, lo:hi].conj(), ou[:, lo + p:hi + p]
            )
    return SigmaXElements(basis=basis, fourier=four)


def sigma_x_elements(basis: FloquetBasis) -> SigmaXElements:
    """Floquet matrix elements X_{mu nu}(t) and X_{mu nu, n} of sigma_x."""
    return operator_elements(basis, SIGMA_X)


def dump_elements_csv(basis: FloquetBasis, elements: SigmaXElements, path) -> None:
    """Debug dump of quasienergies and Fourier components X_{mu nu, n}."""
    with open(path, "w") as fh:
        fh.write("# quasienergies = "
                 + " ".join(repr(float(e)) for e in basis.quasienergies) + "\n")
        fh.write("n,X11_re,X11_im,X12_re,X12_im,X21_re,X21_im,X22_re,X22_im\n")
        for i, n in enumerate(basis.n_values):
            row = [str(int(n))]
            for mu in range(2):
                for nu in range(2):
                    z = elements.fourier[mu, nu, i]
                    row += [repr(float(z.real)), repr(float(z.imag))]
            fh.write(",".join(row) + "\n")


class GammaKernel:
    """Cached trapezoid evaluation of Gamma(omega, t, t') = int C(tau) e^{-i omega tau} dtau.

    Values are tabulated as cumulative integrals from 0 on a uniform tau grid,
    so Gamma over any grid-aligned interval is a difference of two table
    entries and interval additivity is exact.
    """

    def __init__(self, cfg: ModelConfig, omegas, tau_max: float, dtau: float):
        if dtau <= 0 or tau_max < 0:
            raise ValueError("need dtau > 0 and tau_max >= 0")
        self.cfg = cfg
        self.dtau = float(dtau)
        self.n_tau = int(round(tau_max / dtau)) + 1
        self.tau_grid = np.arange(self.n_tau) * self.dtau
        self.omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        corr = bath_correlation_tlme(self.tau_grid, cfg)
        integrand = corr[None, :] * np.exp(
            -1j * self.omegas[:, None] * self.tau_grid[None, :]
        )
        self.table = cumulative_trapezoid(integrand, dx=self.dtau, axis=1, initial=0.0)

    def index(self, t: float) -> int:
        j = int(round(t / self.dtau))
        if abs(t - j * self.dtau) > 1e-6 * self.dtau or j < 0 or j >= self.n_tau:
            raise ValueError(f"time {t} off the cached tau grid (dtau={self.dtau})")
        return j

    def value(self, omega: float, t: float, t_prime: float) -> complex:
        """Gamma(omega, t, t_prime) for a cached omega and grid-aligned times."""
        if t < t_prime:
            raise ValueError("require t >= t_prime")
        rows = np.where(np.isclose(self.omegas, omega, rtol=0.0, atol=1e-12))[0]
        if rows.size == 0:
            raise KeyError(f"omega={omega} not cached in this kernel")
        row = self.table[rows[0]]
        return complex(row[self.index(t)] - row[self.index(t_prime)])


def gamma(
    omega: float,
    t: float,
    t_prime: float,
    cfg: ModelConfig,
    dtau: float | None = None,
) -> complex:
    """One-off Gamma(omega, t, t') via a freshly tabulated trapezoid grid.

    For values consumed inside propagation loops build a GammaKernel once and
    reuse it; this convenience wrapper retabulates per call.  Endpoints that
    fall between grid nodes are handled by splitting the enclosing cell.
    """
    if t < t_prime:
        raise ValueError("require t >= t_prime")
    if t_prime < 0:
        raise ValueError("require t_prime >= 0")
    if t == t_prime:
        return 0.0 + 0.0j
    if dtau is None:
        # Resolve the fastest combined phase (cutoff plus probe frequency)
        # well enough for ~1e-7 trapezoid accuracy.
        dtau = 1.0 / (800.0 * (cfg.omega_c + abs(omega) + cfg.omega0))
    n = max(int(np.ceil(t / dtau - 1e-9)), 1)
    kern = GammaKernel(cfg, [omega], tau_max=n * dtau, dtau=dtau)
    row = kern.table[0]

    def cum(tt: float) -> complex:
        # Trapezoid integral from 0 to tt; partial last cell handled exactly.
        j = min(int(tt / kern.dtau), kern.n_tau - 2)
        base = row[j]
        frac = tt - kern.tau_grid[j]
        if frac <= 0.0:
            return complex(base)
        corr = bath_correlation_tlme(np.array([kern.tau_grid[j], tt]), cfg)
        vals = corr * np.exp(-1j * omega * np.array([kern.tau_grid[j], tt]))
        return complex(base + 0.5 * frac * (vals[0] + vals[1]))

    return cum(t) - cum(t_prime)
