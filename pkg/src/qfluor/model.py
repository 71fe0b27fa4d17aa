"""Physical model of a driven qubit in an Ohmic bosonic reservoir.

Defines the simulation parameters, the qubit/drive Hamiltonian, the Ohmic
spectral density with a hard cutoff, its linear discretization into a finite
set of bosonic modes, and the zero-temperature reservoir correlation function
in the two prefactor conventions used across the toolkit (the master-equation
convention carries a 1/4; the hierarchy convention absorbs it into the
coupling operator).

All quantities are expressed in units of the qubit transition frequency
``omega0`` (which defaults to 1) with hbar = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
import math
import re

import numpy as np

__all__ = [
    "ModelConfig",
    "DiscretizedBath",
    "QubitOperatorFrame",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "IDENTITY",
    "spectral_density",
    "discretize_bath",
    "bath_correlation_tlme",
    "bath_correlation_heom",
    "qubit_hamiltonian",
]

# Pauli matrices in the sigma_z eigenbasis, ordered (excited, ground).
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

# Relative tau threshold below which the correlation functions switch to the
# series branch; avoids catastrophic cancellation in (cos(x)-1)/x^2 terms.
SERIES_THRESHOLD = 1e-3

_BLOCH_RE = re.compile(r"^bloch\(\s*([^,\s]+)\s*,\s*([^,\s)]+)\s*\)$")


class ConfigError(ValueError):
    """Raised for malformed configuration input."""


@dataclass(frozen=True)
class ModelConfig:
    """All physical and numerical parameters of a simulation run.

    Frequencies (``omega0``, ``omega_x``, ``omega_c``) are angular frequencies
    in units of ``omega0``; ``Omega`` is the Rabi drive amplitude and may be
    zero; ``alpha`` is the dimensionless Ohmic coupling.
    """

    omega0: float = 1.0
    Omega: float = 0.0
    omega_x: float = 1.0
    alpha: float = 0.0
    omega_c: float = 5.0
    n_modes: int = 60
    initial_qubit: str = "ground"
    t_final: float = 30.0
    dt: float = 0.01
    multiplicity: int = 4

    def __post_init__(self):
        for name in ("omega0", "omega_x", "omega_c"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.Omega < 0.0:
            raise ConfigError(f"Omega must be >= 0, got {self.Omega}")
        if self.alpha < 0.0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.n_modes < 1:
            raise ConfigError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.multiplicity < 1:
            raise ConfigError(f"multiplicity must be >= 1, got {self.multiplicity}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.t_final < 0.0:
            raise ConfigError(f"t_final must be >= 0, got {self.t_final}")
        self.initial_amplitudes()  # validate the tag eagerly

    def initial_amplitudes(self) -> np.ndarray:
        """Initial qubit state as amplitudes (c_e, c_g) in the sigma_z basis.

        ``ground`` and ``excited`` are the bare sigma_z eigenstates;
        ``bloch(theta,phi)`` is cos(theta/2)|e> + e^{i phi} sin(theta/2)|g>.
        """
        tag = self.initial_qubit.strip()
        if tag == "ground":
            return np.array([0.0, 1.0], dtype=complex)
        if tag == "excited":
            return np.array([1.0, 0.0], dtype=complex)
        m = _BLOCH_RE.match(tag)
        if m:
            try:
                theta, phi = float(m.group(1)), float(m.group(2))
            except ValueError as exc:
                raise ConfigError(f"bad bloch angles in {tag!r}") from exc
            return np.array(
                [math.cos(theta / 2.0), math.sin(theta / 2.0) * np.exp(1j * phi)],
                dtype=complex,
            )
        raise ConfigError(
            f"unknown initial_qubit {tag!r}; expected ground, excited, or bloch(theta,phi)"
        )

    def initial_density(self) -> np.ndarray:
        """Initial qubit density matrix in the sigma_z basis."""
        psi = self.initial_amplitudes()
        return np.outer(psi, psi.conj())

    @property
    def drive_period(self) -> float:
        return 2.0 * np.pi / self.omega_x

    def replace(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)

    # -- key = value serialization ------------------------------------------

    def to_text(self) -> str:
        """Canonical key = value block, round-trips through from_text."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, str) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        for ln_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {ln_no}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip().strip("'\"")
            if key not in known:
                raise ConfigError(f"line {ln_no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {ln_no}: duplicate key {key!r}")
            values[key] = val
        kwargs = {}
        for key, val in values.items():
            if key in ("n_modes", "multiplicity"):
                try:
                    kwargs[key] = int(val)
                except ValueError as exc:
                    raise ConfigError(f"{key} must be an integer, got {val!r}") from exc
            elif key == "initial_qubit":
                kwargs[key] = val
            else:
                try:
                    kwargs[key] = float(val)
                except ValueError as exc:
                    raise ConfigError(f"{key} must be a number, got {val!r}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class DiscretizedBath:
    """Mode frequencies and couplings from linear discretization of J."""

    omegas: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omegas", np.asarray(self.omegas, dtype=float))
        object.__setattr__(self, "couplings", np.asarray(self.couplings, dtype=float))
        if self.omegas.shape != self.couplings.shape or self.omegas.ndim != 1:
            raise ValueError("omegas and couplings must be equal-length 1-D arrays")

    @property
    def n_modes(self) -> int:
        return self.omegas.size

    def coupling_sum_rule(self) -> float:
        """Sum of squared couplings; equals alpha*omega_c**2 exactly."""
        return float(np.sum(self.couplings**2))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("omega,lambda\n")
            for w, lam in zip(self.omegas, self.couplings):
                fh.write(f"{float(w)!r},{float(lam)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "DiscretizedBath":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(omegas=data[:, 0], couplings=data[:, 1])


@dataclass(frozen=True)
class QubitOperatorFrame:
    """Pauli operators expressed in a fixed ordered basis.

    ``basis="z"`` uses the sigma_z eigenbasis (excited, ground) — the frame of
    the master-equation and HEOM modules.  ``basis="x"`` uses the sigma_x
    eigenbasis (|+>, |->) — the frame of the variational ansatz.
    """

    basis: str
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_z: np.ndarray
    identity: np.ndarray

    @classmethod
    def in_basis(cls, basis: str) -> "QubitOperatorFrame":
        if basis == "z":
            return cls(basis, SIGMA_X, SIGMA_Y, SIGMA_Z, IDENTITY)
        if basis == "x":
            t = cls.basis_change("x")
            td = t.conj().T
            return cls(
                basis,
                td @ SIGMA_X @ t,
                td @ SIGMA_Y @ t,
                td @ SIGMA_Z @ t,
                IDENTITY.copy(),
            )
        raise ValueError(f"unknown basis {basis!r}")

    @staticmethod
    def basis_change(basis: str) -> np.ndarray:
        """Unitary whose columns are the frame's basis kets in z coordinates."""
        if basis == "z":
            return IDENTITY.copy()
        if basis == "x":
            return np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
        raise ValueError(f"unknown basis {basis!r}")


def spectral_density(omega, cfg: ModelConfig):
    """Ohmic spectral density J(omega) = 2*alpha*omega below the hard cutoff.

    The cutoff edge omega == omega_c is closed (returns 2*alpha*omega_c).
    Accepts scalars or arrays; negative frequencies are a domain error.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("spectral_density is defined for omega >= 0")
    out = np.where(w <= cfg.omega_c, 2.0 * cfg.alpha * w, 0.0)
    return out if w.ndim else float(out)


def discretize_bath(cfg: ModelConfig) -> DiscretizedBath:
    """Linear discretization of J on [0, omega_c] into n_modes bins.

    Bin edges are x_k = k*omega_c/n_modes.  Each mode carries the exact bin
    integrals of the Ohmic density:

        lambda_k^2 = integral of J over the bin = alpha*(x_k^2 - x_{k-1}^2)
        omega_k    = (first moment)/(lambda_k^2)
                   = (2/3)*(x_k^3 - x_{k-1}^3)/(x_k^2 - x_{k-1}^2)

    Both are evaluated in closed form, so the coupling sum rule
    sum_k lambda_k^2 = alpha*omega_c^2 telescopes exactly.
    """
    x = np.arange(cfg.n_modes + 1, dtype=float) * (cfg.omega_c / cfg.n_modes)
    dx2 = x[1:] ** 2 - x[:-1] ** 2
    dx3 = x[1:] ** 3 - x[:-1] ** 3
    lam2 = cfg.alpha * dx2
    omegas = (2.0 / 3.0) * dx3 / dx2
    return DiscretizedBath(omegas=omegas, couplings=np.sqrt(lam2))


def bath_correlation_tlme(tau, cfg: ModelConfig):
    """Zero-temperature correlation C(tau) = (1/4) * int_0^wc J(w) e^{-i w tau} dw.

    Closed form away from tau = 0; a series branch below
    |omega_c*tau| < 1e-3 avoids cancellation.  C(0) = alpha*omega_c^2/4.
    """
    return 0.25 * bath_correlation_heom(tau, cfg)


def bath_correlation_heom(t, cfg: ModelConfig):
    """Zero-temperature correlation in the hierarchy convention.

    C(t) = int_0^wc J(w)[cos(w t) - i sin(w t)] dw = C_R(t) + i C_I(t) with

        C_R(t) =  2*alpha*[(cos(wc t) - 1)/t^2 + wc*sin(wc t)/t]
        C_I(t) = -2*alpha*[sin(wc t)/t^2 - wc*cos(wc t)/t]

    equal to 4x the master-equation convention.  C(0) = alpha*omega_c^2.
    """
    wc = cfg.omega_c
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    x = wc * tt
    small = np.abs(x) < SERIES_THRESHOLD
    out = np.empty(tt.shape, dtype=complex)
    xs = x[small]
    out[small] = 2.0 * cfg.alpha * wc**2 * (
        (0.5 - xs**2 / 8.0 + xs**4 / 144.0)
        - 1j * (xs / 3.0 - xs**3 / 30.0 + xs**5 / 840.0)
    )
    tb, xb = tt[~small], x[~small]
    c_r = 2.0 * cfg.alpha * ((np.cos(xb) - 1.0) / tb**2 + wc * np.sin(xb) / tb)
    c_i = -2.0 * cfg.alpha * (np.sin(xb) / tb**2 - wc * np.cos(xb) / tb)
    out[~small] = c_r + 1j * c_i
    return out[0] if scalar else out


def qubit_hamiltonian(t: float, cfg: ModelConfig) -> np.ndarray:
    """Driven-qubit Hamiltonian (omega0/2) sigma_z + Omega cos(omega_x t) sigma_x."""
    return 0.5 * cfg.omega0 * SIGMA_Z + cfg.Omega * np.cos(cfg.omega_x * t) * SIGMA_X
