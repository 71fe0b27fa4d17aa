"""Simulation toolkit for the fluorescence of a harmonically driven qubit.

Four independent methods compute qubit dynamics and per-mode photon numbers
of a driven qubit coupled to an Ohmic bosonic reservoir at zero temperature:

- ``davydov``   — multiple Davydov D1 variational integration,
- ``master_eq`` — second-order time-local master equation (Floquet picture),
                  with and without the rotating-wave approximation,
- ``heom``      — hierarchical equations of motion benchmark,
- ``cli``       — batch runner, comparison harness, and plot-script emitter,

built on the shared ``model`` (spectral density, bath discretization,
correlation functions) and ``floquet`` (quasienergies, operator elements,
kernel integrals) modules.
"""

from .model import (
    ModelConfig,
    DiscretizedBath,
    QubitOperatorFrame,
    spectral_density,
    discretize_bath,
    bath_correlation_tlme,
    bath_correlation_heom,
    qubit_hamiltonian,
)

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "DiscretizedBath",
    "QubitOperatorFrame",
    "spectral_density",
    "discretize_bath",
    "bath_correlation_tlme",
    "bath_correlation_heom",
    "qubit_hamiltonian",
    "__version__",
]
