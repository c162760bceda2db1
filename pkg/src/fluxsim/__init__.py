"""Flux-pulse gates for fluxonium qubits with tunable bit-flip protection.

Energies are in GHz (E/h), fluxes in units of the flux quantum, times in ns.
"""

from fluxsim.circuits import (
    CoupledParams,
    OperatorMatrix,
    Spectrum,
    TunableEcParams,
    TunableEjParams,
    build_coupled_hamiltonian,
    build_tunable_ec_hamiltonian,
    build_tunable_ej_hamiltonian,
    diagonalize,
    ej_to_phi_dc,
    localized_fluxon_basis,
    matrix_element,
    squid_effective_ej,
    squid_phase_correction,
    sweep_spectrum,
)
from fluxsim.pulses import FlatTopGaussianPulse, ZDetuneSegment

__version__ = "0.1.0"

__all__ = [
    "CoupledParams",
    "FlatTopGaussianPulse",
    "OperatorMatrix",
    "Spectrum",
    "TunableEcParams",
    "TunableEjParams",
    "ZDetuneSegment",
    "build_coupled_hamiltonian",
    "build_tunable_ec_hamiltonian",
    "build_tunable_ej_hamiltonian",
    "diagonalize",
    "ej_to_phi_dc",
    "localized_fluxon_basis",
    "matrix_element",
    "squid_effective_ej",
    "squid_phase_correction",
    "sweep_spectrum",
]
