"""Diatomic FPU chain: Gibbs sampling, dynamics, branch-energy freezing and a normal-form engine."""
from .chain import (ChainParams, DiffCoords, PhasePoint, diff_coords, forces, hamiltonian,
                    kinetic, potential_energy, s_order, total_momentum)
from .dynamics import IntegratorConfig, evolve, step
from .gibbs import EnsembleEstimate, SamplerConfig, estimate, sample_ensemble
from .modes import ModeBasis, build_basis, dispersion, x_to_modes, modes_to_x
from .observables import autocorrelation, branch_energies, freezing_report

__version__ = "0.1.0"

__all__ = [
    "ChainParams", "DiffCoords", "EnsembleEstimate", "IntegratorConfig", "ModeBasis",
    "PhasePoint", "SamplerConfig", "autocorrelation", "branch_energies", "build_basis",
    "diff_coords", "dispersion", "estimate", "evolve", "forces", "freezing_report",
    "hamiltonian", "kinetic", "modes_to_x", "potential_energy", "s_order", "sample_ensemble",
    "step", "total_momentum", "x_to_modes",
]
