"""Ground-state fidelity and entanglement diagnostics for truncated quantum O(2) chains."""
__version__ = "0.1.0"

from .model import ChainSpec, Variant, build_hamiltonian, build_lowering, build_raising, build_sz, sector_basis
from .exact import chi_f_perturbative, entanglement_entropy_exact, full_spectrum, ground_state
from .mps import DmrgSettings, MpsState, dmrg_ground_state, load_checkpoint, save_checkpoint
from .observables import ObservablePoint, measure_point, scan
from .fss import (MODELS, Series, central_charge, classify_transition, crossing_point, find_peak,
                  fit_scaling, get_model)

__all__ = [
    "ChainSpec", "Variant", "build_hamiltonian", "build_lowering", "build_raising", "build_sz",
    "sector_basis", "chi_f_perturbative", "entanglement_entropy_exact", "full_spectrum",
    "ground_state", "DmrgSettings", "MpsState", "dmrg_ground_state", "load_checkpoint",
    "save_checkpoint", "ObservablePoint", "measure_point", "scan", "MODELS", "Series",
    "central_charge", "classify_transition", "crossing_point", "find_peak", "fit_scaling",
    "get_model",
]
