"""Exact diagonalization in fixed-magnetization sectors.

Serves as the oracle for the DMRG engine: Lanczos ground states, dense full
spectra, the perturbative (sum-over-states) fidelity susceptibility, and
exact bipartite entanglement entropies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lanczos import lowest_eigenpair
from .model import (
    ChainSpec,
    SectorBasis,
    build_hamiltonian,
    d_term_diagonal,
    sector_basis,
    sector_dimension,
)

__all__ = [
    "EigenPair",
    "SectorBasis",
    "NoConvergence",
    "DimensionCap",
    "DegenerateGround",
    "ground_state",
    "full_spectrum",
    "chi_f_perturbative",
    "entanglement_entropy_exact",
    "schmidt_values",
    "sector_dimension",
]

LANCZOS_CAP = 2_000_000
DENSE_CAP = 6000
DEGENERACY_GAP = 1e-8


class NoConvergence(RuntimeError):
    pass


class DimensionCap(ValueError):
    pass


class DegenerateGround(ValueError):
    pass


@dataclass
class EigenPair:
    energy: float
    vector: np.ndarray
    basis: SectorBasis

    def residual(self, H) -> float:
        return float(np.linalg.norm(H @ self.vector - self.energy * self.vector))


def _check_cap(spec: ChainSpec, sector: int, cap: int) -> int:
    dim = sector_dimension(spec.L, spec.S, sector)
    if dim > cap:
        raise DimensionCap(f"sector dimension {dim} exceeds cap {cap}")
    return dim


def ground_state(spec: ChainSpec, sector: int = 0, seed: int = 1234, tol: float = 1e-12,
                 dim_cap: int = LANCZOS_CAP) -> EigenPair:
    """Lowest eigenpair of the ``sector`` block.

    The Lanczos start vector is drawn from ``numpy.random.default_rng(seed)``
    so repeated calls are bit-identical.
    """
    _check_cap(spec, sector, dim_cap)
    ham = build_hamiltonian(spec, sector)
    H = ham.matrix
    if ham.dimension <= 64:
        w, v = np.linalg.eigh(H.toarray())
        vec = v[:, 0]
        return EigenPair(float(w[0]), _fix_sign(vec), ham.basis)
    v0 = np.random.default_rng(seed).standard_normal(ham.dimension)
    res = lowest_eigenpair(lambda x: H @ x, v0, tol=tol, krylov_dim=60, max_restarts=200)
    if not res.converged:
        raise NoConvergence(f"Lanczos residual {res.residual:.3e} after {res.iterations} steps")
    return EigenPair(res.value, _fix_sign(res.vector), ham.basis)


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    # make the largest-magnitude component positive
    i = int(np.argmax(np.abs(vec)))
    return vec if vec[i] >= 0 else -vec


def full_spectrum(spec: ChainSpec, sector: int = 0, dense_cap: int = DENSE_CAP) -> list[EigenPair]:
    """All eigenpairs of the ``sector`` block, energies ascending."""
    _check_cap(spec, sector, dense_cap)
    ham = build_hamiltonian(spec, sector)
    w, v = np.linalg.eigh(ham.matrix.toarray())
    return [EigenPair(float(w[i]), v[:, i], ham.basis) for i in range(len(w))]


def chi_f_perturbative(spec: ChainSpec, dense_cap: int = DENSE_CAP) -> float:
    r"""Sum-over-states fidelity susceptibility in the ``m = 0`` sector.

    .. math:: \chi_F = \frac{1}{L}\sum_{n\neq 0}
              \frac{|\langle n|H_D|0\rangle|^2}{(E_n - E_0)^2},
              \qquad H_D = \sum_l (S^z_l)^2

    ``H_D`` conserves the magnetization, so other sectors do not contribute.
    With ``jz`` present the perturbation is still the ``D`` term alone.
    """
    _check_cap(spec, 0, dense_cap)
    ham = build_hamiltonian(spec, 0)
    w, v = np.linalg.eigh(ham.matrix.toarray())
    if len(w) > 1 and w[1] - w[0] < DEGENERACY_GAP:
        raise DegenerateGround(f"gap {w[1] - w[0]:.3e} below {DEGENERACY_GAP}")
    hd = d_term_diagonal(ham.basis)
    elems = v[:, 1:].T @ (hd * v[:, 0])
    return float(np.sum(elems**2 / (w[1:] - w[0]) ** 2) / spec.L)


def schmidt_values(vector: np.ndarray, basis: SectorBasis, cut: int) -> np.ndarray:
    """Squared Schmidt coefficients across the bond after ``cut`` sites."""
    L, S = basis.L, basis.S
    if not 1 <= cut <= L - 1:
        raise ValueError(f"cut must be in [1, {L - 1}], got {cut}")
    d = 2 * S + 1
    right_size = d ** (L - cut)
    left_code = basis.codes // right_size
    right_code = basis.codes % right_size
    left_m = basis.states[:, :cut].sum(axis=1, dtype=np.int64)
    out = []
    # the state is block diagonal in the left-block magnetization
    for m in np.unique(left_m):
        sel = left_m == m
        lc, li = np.unique(left_code[sel], return_inverse=True)
        rc, ri = np.unique(right_code[sel], return_inverse=True)
        block = np.zeros((len(lc), len(rc)))
        block[li, ri] = vector[sel]
        out.append(np.linalg.svd(block, compute_uv=False) ** 2)
    return np.sort(np.concatenate(out))[::-1]


def von_neumann(weights: np.ndarray, cutoff: float = 1e-14) -> float:
    lam = weights[weights > cutoff]
    return float(-np.sum(lam * np.log(lam)))


def entanglement_entropy_exact(state: EigenPair | np.ndarray, basis: SectorBasis | None = None,
                               cut: int | None = None) -> float:
    """Von Neumann entropy (natural log) of sites ``0..cut-1``; default cut ``L // 2``."""
    if isinstance(state, EigenPair):
        vector, basis = state.vector, basis or state.basis
    else:
        vector = state
    if basis is None:
        raise ValueError("basis required for a bare vector")
    if cut is None:
        cut = basis.L // 2
    return von_neumann(schmidt_values(vector, basis, cut))


def sector_basis_for(spec: ChainSpec, sector: int = 0) -> SectorBasis:
    return sector_basis(spec.L, spec.S, sector)
