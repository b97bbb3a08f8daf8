"""Operators and Hamiltonians of the spin-S truncated quantum O(2) chain.

Local basis ordering is ``n = -S, ..., +S`` (index ``k = n + S``). Many-body
product states are ordered lexicographically with site 0 as the most
significant digit, so the integer code of ``(n_0, ..., n_{L-1})`` is
``sum_l (n_l + S) * d**(L - 1 - l)``.

Two hopping variants are supported:

* ``U_OPERATOR``: ``U^+|n> = |n+1>`` with ``U^+|S> = 0``.
* ``LADDER``: ``S^+ / sqrt(S(S+1))`` with the usual spin matrix elements.

``U_OPERATOR_JZ`` adds ``jz * sum_l S^z_l S^z_{l+1}`` to the ``U_OPERATOR``
chain.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Variant",
    "ChainSpec",
    "LocalOperator",
    "SectorBasis",
    "SparseHamiltonian",
    "EmptySector",
    "build_sz",
    "build_raising",
    "build_lowering",
    "hopping_amplitudes",
    "sector_dimension",
    "sector_basis",
    "build_hamiltonian",
    "d_term_diagonal",
]


class EmptySector(ValueError):
    """Requested magnetization sector contains no states."""


class Variant(str, enum.Enum):
    U_OPERATOR = "u"
    LADDER = "ladder"
    U_OPERATOR_JZ = "u-jz"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for v in cls:
            if key.lower() in (v.value, v.name.lower()):
                return v
        raise ValueError(f"unknown model variant {value!r}")


@dataclass(frozen=True)
class ChainSpec:
    """One Hamiltonian instance with open boundaries and ``J = 1``."""

    variant: Variant
    S: int
    L: int
    D: float
    jz: float = 0.0
    J: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if int(self.S) != self.S or self.S < 1:
            raise ValueError(f"spin truncation S must be a positive integer, got {self.S}")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"chain length L must be >= 2, got {self.L}")
        object.__setattr__(self, "S", int(self.S))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "D", float(self.D))
        object.__setattr__(self, "jz", float(self.jz))
        if self.J != 1.0:
            raise ValueError("J is fixed to 1 (energy unit)")
        if self.variant is not Variant.U_OPERATOR_JZ and self.jz != 0.0:
            raise ValueError(f"jz coupling is only defined for the u-jz variant, got {self.variant.value}")

    @property
    def d(self) -> int:
        return 2 * self.S + 1

    def with_D(self, D: float) -> "ChainSpec":
        return ChainSpec(self.variant, self.S, self.L, D, self.jz)

    def as_dict(self) -> dict:
        return {"variant": self.variant.value, "S": self.S, "L": self.L, "D": self.D, "jz": self.jz}

    @classmethod
    def from_dict(cls, data: dict) -> "ChainSpec":
        return cls(data["variant"], data["S"], data["L"], data["D"], data.get("jz", 0.0))


@dataclass(frozen=True)
class LocalOperator:
    matrix: np.ndarray
    charge_shift: int

    @property
    def T(self) -> "LocalOperator":
        return LocalOperator(self.matrix.T.copy(), -self.charge_shift)


def _check_S(S):
    if int(S) != S or S < 1:
        raise ValueError(f"spin truncation S must be a positive integer, got {S}")
    return int(S)


def build_sz(S: int) -> LocalOperator:
    S = _check_S(S)
    return LocalOperator(np.diag(np.arange(-S, S + 1, dtype=float)), 0)


def hopping_amplitudes(S: int, variant) -> np.ndarray:
    """Return ``r[k] = <n+1| hop |n>`` for ``n = -S .. S-1``."""
    S = _check_S(S)
    variant = Variant.parse(variant)
    n = np.arange(-S, S)
    if variant is Variant.LADDER:
        return np.sqrt(S * (S + 1) - n * (n + 1)) / np.sqrt(S * (S + 1))
    return np.ones(2 * S)


def build_raising(S: int, variant) -> LocalOperator:
    """Raising operator ``|n> -> |n+1>`` (row index is the output state)."""
    S = _check_S(S)
    r = hopping_amplitudes(S, variant)
    return LocalOperator(np.diag(r, k=-1), +1)


def build_lowering(S: int, variant) -> LocalOperator:
    return build_raising(S, variant).T


@dataclass(frozen=True)
class SectorBasis:
    """Product states of ``L`` sites with fixed total magnetization.

    ``states`` has shape ``(dim, L)`` holding occupations ``n_l``; rows are
    sorted by their lexicographic product-basis ``codes``. ``m=None`` means
    the full space.
    """

    L: int
    S: int
    m: int | None
    states: np.ndarray = field(repr=False)
    codes: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.codes)

    def index(self, occupations) -> int:
        """Position of an occupation tuple in the basis (``KeyError`` if absent)."""
        code = _encode(np.asarray(occupations)[None, :], self.S)[0]
        pos = int(np.searchsorted(self.codes, code))
        if pos >= self.dim or self.codes[pos] != code:
            raise KeyError(tuple(occupations))
        return pos

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, self.dim - 1)
        if not np.array_equal(self.codes[pos], codes):
            raise KeyError("codes outside the basis")
        return pos


def _encode(states: np.ndarray, S: int) -> np.ndarray:
    d = 2 * S + 1
    L = states.shape[1]
    weights = d ** np.arange(L - 1, -1, -1, dtype=np.int64)
    return (states.astype(np.int64) + S) @ weights


@lru_cache(maxsize=None)
def sector_dimension(L: int, S: int, m: int) -> int:
    """Number of ``L``-site product states with ``sum n_l = m`` (memoized recursion)."""
    if abs(m) > S * L:
        return 0
    if L == 0:
        return 1 if m == 0 else 0
    return sum(sector_dimension(L - 1, S, m - n) for n in range(-S, S + 1))


def sector_basis(L: int, S: int, m: int | None = 0) -> SectorBasis:
    """Enumerate a magnetization sector (or the full space for ``m=None``).

    Prefixes are extended site by site and pruned whenever the remaining
    sites cannot reach ``m``, so no intermediate array exceeds the sector size.
    """
    S = _check_S(S)
    if L < 1:
        raise ValueError("L must be >= 1")
    local = np.arange(-S, S + 1)
    prefixes = np.zeros((1, 0), dtype=np.int8)
    sums = np.zeros(1, dtype=np.int64)
    for site in range(L):
        remaining = L - site - 1
        new = np.repeat(prefixes, len(local), axis=0)
        occ = np.tile(local, len(prefixes))
        new_sums = np.repeat(sums, len(local)) + occ
        if m is not None:
            keep = np.abs(m - new_sums) <= S * remaining
            new, occ, new_sums = new[keep], occ[keep], new_sums[keep]
        prefixes = np.concatenate([new, occ[:, None].astype(np.int8)], axis=1)
        sums = new_sums
    if len(prefixes) == 0:
        raise EmptySector(f"no states with magnetization {m} for L={L}, S={S}")
    codes = _encode(prefixes, S)
    # prefix extension in ascending local order already yields sorted codes
    return SectorBasis(L, S, m, prefixes, codes)


@dataclass(frozen=True)
class SparseHamiltonian:
    matrix: sp.csr_matrix
    basis: SectorBasis
    spec: ChainSpec

    @property
    def sector(self) -> int | None:
        return self.basis.m

    @property
    def dimension(self) -> int:
        return self.basis.dim

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data


def d_term_diagonal(basis: SectorBasis) -> np.ndarray:
    """Diagonal of ``sum_l (S^z_l)^2`` in ``basis``."""
    return np.sum(basis.states.astype(float) ** 2, axis=1)


def build_hamiltonian(spec: ChainSpec, sector: int | None = None, basis: SectorBasis | None = None) -> SparseHamiltonian:
    """Assemble the chain Hamiltonian as a real symmetric CSR matrix.

    ``H = D sum (S^z)^2 - J sum (hop_l hop_{l+1}^dag + h.c.) [+ jz sum S^z S^z]``
    restricted to total magnetization ``sector`` (full space when ``None``).
    """
    if sector is not None and abs(sector) > spec.S * spec.L:
        raise EmptySector(f"|m|={abs(sector)} exceeds S*L={spec.S * spec.L}")
    if basis is None:
        basis = sector_basis(spec.L, spec.S, sector)
    S, L = spec.S, spec.L
    states = basis.states.astype(np.int64)
    dim = basis.dim

    diag = spec.D * d_term_diagonal(basis)
    if spec.variant is Variant.U_OPERATOR_JZ and spec.jz != 0.0:
        diag = diag + spec.jz * np.sum(states[:, :-1] * states[:, 1:], axis=1)

    amp = hopping_amplitudes(S, spec.variant)  # amp[n + S] = <n+1|hop|n>
    d = 2 * S + 1
    rows, cols, vals = [np.arange(dim)], [np.arange(dim)], [diag]
    for l in range(L - 1):
        # hop_l^dag hop_{l+1}: raise site l, lower site l+1; h.c. added by symmetry
        ok = (states[:, l] < S) & (states[:, l + 1] > -S)
        src = np.nonzero(ok)[0]
        if len(src) == 0:
            continue
        nl = states[src, l]
        nr = states[src, l + 1]
        a = -spec.J * amp[nl + S] * amp[nr - 1 + S]
        shift = d ** (L - 1 - l) - d ** (L - 2 - l)
        dst = basis.lookup(basis.codes[src] + shift)
        rows += [dst, src]
        cols += [src, dst]
        vals += [a, a]
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    return SparseHamiltonian(H, basis, spec)
