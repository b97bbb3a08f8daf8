"""Finite two-site DMRG for the truncated O(2) chain.

Site tensors are real arrays of shape ``(chi_left, d, chi_right)``. The MPO
uses the upper-triangular convention: the left boundary selects row 0 and
the right boundary the last column, with ``W[wl, wr, out, in]``.

The engine runs dense (no explicit U(1) blocks). The Hamiltonian conserves
total magnetization and the default start state has ``m = 0``, so the
variational state stays in that sector up to rounding.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .lanczos import lowest_eigenpair
from .model import ChainSpec, Variant, build_lowering, build_raising, build_sz

__all__ = [
    "MpsState",
    "DmrgSettings",
    "DmrgResult",
    "ShapeMismatch",
    "build_mpo",
    "product_state",
    "dmrg_ground_state",
    "overlap",
    "inner",
    "half_chain_entropy",
    "mps_energy",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "o2chain-mps"
CHECKPOINT_VERSION = 1
SCHMIDT_CUTOFF = 1e-14


class ShapeMismatch(ValueError):
    pass


@dataclass
class MpsState:
    tensors: list
    center: int
    spec: ChainSpec
    max_truncation_error: float = 0.0

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Dimensions of the ``L + 1`` bonds, boundaries included."""
        return [self.tensors[0].shape[0]] + [t.shape[2] for t in self.tensors]

    def copy(self) -> "MpsState":
        return MpsState([t.copy() for t in self.tensors], self.center, self.spec, self.max_truncation_error)

    def move_center(self, site: int) -> "MpsState":
        """Shift the orthogonality center to ``site`` by QR steps (in place)."""
        if not 0 <= site < self.L:
            raise IndexError(site)
        T = self.tensors
        while self.center < site:
            i = self.center
            chi_l, d, chi_r = T[i].shape
            q, r = np.linalg.qr(T[i].reshape(chi_l * d, chi_r))
            T[i] = q.reshape(chi_l, d, -1)
            T[i + 1] = np.tensordot(r, T[i + 1], axes=(1, 0))
            self.center += 1
        while self.center > site:
            i = self.center
            chi_l, d, chi_r = T[i].shape
            q, r = np.linalg.qr(T[i].reshape(chi_l, d * chi_r).T)
            T[i] = q.T.reshape(-1, d, chi_r)
            T[i - 1] = np.tensordot(T[i - 1], r.T, axes=(2, 0))
            self.center -= 1
        return self

    def norm(self) -> float:
        return float(np.sqrt(abs(inner(self, self))))

    def schmidt_weights(self, cut: int) -> np.ndarray:
        """Squared Schmidt coefficients across the bond after ``cut`` sites."""
        if not 1 <= cut <= self.L - 1:
            raise ValueError(f"cut must be in [1, {self.L - 1}]")
        work = self.copy().move_center(cut - 1)
        c = work.tensors[cut - 1]
        s = np.linalg.svd(c.reshape(-1, c.shape[2]), compute_uv=False)
        w = s**2
        return w / w.sum()

    def to_dense(self) -> np.ndarray:
        """Full product-basis vector (lexicographic, site 0 most significant)."""
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)


def build_mpo(spec: ChainSpec) -> list[np.ndarray]:
    S, d = spec.S, spec.d
    sz = build_sz(S).matrix
    up = build_raising(S, spec.variant).matrix
    dn = build_lowering(S, spec.variant).matrix
    eye = np.eye(d)
    use_jz = spec.variant is Variant.U_OPERATOR_JZ and spec.jz != 0.0
    w = 5 if use_jz else 4
    W = np.zeros((w, w, d, d))
    W[0, 0] = eye
    W[0, 1] = -spec.J * up
    W[0, 2] = -spec.J * dn
    W[1, w - 1] = dn
    W[2, w - 1] = up
    if use_jz:
        W[0, 3] = spec.jz * sz
        W[3, w - 1] = sz
    W[0, w - 1] = spec.D * sz @ sz
    W[w - 1, w - 1] = eye
    mpo = [W] * spec.L
    mpo = list(mpo)
    mpo[0] = W[:1]
    mpo[-1] = W[:, -1:]
    return mpo


def product_state(spec: ChainSpec, occupations=None) -> MpsState:
    """Product state ``|n_0 n_1 ...>``; defaults to all ``n = 0`` (sector ``m = 0``)."""
    if occupations is None:
        occupations = [0] * spec.L
    if len(occupations) != spec.L:
        raise ValueError("need one occupation per site")
    tensors = []
    for n in occupations:
        if abs(n) > spec.S:
            raise ValueError(f"occupation {n} outside [-{spec.S}, {spec.S}]")
        t = np.zeros((1, spec.d, 1))
        t[0, n + spec.S, 0] = 1.0
        tensors.append(t)
    return MpsState(tensors, 0, spec)


def inner(a: MpsState, b: MpsState) -> float:
    """``<a|b>`` for real MPS."""
    if a.L != b.L or any(x.shape[1] != y.shape[1] for x, y in zip(a.tensors, b.tensors)):
        raise ShapeMismatch("MPS differ in length or physical dimensions")
    E = np.ones((1, 1))
    for x, y in zip(a.tensors, b.tensors):
        E = np.tensordot(E, y, axes=(1, 0))                  # (xa, s, yb)
        E = np.tensordot(x.conj(), E, axes=([0, 1], [0, 1]))  # (xa', yb')
    return float(E[0, 0])


def overlap(a: MpsState, b: MpsState) -> float:
    """``|<a|b>|``; the global sign of a variational state carries no meaning."""
    return abs(inner(a, b))


def half_chain_entropy(mps: MpsState, cut: int | None = None) -> float:
    """Von Neumann entropy (natural log) across the middle bond (``L // 2`` sites left)."""
    if cut is None:
        cut = mps.L // 2
    w = mps.schmidt_weights(cut)
    w = w[w > SCHMIDT_CUTOFF]
    return float(-np.sum(w * np.log(w)))


# --- environments -----------------------------------------------------------
# env[a, w, b]: a = bra bond, w = MPO bond, b = ket bond


def _grow_left(env, A, W):
    X = np.tensordot(env, A, axes=(2, 0))                # a w s c
    X = np.tensordot(X, W, axes=([1, 2], [0, 3]))        # a c v t
    X = np.tensordot(A.conj(), X, axes=([0, 1], [0, 3]))  # e c v
    return X.transpose(0, 2, 1)


def _grow_right(env, B, W):
    X = np.tensordot(B, env, axes=(2, 2))                 # c s a w
    X = np.tensordot(X, W, axes=([1, 3], [3, 1]))         # c a v t
    X = np.tensordot(B.conj(), X, axes=([1, 2], [3, 1]))  # e c v
    return X.transpose(0, 2, 1)


def _apply_two_site(Lenv, W1, W2, Renv, theta):
    X = np.tensordot(Lenv, theta, axes=(2, 0))           # a w i j c
    X = np.tensordot(X, W1, axes=([1, 2], [0, 3]))       # a j c v s
    X = np.tensordot(X, W2, axes=([3, 1], [0, 3]))       # a c s u t
    X = np.tensordot(X, Renv, axes=([1, 3], [2, 1]))     # a s t e
    return X


def mps_energy(mps: MpsState, mpo=None) -> float:
    """``<psi|H|psi> / <psi|psi>``."""
    mpo = build_mpo(mps.spec) if mpo is None else mpo
    env = np.ones((1, 1, 1))
    for A, W in zip(mps.tensors, mpo):
        env = _grow_left(env, A, W)
    return float(env[0, 0, 0]) / inner(mps, mps)


# --- DMRG -------------------------------------------------------------------


@dataclass
class DmrgSettings:
    """Knobs of the two-site sweep.

    ``epsilon`` bounds the discarded Schmidt weight per bond; ``max_bond`` is
    a hard cap. Sweeping stops once the half-chain entropy changes by less
    than ``entropy_convergence`` between consecutive full sweeps.
    ``noise_schedule[k]`` is the relative random perturbation added to the
    two-site wavefunction during sweep ``k`` (absent entries mean zero).
    """

    epsilon: float = 1e-10
    max_bond: int = 1000
    max_sweeps: int = 40
    min_sweeps: int = 2
    entropy_convergence: float = 1e-11
    noise_schedule: tuple = ()
    lanczos_tol: float = 1e-13
    lanczos_krylov: int = 30
    lanczos_restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_bond < 1 or self.max_sweeps < 1:
            raise ValueError("max_bond and max_sweeps must be >= 1")
        self.noise_schedule = tuple(float(x) for x in self.noise_schedule)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "max_bond": self.max_bond, "max_sweeps": self.max_sweeps,
            "min_sweeps": self.min_sweeps, "entropy_convergence": self.entropy_convergence,
            "noise_schedule": list(self.noise_schedule), "lanczos_tol": self.lanczos_tol,
            "lanczos_krylov": self.lanczos_krylov, "lanczos_restarts": self.lanczos_restarts,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DmrgSettings":
        known = cls.__dataclass_fields__
        bad = [k for k in data if k not in known]
        if bad:
            raise KeyError(f"unknown DMRG setting(s): {', '.join(bad)}")
        kw = dict(data)
        for k in ("epsilon", "entropy_convergence", "lanczos_tol"):
            if k in kw:
                kw[k] = float(kw[k])
        for k in ("max_bond", "max_sweeps", "min_sweeps", "lanczos_krylov", "lanczos_restarts", "seed"):
            if k in kw:
                kw[k] = int(kw[k])
        return cls(**kw)


@dataclass
class DmrgResult:
    mps: MpsState
    energy: float
    half_chain_entropy: float
    sweeps_used: int
    largest_bond: int
    converged: bool
    bond_cap_reached: bool = False
    sweep_energies: list = field(default_factory=list)
    sweep_entropies: list = field(default_factory=list)
    discarded_weights: list = field(default_factory=list)


def _truncate(theta2d: np.ndarray, epsilon: float, max_bond: int):
    u, s, vt = np.linalg.svd(theta2d, full_matrices=False)
    w = s**2
    w = w / w.sum()
    # tail[k] = weight discarded when keeping k values
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tail <= epsilon))
    keep = max(1, min(keep, max_bond, len(s)))
    capped = keep < len(s) and tail[keep] > epsilon
    s = s[:keep]
    s = s / np.linalg.norm(s)
    return u[:, :keep], s, vt[:keep], float(tail[keep]), capped


def dmrg_ground_state(spec: ChainSpec, settings: DmrgSettings | None = None,
                      initial: MpsState | None = None) -> DmrgResult:
    """Variational ground state by finite two-site DMRG sweeps.

    ``initial`` warm-starts from an existing state (e.g. the converged MPS at
    a neighbouring coupling); its tensors are copied, the spec replaced.
    A result with ``converged=False`` is still the best state found.
    """
    settings = settings or DmrgSettings()
    if spec.L < 4:
        raise ValueError("DMRG needs L >= 4")
    L, d = spec.L, spec.d
    if initial is None:
        mps = product_state(spec)
    else:
        if initial.L != L or initial.tensors[0].shape[1] != d:
            raise ShapeMismatch("warm-start MPS does not match the chain")
        mps = initial.copy()
        mps.spec = spec
    mps.move_center(0)
    T = mps.tensors
    mpo = build_mpo(spec)
    rng = np.random.default_rng(settings.seed)

    Lenv = [None] * (L + 1)
    Renv = [None] * (L + 1)
    Lenv[0] = np.ones((1, 1, 1))
    Renv[L] = np.ones((1, 1, 1))
    for i in range(L - 1, 0, -1):
        Renv[i] = _grow_right(Renv[i + 1], T[i], mpo[i])

    def local_solve(i, sweep):
        theta = np.tensordot(T[i], T[i + 1], axes=(2, 0))
        shape = theta.shape
        W1, W2, le, re = mpo[i], mpo[i + 1], Lenv[i], Renv[i + 2]

        def matvec(x):
            return _apply_two_site(le, W1, W2, re, x.reshape(shape)).reshape(-1)

        res = lowest_eigenpair(matvec, theta.reshape(-1), tol=settings.lanczos_tol,
                               krylov_dim=settings.lanczos_krylov, max_restarts=settings.lanczos_restarts,
                               value_tol=settings.lanczos_tol)
        vec = res.vector
        amp = settings.noise_schedule[sweep] if sweep < len(settings.noise_schedule) else 0.0
        if amp > 0.0:
            vec = vec + amp * rng.standard_normal(vec.shape)
            vec /= np.linalg.norm(vec)
        return res.value, vec.reshape(shape[0] * shape[1], shape[2] * shape[3]), shape

    energies, entropies = [], []
    converged = False
    cap_hit = False
    discarded = [0.0] * (L - 1)
    sweeps = 0
    energy = np.nan
    for sweep in range(settings.max_sweeps):
        sweeps = sweep + 1
        discarded = [0.0] * (L - 1)
        cap_hit = False
        for i in range(L - 1):
            energy, theta, shape = local_solve(i, sweep)
            u, s, vt, tw, capped = _truncate(theta, settings.epsilon, settings.max_bond)
            discarded[i] = max(discarded[i], tw)
            cap_hit |= capped
            T[i] = u.reshape(shape[0], shape[1], -1)
            T[i + 1] = (s[:, None] * vt).reshape(-1, shape[2], shape[3])
            Lenv[i + 1] = _grow_left(Lenv[i], T[i], mpo[i])
        for i in range(L - 2, -1, -1):
            energy, theta, shape = local_solve(i, sweep)
            u, s, vt, tw, capped = _truncate(theta, settings.epsilon, settings.max_bond)
            discarded[i] = max(discarded[i], tw)
            cap_hit |= capped
            T[i + 1] = vt.reshape(-1, shape[2], shape[3])
            T[i] = (u * s[None, :]).reshape(shape[0], shape[1], -1)
            Renv[i + 1] = _grow_right(Renv[i + 2], T[i + 1], mpo[i + 1])
        mps.center = 0
        energies.append(float(energy))
        entropies.append(half_chain_entropy(mps))
        log.debug("sweep %d: E=%.14f S=%.14f chi=%d", sweeps, energy, entropies[-1], max(mps.bond_dims))
        if sweeps >= settings.min_sweeps and len(entropies) > 1:
            if abs(entropies[-1] - entropies[-2]) < settings.entropy_convergence:
                converged = True
                break
    mps.max_truncation_error = float(max(discarded))
    nrm = np.linalg.norm(T[0])
    T[0] = T[0] / nrm
    if not converged:
        log.warning("DMRG not converged after %d sweeps (L=%d, D=%g)", sweeps, L, spec.D)
    return DmrgResult(
        mps=mps,
        energy=mps_energy(mps, mpo),
        half_chain_entropy=entropies[-1],
        sweeps_used=sweeps,
        largest_bond=max(mps.bond_dims),
        converged=converged,
        bond_cap_reached=cap_hit,
        sweep_energies=energies,
        sweep_entropies=entropies,
        discarded_weights=discarded,
    )


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(mps: MpsState, path) -> None:
    """Write an ``.npz`` checkpoint.

    Keys: ``format`` (``"o2chain-mps"``), ``version`` (int), ``spec`` (JSON of
    the chain), ``center``, ``max_truncation_error``, ``n_sites`` and one array
    ``site_<i>`` per tensor with shape ``(chi_l, d, chi_r)``.
    """
    arrays = {f"site_{i}": t for i, t in enumerate(mps.tensors)}
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            format=np.array(CHECKPOINT_FORMAT),
            version=np.array(CHECKPOINT_VERSION),
            spec=np.array(json.dumps(mps.spec.as_dict())),
            center=np.array(mps.center),
            max_truncation_error=np.array(mps.max_truncation_error),
            n_sites=np.array(mps.L),
            **arrays,
        )


def load_checkpoint(path) -> MpsState:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not an {CHECKPOINT_FORMAT} file")
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        spec = ChainSpec.from_dict(json.loads(str(data["spec"])))
        n = int(data["n_sites"])
        tensors = [data[f"site_{i}"].copy() for i in range(n)]
        return MpsState(tensors, int(data["center"]), spec, float(data["max_truncation_error"]))
