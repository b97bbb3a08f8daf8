"""Fidelity, fidelity susceptibility and entanglement-entropy derivative.

Each measurement solves the ground state at ``D`` and ``D + delta`` and
derives

* ``fidelity = |<psi(D)|psi(D + delta)>|``
* ``chi_f = -2 ln(fidelity) / (L delta**2)``
* ``entropy = S_vN(D)`` (half chain, natural log)
* ``entropy_derivative = -(S_vN(D + delta) - S_vN(D)) / delta``
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import exact
from .model import ChainSpec
from .mps import DmrgSettings, MpsState, dmrg_ground_state, inner

__all__ = [
    "ObservablePoint",
    "EngineFailure",
    "fidelity_from_vectors",
    "chi_f_from_fidelity",
    "measure_point",
    "scan",
    "DeltaStudy",
    "delta_convergence_study",
]

ENGINES = ("ed", "dmrg")


class EngineFailure(RuntimeError):
    """Ground-state solve failed; ``point`` holds the partial record if any."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


@dataclass
class ObservablePoint:
    spec: ChainSpec
    delta: float
    fidelity: float
    chi_f: float
    entropy: float
    entropy_derivative: float
    energy: float
    engine: str
    quality: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["spec"] = self.spec.as_dict()
        return out


def fidelity_from_vectors(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Return ``(F, 1 - F)`` for two real unit vectors.

    ``1 - F`` is evaluated as ``||a - s b||^2 / 2`` with ``s = sign(a.b)``,
    which avoids the cancellation in ``1 - |a.b|`` when the states are close.
    """
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    s = 1.0 if a @ b >= 0 else -1.0
    infid = 0.5 * float(np.sum((a - s * b) ** 2))
    return 1.0 - infid, infid


def chi_f_from_fidelity(infidelity: float, L: int, delta: float) -> float:
    """``-2 ln F / (L delta^2)`` from ``1 - F``."""
    return -2.0 * math.log1p(-infidelity) / (L * delta**2)


def _quality(engine, settings=None, results=()):
    if engine == "ed":
        return {"epsilon": 0.0, "max_bond": 0, "converged": True, "sweeps": 0, "truncation_error": 0.0}
    return {
        "epsilon": settings.epsilon,
        "max_bond": max(r.largest_bond for r in results),
        "converged": all(r.converged for r in results),
        "sweeps": sum(r.sweeps_used for r in results),
        "truncation_error": max(r.mps.max_truncation_error for r in results),
    }


def _measure_ed(spec: ChainSpec, delta: float):
    try:
        g0 = exact.ground_state(spec, 0)
        g1 = exact.ground_state(spec.with_D(spec.D + delta), 0)
    except (exact.NoConvergence, exact.DimensionCap) as err:
        raise EngineFailure(str(err)) from err
    fid, infid = fidelity_from_vectors(g0.vector, g1.vector)
    s0 = exact.entanglement_entropy_exact(g0)
    s1 = exact.entanglement_entropy_exact(g1)
    point = ObservablePoint(
        spec=spec, delta=delta, fidelity=fid, chi_f=chi_f_from_fidelity(infid, spec.L, delta),
        entropy=s0, entropy_derivative=-(s1 - s0) / delta, energy=g0.energy,
        engine="ed", quality=_quality("ed"),
    )
    return point, None


def _measure_dmrg(spec: ChainSpec, delta: float, settings: DmrgSettings, initial: MpsState | None):
    r0 = dmrg_ground_state(spec, settings, initial)
    r1 = dmrg_ground_state(spec.with_D(spec.D + delta), settings, r0.mps)
    a, b = r0.mps, r1.mps
    ov = inner(a, b) / math.sqrt(inner(a, a) * inner(b, b))
    fid = min(abs(ov), 1.0)
    point = ObservablePoint(
        spec=spec, delta=delta, fidelity=fid, chi_f=chi_f_from_fidelity(1.0 - fid, spec.L, delta),
        entropy=r0.half_chain_entropy,
        entropy_derivative=-(r1.half_chain_entropy - r0.half_chain_entropy) / delta,
        energy=r0.energy, engine="dmrg", quality=_quality("dmrg", settings, (r0, r1)),
    )
    if not point.quality["converged"]:
        raise EngineFailure(f"DMRG not converged at L={spec.L}, D={spec.D}", point)
    return point, r1.mps


def measure_point(spec: ChainSpec, delta: float = 5e-4, engine: str = "dmrg",
                  settings: DmrgSettings | None = None, initial: MpsState | None = None,
                  return_state: bool = False):
    """Measure ``F``, ``chi_F``, ``S_vN`` and ``S'_vN`` at ``spec.D``.

    For DMRG the solve at ``D + delta`` is warm-started from the state at
    ``D``; ``initial`` warm-starts the first solve. With ``return_state`` the
    MPS at ``D + delta`` is returned too (``None`` for ED), which is what
    :func:`scan` chains along the grid.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    if engine == "ed":
        point, state = _measure_ed(spec, delta)
    else:
        point, state = _measure_dmrg(spec, delta, settings or DmrgSettings(), initial)
    return (point, state) if return_state else point


def scan(spec: ChainSpec, D_values, delta: float = 5e-4, engine: str = "dmrg",
         settings: DmrgSettings | None = None, warm_start: bool = True):
    """Yield :class:`ObservablePoint` along ``D_values`` in the given order."""
    state = None
    for D in D_values:
        point, new_state = measure_point(spec.with_D(D), delta, engine, settings,
                                         initial=state if warm_start else None, return_state=True)
        state = new_state
        yield point


@dataclass
class DeltaStudy:
    deltas: np.ndarray
    chi_f: np.ndarray
    reference: float
    errors: np.ndarray
    extrapolated: float
    observed_order: np.ndarray

    def rows(self):
        for d, c, e in zip(self.deltas, self.chi_f, self.errors):
            yield {"delta": float(d), "chi_f": float(c), "error": float(e)}


def delta_convergence_study(spec: ChainSpec, deltas, reference: float | None = None) -> DeltaStudy:
    """``chi_F(delta)`` from exact ground states and its ``delta -> 0`` limit.

    The limit is estimated by a least-squares fit ``chi0 + a delta + b delta^2``
    over the supplied steps; ``reference`` defaults to the sum-over-states
    value. ``observed_order[k]`` is ``log10(err_k / err_{k+1}) /
    log10(delta_k / delta_{k+1})`` for consecutive steps (sorted descending).
    """
    deltas = np.sort(np.asarray(deltas, dtype=float))[::-1]
    chi = np.array([measure_point(spec, d, "ed").chi_f for d in deltas])
    if reference is None:
        reference = exact.chi_f_perturbative(spec)
    ncoef = min(3, len(deltas))
    A = np.vander(deltas, ncoef, increasing=True)
    coef = np.linalg.lstsq(A, chi, rcond=None)[0]
    err = np.abs(chi - reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        order = np.log10(err[:-1] / err[1:]) / np.log10(deltas[:-1] / deltas[1:])
    return DeltaStudy(deltas, chi, float(reference), err, float(coef[0]), order)
