"""D-grid sweeps with an append-only, resumable record store.

Store layout (a directory)::

    records/<variant>_S<S>_L<L>[_jz<jz>].jsonl   one partition per (variant, S, L, jz)
    checkpoints/...                               optional MPS checkpoints

Each log line is one JSON object (a :data:`RECORD_FIELDS` mapping). Floats
are written with ``repr`` precision, so reading a record back reproduces every
numeric field bit for bit. A torn final line (crash mid-write) is ignored on
read. Exactly one process appends to a given partition file.

The unique key of a record is ``(variant, S, L, jz, d_index, grid_step,
delta, epsilon)``: the coupling enters as the integer ``d_index`` with
``D = d_index * grid_step``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .fss import Series
from .model import ChainSpec, Variant
from .mps import DmrgSettings
from .observables import EngineFailure, measure_point

__all__ = [
    "SweepPlan",
    "RecordStore",
    "PlanError",
    "MissingData",
    "DuplicateRecord",
    "RECORD_FIELDS",
    "grid_indices",
    "load_plan",
    "run_plan",
    "load_series",
    "compact",
]

log = logging.getLogger(__name__)

RECORD_FIELDS = (
    "variant", "S", "L", "jz", "D", "d_index", "grid_step", "delta", "engine",
    "epsilon", "max_bond", "converged", "sweeps", "truncation_error",
    "fidelity", "chi_f", "entropy", "entropy_derivative", "energy",
    "status", "error", "plan_id", "timestamp", "code_version",
)
OBSERVABLES = {"CHI_F": "chi_f", "S_PRIME": "entropy_derivative", "S_VN": "entropy",
               "FIDELITY": "fidelity", "ENERGY": "energy"}


class PlanError(ValueError):
    pass


class MissingData(LookupError):
    pass


class DuplicateRecord(ValueError):
    pass


def grid_indices(lo: float, hi: float, step: float) -> np.ndarray:
    """Integers ``k`` with ``lo <= k * step <= hi`` (tolerant to float noise)."""
    k0 = math.ceil(lo / step - 1e-9)
    k1 = math.floor(hi / step + 1e-9)
    return np.arange(k0, k1 + 1)


@dataclass
class SweepPlan:
    variant: Variant
    S: int
    L: list
    window: tuple
    grid_step: float = 1e-3
    delta: float = 5e-4
    engine: str = "dmrg"
    dmrg: DmrgSettings = field(default_factory=DmrgSettings)
    jz: float = 0.0
    warm_start: bool = True
    descending: bool = True
    output: str = "store"
    plan_id: str = "plan"

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        self.L = [int(x) for x in (self.L if isinstance(self.L, (list, tuple)) else [self.L])]
        self.window = tuple(float(x) for x in self.window)
        if len(self.window) != 2 or not self.window[0] <= self.window[1]:
            raise PlanError("window must be [D_lo, D_hi] with D_lo <= D_hi")
        if self.grid_step <= 0 or self.delta <= 0:
            raise PlanError("grid_step and delta must be positive")
        if self.engine not in ("ed", "dmrg"):
            raise PlanError(f"engine must be 'ed' or 'dmrg', got {self.engine!r}")

    def indices(self) -> np.ndarray:
        k = grid_indices(*self.window, self.grid_step)
        return k[::-1] if self.descending else k

    @property
    def epsilon(self) -> float:
        return 0.0 if self.engine == "ed" else self.dmrg.epsilon

    def spec(self, L: int, D: float) -> ChainSpec:
        return ChainSpec(self.variant, self.S, L, D, self.jz)

    def key(self, L: int, k: int) -> tuple:
        return (self.variant.value, self.S, L, self.jz, int(k), self.grid_step, self.delta, self.epsilon)

    def as_dict(self) -> dict:
        return {
            "plan_id": self.plan_id, "variant": self.variant.value, "S": self.S, "L": list(self.L),
            "window": list(self.window), "grid_step": self.grid_step, "delta": self.delta,
            "engine": self.engine, "dmrg": self.dmrg.as_dict(), "jz": self.jz,
            "warm_start": self.warm_start, "descending": self.descending, "output": self.output,
        }


PLAN_KEYS = set(SweepPlan.__dataclass_fields__)
_FLOAT_KEYS = ("grid_step", "delta", "jz")


def load_plan(path) -> SweepPlan:
    """Parse a YAML plan file; unknown keys raise :class:`PlanError` naming them."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as err:
        raise PlanError(f"{path}: invalid YAML: {err}") from err
    if not isinstance(data, dict):
        raise PlanError(f"{path}: plan must be a mapping")
    return plan_from_dict(data, source=str(path))


def plan_from_dict(data: dict, source: str = "plan") -> SweepPlan:
    bad = sorted(set(data) - PLAN_KEYS)
    if bad:
        raise PlanError(f"{source}: unknown plan key(s): {', '.join(bad)}")
    missing = [k for k in ("variant", "S", "L", "window") if k not in data]
    if missing:
        raise PlanError(f"{source}: missing plan key(s): {', '.join(missing)}")
    kw = dict(data)
    try:
        for k in _FLOAT_KEYS:
            if k in kw:
                kw[k] = float(kw[k])
        if "dmrg" in kw:
            kw["dmrg"] = DmrgSettings.from_dict(kw["dmrg"] or {})
        return SweepPlan(**kw)
    except (KeyError, TypeError, ValueError) as err:
        raise PlanError(f"{source}: {err}") from err


# --- store ----------------------------------------------------------------------


def record_key(rec: dict) -> tuple:
    return (rec["variant"], int(rec["S"]), int(rec["L"]), float(rec["jz"]), int(rec["d_index"]),
            float(rec["grid_step"]), float(rec["delta"]), float(rec["epsilon"]))


def partition_name(variant: str, S: int, L: int, jz: float = 0.0) -> str:
    name = f"{variant}_S{S}_L{L}"
    if jz:
        name += f"_jz{jz:g}"
    return name + ".jsonl"


class RecordStore:
    """Directory of append-only JSON-lines partitions."""

    def __init__(self, root):
        self.root = Path(root)
        self.records_dir = self.root / "records"

    def partition(self, variant: str, S: int, L: int, jz: float = 0.0) -> Path:
        return self.records_dir / partition_name(variant, S, L, jz)

    def read(self, path: Path | None = None) -> list[dict]:
        paths = [path] if path is not None else sorted(self.records_dir.glob("*.jsonl"))
        out = []
        for p in paths:
            if not p.exists():
                continue
            with open(p) as fh:
                for line in fh:
                    if not line.endswith("\n"):
                        break  # torn tail from an interrupted append
                    line = line.strip()
                    if line:
                        out.append(json.loads(line))
        return out

    def ok_records(self) -> dict:
        """Latest successful record per key."""
        best = {}
        for rec in self.read():
            if rec.get("status") == "ok":
                best[record_key(rec)] = rec
        return best

    def append(self, rec: dict, existing: set | None = None) -> None:
        if rec.get("status") == "ok":
            keys = existing if existing is not None else set(self.ok_records())
            key = record_key(rec)
            if key in keys:
                raise DuplicateRecord(f"record {key} already stored")
            keys.add(key)
        path = self.partition(rec["variant"], rec["S"], rec["L"], rec["jz"])
        path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps({k: rec.get(k) for k in RECORD_FIELDS}, allow_nan=True)
        with open(path, "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def _record(plan: SweepPlan, L: int, k: int, point=None, error: str | None = None) -> dict:
    D = k * plan.grid_step
    rec = {
        "variant": plan.variant.value, "S": plan.S, "L": L, "jz": plan.jz, "D": D,
        "d_index": int(k), "grid_step": plan.grid_step, "delta": plan.delta, "engine": plan.engine,
        "epsilon": plan.epsilon, "plan_id": plan.plan_id, "timestamp": time.time(),
        "code_version": __version__,
    }
    if point is not None:
        q = point.quality
        rec.update(
            max_bond=q["max_bond"], converged=q["converged"], sweeps=q["sweeps"],
            truncation_error=q["truncation_error"], fidelity=point.fidelity, chi_f=point.chi_f,
            entropy=point.entropy, entropy_derivative=point.entropy_derivative, energy=point.energy,
        )
    rec["status"] = "ok" if error is None else "error"
    rec["error"] = error
    return rec


def _measure(plan: SweepPlan, L: int, k: int, initial=None):
    spec = plan.spec(L, k * plan.grid_step)
    try:
        point, state = measure_point(spec, plan.delta, plan.engine, plan.dmrg, initial, return_state=True)
        return _record(plan, L, k, point), state
    except EngineFailure as err:
        return _record(plan, L, k, err.point, error=str(err)), None
    except Exception as err:  # job-level failure is recorded, never fatal
        log.exception("point L=%d D=%g failed", L, spec.D)
        return _record(plan, L, k, None, error=f"{type(err).__name__}: {err}"), None


def _point_job(plan_dict: dict, L: int, k: int) -> dict:
    rec, _ = _measure(plan_from_dict(plan_dict), L, k)
    return rec


def _chain_job(plan_dict: dict, L: int, ks: list) -> list:
    """Warm-start chain over one partition; this process is its only writer."""
    plan = plan_from_dict(plan_dict)
    store = RecordStore(plan.output)
    state = None
    out = []
    for k in ks:
        rec, new_state = _measure(plan, L, k, state)
        store.append(rec, existing=set())
        if new_state is not None:
            state = new_state
        out.append(rec)
    return out


@dataclass
class SweepSummary:
    planned: int
    already_present: int
    computed: int
    failed: list
    pending: int

    def __str__(self):
        return (f"{self.planned} planned, {self.already_present} already present, "
                f"{self.computed} computed, {len(self.failed)} failed, {self.pending} pending")


def pending_points(plan: SweepPlan, store: RecordStore) -> dict:
    have = set(store.ok_records())
    todo = {}
    for L in plan.L:
        ks = [int(k) for k in plan.indices() if plan.key(L, k) not in have]
        if ks:
            todo[L] = ks
    return todo


def run_plan(plan: SweepPlan, workers: int = 1, output=None, max_points: int | None = None) -> SweepSummary:
    """Evaluate every missing grid point of ``plan``; already stored points are skipped.

    ``max_points`` stops after that many new points (used to emulate an
    interrupted run). Failures are logged as ``status="error"`` records and
    retried on the next run.
    """
    if output is not None:
        plan.output = str(output)
    store = RecordStore(plan.output)
    store.records_dir.mkdir(parents=True, exist_ok=True)
    total = len(plan.L) * len(plan.indices())
    todo = pending_points(plan, store)
    n_todo = sum(len(v) for v in todo.values())
    if max_points is not None:
        budget = max_points
        for L in list(todo):
            todo[L] = todo[L][:budget]
            budget -= len(todo[L])
            if not todo[L]:
                del todo[L]
    records = []
    plan_dict = plan.as_dict()
    if workers <= 1:
        have = set(store.ok_records())
        for L, ks in todo.items():
            state = None
            for k in ks:
                rec, new_state = _measure(plan, L, k, state if plan.warm_start else None)
                store.append(rec, existing=have)
                if new_state is not None:
                    state = new_state
                records.append(rec)
    elif plan.warm_start and plan.engine == "dmrg":
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_chain_job, plan_dict, L, ks) for L, ks in todo.items()]
            for f in as_completed(futs):
                records.extend(f.result())
    else:
        have = set(store.ok_records())
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_point_job, plan_dict, L, k) for L, ks in todo.items() for k in ks]
            for f in as_completed(futs):
                rec = f.result()
                store.append(rec, existing=have)
                records.append(rec)
    failed = [r for r in records if r["status"] != "ok"]
    computed = len(records) - len(failed)
    remaining = n_todo - computed
    return SweepSummary(total, total - n_todo, computed, failed, remaining)


def load_series(store, variant, S: int, L: int, observable: str = "CHI_F", jz: float = 0.0) -> Series:
    """D-sorted series of one observable, keeping the smallest-epsilon record per D."""
    store = store if isinstance(store, RecordStore) else RecordStore(store)
    variant = Variant.parse(variant).value
    obs = observable.upper()
    if obs not in OBSERVABLES:
        raise KeyError(f"unknown observable {observable!r}")
    col = OBSERVABLES[obs]
    best = {}
    for rec in store.ok_records().values():
        if rec["variant"] != variant or rec["S"] != S or rec["L"] != L or float(rec["jz"]) != jz:
            continue
        if rec.get(col) is None:
            continue
        Dk = round(rec["D"], 12)
        if Dk not in best or rec["epsilon"] < best[Dk]["epsilon"]:
            best[Dk] = rec
    if not best:
        raise MissingData(f"no {obs} data for variant={variant}, S={S}, L={L}")
    Ds = sorted(best)
    return Series(L, np.array([best[d]["D"] for d in Ds]), np.array([best[d][col] for d in Ds]), obs)


def compact(store, csv_path) -> int:
    """Export all successful records, sorted by key, to one CSV table."""
    store = store if isinstance(store, RecordStore) else RecordStore(store)
    recs = [store.ok_records()[k] for k in sorted(store.ok_records())]
    with open(csv_path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        wr.writeheader()
        for r in recs:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in RECORD_FIELDS})
    return len(recs)
