"""Command-line front end: ``o2chain {ed,sweep,analyze}``.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 analysis failure.
Every command writes ``manifest.json`` (arguments, config echo, versions)
into its output directory. Numbers are printed with 12 significant digits.

Analysis specs are YAML mappings::

    store: runs/s1          # record store written by ``sweep``
    variant: u
    S: 1
    L: [32, 64, 96]
    peaks: {observables: [CHI_F, S_PRIME], bracket: [0.6, 1.4], width: 0.01}
    crossings: {observable: S_PRIME, pairs: [[32, 64], [64, 96]], window: [0.6, 1.4]}
    fits:
      - {model: SPRIME_POS_IOG, source: S_PRIME.position, L_range: [32, 96]}
      - {model: POWER_LAW, source: crossing}
    classify: S_PRIME       # label the transition from S_PRIME peak heights

``source`` is ``<observable>.position``, ``<observable>.height`` or
``crossing`` (crossing points are indexed by the smaller size of each pair).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, exact, fss, sweep
from .model import ChainSpec, EmptySector, Variant
from .observables import EngineFailure, measure_point

log = logging.getLogger("o2chain")

EXIT_USAGE, EXIT_SOLVER, EXIT_ANALYSIS = 1, 2, 3


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_manifest(out: Path, command: str, args: argparse.Namespace, config=None, extra=None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "config": config,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


# --- ed -------------------------------------------------------------------------


def cmd_ed(args) -> int:
    try:
        spec = ChainSpec(args.variant, args.S, args.L, args.D, args.jz)
    except ValueError as err:
        raise UsageError(str(err)) from err
    try:
        gs = exact.ground_state(spec, 0, seed=args.seed)
        entropy = exact.entanglement_entropy_exact(gs) if spec.L > 1 else 0.0
        chi_pert = exact.chi_f_perturbative(spec)
        point = measure_point(spec, args.delta, "ed")
    except (exact.NoConvergence, exact.DimensionCap, exact.DegenerateGround, EmptySector, EngineFailure) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    values = {
        "E0": gs.energy,
        "S_vN": entropy,
        "chi_F": chi_pert,
        "chi_F_fd": point.chi_f,
        "one_minus_F": -math.expm1(-0.5 * point.chi_f * spec.L * args.delta**2),
        "S_prime": point.entropy_derivative,
    }
    for k, v in values.items():
        print(f"{k} = {fmt(v)}")
    write_manifest(Path(args.out), "ed", args, spec.as_dict(), {"results": values})
    return 0


# --- sweep ----------------------------------------------------------------------


def _plan_from_args(args) -> sweep.SweepPlan:
    data = {}
    if args.plan:
        raw = yaml.safe_load(Path(args.plan).read_text()) if Path(args.plan).exists() else None
        if raw is None:
            raise UsageError(f"cannot read plan file {args.plan}")
        if not isinstance(raw, dict):
            raise UsageError(f"{args.plan}: plan must be a mapping")
        data.update(raw)
    data.setdefault("variant", "u")
    overrides = {"variant": args.variant, "S": args.S, "L": args.L, "window": args.window,
                 "grid_step": args.grid_step, "delta": args.delta, "jz": args.jz,
                 "engine": args.engine, "output": args.out}
    for k, v in overrides.items():
        if v is not None:
            data[k] = v
    dmrg = dict(data.get("dmrg") or {})
    if args.epsilon is not None:
        dmrg["epsilon"] = args.epsilon
    if args.seed is not None:
        dmrg["seed"] = args.seed
    if dmrg:
        data["dmrg"] = dmrg
    try:
        return sweep.plan_from_dict(data, source=args.plan or "command line")
    except sweep.PlanError as err:
        raise UsageError(str(err)) from err


def cmd_sweep(args) -> int:
    plan = _plan_from_args(args)
    store = sweep.RecordStore(plan.output)
    if not args.resume and store.read():
        raise UsageError(f"store {plan.output} already holds records; pass --resume to continue it")
    summary = sweep.run_plan(plan, workers=args.workers)
    print(summary)
    for rec in summary.failed:
        print(f"failed: L={rec['L']} D={fmt(rec['D'])}: {rec['error']}", file=sys.stderr)
    write_manifest(Path(plan.output), "sweep", args, plan.as_dict(),
                   {"summary": {"planned": summary.planned, "already_present": summary.already_present,
                                "computed": summary.computed, "failed": len(summary.failed),
                                "pending": summary.pending}})
    return EXIT_SOLVER if summary.failed else 0


# --- analyze --------------------------------------------------------------------

ANALYSIS_KEYS = {"store", "variant", "S", "L", "jz", "peaks", "crossings", "fits", "classify"}


def load_analysis(path) -> dict:
    try:
        spec = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as err:
        raise UsageError(f"cannot read analysis spec {path}: {err}") from err
    if not isinstance(spec, dict):
        raise UsageError(f"{path}: analysis spec must be a mapping")
    bad = sorted(set(spec) - ANALYSIS_KEYS)
    if bad:
        raise UsageError(f"{path}: unknown analysis key(s): {', '.join(bad)}")
    for k in ("store", "S", "L"):
        if k not in spec:
            raise UsageError(f"{path}: missing analysis key: {k}")
    return spec


def _write_csv(path: Path, rows: list[dict]) -> None:
    fields = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: fmt(v) for k, v in r.items()})


def run_analysis(spec: dict, out: Path) -> dict:
    """Peaks, crossings, fits and classification for one (variant, S) family."""
    out.mkdir(parents=True, exist_ok=True)
    store = sweep.RecordStore(spec["store"])
    variant = spec.get("variant", "u")
    S, jz = int(spec["S"]), float(spec.get("jz", 0.0))
    Ls = sorted(int(x) for x in spec["L"])
    pk = spec.get("peaks") or {}
    observables = [o.upper() for o in pk.get("observables", ["CHI_F", "S_PRIME"])]
    bracket = pk.get("bracket")
    width = float(pk.get("width", 0.01))

    series = {}

    def get_series(obs, L):
        if (obs, L) not in series:
            series[obs, L] = sweep.load_series(store, variant, S, L, obs, jz)
        return series[obs, L]

    peaks = {}
    peak_rows = []
    for obs in observables:
        for L in Ls:
            p = fss.find_peak(get_series(obs, L), bracket=bracket, width=width,
                              min_samples=int(pk.get("min_samples", 7)))
            peaks[obs, L] = p
            peak_rows.append({"observable": obs, "L": L, "D_p": p.position, "height": p.height,
                              "window_lo": p.window[0], "window_hi": p.window[1], "method": p.method})
    _write_csv(out / "peaks.csv", peak_rows)

    crossings = {}
    cross_rows = []
    cr = spec.get("crossings")
    if cr:
        obs = cr.get("observable", "S_PRIME").upper()
        pairs = cr.get("pairs") or list(zip(Ls[:-1], Ls[1:]))
        for a, b in pairs:
            x = fss.crossing_point(get_series(obs, int(a)), get_series(obs, int(b)), cr.get("window"))
            crossings[int(a)] = x
            row = {"observable": obs, "L_a": int(a), "L_b": int(b), "D_x": x}
            if (obs, int(a)) in peaks:
                row["guard_ok"] = fss.crossing_guard(peaks[obs, int(a)], x)
            cross_rows.append(row)
        _write_csv(out / "crossings.csv", cross_rows)

    fits = []
    for k, f in enumerate(spec.get("fits") or []):
        src = str(f.get("source", "S_PRIME.position"))
        if src == "crossing":
            pts = sorted(crossings.items())
        else:
            obs, _, what = src.partition(".")
            attr = {"position": "position", "height": "height"}.get(what)
            if attr is None:
                raise UsageError(f"fit {k}: bad source {src!r}")
            pts = [(L, getattr(peaks[obs.upper(), L], attr)) for L in Ls if (obs.upper(), L) in peaks]
        lo, hi = f.get("L_range", [0, np.inf])
        pts = [(L, v) for L, v in pts if lo <= L <= hi]
        L_arr = np.array([p[0] for p in pts], dtype=float)
        y_arr = np.array([p[1] for p in pts])
        init = f.get("init") or fss.default_init(f["model"], L_arr, y_arr)
        res = fss.fit_scaling(f["model"], L_arr, y_arr, init, fixed=f.get("fixed"),
                              n_starts=int(f.get("n_starts", 16)), seed=int(f.get("seed", 0)))
        fits.append((src, res, y_arr))
        _write_csv(out / f"fit_{k}_{res.model}.csv", res.plot_table(y_arr))

    classification = None
    if spec.get("classify"):
        obs = str(spec["classify"]).upper()
        hs = [peaks[obs, L].height for L in Ls]
        classification = fss.classify_transition(Ls, hs)

    with open(out / "fits.txt", "w") as fh:
        for src, res, _ in fits:
            fh.write(f"source: {src}\n{res.to_text()}\n")
        if classification is not None:
            fh.write("[classification]\n")
            fh.write(f"label: {classification.label}\np: {fmt(classification.p)} +- {fmt(classification.p_error)}\n")
    if fits:
        (out / "fits.csv").write_text(fss.fits_to_csv([r for _, r, _ in fits]))
    return {"peaks": peaks, "crossings": crossings, "fits": [r for _, r, _ in fits],
            "classification": classification}


def cmd_analyze(args) -> int:
    spec = load_analysis(args.spec)
    if args.store:
        spec["store"] = args.store
    out = Path(args.out)
    try:
        result = run_analysis(spec, out)
    except sweep.MissingData as err:
        print(f"analysis failure: {err}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (fss.NoInteriorMax, fss.WindowTooSparse, fss.NoSignChange, fss.MultipleRoots,
            fss.SingularJacobian, fss.NoDescent, fss.Ambiguous, KeyError, ValueError) as err:
        print(f"analysis failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ANALYSIS
    for (obs, L), p in result["peaks"].items():
        print(f"peak {obs} L={L}: D_p = {fmt(p.position)}, height = {fmt(p.height)}")
    for L, x in result["crossings"].items():
        print(f"crossing L={L}: D_x = {fmt(x)}")
    for res in result["fits"]:
        pars = ", ".join(f"{n} = {fmt(v)} +- {fmt(e)}" for n, (v, e) in res.params().items())
        print(f"fit {res.model}: {pars}")
    if result["classification"] is not None:
        c = result["classification"]
        print(f"classification: {c.label} (p = {fmt(c.p)} +- {fmt(c.p_error)})")
    write_manifest(out, "analyze", args, spec)
    return 0


# --- entry point ----------------------------------------------------------------


def _window(text: str):
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("window must be 'lo,hi'")
    return [float(parts[0]), float(parts[1])]


def _size_list(text: str):
    return [int(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="o2chain", description="Truncated quantum O(2) chain: exact, DMRG and scaling analysis.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(p, required):
        p.add_argument("--variant", choices=[v.value for v in Variant], default="u" if required else None)
        p.add_argument("--S", type=int, required=required)
        p.add_argument("--jz", type=float, default=0.0 if required else None)

    ed = sub.add_parser("ed", help="exact ground state of a short chain")
    model_flags(ed, True)
    ed.add_argument("--L", type=int, required=True)
    ed.add_argument("--D", type=float, required=True)
    ed.add_argument("--delta", type=float, default=5e-4)
    ed.add_argument("--seed", type=int, default=1234)
    ed.add_argument("--out", default="runs/ed")
    ed.set_defaults(func=cmd_ed)

    sw = sub.add_parser("sweep", help="run a D-grid sweep into a record store")
    sw.add_argument("plan", nargs="?", help="YAML plan file")
    model_flags(sw, False)
    sw.add_argument("--L", type=_size_list)
    sw.add_argument("--window", type=_window)
    sw.add_argument("--grid-step", type=float)
    sw.add_argument("--delta", type=float)
    sw.add_argument("--epsilon", type=float)
    sw.add_argument("--engine", choices=["ed", "dmrg"])
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--resume", action="store_true")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)

    an = sub.add_parser("analyze", help="peaks, crossings and scaling fits from a store")
    an.add_argument("spec", help="YAML analysis spec")
    an.add_argument("--store", help="override the spec's store path")
    an.add_argument("--out", default="analysis")
    an.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"o2chain {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
