"""Command-line entry point.

    qhengine steady    [--preset NAME] [--config PATH] [--out DIR] [--format csv|json]
    qhengine transient ...
    qhengine sweep     --axis action|gamma ...
    qhengine signature ...
    qhengine verify    ...

Exit codes: 0 success, 1 numerical failure (or a failed verify check),
2 configuration error.  Results are computed in full before anything is
written, so a failing run leaves no partial output.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
import warnings
from typing import Any

import numpy as np

from . import __version__
from . import liouville as lv
from .analysis import (StrangBoundViolation, equivalence_sweep, overthermalization_sweep,
                       passivity_check, random_lindblad_generator, random_model,
                       signature_sweep, srt_verify, strang_defect, structural_defects,
                       tau_for_action)
from .config import PRESETS, RunConfig, load_config
from .errors import ConfigError, QHEngineError
from .model import build_generators, gibbs_state
from .protocols import action, build_schedule, cycle_propagator
from .thermo import CYCLE_START, evolve_transient, steady_ledger, steady_state

log = logging.getLogger("qhengine")

STEADY_COLUMNS = ["engine", "s", "tau_cyc", "W", "Q_c", "Q_h", "P_w", "J_c", "J_h", "power",
                  "efficiency", "first_law_residual", "unique", "spectral_gap"]
TRANSIENT_COLUMNS = ["engine", "cycle", "time", "s", "W", "Q_c", "Q_h", "work_output"]
SWEEP_COLUMNS = ["index", "engine", "tau_cyc", "gamma", "s", "W", "Q_c", "Q_h", "P_w", "J_c",
                 "J_h", "power", "efficiency", "first_law_residual", "dev_power", "dev_J_c",
                 "dev_J_h", "failed"]
SIGNATURE_COLUMNS = ["m", "engine", "dephasing", "tau_cyc", "s", "power", "bound", "z",
                     "delta_w", "duty", "verdict"]
STRANG_ACTIONS = (0.05, 0.1, 0.25, 0.5)


# formatting

def fmt(v: Any) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def dumps(obj: Any) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def render_csv(columns: list[str], rows: list[dict], metadata: dict) -> str:
    buf = io.StringIO()
    for k in sorted(metadata):
        buf.write(f"# {k}: {json.dumps(_jsonable(metadata[k]), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def render(columns: list[str], rows: list[dict], metadata: dict, form: str) -> str:
    if form == "json":
        return dumps({"metadata": metadata, "columns": columns,
                      "rows": [{c: r.get(c) for c in columns} for r in rows]})
    return render_csv(columns, rows, metadata)


def _metadata(cmd: str, cfg: RunConfig, **extra) -> dict:
    return {"command": cmd, "version": __version__, "config": cfg.to_dict(), **extra}


def _initial_state(cfg: RunConfig, sched, gens) -> np.ndarray:
    n = gens.dim
    kind = cfg.experiment.initial_state
    if kind == "steady":
        return steady_state(sched, gens).rho
    if kind == "mixed":
        return lv.vec(np.eye(n) / n)
    order = np.argsort(np.real(np.diag(gens.h0)), kind="stable")
    k = order[-1] if kind == "excited" else order[0]
    p = np.zeros(n)
    p[k] = 1.0
    return lv.vec(np.diag(p))


# subcommands; each returns {filename: text}

def cmd_steady(cfg: RunConfig, jobs: int = 1) -> dict[str, str]:
    gens = build_generators(cfg.model)
    tau = cfg.tau_cyc()
    rows, states = [], {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for et in cfg.schedule.engines:
            led, ss = steady_ledger(build_schedule(et, tau), gens)
            rows.append({"engine": et, **led.as_row(), "unique": ss.unique,
                         "spectral_gap": ss.spectral_gap})
            M = lv.unvec(ss.rho)
            states[et] = {"real": M.real.tolist(), "imag": M.imag.tolist(),
                          "residual": ss.residual, "unique": ss.unique,
                          "spectral_gap": ss.spectral_gap}
    meta = _metadata("steady", cfg, tau_cyc=tau, cycle_start=CYCLE_START)
    form = cfg.output.format
    state_doc = dumps({"metadata": meta, "states": states})
    return {f"steady.{form}": render(STEADY_COLUMNS, rows, meta, form),
            "steady_states.json": state_doc}


def _reference_action(cfg: RunConfig, gens, tau: float) -> float:
    """Continuous-engine action setting the gap tolerance ``C s^3``."""
    ref = cfg.experiment.gap_reference_preset
    if ref is not None:
        other = load_config(preset=ref)
        gens, tau = build_generators(other.model), other.tau_cyc()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return action(build_schedule("continuous", tau), gens)


def cmd_transient(cfg: RunConfig, jobs: int = 1) -> dict[str, str]:
    gens = build_generators(cfg.model)
    tau = cfg.tau_cyc()
    n = cfg.schedule.n_cycles
    rows, work, s_of = [], {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for et in cfg.schedule.engines:
            sched = build_schedule(et, tau)
            s_of[et] = action(sched, gens)
            pts = evolve_transient(sched, gens, _initial_state(cfg, sched, gens), n)
            bounds = [p for p in pts[1:] if p.cycle_boundary]
            work[et] = np.array([p.ledger.W for p in bounds])
            for p in bounds:
                rows.append({"engine": et, "cycle": p.cycle, "time": p.time, "s": p.ledger.s,
                             "W": p.ledger.W, "Q_c": p.ledger.Q_c, "Q_h": p.ledger.Q_h,
                             "work_output": -p.ledger.W})
    # pairwise cumulative-work gap per elapsed cycle, worst over pairs and cycles
    gap = 0.0
    for a, b in itertools.combinations(work, 2):
        if n:
            gap = max(gap, float(np.max(np.abs(work[a] - work[b]) / np.arange(1, n + 1))))
    s_ref = _reference_action(cfg, gens, tau)
    tol = cfg.experiment.transient_constant * s_ref ** 3
    meta = _metadata("transient", cfg, tau_cyc=tau, s=s_of, s_reference=s_ref,
                     max_gap_per_cycle=gap, gap_tolerance=tol, within_tolerance=gap <= tol,
                     cycle_start=CYCLE_START)
    form = cfg.output.format
    return {f"transient.{form}": render(TRANSIENT_COLUMNS, rows, meta, form)}


def cmd_sweep(cfg: RunConfig, jobs: int = 1) -> dict[str, str]:
    e = cfg.experiment
    if e.axis == "action":
        s_values = np.geomspace(e.s_min, e.s_max, e.n_points) if e.n_points > 1 else [e.s_min]
        taus = tau_for_action(cfg.model, s_values)
        res = equivalence_sweep(cfg.model, cfg.schedule.engines, taus, jobs=jobs)
        extra = {"s_grid": [float(s) for s in s_values]}
    else:
        gammas = (np.geomspace(e.gamma_min, e.gamma_max, e.gamma_points)
                  if e.gamma_points > 1 else [e.gamma_min])
        res = overthermalization_sweep(cfg.model, [float(g) for g in gammas], cfg.tau_cyc(),
                                       cfg.schedule.engines, jobs=jobs)
        extra = {}
    meta = _metadata("sweep", cfg, axis=e.axis, **extra,
                     **{k: v for k, v in res.metadata.items() if k != "model"})
    form = cfg.output.format
    return {f"sweep_{e.axis}.{form}": render(SWEEP_COLUMNS, res.rows, meta, form)}


def cmd_signature(cfg: RunConfig, jobs: int = 1) -> dict[str, str]:
    e = cfg.experiment
    rows = []
    for m in e.m_values:
        tau = cfg.model.cycle_time(m)
        for r in signature_sweep(cfg.model, [tau], cfg.schedule.engines, e.dephasings, jobs):
            rows.append({"m": m, **r})
    meta = _metadata("signature", cfg,
                     coherence_time=e.coherence_drive_periods * cfg.model.drive_period)
    form = cfg.output.format
    return {f"signature.{form}": render(SIGNATURE_COLUMNS, rows, meta, form)}


def _inject(gens, fault):
    if fault == "trace_violation":
        G = gens.ops["cold"].copy()
        G[0, 0] += -1e-6j  # population of level 1 leaks out of the trace
        gens.ops["cold"] = G
        gens._norms.clear()
    return gens


def _check(results: list, name: str, fn) -> None:
    try:
        ok, detail = fn()
    except (QHEngineError, np.linalg.LinAlgError) as exc:
        ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
    results.append({"name": name, "passed": bool(ok), "detail": detail})


def cmd_verify(cfg: RunConfig, jobs: int = 1) -> dict[str, str]:
    e = cfg.experiment
    model = cfg.model
    gens = _inject(build_generators(model), e.inject_fault)
    tau = cfg.tau_cyc()
    engines = cfg.schedule.engines
    rng = np.random.default_rng(e.seed)
    results: list[dict] = []

    def structure():
        d = structural_defects(model, gens, tau, engines)
        worst = dict(d)
        for _ in range(e.n_random):
            for k, v in structural_defects(random_model(rng)).items():
                worst[k] = max(worst[k], v)
        return all(v <= 1e-12 for v in worst.values()), worst

    def trace_preservation():
        d = {k: lv.trace_defect(G) for k, G in gens.ops.items()}
        return all(v <= 1e-12 for v in d.values()), d

    def cptp():
        worst = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for et in engines:
                d = lv.cptp_defects(cycle_propagator(build_schedule(et, tau), gens))
                worst[et] = d
        return all(v <= 1e-12 for d in worst.values() for v in d.values()), worst

    def strang():
        A = gens["cold"] + gens["hot"]
        B = gens["drive"]
        pairs = [(A, B), (gens["cold"], gens["hot"] + gens["drive"])]
        for _ in range(e.n_random):
            pairs.append((random_lindblad_generator(model.dim, rng),
                          random_lindblad_generator(model.dim, rng)))
        worst = 0.0
        for X, Y in pairs:
            rate = lv.spectral_norm(X) + lv.spectral_norm(Y)
            for s in STRANG_ACTIONS:
                try:
                    d, bound = strang_defect(X, Y, s / rate)
                except StrangBoundViolation as exc:
                    return False, {"error": str(exc), "s": s}
                worst = max(worst, d / bound)
        return True, {"pairs": len(pairs), "max_defect_over_s3": worst}

    def srt():
        s = e.srt_action
        out = {}
        ok = True
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for et in [x for x in engines if x != "continuous"]:
                sched = build_schedule(et, 1.0)
                sched = build_schedule(et, s / action(sched, gens))
                for label in ("steady", "excited"):
                    if label == "steady":
                        rho0 = steady_state(sched, gens).rho
                    else:
                        rho0 = lv.vec(np.diag(np.eye(model.dim)[-1]))
                    r = srt_verify(sched, gens, rho0, e.n_permutations, refine=2, seed=e.seed)
                    tol = e.srt_constant * r.s ** 3
                    out[f"{et}/{label}"] = {"s": r.s, "max_deviation": r.max_deviation,
                                            "tolerance": tol}
                    ok &= r.max_deviation <= tol
        return ok, out

    def first_law():
        out = {}
        ok = True
        carnot = 1 - model.t_c / model.t_h
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for et in engines:
                led, ss = steady_ledger(build_schedule(et, tau), gens)
                eff = led.efficiency
                out[et] = {"first_law_residual": led.first_law_residual, "efficiency": eff}
                ok &= led.first_law_residual <= 1e-10
                ok &= eff is None or eff <= carnot + 1e-12
                ok &= lv.is_density(ss.rho)
        return ok, out

    def passivity():
        E = model.levels
        all_levels = range(model.dim)
        gc = passivity_check(gibbs_state(E, model.t_c, all_levels), gens.h0)
        gh = passivity_check(gibbs_state(E, model.t_h, all_levels), gens.h0)
        top = lv.vec(np.diag(np.eye(model.dim)[int(np.argmax(E))]))
        ex = passivity_check(top, gens.h0)
        ok = gc.passive and gh.passive and not ex.passive
        return ok, {"gibbs_cold": gc.passive, "gibbs_hot": gh.passive,
                    "excited": ex.passive, "excited_witness": ex.witness}

    _check(results, "trace_preservation", trace_preservation)
    _check(results, "structure", structure)
    _check(results, "cptp", cptp)
    _check(results, "strang", strang)
    _check(results, "srt", srt)
    _check(results, "first_law", first_law)
    _check(results, "passivity", passivity)
    failed = [r["name"] for r in results if not r["passed"]]
    doc = {"metadata": _metadata("verify", cfg, tau_cyc=tau), "passed": not failed,
           "failed": failed, "checks": results}
    return {"verify.json": dumps(doc)}


COMMANDS = {
    "steady": cmd_steady,
    "transient": cmd_transient,
    "sweep": cmd_sweep,
    "signature": cmd_signature,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qhengine", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config merged over the preset")
    common.add_argument("--preset", metavar="NAME", choices=sorted(PRESETS), default=None,
                        help="named parameter set (default: default)")
    common.add_argument("--out", metavar="DIR", help="write files here instead of stdout")
    common.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="worker processes for grid sweeps")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("steady", parents=[common], help="steady-state ledger per engine type")
    sub.add_parser("transient", parents=[common], help="cumulative work at cycle boundaries")
    sp = sub.add_parser("sweep", parents=[common], help="power versus action or bath rate")
    sp.add_argument("--axis", choices=("action", "gamma"), default=None)
    sub.add_parser("signature", parents=[common], help="dephased power against the bound")
    sub.add_parser("verify", parents=[common], help="run the invariant checks")
    return p


def resolve(args) -> RunConfig:
    cfg = load_config(args.config, args.preset)
    if args.format:
        cfg.output.format = args.format
    if args.out:
        cfg.output.dir = args.out
    if getattr(args, "axis", None):
        cfg.experiment.axis = args.axis
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    cfg.validate()
    return cfg


def write_outputs(files: dict[str, str], out_dir: str | None, stream=None) -> None:
    stream = stream or sys.stdout
    if out_dir is None:
        # the primary table (or report) goes to stdout
        stream.write(next(iter(files.values())))
        return
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _failed_rows(files: dict[str, str]) -> int:
    n = 0
    for name, text in files.items():
        if name.startswith("sweep_"):
            if name.endswith(".json"):
                n += sum(bool(r.get("failed")) for r in json.loads(text)["rows"])
            else:
                lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
                rows = csv.DictReader(lines)
                n += sum(r.get("failed") == "true" for r in rows)
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"qhengine: config error: {exc}", file=sys.stderr)
        return 2
    try:
        files = COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        print(f"qhengine: config error: {exc}", file=sys.stderr)
        return 2
    except (QHEngineError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"qhengine: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    write_outputs(files, cfg.output.dir)
    failed_rows = _failed_rows(files)
    if failed_rows:
        print(f"qhengine: numerical failure at {failed_rows} grid point(s); "
              "see the 'failed' column", file=sys.stderr)
        return 1
    if args.command == "verify":
        doc = json.loads(files["verify.json"])
        if not doc["passed"]:
            print(f"qhengine: verify failed: {', '.join(doc['failed'])}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
