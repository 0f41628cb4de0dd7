"""Headline experiments: equivalence sweeps, stochastic power bound, signature
test, over-thermalization, passivity and the Strang / SRT checks."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import liouville as lv
from .errors import QHEngineError, SteadyStateError
from .model import EngineModel, build_generators, drive_hamiltonian
from .protocols import (ENGINE_TYPES, Schedule, action, build_schedule, cycle_propagator,
                        random_rearrangement)
from .thermo import cycle_ledger, steady_ledger

log = logging.getLogger(__name__)

STOCHASTIC_Z = {"two_stroke": 1.0, "four_stroke": 0.5}


class StrangBoundViolation(QHEngineError, AssertionError):
    pass


def strang_defect(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[float, float]:
    """Defect of the symmetric splitting of ``exp(-i (A + B) dt)``.

    Returns ``(defect, bound)`` with ``bound = ((||A|| + ||B||) dt)**3``;
    raises :class:`StrangBoundViolation` if the bound fails while
    ``s <= 1/2``.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    half_a = lv.propagate(A, dt / 2)
    split = half_a @ lv.propagate(B, dt) @ half_a
    exact = lv.propagate(A + B, dt)
    defect = lv.spectral_norm(split - exact)
    s = (lv.spectral_norm(A) + lv.spectral_norm(B)) * dt
    bound = s ** 3
    if s <= 0.5 and defect > bound:
        raise StrangBoundViolation(f"splitting defect {defect:.3e} exceeds s^3 = {bound:.3e}")
    return defect, bound


def random_lindblad_generator(n: int, rng: np.random.Generator, n_jumps: int = 2) -> np.ndarray:
    """Random trace-preserving generator (Hamiltonian part plus dissipator)."""
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    G = lv.hamiltonian_superop(0.5 * (X + X.conj().T))
    jumps = [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for _ in range(n_jumps)]
    return G + lv.dissipator_superop(jumps)


def map_grid(fn: Callable, points: Sequence, jobs: int = 1) -> list:
    """Evaluate ``fn`` on every grid point; output order follows the grid."""
    if jobs <= 1 or len(points) <= 1:
        return [fn(p) for p in points]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, points))


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    rows: list[dict[str, Any]]
    metadata: dict[str, Any] = field(default_factory=dict)

    def column(self, engine_type: str, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["engine"] == engine_type], dtype=float)


def _steady_row(args) -> dict[str, Any]:
    model, engine_type, tau, extra = args
    gens = build_generators(model)
    sched = build_schedule(engine_type, tau)
    row = {"engine": engine_type, **extra, "tau_cyc": tau}
    try:
        led, ss = steady_ledger(sched, gens)
    except (SteadyStateError, QHEngineError) as exc:
        log.warning("steady state failed for %s at tau=%g: %s", engine_type, tau, exc)
        row.update(s=action(sched, gens), failed=True, error=str(exc))
        return row
    r = led.as_row()
    r.pop("tau_cyc")
    row.update(r, unique=ss.unique, failed=False)
    return row


def _with_deviations(rows: list[dict], key_cols=("power", "J_c", "J_h")) -> None:
    cont = {r["index"]: r for r in rows if r["engine"] == "continuous" and not r.get("failed")}
    for r in rows:
        c = cont.get(r["index"])
        for k in key_cols:
            if c is None or r.get("failed"):
                r[f"dev_{k}"] = math.nan
            else:
                r[f"dev_{k}"] = abs(r[k] - c[k]) / abs(c[k]) if c[k] else abs(r[k] - c[k])


def fit_loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def action_rate(model: EngineModel) -> float:
    """Action per unit cycle time of the continuous engine."""
    g = build_generators(model)
    return g.norm("cold") + g.norm("hot") + g.norm("drive")


def tau_for_action(model: EngineModel, s_values) -> list[float]:
    rate = action_rate(model)
    return [float(s) / rate for s in s_values]


def equivalence_sweep(model: EngineModel, engine_types: Sequence[str] = ENGINE_TYPES,
                      tau_values: Sequence[float] = (), jobs: int = 1,
                      slope_max_s: float = 0.3) -> SweepResult:
    """Steady-state power and heat currents of each engine type over cycle times.

    The log-log slopes in the metadata use only points with ``s <= slope_max_s``.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = [(model, et, float(tau), {"index": i})
                for i, tau in enumerate(tau_values) for et in engine_types]
        rows = map_grid(_steady_row, grid, jobs)
    _with_deviations(rows)
    meta = {"model": model.to_dict(), "engine_types": list(engine_types)}
    for et in engine_types:
        if et == "continuous":
            continue
        sel = [r for r in rows if r["engine"] == et and not r.get("failed")
               and r["s"] <= slope_max_s]
        for k in ("power", "J_c", "J_h"):
            meta[f"slope_{k}_{et}"] = fit_loglog_slope([r["s"] for r in sel],
                                                       [r[f"dev_{k}"] for r in sel])
    meta["slope_max_s"] = slope_max_s
    return SweepResult("tau_cyc", [float(t) for t in tau_values], rows, meta)


def stochastic_power_bound(model: EngineModel, engine_type: str, tau_cyc: float,
                           schedule: Schedule | None = None) -> float:
    """Upper bound on the power of a fully dephased stroke engine.

    ``(z/8) sqrt(tr(H0^2) - tr(H0)^2) Delta_w^2 d^2 tau_cyc`` with ``z = 1``
    (two-stroke) or ``1/2`` (four-stroke), ``Delta_w`` the spread of the
    drive Hamiltonian's eigenvalues and ``d`` the duty cycle.
    """
    if engine_type not in STOCHASTIC_Z:
        raise ValueError(
            f"no stochastic bound for {engine_type!r}: the bound is defined for "
            f"{sorted(STOCHASTIC_Z)} (a dephased continuous engine produces no power)")
    z = STOCHASTIC_Z[engine_type]
    E = np.asarray(model.levels, dtype=float)
    tr1, tr2 = E.sum(), (E ** 2).sum()
    if abs(tr1) > 1e-12:
        warnings.warn("H0 is not traceless; evaluating sqrt(tr(H0^2) - tr(H0)^2) as written",
                      stacklevel=2)
    spread = tr2 - tr1 ** 2
    if spread < 0:
        raise ValueError("tr(H0^2) - tr(H0)^2 is negative for this model")
    w = np.linalg.eigvalsh(drive_hamiltonian(model))
    delta_w = w[-1] - w[0]
    sched = schedule or build_schedule(engine_type, tau_cyc)
    d = sched.duty_cycle
    return z / 8 * math.sqrt(spread) * delta_w ** 2 * d ** 2 * tau_cyc


@dataclass
class SignatureReport:
    engine: str
    tau_cyc: float
    dephasing: str
    measured_power: float
    bound_value: float
    z_factor: float
    delta_w: float
    duty: float
    s: float

    @property
    def verdict(self) -> str:
        if math.isnan(self.bound_value):
            return "n/a"
        return "exceeds" if self.measured_power > self.bound_value else "within"

    def as_row(self) -> dict[str, Any]:
        return {"engine": self.engine, "tau_cyc": self.tau_cyc, "dephasing": self.dephasing,
                "s": self.s, "power": self.measured_power, "bound": self.bound_value,
                "z": self.z_factor, "delta_w": self.delta_w, "duty": self.duty,
                "verdict": self.verdict}


def default_dephasing_rate(model: EngineModel, drive_periods: float = 100.0) -> float:
    """Coherence decay rate for a coherence time of ``drive_periods`` drive periods."""
    return 1.0 / (drive_periods * model.drive_period)


def dephased_setup(model: EngineModel, engine_type: str, tau_cyc: float, dephasing="none"):
    """Schedule and generator set for a coherent, rate-dephased or completely dephased run."""
    gens = build_generators(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sched = build_schedule(engine_type, tau_cyc)
    if dephasing in (None, "none", 0, 0.0):
        return sched, gens, "none"
    if dephasing == "complete":
        return sched, gens.with_dephasing(complete=True), "complete"
    rate = default_dephasing_rate(model) if dephasing == "rate" else float(dephasing)
    return sched.with_dephasing(), gens.with_dephasing(rate), f"rate={rate:.17g}"


def signature_test(model: EngineModel, engine_type: str, tau_cyc: float,
                   dephasing="none") -> SignatureReport:
    """Steady-state output power against the stochastic bound.

    ``dephasing`` is ``"none"``, ``"complete"``, ``"rate"`` (coherence time of
    100 drive periods) or an explicit rate.
    """
    sched, gens, label = dephased_setup(model, engine_type, tau_cyc, dephasing)
    led, _ = steady_ledger(sched, gens)
    w = np.linalg.eigvalsh(drive_hamiltonian(model))
    if engine_type in STOCHASTIC_Z:
        bound = stochastic_power_bound(model, engine_type, tau_cyc, sched)
        z = STOCHASTIC_Z[engine_type]
    else:
        bound, z = math.nan, math.nan
    return SignatureReport(engine_type, tau_cyc, label, led.power, bound, z,
                           float(w[-1] - w[0]), sched.duty_cycle, action(sched, gens))


def _signature_row(args):
    model, et, tau, deph = args
    return signature_test(model, et, tau, deph).as_row()


def signature_sweep(model: EngineModel, tau_values, engine_types=("continuous", "two_stroke", "four_stroke"),
                    dephasings=("none", "rate", "complete"), jobs: int = 1) -> list[dict]:
    grid = [(model, et, float(t), d) for t in tau_values for et in engine_types for d in dephasings]
    return map_grid(_signature_row, grid, jobs)


def overthermalization_sweep(model: EngineModel, gammas: Sequence[float], tau_cyc: float,
                             engine_types: Sequence[str] = ("continuous", "two_stroke", "four_stroke"),
                             jobs: int = 1) -> SweepResult:
    """Steady-state power versus a common bath rate ``gamma_c = gamma_h``."""
    grid = [(model.with_(gamma_c=float(g), gamma_h=float(g)), et, float(tau_cyc),
             {"index": i, "gamma": float(g)})
            for i, g in enumerate(gammas) for et in engine_types]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = map_grid(_steady_row, grid, jobs)
    meta: dict[str, Any] = {"model": model.to_dict(), "tau_cyc": tau_cyc,
                            "engine_types": list(engine_types)}
    for et in engine_types:
        p = np.array([r.get("power", math.nan) for r in rows if r["engine"] == et])
        p = np.where(np.isfinite(p), p, -np.inf)
        k = int(np.argmax(p))
        meta[f"argmax_gamma_{et}"] = float(gammas[k])
        meta[f"interior_max_{et}"] = bool(0 < k < len(p) - 1 and p[k] > p[0] and p[k] > p[-1])
    return SweepResult("gamma", [float(g) for g in gammas], rows, meta)


def plateau(gammas, power, decades: float = 1.0, tol: float = 0.02) -> float | None:
    """Large-gamma plateau: mean power over the last ``decades`` if it varies by < ``tol``."""
    g = np.asarray(gammas, float)
    p = np.asarray(power, float)
    sel = g >= g[-1] / 10 ** decades
    tail = p[sel]
    ref = tail[-1]
    if ref == 0 or np.max(np.abs(tail - ref)) / abs(ref) >= tol:
        return None
    return float(tail.mean())


@dataclass
class PassivityResult:
    passive: bool
    witness: tuple[int, int] | None = None
    kind: str | None = None


def passivity_check(rho: np.ndarray, h0: np.ndarray, tol: float = 1e-10) -> PassivityResult:
    """Passive iff energy-diagonal with populations non-increasing in energy.

    Witness level pairs are 1-based.
    """
    M = lv.unvec(rho)
    off = M - np.diag(np.diag(M))
    if np.linalg.norm(off) > tol:
        i, j = np.unravel_index(np.argmax(np.abs(off)), off.shape)
        i, j = sorted((int(i), int(j)))
        return PassivityResult(False, (i + 1, j + 1), "coherence")
    E = np.real(np.diag(h0))
    p = np.real(np.diag(M))
    order = np.argsort(E, kind="stable")
    for a, b in zip(order[:-1], order[1:]):
        if E[b] > E[a] and p[b] > p[a] + tol:
            return PassivityResult(False, (int(a) + 1, int(b) + 1), "inversion")
    # degenerate levels can hide a non-adjacent inversion
    for a in range(len(E)):
        for b in range(len(E)):
            if E[b] > E[a] and p[b] > p[a] + tol:
                return PassivityResult(False, tuple(sorted((a + 1, b + 1))), "inversion")
    return PassivityResult(True)


@dataclass
class SRTResult:
    s: float
    max_dW: float
    max_dQc: float
    max_dQh: float
    n_permutations: int

    @property
    def max_deviation(self) -> float:
        return max(self.max_dW, self.max_dQc, self.max_dQh)


def srt_verify(schedule: Schedule, generators, rho0: np.ndarray, n_permutations: int = 20,
               refine: int = 2, seed: int = 0) -> SRTResult:
    """Largest per-cycle |dW|, |dQ_c|, |dQ_h| over random symmetric rearrangements."""
    ref, _ = cycle_ledger(schedule, generators, rho0)
    rng = np.random.default_rng(seed)
    dW = dQc = dQh = 0.0
    for _ in range(n_permutations):
        alt = random_rearrangement(schedule, rng, refine=refine)
        led, _ = cycle_ledger(alt, generators, rho0)
        dW = max(dW, abs(led.W - ref.W))
        dQc = max(dQc, abs(led.Q_c - ref.Q_c))
        dQh = max(dQh, abs(led.Q_h - ref.Q_h))
    return SRTResult(action(schedule, generators), dW, dQc, dQh, n_permutations)


def propagator_deviation(model: EngineModel, engine_type: str, tau_cyc: float) -> tuple[float, float]:
    """``(s, ||K_type - K_continuous||)``."""
    gens = build_generators(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = build_schedule(engine_type, tau_cyc)
        c = build_schedule("continuous", tau_cyc)
    K = cycle_propagator(a, gens)
    Kc = cycle_propagator(c, gens)
    return action(c, gens), lv.spectral_norm(K - Kc)


def random_model(rng: np.random.Generator) -> EngineModel:
    """Four-level model with random level spacings, temperatures and rates."""
    E = np.sort(rng.uniform(-3, 3, size=4))
    while np.min(np.diff(E)) < 0.05:
        E = np.sort(rng.uniform(-3, 3, size=4))
    t_c = float(rng.uniform(0.3, 2.0))
    return EngineModel(
        levels=tuple(float(e) for e in E),
        t_c=t_c, t_h=t_c * float(rng.uniform(1.5, 6.0)),
        gamma_c=float(10 ** rng.uniform(-4, -2)), gamma_h=float(10 ** rng.uniform(-4, -2)),
        epsilon=float(10 ** rng.uniform(-4, -2)), omega=float(E[1] - E[0]))


def structural_defects(model: EngineModel, generators=None, tau_cyc: float | None = None,
                       engine_types: Sequence[str] = ENGINE_TYPES) -> dict[str, float]:
    """Largest violation of each exact identity of the generators and cycle maps.

    * ``hamiltonian_null``: ``H^H |H> = 0`` and ``<H| H^H = 0`` for H0 and the drives
    * ``hamiltonian_diagonal``: population-to-population entries of ``H^H``
    * ``hamiltonian_hermitian``: ``H^H`` is a Hermitian matrix
    * ``trace``: ``<I| G = 0`` for every generator
    * ``cptp_trace`` / ``cptp_hermiticity`` / ``cptp_positivity``: cycle propagators
    """
    gens = generators if generators is not None else build_generators(model)
    n = gens.dim
    pops = np.arange(n) * (n + 1)
    out = dict.fromkeys(("hamiltonian_null", "hamiltonian_diagonal", "hamiltonian_hermitian",
                         "trace", "cptp_trace", "cptp_hermiticity", "cptp_positivity"), 0.0)
    pairs = [(gens.h0, lv.hamiltonian_superop(gens.h0))]
    pairs.append((0.5 * drive_hamiltonian(model), gens["drive"]))
    for k, pair in enumerate(model.drive_pairs[:2], start=1):
        pairs.append((0.5 * drive_hamiltonian(model, [pair]), gens[f"drive{k}"]))
    for H, S in pairs:
        h = lv.vec(H)
        out["hamiltonian_null"] = max(out["hamiltonian_null"], float(np.linalg.norm(S @ h)),
                                      float(np.linalg.norm(h.conj() @ S)))
        out["hamiltonian_diagonal"] = max(out["hamiltonian_diagonal"],
                                          float(np.max(np.abs(S[np.ix_(pops, pops)]))))
        out["hamiltonian_hermitian"] = max(out["hamiltonian_hermitian"],
                                           float(np.linalg.norm(S - S.conj().T)))
    for G in gens.ops.values():
        out["trace"] = max(out["trace"], lv.trace_defect(G))
    tau = model.cycle_time(1) if tau_cyc is None else tau_cyc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for et in engine_types:
            K = cycle_propagator(build_schedule(et, tau), gens)
            for k, v in lv.cptp_defects(K).items():
                out[f"cptp_{k}"] = max(out[f"cptp_{k}"], v)
    return out
