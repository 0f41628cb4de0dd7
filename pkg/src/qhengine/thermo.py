"""Steady states, per-segment energy bookkeeping and work decomposition.

Sign convention: ``W``, ``Q_c`` and ``Q_h`` are the energies *received by
the working medium* from the drive, the cold bath and the hot bath, so
``W + Q_c + Q_h = 0`` over a steady-state cycle and an engine has
``W < 0``.  ``power`` (= ``-W / tau``) is the output delivered to the work
repository and is positive for an engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import liouville as lv
from .errors import AttributionError, CPTPViolation, SteadyStateError
from .model import GeneratorSet
from .protocols import Schedule, Segment, action, cycle_propagator, segment_generator

UNIT_EIG_TOL = 1e-6
DEGENERACY_TOL = 1e-8
ATTRIBUTION_TOL = 1e-10
ROUNDOFF_FLOOR = 1e-13

CYCLE_START = "left edge t=-tau/2 of the symmetric unit cell"

_AGENT_OF = {"cold": "Q_c", "hot": "Q_h", "drive": "W", "drive1": "W", "drive2": "W"}


@dataclass
class SteadyStateResult:
    rho: np.ndarray
    residual: float
    spectral_gap: float
    unique: bool
    eigenvalues: np.ndarray = field(repr=False)


@dataclass
class CycleLedger:
    W: float
    Q_c: float
    Q_h: float
    tau: float
    s: float
    per_segment: list[tuple[int, str, float]] = field(default_factory=list)
    # spread of the H0 spectrum; floors the first-law denominator when nothing flows
    energy_scale: float = 0.0

    @property
    def P_w(self) -> float:
        return self.W / self.tau

    @property
    def J_c(self) -> float:
        return self.Q_c / self.tau

    @property
    def J_h(self) -> float:
        return self.Q_h / self.tau

    @property
    def power(self) -> float:
        """Power delivered to the work repository."""
        return -self.W / self.tau + 0.0

    @property
    def first_law_residual(self) -> float:
        """``|W + Q_c + Q_h|`` relative to ``|W| + |Q_c| + |Q_h|``.

        The denominator never drops below ``1e-6 * energy_scale``, so a cycle
        with no energy flow at all reports round-off, not 0/0.
        """
        scale = max(abs(self.W) + abs(self.Q_c) + abs(self.Q_h), 1e-6 * self.energy_scale)
        total = abs(self.W + self.Q_c + self.Q_h)
        return total / scale if scale > 0 else total

    @property
    def efficiency(self) -> float | None:
        """``-W / Q_h`` in engine mode (heat in from the hot side, work out); else None."""
        if self.Q_h > 0 and self.W < 0:
            return -self.W / self.Q_h
        return None

    def __add__(self, other: CycleLedger) -> CycleLedger:
        return CycleLedger(
            self.W + other.W, self.Q_c + other.Q_c, self.Q_h + other.Q_h,
            self.tau + other.tau, self.s + other.s,
            self.per_segment + other.per_segment, max(self.energy_scale, other.energy_scale))

    def as_row(self) -> dict[str, float]:
        eff = self.efficiency
        return {
            "s": self.s, "tau_cyc": self.tau, "W": self.W, "Q_c": self.Q_c, "Q_h": self.Q_h,
            "P_w": self.P_w, "J_c": self.J_c, "J_h": self.J_h, "power": self.power,
            "efficiency": math.nan if eff is None else eff,
            "first_law_residual": self.first_law_residual,
        }


def _normalize(rho: np.ndarray) -> np.ndarray:
    M = lv.unvec(rho)
    M = 0.5 * (M + M.conj().T)
    return lv.vec(M / np.trace(M).real)


def _null_vectors(A: np.ndarray, k: int) -> np.ndarray:
    _, _, vh = np.linalg.svd(A)
    return vh[-k:].conj().T


def steady_state(schedule: Schedule, generators: GeneratorSet) -> SteadyStateResult:
    """Fixed point of the cycle map.

    A single-segment schedule is solved as the null vector of its
    generator; otherwise the fixed point of the cycle propagator is used.
    A degenerate fixed space is flagged (``unique=False``) and resolved by
    projecting the maximally mixed state onto it.
    """
    n = generators.dim
    K = cycle_propagator(schedule, generators)
    eig = np.linalg.eigvals(K)
    dist = np.abs(eig - 1)
    order = np.argsort(dist)
    if dist[order[0]] > UNIT_EIG_TOL:
        raise SteadyStateError(
            f"cycle propagator has no eigenvalue within {UNIT_EIG_TOL} of 1 "
            f"(closest {eig[order[0]]:.6g})")
    k = int(np.sum(dist < DEGENERACY_TOL)) or 1
    rest = np.abs(eig[order[k:]])
    gap = float(1 - rest.max()) if rest.size else 1.0

    single = len(schedule.segments) == 1
    if single and generators.complete_dephasing and schedule.segments[0].thermal:
        single = False  # the projected generator also annihilates every coherence
    if single:
        A = segment_generator(schedule.segments[0], generators)
    else:
        A = K - np.eye(n * n)
    if k == 1:
        rho = _null_vectors(A, 1)[:, 0]
        trace = lv.identity_vector(n).conj() @ rho
        rho = rho / trace
    else:
        R = _null_vectors(A, k)
        L = _null_vectors(A.conj().T, k)
        P = R @ np.linalg.solve(L.conj().T @ R, L.conj().T)
        rho = P @ lv.identity_vector(n) / n
    rho = _normalize(rho)
    residual = float(np.linalg.norm(A @ rho))
    return SteadyStateResult(rho, residual, gap, k == 1, eig)


def _energy_scale(generators: GeneratorSet) -> float:
    E = np.real(np.diag(generators.h0))
    return float(E.max() - E.min())


def _check_state(rho: np.ndarray, where: str, tol: float) -> None:
    problems = lv.check_density(rho, trace_tol=tol, positivity_tol=tol)
    if problems:
        raise CPTPViolation(f"{where}: " + "; ".join(problems))


def segment_energy_ledger(segment: Segment, rho_in: np.ndarray, generators: GeneratorSet):
    """Energy received from each agent over one segment.

    Returns ``(energies, rho_out)`` with ``energies`` keyed by ``W``/``Q_c``/
    ``Q_h``.  A single-agent segment gets the whole energy change.  With
    several agents each one is credited with the time integral of its own
    current ``<H0| -i w_x G_x |rho(t)>``, evaluated exactly through the
    integrated propagator.
    """
    h0 = lv.vec(generators.h0)
    G = segment_generator(segment, generators)
    complete = generators.complete_dephasing and segment.thermal
    P = lv.population_projector(generators.dim) if complete else None
    rho = P @ rho_in if complete else rho_in
    energy_agents = [k for k in segment.agents if k in _AGENT_OF]
    out = {"W": 0.0, "Q_c": 0.0, "Q_h": 0.0}

    if len(energy_agents) <= 1 and "dephasing" not in segment.weights:
        K = lv.propagate(G, segment.duration)
        rho_out = K @ rho
        if complete:
            rho_out = P @ rho_out
        dE = (np.vdot(h0, rho_out) - np.vdot(h0, rho_in)).real
        if energy_agents:
            out[_AGENT_OF[energy_agents[0]]] = dE
        elif abs(dE) > ATTRIBUTION_TOL * max(1.0, abs(np.vdot(h0, rho_in))):
            raise AttributionError(f"energy changed by {dE:.3e} with no agent present")
        return out, rho_out

    K, Phi = lv.propagate_with_integral(G, segment.duration)
    rho_out = K @ rho
    if complete:
        rho_out = P @ rho_out
    avg = Phi @ rho
    parts = {}
    for name, w in segment.weights.items():
        Gx = generators[name] if name != "dephasing" else generators["dephasing"]
        if complete:
            Gx = P @ Gx @ P
        parts[name] = (np.vdot(h0, -1j * w * (Gx @ avg))).real
    dE = (np.vdot(h0, rho_out) - np.vdot(h0, rho_in)).real
    total = math.fsum(parts.values())
    scale = max(abs(dE), math.fsum(abs(v) for v in parts.values()), 1e-300)
    # round-off grows with the segment action times the energy scale
    seg_action = segment.duration * math.fsum(
        w * generators.norm(k) for k, w in segment.weights.items())
    floor = ROUNDOFF_FLOOR * (1 + seg_action) * float(np.max(np.abs(generators.h0)))
    if abs(total - dE) > ATTRIBUTION_TOL * scale + floor:
        raise AttributionError(f"attributions sum to {total!r}, energy change is {dE!r}")
    deph = parts.pop("dephasing", 0.0)
    if abs(deph) > ATTRIBUTION_TOL * scale + floor:
        raise AttributionError(f"pure dephasing changed the energy by {deph:.3e}")
    for name, e in parts.items():
        out[_AGENT_OF[name]] += e
    return out, rho_out


def cycle_ledger(schedule: Schedule, generators: GeneratorSet, rho0: np.ndarray,
                 check_tol: float | None = None):
    """Run one cycle from ``rho0``; return ``(CycleLedger, rho_end)``."""
    rho = rho0
    W = Qc = Qh = 0.0
    per = []
    for i, seg in enumerate(schedule.segments):
        e, rho = segment_energy_ledger(seg, rho, generators)
        for agent, val in e.items():
            if val != 0.0:
                per.append((i, agent, val))
        W += e["W"]
        Qc += e["Q_c"]
        Qh += e["Q_h"]
        if check_tol is not None:
            _check_state(rho, f"segment {i}", check_tol)
    led = CycleLedger(W, Qc, Qh, schedule.tau, action(schedule, generators), per,
                      _energy_scale(generators))
    return led, rho


def steady_ledger(schedule: Schedule, generators: GeneratorSet):
    """Steady state plus the ledger of one cycle started from it."""
    ss = steady_state(schedule, generators)
    led, _ = cycle_ledger(schedule, generators, ss.rho)
    return led, ss


@dataclass
class TransientPoint:
    time: float
    cycle: int
    segment: int
    rho: np.ndarray
    ledger: CycleLedger
    cycle_boundary: bool


def evolve_transient(schedule: Schedule, generators: GeneratorSet, rho0: np.ndarray,
                     n_cycles: int, tol: float = 1e-9) -> list[TransientPoint]:
    """Cumulative bookkeeping at every segment and cycle boundary.

    The first point is the initial state at ``t = 0``.  Raises
    :class:`CPTPViolation` when a propagated state drifts out of the set of
    density matrices by more than ``tol``.
    """
    if n_cycles < 0:
        raise ValueError("n_cycles must be >= 0")
    _check_state(rho0, "initial state", tol)
    s = action(schedule, generators)
    cum = CycleLedger(0.0, 0.0, 0.0, 0.0, 0.0, energy_scale=_energy_scale(generators))
    t = 0.0
    rho = rho0
    points = [TransientPoint(0.0, 0, 0, rho0, cum, True)]
    nseg = len(schedule.segments)
    for c in range(n_cycles):
        for i, seg in enumerate(schedule.segments):
            e, rho = segment_energy_ledger(seg, rho, generators)
            _check_state(rho, f"cycle {c} segment {i}", tol)
            t += seg.duration
            frac = seg.duration / schedule.tau if schedule.tau else 0.0
            cum = cum + CycleLedger(e["W"], e["Q_c"], e["Q_h"], seg.duration, s * frac,
                                    [(i, k, v) for k, v in e.items() if v])
            points.append(TransientPoint(t, c + 1 if i == nseg - 1 else c, i, rho, cum,
                                         i == nseg - 1))
    return points


def cycle_boundary_work(points: list[TransientPoint]) -> np.ndarray:
    """Cumulative ``W`` at cycle boundaries, excluding ``t = 0``."""
    return np.array([p.ledger.W for p in points[1:] if p.cycle_boundary])


def decompose_work(rho: np.ndarray, generators: GeneratorSet, tau_w: float,
                   drive: str = "drive", weight: float = 1.0) -> tuple[float, float]:
    """Split the work of an isolated drive stroke into coherent and stochastic parts.

    With ``X = -i w G_drive tau_w`` the stroke work is
    ``<H0| exp(X) - I |rho>``.  The odd part of the series, ``sinh X``,
    can only act on coherences and the even part, ``cosh X - I``, only on
    populations, so ``W_coh = <H0|sinh X|rho_coh>`` and
    ``W_stoch = <H0|cosh X - I|rho_pop>``.
    """
    if tau_w < 0:
        raise ValueError("tau_w must be >= 0")
    n = generators.dim
    h0 = lv.vec(generators.h0)
    G = weight * generators[drive]
    Kp = lv.propagate(G, tau_w)
    Km = lv.propagate(-G, tau_w)
    odd = 0.5 * (Kp - Km)
    even = 0.5 * (Kp + Km) - np.eye(n * n)
    P = lv.population_projector(n)
    rho_pop = P @ rho
    rho_coh = rho - rho_pop
    w_coh = np.vdot(h0, odd @ rho_coh).real
    w_stoch = np.vdot(h0, even @ rho_pop).real
    return float(w_coh), float(w_stoch)
