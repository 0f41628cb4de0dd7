"""The driven four-level engine: levels, bath jump operators, RWA drive.

Levels are 0-based internally.  The default model has energies
``(-2, -0.5, 0.5, 2)``, a hot manifold ``{0, 3}`` (gap 4, T_h = 5), a cold
manifold ``{1, 2}`` (gap 1, T_c = 1) and a drive resonant with the
``0<->1`` and ``2<->3`` transitions at ``omega = 1.5``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from . import liouville as lv
from .errors import ConfigError


@dataclass(frozen=True)
class EngineModel:
    delta_e_h: float = 4.0
    delta_e_c: float = 1.0
    t_h: float = 5.0
    t_c: float = 1.0
    gamma_h: float = 5e-4
    gamma_c: float = 5e-4
    epsilon: float = 5e-4
    omega: float | None = None
    levels: tuple[float, ...] | None = None
    hot_manifold: tuple[int, ...] = (0, 3)
    cold_manifold: tuple[int, ...] = (1, 2)
    drive_pairs: tuple[tuple[int, int], ...] = ((0, 1), (2, 3))

    def __post_init__(self):
        if self.levels is None:
            object.__setattr__(self, "levels", (
                -self.delta_e_h / 2, -self.delta_e_c / 2,
                self.delta_e_c / 2, self.delta_e_h / 2))
        else:
            object.__setattr__(self, "levels", tuple(float(e) for e in self.levels))
        if self.omega is None:
            object.__setattr__(self, "omega", (self.delta_e_h - self.delta_e_c) / 2)
        object.__setattr__(self, "hot_manifold", tuple(self.hot_manifold))
        object.__setattr__(self, "cold_manifold", tuple(self.cold_manifold))
        object.__setattr__(self, "drive_pairs", tuple(tuple(p) for p in self.drive_pairs))
        self._validate()

    def _validate(self):
        n = len(self.levels)
        if n < 2:
            raise ConfigError("model needs at least two levels")
        if not all(math.isfinite(e) for e in self.levels):
            raise ConfigError("level energies must be finite")
        if not (self.t_h > self.t_c > 0):
            raise ConfigError(f"need T_h > T_c > 0, got T_h={self.t_h}, T_c={self.t_c}")
        for name in ("gamma_h", "gamma_c", "epsilon"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("hot_manifold", "cold_manifold"):
            idx = getattr(self, name)
            if not idx or any(not 0 <= i < n for i in idx) or len(set(idx)) != len(idx):
                raise ConfigError(f"{name} must be distinct level indices in [0, {n})")
        if len(set(self.hot_manifold) & set(self.cold_manifold)) > 1:
            raise ConfigError("hot and cold manifolds may share at most one level")
        for a, b in self.drive_pairs:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ConfigError(f"invalid drive pair ({a}, {b})")

    @property
    def dim(self) -> int:
        return len(self.levels)

    @property
    def drive_period(self) -> float:
        """``tau_d = 2 pi / omega``."""
        return 2 * math.pi / abs(self.omega) if self.omega else math.inf

    def manifold_gap(self, which: str) -> float:
        idx = self.hot_manifold if which == "hot" else self.cold_manifold
        E = [self.levels[k] for k in idx]
        return max(E) - min(E)

    def cycle_time(self, m: float) -> float:
        """Engine cycle holding ``6 m`` drive periods."""
        return 6 * m * self.drive_period

    def with_(self, **changes) -> EngineModel:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["levels"] = list(self.levels)
        d["hot_manifold"] = list(self.hot_manifold)
        d["cold_manifold"] = list(self.cold_manifold)
        d["drive_pairs"] = [list(p) for p in self.drive_pairs]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EngineModel:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"model: unknown field(s) {sorted(unknown)}")
        kw = dict(d)
        if kw.get("levels") is not None:
            kw["levels"] = tuple(kw["levels"])
        for key in ("hot_manifold", "cold_manifold"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "drive_pairs" in kw:
            kw["drive_pairs"] = tuple(tuple(p) for p in kw["drive_pairs"])
        return cls(**kw)


def build_h0(model: EngineModel) -> np.ndarray:
    """Bare Hamiltonian, diagonal in the level basis."""
    return np.diag(np.asarray(model.levels, dtype=float)).astype(complex)


def _pair_op(n: int, a: int, b: int) -> np.ndarray:
    M = np.zeros((n, n), dtype=complex)
    M[a, b] = 1.0
    return M


def drive_hamiltonian(model: EngineModel, pairs=None) -> np.ndarray:
    """``H_w = eps * sum(|a><b| + h.c.)`` over the drive pairs."""
    n = model.dim
    H = np.zeros((n, n), dtype=complex)
    for a, b in (model.drive_pairs if pairs is None else pairs):
        H += model.epsilon * (_pair_op(n, a, b) + _pair_op(n, b, a))
    return H


def build_drive_rwa(model: EngineModel, pairs=None) -> np.ndarray:
    """Interaction-picture drive superoperator ``(1/2) H_w`` under the RWA."""
    return lv.hamiltonian_superop(0.5 * drive_hamiltonian(model, pairs))


def bath_jump_operators(model: EngineModel, which: str) -> list[np.ndarray]:
    """Thermalizing jump operators of one bath.

    For each level pair ``i < j`` (by energy) of the manifold there is an
    excitation ``sqrt(gamma) exp(-dE / 2T) |j><i|`` and a decay
    ``sqrt(gamma) |i><j|``.  For the default hot bath this is exactly
    ``A1 = sqrt(g_h) e^{-dE_h/2T_h} |4><1|`` and ``A2 = sqrt(g_h) |1><4|``.
    """
    if which == "hot":
        manifold, gamma, T = model.hot_manifold, model.gamma_h, model.t_h
    elif which == "cold":
        manifold, gamma, T = model.cold_manifold, model.gamma_c, model.t_c
    else:
        raise ValueError(f"which must be 'hot' or 'cold', got {which!r}")
    n = model.dim
    E = model.levels
    ops = []
    ordered = sorted(manifold, key=lambda k: E[k])
    for p, lo in enumerate(ordered):
        for hi in ordered[p + 1:]:
            gap = E[hi] - E[lo]
            ops.append(math.sqrt(gamma) * math.exp(-gap / (2 * T)) * _pair_op(n, hi, lo))
            ops.append(math.sqrt(gamma) * _pair_op(n, lo, hi))
    return ops


def build_bath(model: EngineModel, which: str) -> np.ndarray:
    return lv.dissipator_superop(bath_jump_operators(model, which), dim=model.dim)


def gibbs_state(levels, T: float, support) -> np.ndarray:
    """Boltzmann-weighted diagonal density vector supported on ``support``."""
    support = list(support)
    if T <= 0:
        raise ValueError("temperature must be positive")
    if not support:
        raise ValueError("support must be non-empty")
    E = np.asarray([levels[k] for k in support], dtype=float)
    w = np.exp(-(E - E.min()) / T)
    p = np.zeros(len(levels))
    p[support] = w / w.sum()
    return lv.vec(np.diag(p))


def build_dephasing(dim: int, rate: float) -> np.ndarray:
    """Pure dephasing: every energy-basis coherence decays at ``rate``."""
    if rate < 0:
        raise ValueError("dephasing rate must be >= 0")
    d = np.full(dim * dim, rate, dtype=complex)
    d[np.arange(dim) * (dim + 1)] = 0
    return np.diag(-1j * d)


def complete_dephase(dim: int) -> np.ndarray:
    """Projection onto population space."""
    return lv.population_projector(dim)


THERMAL = ("cold", "hot")
DRIVES = ("drive", "drive1", "drive2")


@dataclass
class GeneratorSet:
    """The constant building blocks every schedule is assembled from.

    ``complete_dephasing`` switches thermal segments to their
    population-projected form (infinitely fast pure dephasing running
    alongside the baths).
    """

    h0: np.ndarray
    ops: dict[str, np.ndarray]
    complete_dephasing: bool = False
    _norms: dict[str, float] = field(default_factory=dict, repr=False)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.ops[name]

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    def norm(self, name: str) -> float:
        if name not in self._norms:
            self._norms[name] = lv.spectral_norm(self.ops[name])
        return self._norms[name]

    def combine(self, weights) -> np.ndarray:
        n2 = self.dim ** 2
        G = np.zeros((n2, n2), dtype=complex)
        for name, w in weights.items():
            if w:
                G = G + w * self.ops[name]
        return G

    def with_dephasing(self, rate: float = 0.0, complete: bool = False) -> GeneratorSet:
        ops = dict(self.ops)
        if rate:
            ops["dephasing"] = build_dephasing(self.dim, rate)
        return GeneratorSet(self.h0, ops, complete_dephasing=complete)


def build_generators(model: EngineModel, dephasing_rate: float = 0.0) -> GeneratorSet:
    ops = {
        "cold": build_bath(model, "cold"),
        "hot": build_bath(model, "hot"),
        "drive": build_drive_rwa(model),
    }
    for k, pair in enumerate(model.drive_pairs[:2], start=1):
        ops[f"drive{k}"] = build_drive_rwa(model, [pair])
    if dephasing_rate:
        ops["dephasing"] = build_dephasing(model.dim, dephasing_rate)
    return GeneratorSet(build_h0(model), ops)


@dataclass(frozen=True)
class RegimeWarning:
    check: str
    ratio: float
    message: str


# "a << b" is taken to mean a / b <= 0.1
MUCH_LESS = 0.1


def validate_regime(model: EngineModel, m: float | None = None) -> list[RegimeWarning]:
    """Flag violated validity inequalities.  Never raises."""
    out = []
    g = min(model.gamma_c, model.gamma_h)
    if model.epsilon > 0:
        ratio = math.inf if g == 0 else model.epsilon / g
        if ratio > MUCH_LESS:
            out.append(RegimeWarning(
                "local_lindblad", ratio,
                f"epsilon << gamma violated: epsilon/min(gamma) = {ratio:.3g}"))
        ratio = math.inf if model.omega == 0 else model.epsilon / abs(model.omega)
        if ratio > MUCH_LESS:
            out.append(RegimeWarning(
                "rwa", ratio, f"epsilon << omega violated: epsilon/omega = {ratio:.3g}"))
    E = model.levels
    for a, b in model.drive_pairs:
        gap = abs(E[b] - E[a])
        if not math.isclose(gap, abs(model.omega), rel_tol=1e-9, abs_tol=1e-12):
            out.append(RegimeWarning(
                "resonance", gap / model.omega if model.omega else math.inf,
                f"drive pair ({a}, {b}) gap {gap:.6g} is off resonance with omega={model.omega:.6g}"))
    if m is not None:
        min_gap = min(model.manifold_gap("hot"), model.manifold_gap("cold"))
        need = abs(model.omega) / min_gap if min_gap > 0 else math.inf
        ratio = need / m if m > 0 else math.inf
        if ratio > MUCH_LESS:
            out.append(RegimeWarning(
                "secular", ratio,
                f"m >> omega/min(dE) violated: m = {m:.6g}, omega/min(dE) = {need:.3g}"))
    return out
