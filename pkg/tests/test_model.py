import math

import numpy as np
import pytest

from qhengine import liouville as lv
from qhengine.errors import ConfigError
from qhengine.model import (EngineModel, bath_jump_operators, build_bath, build_dephasing,
                            build_drive_rwa, build_generators, build_h0, complete_dephase,
                            drive_hamiltonian, gibbs_state, validate_regime)


def test_default_parameters(model):
    assert model.levels == (-2.0, -0.5, 0.5, 2.0)
    assert model.omega == 1.5
    assert model.drive_period == pytest.approx(2 * math.pi / 1.5)
    assert model.cycle_time(2) == pytest.approx(12 * model.drive_period)
    assert (model.t_h, model.t_c) == (5.0, 1.0)
    assert model.epsilon == model.gamma_c == model.gamma_h == 5e-4
    assert np.trace(build_h0(model) @ build_h0(model)).real == pytest.approx(8.5)


def test_hot_jump_operators_exact(model):
    A1, A2 = bath_jump_operators(model, "hot")
    g = math.sqrt(model.gamma_h)
    expect1 = np.zeros((4, 4))
    expect1[3, 0] = g * math.exp(-4 / (2 * 5))
    expect2 = np.zeros((4, 4))
    expect2[0, 3] = g
    assert np.allclose(A1, expect1) and np.allclose(A2, expect2)
    with pytest.raises(ValueError):
        bath_jump_operators(model, "warm")


@pytest.mark.parametrize("which, lo, hi, ratio", [
    ("hot", 0, 3, math.exp(-0.8)),
    ("cold", 1, 2, math.exp(-1.0)),
])
def test_bath_thermalizes_to_gibbs_ratio(model, which, lo, hi, ratio):
    # relax a state living on the bath's manifold for a long time
    start = np.zeros((4, 4))
    start[lo, lo] = start[hi, hi] = 0.5
    K = lv.propagate(build_bath(model, which), 1e6)
    rho = lv.unvec(K @ lv.vec(start))
    assert rho[hi, hi].real / rho[lo, lo].real == pytest.approx(ratio, rel=1e-10)


def test_gibbs_state(model):
    rho = lv.unvec(gibbs_state(model.levels, 5.0, model.hot_manifold)).real
    assert rho[3, 3] / rho[0, 0] == pytest.approx(math.exp(-0.8))
    assert np.trace(rho) == pytest.approx(1)
    with pytest.raises(ValueError):
        gibbs_state(model.levels, 0.0, [0])
    with pytest.raises(ValueError):
        gibbs_state(model.levels, 1.0, [])


def test_gibbs_state_is_bath_fixed_point(model):
    G = build_bath(model, "cold")
    assert np.linalg.norm(G @ gibbs_state(model.levels, model.t_c, model.cold_manifold)) < 1e-18


def test_generators_trace_preserving(gens):
    for name, G in gens.ops.items():
        assert lv.trace_defect(G) < 1e-15, name


def test_drive_is_half_rwa_hamiltonian(model):
    Hw = drive_hamiltonian(model)
    assert np.allclose(Hw, model.epsilon * np.array(
        [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]))
    D = build_drive_rwa(model)
    assert np.allclose(D, lv.hamiltonian_superop(0.5 * Hw))
    assert lv.spectral_norm(D) == pytest.approx(model.epsilon)


def test_generator_set(gens, model):
    assert gens.dim == 4
    assert set(gens.ops) == {"cold", "hot", "drive", "drive1", "drive2"}
    assert np.allclose(gens["drive1"] + gens["drive2"], gens["drive"])
    assert gens.norm("cold") == pytest.approx(np.linalg.norm(gens["cold"], 2))
    G = gens.combine({"cold": 2, "drive": 1})
    assert np.allclose(G, 2 * gens["cold"] + gens["drive"])
    d = gens.with_dephasing(0.1)
    assert "dephasing" in d.ops and not d.complete_dephasing
    assert gens.with_dephasing(complete=True).complete_dephasing


def test_dephasing_decays_coherences_only():
    rate, t = 0.3, 2.0
    rho = np.array([[0.6, 0.2 + 0.1j], [0.2 - 0.1j, 0.4]])
    out = lv.unvec(lv.propagate(build_dephasing(2, rate), t) @ lv.vec(rho))
    assert np.allclose(np.diag(out), np.diag(rho))
    assert out[0, 1] == pytest.approx(rho[0, 1] * math.exp(-rate * t))
    with pytest.raises(ValueError):
        build_dephasing(2, -1)


def test_complete_dephase_projects():
    rho = np.array([[0.6, 0.2], [0.2, 0.4]])
    assert np.allclose(lv.unvec(complete_dephase(2) @ lv.vec(rho)), np.diag([0.6, 0.4]))


def test_explicit_levels_and_derived_omega():
    m = EngineModel(delta_e_h=6, delta_e_c=2)
    assert m.levels == (-3, -1, 1, 3) and m.omega == 2
    m = EngineModel(levels=(0, 1, 2, 4), omega=1.0)
    assert m.manifold_gap("hot") == 4 and m.manifold_gap("cold") == 1


@pytest.mark.parametrize("kw", [
    {"t_h": 1, "t_c": 1},
    {"t_c": 0},
    {"gamma_h": -1},
    {"epsilon": -1e-3},
    {"hot_manifold": (1, 2)},
    {"cold_manifold": (0, 9)},
    {"drive_pairs": ((0, 0),)},
    {"levels": (1.0,)},
])
def test_invalid_models(kw):
    with pytest.raises(ConfigError):
        EngineModel(**kw)


def test_dict_round_trip(model):
    assert EngineModel.from_dict(model.to_dict()) == model
    with pytest.raises(ConfigError):
        EngineModel.from_dict({"bogus": 1})


def test_zero_omega_has_infinite_period():
    assert EngineModel(omega=0.0).drive_period == math.inf


def test_regime_checks(model):
    names = {w.check for w in validate_regime(model, m=1)}
    # the default model sits at epsilon = gamma, outside the local-Lindblad regime
    assert "local_lindblad" in names and "secular" in names
    safe = model.with_(epsilon=1e-6, gamma_c=1e-3, gamma_h=1e-3)
    assert validate_regime(safe, m=100) == []
    off = EngineModel(levels=(-2, -0.4, 0.5, 2))
    assert "resonance" in {w.check for w in validate_regime(off)}


def test_build_generators_with_dephasing(model):
    g = build_generators(model, dephasing_rate=0.01)
    assert "dephasing" in g.ops
