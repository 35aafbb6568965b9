import numpy as np
import pytest

from reflekt import backward, presets, valuefn
from reflekt.surface import ValueSurface
from reflekt.valuefn import EngineConfig

REG = EngineConfig(engine="regression", n_paths=2000, n_steps=50)


def test_terminal_time_returns_h():
    heat = presets.get("heat")
    for config in (EngineConfig(), REG):
        u, se = valuefn.evaluate_u(heat, 1.0, 0.3, config)
        assert u == np.cos(np.pi * 0.3) and se == 0.0


def test_rejects_points_outside():
    heat = presets.get("heat")
    with pytest.raises(ValueError):
        valuefn.evaluate_u(heat, 1.5, 0.0)
    with pytest.raises(ValueError):
        valuefn.evaluate_u(heat, 0.5, 1.5)


def test_range_invariance_under_box():
    surf = valuefn.value_surface(presets.get("obstacle_interior"))
    assert surf.u.max() <= 0.6 and surf.u.min() >= -0.6
    u, _ = valuefn.evaluate_u(presets.get("obstacle_interior"), 0.0, 0.0, REG)
    assert -0.6 <= u <= 0.6


def test_deterministic_given_seed():
    heat = presets.get("heat")
    a = valuefn.evaluate_u(heat, 0.25, 0.3, REG)
    b = valuefn.evaluate_u(heat, 0.25, 0.3, REG)
    c = valuefn.evaluate_u(heat, 0.25, 0.3, EngineConfig(engine="regression", n_paths=2000, n_steps=50, seed=1))
    assert a == b and a != c


def test_engines_agree_on_heat():
    heat = presets.get("heat")
    u_grid, _ = valuefn.evaluate_u(heat, 0.0, 0.3)
    u_reg, se = valuefn.evaluate_u(heat, 0.0, 0.3, EngineConfig(engine="regression", n_paths=8000, n_steps=50))
    assert abs(u_grid - presets.heat_exact(0.0, 0.3)) <= 1e-2
    assert abs(u_reg - u_grid) <= 3 * se + 5e-3


def test_geometric_sequence_stays_inside():
    seq = valuefn.geometric_sequence(0.9, 0.95, range(1, 6), 1.0, (-1.0, 1.0))
    for t, x in seq:
        assert 0.0 <= t <= 1.0 and -1.0 <= x <= 1.0
    assert seq[-1] == (0.9 + 2.0**-5, 0.95 + 2.0**-5)


def test_continuity_modulus_shrinks():
    heat = presets.get("heat")
    seq = valuefn.geometric_sequence(0.25, 0.3, range(1, 7), 1.0, (-1.0, 1.0))
    rep = valuefn.continuity_modulus(heat, (0.25, 0.3), seq)
    gaps = [r["gap"] for r in rep["rows"]]
    assert gaps[-1] < gaps[0] / 100
    assert 0.5 < rep["exponent_x"] < 2.5


def test_markov_consistency_heat():
    rows = valuefn.markov_consistency(presets.get("heat"), 0.0, [0.3], [0.0, 0.5, 1.0],
                                      EngineConfig(engine="regression"))
    assert max(r["residual"] for r in rows) <= 2e-2
    assert rows[-1]["residual"] == 0.0


def test_markov_checkpoint_must_be_grid_point():
    with pytest.raises(ValueError):
        valuefn.markov_consistency(presets.get("heat"), 0.0, [0.3], [0.333], REG)


def test_tightness_needs_three_members():
    with pytest.raises(ValueError):
        valuefn.tightness_along_sequence(presets.get("heat"), [(0.5, 0.0), (0.25, 0.0)], REG)


def test_tightness_heat_bounded_and_control_flagged():
    heat = presets.get("heat")
    labels = [1, 2, 4, 8]
    seq = valuefn.geometric_sequence(0.25, 0.3, labels, 1.0, (-1.0, 1.0))
    plain = valuefn.tightness_along_sequence(heat, seq, REG, labels)
    control = valuefn.tightness_along_sequence(heat, seq, REG, labels, scale_by_n=True)
    assert plain["bounded"] and not control["bounded"]
    assert set(plain["processes"]) == set(valuefn.PROCESSES)


def test_surface_csv_round_trip(tmp_path):
    surf = valuefn.value_surface(presets.get("drifted"), EngineConfig(n_t=10, n_x=7))
    surf.to_csv(tmp_path / "s.csv")
    back = ValueSurface.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.u, surf.u) and np.array_equal(back.nodes, surf.nodes)


def test_surface_interpolation_exact_at_nodes():
    gs = backward.solve_grid(presets.get("heat"), 10, 11)
    surf = ValueSurface(gs.times, gs.nodes, gs.u[:, :, 0])
    assert surf.at(gs.times[3], gs.nodes[4]) == gs.u[3, 4, 0]
    assert surf.sup_gap(surf) == 0.0
    with pytest.raises(ValueError):
        ValueSurface(gs.times, gs.nodes, gs.u[:-1, :, 0])
