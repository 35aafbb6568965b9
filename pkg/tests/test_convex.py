import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflekt import convex
from reflekt.assumptions import check_compatibility
from reflekt.convex import MoreauParams
from reflekt.domain import Domain
from reflekt.presets import get
from reflekt.selftest import builtin_specs, convex_identity_trials

BOX = convex.indicator_box([-1.0], [1.0])
QUAD = convex.quadratic(1.0)
ABS = convex.abs_norm(1.0)


def test_evaluate_examples():
    assert convex.evaluate(convex.zero(2), [3.0, -1.0]) == 0.0
    assert convex.evaluate(BOX, [0.5]) == 0.0
    assert convex.evaluate(BOX, [2.0]) == math.inf
    assert convex.evaluate(QUAD, [2.0]) == 2.0


def test_value_at_origin_is_zero():
    for spec in builtin_specs().values():
        assert spec.value(np.zeros(spec.dim)) == 0.0


def test_dimension_mismatch():
    with pytest.raises(convex.ConvexError):
        convex.evaluate(BOX, [0.0, 1.0])


def test_resolvent_examples():
    assert convex.resolvent(convex.zero(), MoreauParams(0.3), [7.0])[0] == 7.0
    assert convex.resolvent(BOX, MoreauParams(0.5), [2.0])[0] == 1.0
    assert convex.resolvent(QUAD, MoreauParams(1.0), [2.0])[0] == pytest.approx(1.0)


def test_epsilon_must_be_positive():
    with pytest.raises(convex.ConvexError):
        MoreauParams(0.0)
    with pytest.raises(convex.ConvexError):
        convex.resolvent(BOX, -1.0, [0.0])


def test_moreau_gradient_examples():
    assert convex.moreau_gradient(BOX, MoreauParams(0.5), [3.0])[0] == pytest.approx(4.0)
    assert convex.moreau_gradient(ABS, MoreauParams(1.0), [0.5])[0] == pytest.approx(0.5)
    for spec in builtin_specs().values():
        assert np.allclose(convex.moreau_gradient(spec, 0.1, np.zeros(spec.dim)), 0.0)


def test_moreau_envelope_examples():
    assert convex.moreau_envelope(convex.zero(), 1.0, [5.0]) == 0.0
    assert convex.moreau_envelope(ABS, 1.0, [0.5]) == pytest.approx(0.125)
    assert convex.moreau_envelope(QUAD, 1.0, [2.0]) == pytest.approx(1.0)


def test_envelope_matches_dense_grid_minimization():
    z = np.linspace(-3, 3, 600_001)
    brute = np.min(0.5 * (z - 0.5) ** 2 + np.abs(z))
    assert convex.moreau_envelope(ABS, 1.0, [0.5]) == pytest.approx(brute, abs=1e-9)


def test_subgradient_residual_examples():
    assert convex.subgradient_inequality_residual(convex.zero(), [0.3], [0.0], [[1.0], [-2.0]]) == 0.0
    assert convex.subgradient_inequality_residual(BOX, [1.0], [5.0], [[-1.0], [0.0], [1.0]]) == 0.0
    assert convex.subgradient_inequality_residual(QUAD, [1.0], [2.0], [[0.0]]) == 0.0
    assert convex.subgradient_inequality_residual(QUAD, [1.0], [0.1], [[0.0]]) == pytest.approx(0.4)


def test_subgradient_residual_rejects_outside_domain():
    with pytest.raises(convex.ConvexError):
        convex.subgradient_inequality_residual(BOX, [2.0], [0.0], [[0.0]])


def test_custom_1d_prox_matches_grid_minimization():
    spec = convex.custom_1d([-1.0, 0.0, 1.0, 2.0], [2.0, 0.0, 0.5, 2.0])
    z = np.linspace(-4.0, 5.0, 900_001)
    for y in (-2.0, -0.3, 0.2, 0.9, 3.0):
        for eps in (0.1, 1.0):
            obj = spec.value(z[:, None]) + (z - y) ** 2 / (2 * eps)
            assert spec.prox([y], eps)[0] == pytest.approx(z[np.argmin(obj)], abs=2e-5)


def test_sum_prox_satisfies_optimality():
    spec = builtin_specs()["sum"]
    probes = np.linspace(-1.0, 1.0, 41)[:, None]
    for y in (-3.0, -0.4, 0.2, 2.5):
        j = spec.prox([y], 0.5)
        grad = (y - j) / 0.5
        assert convex.subgradient_inequality_residual(spec, j, grad, probes) <= 1e-8


@pytest.mark.parametrize("name", sorted(builtin_specs()))
def test_identities_per_spec(name):
    worst = convex_identity_trials(builtin_specs()[name], n_trials=2000, seed=1)
    assert max(worst.values()) <= 1e-8


@pytest.mark.parametrize("name", sorted(builtin_specs()))
def test_gradient_is_inverse_epsilon_lipschitz(name):
    spec = builtin_specs()[name]
    g = np.random.default_rng(2)
    y1 = g.normal(scale=2.0, size=(500, spec.dim))
    y2 = g.normal(scale=2.0, size=(500, spec.dim))
    for eps in (1e-3, 1e-1, 1.0):
        d_grad = np.linalg.norm(convex.moreau_gradient(spec, eps, y1) - convex.moreau_gradient(spec, eps, y2), axis=1)
        assert np.all(d_grad <= np.linalg.norm(y1 - y2, axis=1) / eps * (1 + 1e-9) + 1e-12)


@pytest.mark.parametrize("name", sorted(builtin_specs()))
def test_envelope_monotone_in_epsilon_and_converges(name):
    spec = builtin_specs()[name]
    g = np.random.default_rng(3)
    y = np.clip(g.normal(scale=0.4, size=(200, spec.dim)), -0.45, 0.45)
    assert np.all(np.isfinite(spec.value(y)))
    ladder = [1.0, 1e-1, 1e-2, 1e-3, 1e-6]
    env = np.array([convex.moreau_envelope(spec, e, y) for e in ladder])
    assert np.all(np.diff(env, axis=0) >= 0)
    assert np.all(env <= spec.value(y) + 1e-12)
    assert np.max(np.abs(env[-1] - spec.value(y))) <= 1e-3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=8), st.integers(0, 2**31 - 1))
def test_jensen(points, seed):
    rho = np.random.default_rng(seed).dirichlet(np.ones(len(points)))
    for spec in builtin_specs().values():
        if spec.dim != 1:
            continue
        y = np.clip(np.array(points), -1.0, 1.0)[:, None]
        mean = np.array([rho @ y[:, 0]])
        assert spec.value(mean) <= rho @ spec.value(y) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(1e-3, 10))
def test_box_prox_firmly_nonexpansive(y1, y2, eps):
    j1 = BOX.prox([y1], eps)[0]
    j2 = BOX.prox([y2], eps)[0]
    assert (j1 - j2) ** 2 <= (j1 - j2) * (y1 - y2) + 1e-12


def test_record_round_trip():
    for spec in builtin_specs().values():
        assert convex.from_record(spec.to_record()) == spec


def test_compatibility_examples():
    dom = Domain.interval(-1.0, 1.0)
    coeffs = get("heat").coeffs
    same = check_compatibility(BOX, BOX, coeffs, dom, [1e-2, 1.0], sample_count=200)
    assert same["i"]["residual"] == 0.0
    both_zero = check_compatibility(convex.zero(), convex.zero(), coeffs, dom, [1e-2, 1.0], sample_count=200)
    assert all(r["residual"] == 0.0 for r in both_zero.values())
