import numpy as np
import pytest
from scipy import integrate, stats

from reflekt import forward, presets
from reflekt.coefficients import CoefficientSet
from reflekt.domain import Domain

INTERVAL = Domain.interval(-1.0, 1.0)


def _zero(t, x, y):
    return np.zeros_like(y)


def _coeffs(drift, noise):
    return CoefficientSet(b=lambda t, x: np.full_like(x, drift),
                          sigma=lambda t, x: np.full((x.shape[0], 1, 1), noise),
                          f=_zero, g=_zero, h=lambda x: x[:, :1])


def reflected_bm_local_time(horizon):
    """E[A_T] for reflected BM on (-1, 1) from 0: integral of the wall density (images)."""
    def wall_density(s):
        k = np.arange(-20, 21)
        return float(np.sum(2 * stats.norm.pdf(1.0 - 4 * k, scale=np.sqrt(s))))
    return integrate.quad(wall_density, 0.0, horizon, limit=200)[0]


def test_frozen_path():
    path = forward.simulate_forward(INTERVAL, _coeffs(0.0, 0.0), 0.0, [0.3], 50, np.random.default_rng(0))
    assert np.all(path.X == 0.3) and np.all(path.A == 0.0)
    assert forward.local_time_ito_residual(INTERVAL, _coeffs(0.0, 0.0), path) == 0.0


@pytest.mark.parametrize("horizon", [0.5, 2.0, 3.0])
def test_sticking_path(horizon):
    c = _coeffs(1.0, 0.0)
    path = forward.simulate_forward(INTERVAL, c, 0.0, [0.0], 400, np.random.default_rng(0), horizon)
    assert path.A[-1] == pytest.approx(max(horizon - 1.0, 0.0), abs=2 * path.dt)
    assert forward.local_time_ito_residual(INTERVAL, c, path) <= 2 * path.dt
    assert np.all(np.diff(path.A) >= 0)


def test_start_outside_rejected():
    with pytest.raises(ValueError):
        forward.simulate_ensemble(INTERVAL, _coeffs(0.0, 1.0), 0.0, [1.5], 10, 10)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        forward.simulate_ensemble(INTERVAL, _coeffs(0.0, 1.0), 0.0, [0.0], 10, 10, scheme="euler")


def test_ensemble_prefix_stable_and_reproducible():
    c = _coeffs(0.0, 1.0)
    a = forward.simulate_ensemble(INTERVAL, c, 0.0, [0.0], 50, 20, seed=4)
    b = forward.simulate_ensemble(INTERVAL, c, 0.0, [0.0], 500, 20, seed=4)
    assert np.array_equal(a.X, b.X[:50]) and np.array_equal(a.A, b.A[:50])


def test_late_start_is_frozen_before_t():
    ens = forward.simulate_ensemble(INTERVAL, _coeffs(0.0, 1.0), 0.5, [0.2], 100, 20, seed=1)
    i0 = ens.start_index
    assert i0 == 10
    assert np.all(ens.X[:, : i0 + 1] == 0.2) and np.all(ens.A[:, : i0 + 1] == 0.0)


@pytest.mark.parametrize("scheme", forward.SCHEMES)
def test_invariants(scheme):
    ens = forward.simulate_ensemble(INTERVAL, _coeffs(0.3, 1.0), 0.0, [0.9], 2000, 200, seed=2, scheme=scheme)
    ell = INTERVAL.ell(ens.X)
    assert ell.max() <= 0.0
    assert ens.dA.min() >= 0.0
    off_boundary = np.sum(ens.dA * (ell[:, 1:] < -forward.BOUNDARY_TOL))
    if scheme == "projection":
        assert off_boundary == 0.0
    else:
        # the mirrored step ends inside: the push is recorded, the state is interior
        assert off_boundary > 0.0


def test_symmetrized_local_time_matches_images_oracle():
    exact = reflected_bm_local_time(1.0)
    ens = forward.simulate_ensemble(INTERVAL, _coeffs(0.0, 1.0), 0.0, [0.0], 20_000, 200, seed=5,
                                    scheme="symmetrized")
    a = ens.A[:, -1]
    assert abs(a.mean() - exact) <= 3 * a.std(ddof=1) / np.sqrt(a.size) + 2e-3


def test_projection_local_time_bias_shrinks():
    exact = reflected_bm_local_time(1.0)
    bias = []
    for n in (25, 400):
        ens = forward.simulate_ensemble(INTERVAL, _coeffs(0.0, 1.0), 0.0, [0.0], 20_000, n, seed=6)
        bias.append(abs(ens.A[:, -1].mean() - exact))
    assert bias[1] < bias[0] / 2


def test_scan_matches_stored_ensemble():
    heat = presets.get("heat")
    scan = forward.scan_invariants(heat.domain, heat.coeffs, 0.0, [0.0], 5000, 50, seed=9)
    assert scan["max_ell"] <= 0 and scan["min_dA"] >= 0 and scan["off_boundary_local_time"] == 0
    assert scan["A_T"].shape == (5000,)


def test_continuity_ratios_bounded():
    heat = presets.get("heat")
    pairs = [((0.0, [0.0]), (0.0, [0.2 * 2.0**-k])) for k in range(4)]
    pairs += [((0.0, [0.5]), (0.1 * 4.0**-k, [0.5])) for k in range(3)]
    rows = forward.forward_continuity_experiment(heat.domain, heat.coeffs, pairs, 2.0, 1000, 100, seed=0)
    ratios = np.array([r["ratio"] for r in rows])
    assert np.all(np.isfinite(ratios)) and ratios.max() / ratios.min() < 20


def test_exponential_moment_deterministic():
    est, se, cv = forward.exponential_moment(np.full(100, 0.5))
    assert est == pytest.approx(np.exp(0.5)) and se == pytest.approx(0.0, abs=1e-15)


def test_functional_expectation_time_integral():
    heat = presets.get("heat")
    est, se = forward.functional_expectation(heat.domain, heat.coeffs, lambda s, x: np.ones(x.shape[0]),
                                             lambda s, x: np.zeros(x.shape[0]), 0.25, [0.0], 100, 40)
    assert est == pytest.approx(0.75) and se == pytest.approx(0.0, abs=1e-15)


def test_ball_domain_invariants():
    ball = Domain.ball(1.0, dim=2)
    c = CoefficientSet(b=lambda t, x: np.zeros_like(x), sigma=lambda t, x: np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)),
                       f=_zero, g=_zero, h=lambda x: x[:, :1], dim=2)
    ens = forward.simulate_ensemble(ball, c, 0.0, [0.5, 0.0], 500, 100, seed=3)
    assert ball.ell(ens.X).max() <= 1e-12 and ens.dA.min() >= 0
