"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary.
"""
import time

import numpy as np
import pytest
from scipy import stats

from reflekt import backward, forward, pde_oracle, presets, selftest, valuefn
from reflekt.backward import SolverParams
from reflekt.cli import run
from reflekt.coefficients import CoefficientSet
from reflekt.valuefn import EngineConfig

pytestmark = pytest.mark.slow

OBSTACLES = ("obstacle_interior", "obstacle_boundary")
BASE = (0.25, 0.3)


def _zero(t, x, y):
    return np.zeros_like(y)


def test_criterion_1_convex_identities(verdict):
    start = time.perf_counter()
    report = selftest.convex_selftest(n_trials=10_000, seed=0)
    wall = time.perf_counter() - start
    worst = max(max(r.values()) for r in report.values())
    ok = worst <= 1e-8 and wall < 5.0
    verdict(1, ok, f"worst residual {worst:.2e} over {len(report)} specs, {wall:.2f}s")


def test_criterion_2_cadlag(verdict):
    start = time.perf_counter()
    rep = selftest.cadlag_selftest(n_pairs=1000, n_points=100, seed=0, depth=14)
    wall = time.perf_counter() - start
    ok = (rep["tv_monotone"] and rep["tv_limit_error"] <= 1e-4 and rep["ibp"] <= 1e-10
          and rep["covariation"] <= 1e-10 and wall < 10.0)
    verdict(2, ok, f"TV error {rep['tv_limit_error']:.1e}, ibp {rep['ibp']:.1e}, "
                   f"covariation {rep['covariation']:.1e}, {wall:.2f}s")


def test_criterion_3_forward_reflection(verdict):
    start = time.perf_counter()
    heat = presets.get("heat")
    d, c = heat.domain, heat.coeffs
    scan = forward.scan_invariants(d, c, 0.0, [0.0], 100_000, 1000, 1.0, seed=0)
    inside = scan["max_ell"] <= 0.0
    monotone = scan["min_dA"] >= 0.0

    push = CoefficientSet(b=lambda t, x: np.ones_like(x), sigma=lambda t, x: np.zeros((x.shape[0], 1, 1)),
                          f=_zero, g=_zero, h=lambda x: x[:, :1])
    sticking = []
    for horizon in (0.5, 2.0, 3.0):
        path = forward.simulate_forward(d, push, 0.0, [0.0], 1000, np.random.default_rng(0), horizon)
        sticking.append(bool(abs(path.A[-1] - max(horizon - 1.0, 0.0)) <= 2 * path.dt))

    residual = []
    for n_steps in (100, 400, 1600):
        ens = forward.simulate_ensemble(d, c, 0.0, [0.0], 400, n_steps, seed=3)
        residual.append(float(np.mean(forward.local_time_ito_residual(d, c, ens))))
    ratios = [residual[k + 1] / residual[k] for k in range(2)]
    halves = all(0.4 <= r <= 0.6 for r in ratios)

    est, _, cv = forward.exponential_moment(scan["A_T"], 1.0, seed=0)
    wall = time.perf_counter() - start
    ok = inside and monotone and all(sticking) and halves and np.isfinite(est) and cv <= 0.05 and wall < 120
    verdict(3, ok, f"max ell {scan['max_ell']:.1e}, min dA {scan['min_dA']:.1e}, sticking {sticking}, "
                   f"Ito ratios {ratios[0]:.3f}/{ratios[1]:.3f}, E e^A {est:.4f} (cv {cv:.4f}), {wall:.1f}s")


def test_criterion_4_continuity_scaling(verdict):
    start = time.perf_counter()
    heat = presets.get("heat")
    pairs = [((0.0, [0.2]), (0.0, [0.2 + 0.2 * 2.0**-k])) for k in range(5)]
    rows = forward.forward_continuity_experiment(heat.domain, heat.coeffs, pairs, 2.0, 2000, 200, seed=0)
    total = [r["est_X"] + r["est_A"] for r in rows]
    slope = forward.loglog_slope([r["dx"] for r in rows], total)
    wall = time.perf_counter() - start
    verdict(4, abs(slope - 2.0) <= 0.3 and wall < 120, f"slope {slope:.3f}, {wall:.2f}s")


def test_criterion_5_backward_correctness(verdict):
    ode = presets.get("linear_ode")
    x0 = 0.3
    _, sol = backward.solve_regression_from(ode, 0.0, [x0], n_paths=64, n_steps=10_000)
    exact = (1.0 + 0.5 * x0) * np.exp(-1.0)
    ode_gap = abs(sol.Y[0, 0, 0] - exact)

    clamp = presets.get("obstacle_interior")
    lo, hi = -0.6, 0.6
    grid = backward.solve_grid(clamp)
    _, reg = backward.solve_regression_from(clamp, 0.0, [x0], 4000, 100)
    in_box = all(float(a.min()) >= lo and float(a.max()) <= hi for a in (grid.u, reg.Y))

    probes = [[-1.0], [-0.6], [0.0], [0.6], [1.0], [2.0]]
    worst = 0.0
    for name in presets.PRESETS:
        problem = presets.get(name)
        _, s = backward.solve_regression_from(problem, 0.0, [x0], 2000, 100)
        worst = max(worst, *backward.variational_residual(s, probes))
        worst = max(worst, *backward.variational_residual(backward.solve_grid(problem).solution, probes))

    ladder = {}
    for name in OBSTACLES:
        problem = presets.get(name)
        exact_u = backward.solve_grid(problem).u
        ladder[name] = [float(np.abs(backward.solve_grid(
            problem, params=SolverParams(prox_mode="moreau_penalized", epsilon=eps)).u - exact_u).max())
            for eps in (1e-1, 1e-2, 1e-3)]
    ladder_ok = all(np.all(np.diff(g) < 0) and g[-1] <= 5e-2 for g in ladder.values())

    ok = ode_gap <= 5e-3 and in_box and worst <= 1e-8 and ladder_ok
    verdict(5, ok, f"ODE gap {ode_gap:.1e}, clamp in box {in_box}, variational {worst:.1e}, "
                   f"ladder " + ", ".join(f"{k} {v[-1]:.1e}" for k, v in ladder.items()))


SPOTS = [("heat", 0.0, 0.3), ("heat", 0.5, -0.8), ("obstacle_interior", 0.0, 0.3),
         ("obstacle_boundary", 0.25, 0.9), ("obstacle_boundary", 0.5, 0.0)]


def test_criterion_6_feynman_kac(verdict):
    start = time.perf_counter()
    gaps = {}
    surfaces = {}
    for name in ("heat",) + OBSTACLES:
        problem = presets.get(name)
        surfaces[name] = valuefn.value_surface(problem, EngineConfig(n_t=50, n_x=50))
        oracle = pde_oracle.solve_pvi(problem, pde_oracle.FDGrid(200, 2000, 0.5))
        gaps[name] = surfaces[name].sup_gap(oracle)
    config = EngineConfig(engine="regression", n_paths=20_000, n_steps=100, seed=0)
    z_scores = []
    for name, t, x in SPOTS:
        u, se = valuefn.evaluate_u(presets.get(name), t, x, config)
        z_scores.append(abs(u - surfaces[name].at(t, x)) / se)
    wall = time.perf_counter() - start
    ok = max(gaps.values()) <= 2e-2 and max(z_scores) <= 3.0 and wall < 300
    verdict(6, ok, "gaps " + ", ".join(f"{k} {v:.4f}" for k, v in gaps.items())
            + f"; spot |z| max {max(z_scores):.2f}; {wall:.1f}s")


def test_criterion_7_continuity_of_u(verdict):
    details = []
    ok = True
    for name in presets.PRESETS:
        problem = presets.get(name)
        seq = valuefn.geometric_sequence(*BASE, range(1, 9), problem.horizon, problem.domain.bounds)
        rep = valuefn.continuity_modulus(problem, BASE, seq, EngineConfig())
        gaps = [r["gap"] for r in rep["rows"]]
        last = rep["rows"][-1]
        tau = stats.kendalltau(np.arange(len(gaps)), gaps).statistic
        good = last["gap"] <= 3 * last["se"] + 5e-3 and tau <= -0.5
        ok &= bool(good)
        details.append(f"{name} gap8 {last['gap']:.1e} tau {tau:.2f}")
    verdict(7, ok, "; ".join(details))


def test_criterion_8_tightness(verdict):
    labels = [1, 2, 4, 8]
    config = EngineConfig(engine="regression")
    details = []
    ok = True
    for name in ("heat",) + OBSTACLES:
        problem = presets.get(name)
        seq = valuefn.geometric_sequence(*BASE, labels, problem.horizon, problem.domain.bounds)
        plain = valuefn.tightness_along_sequence(problem, seq, config, labels)
        control = valuefn.tightness_along_sequence(problem, seq, config, labels, scale_by_n=True)
        ok &= plain["bounded"] and not control["bounded"]
        details.append(f"{name} {plain['ratio']:.2f} (control {control['ratio']:.2f})")
    verdict(8, ok, "; ".join(details))


def test_criterion_9_markov_consistency(verdict):
    heat = presets.get("heat")
    checkpoints = [0.0, 0.25, 0.5, 0.75, 1.0]
    rows = valuefn.markov_consistency(heat, 0.0, [0.3], checkpoints)
    worst = max(r["residual"] for r in rows)
    verdict(9, worst <= 2e-2, f"worst E|Y_s - u(s, X_s)| {worst:.4f}")


def test_criterion_10_reproducibility(verdict, tmp_path):
    runs = [
        ["solve", "--preset", "obstacle_boundary", "--engine", "grid"],
        ["solve", "--preset", "heat", "--engine", "regression", "--override", "engine.n_paths=2000"],
        ["simulate-forward", "--preset", "drifted"],
        ["continuity", "--preset", "heat"],
    ]
    identical = True
    compared = 0
    for k, argv in enumerate(runs):
        outs = [tmp_path / f"run{k}_{r}" for r in range(2)]
        for out in outs:
            assert run(argv + ["--seed", "11", "--out", str(out)]) == 0
        for csv_file in sorted(outs[0].glob("*.csv")):
            compared += 1
            identical &= csv_file.read_bytes() == (outs[1] / csv_file.name).read_bytes()
    verdict(10, identical and compared >= len(runs), f"{compared} CSV files compared byte for byte")
