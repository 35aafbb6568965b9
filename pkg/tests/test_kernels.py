import os
import subprocess
import sys

import numpy as np
import pytest

from reflekt import kernels
from reflekt._accel import USE_JIT


def test_thomas_matches_dense_solve():
    g = np.random.default_rng(0)
    n = 40
    a, c = g.uniform(-1, 0, n), g.uniform(-1, 0, n)
    b = 3.0 + g.uniform(0, 1, n)
    d = g.normal(size=n)
    dense = np.diag(b) + np.diag(a[1:], -1) + np.diag(c[:-1], 1)
    expected = np.linalg.solve(dense, d)
    for solve in (kernels.thomas_solve_jit, kernels.thomas_solve_numpy):
        assert np.allclose(solve(a, b, c, d), expected, atol=1e-13)


def test_hat_bin_variants_agree_and_conserve_mass():
    g = np.random.default_rng(1)
    nodes = np.linspace(-1.0, 1.0, 17)
    samples = g.normal(scale=0.8, size=5000)
    w = g.uniform(size=5000)
    jit = kernels.hat_bin_jit(samples, nodes, w)
    ref = kernels.hat_bin_numpy(samples, nodes, w)
    assert np.allclose(jit, ref, atol=1e-12)
    assert ref.sum() == pytest.approx(w.sum())
    assert np.allclose(nodes @ ref, np.clip(samples, -1, 1) @ w)


def test_radial_projection_variants_agree():
    rho = np.concatenate([np.linspace(0.0, 1.3, 200), [1.0, 0.999999]])
    for a0 in (0.25, 0.5):
        d1, s1 = kernels.radial_project_jit(rho, 1.0, a0)
        d2, s2 = kernels.radial_project_numpy(rho, 1.0, a0)
        assert np.array_equal(s1, s2)
        assert np.allclose(d1, d2, atol=1e-13)
        assert np.all(d1[rho <= 1.0] == 0.0)


def test_numpy_fallback_selected_by_flag():
    code = ("from reflekt import kernels, _accel;"
            "print(_accel.USE_JIT, kernels.thomas_solve is kernels.thomas_solve_numpy)")
    env = dict(os.environ, REFLEKT_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


def test_default_uses_jit():
    if os.environ.get("REFLEKT_DISABLE_JIT"):
        pytest.skip("JIT disabled in this environment")
    assert USE_JIT and kernels.hat_bin is kernels.hat_bin_jit


def test_fallback_reproduces_solver_output():
    code = ("import numpy as np; from reflekt import backward, presets, pde_oracle;"
            "u = backward.solve_grid(presets.get('obstacle_boundary'), 20, 21).u[:, :, 0];"
            "v = pde_oracle.solve_pvi(presets.get('heat'), pde_oracle.FDGrid(41, 50)).u;"
            "print(repr(float(u.sum())), repr(float(v.sum())))")
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, REFLEKT_DISABLE_JIT=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append([float(v) for v in res.stdout.split()])
    assert np.allclose(outs[0], outs[1], rtol=1e-12, atol=1e-12)
