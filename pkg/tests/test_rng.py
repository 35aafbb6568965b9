import numpy as np

from reflekt import rng


def test_streams_reproducible_and_distinct():
    a = rng.stream(5, "task").standard_normal(8)
    assert np.array_equal(a, rng.stream(5, "task").standard_normal(8))
    assert not np.array_equal(a, rng.stream(5, "task", 1).standard_normal(8))
    assert not np.array_equal(a, rng.stream(6, "task").standard_normal(8))
    assert not np.array_equal(a, rng.stream(5, "other").standard_normal(8))


def test_block_normals_prefix_stable():
    small = rng.block_normals(3, "t", 10, (4,))
    large = rng.block_normals(3, "t", rng.BLOCK_SIZE + 10, (4,))
    assert np.array_equal(small, large[:10])


def test_seed_environment_override(monkeypatch):
    monkeypatch.delenv(rng.SEED_ENV, raising=False)
    assert rng.resolve_seed(4) == 4
    monkeypatch.setenv(rng.SEED_ENV, "17")
    assert rng.resolve_seed(4) == 17


def test_derived_seed_range():
    s = rng.derive_seed(1, "child", 3)
    assert 0 <= s < 2**63 and s == rng.derive_seed(1, "child", 3)
