import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msmu_forge.dpe import (
    MAGIC,
    DpeConfig,
    FeatureGrid,
    PooledDepthGrid,
    depth_embedding,
    encode,
    fuse,
    normalize_depth,
    pool_depth,
    read_grid,
    write_grid,
)
from msmu_forge.errors import ContractError
from msmu_forge.ingest import DepthMap


def dm(values, valid=None):
    values = np.asarray(values, dtype=np.float64)
    return DepthMap(values, np.ones(values.shape, bool) if valid is None else np.asarray(valid))


def brute_pool(values, valid, gh, gw):
    H, W = values.shape
    out = np.zeros((gh, gw))
    for i in range(gh):
        for j in range(gw):
            r0, r1 = (i * H) // gh, ((i + 1) * H) // gh
            c0, c1 = (j * W) // gw, ((j + 1) * W) // gw
            cells = [values[r, c] for r in range(r0, r1) for c in range(c0, c1) if valid[r, c]]
            out[i, j] = sum(cells) / len(cells) if cells else 0.0
    return out


def test_zero_pooled_gives_sin0_cos1():
    pooled = PooledDepthGrid(np.zeros((3, 5)), np.zeros((3, 5), bool))
    E = depth_embedding(pooled, 16).values
    assert np.all(E[..., 0::2] == 0.0)
    assert np.all(E[..., 1::2] == 1.0)


def test_pythagorean_identity():
    rng = np.random.default_rng(0)
    pooled = PooledDepthGrid(rng.uniform(0, 100, (24, 24)), np.zeros((24, 24), bool))
    E = depth_embedding(pooled, 64).values
    assert np.max(np.abs(E[..., 0::2] ** 2 + E[..., 1::2] ** 2 - 1.0)) <= 1e-12
    assert np.all(np.abs(E) <= 1.0)


def test_d4_example():
    E = depth_embedding(PooledDepthGrid(np.ones((1, 1)), np.zeros((1, 1), bool)), 4).values[0, 0]
    f = 10000 ** -0.5
    np.testing.assert_allclose(E, [math.sin(1), math.cos(1), math.sin(f), math.cos(f)], rtol=0, atol=1e-15)


def test_pooling_matches_brute_force_on_50_shapes():
    rng = np.random.default_rng(1)
    for _ in range(50):
        H, W = rng.integers(1, 40, size=2)
        gh, gw = rng.integers(1, H + 1), rng.integers(1, W + 1)
        values = rng.uniform(0.1, 8.0, (H, W))
        valid = rng.random((H, W)) > 0.2
        got = pool_depth(dm(values, valid), (gh, gw))
        want = brute_pool(values, valid, gh, gw)
        assert np.max(np.abs(got.values - want)) <= 1e-9


def test_pool_examples():
    assert np.all(pool_depth(dm(np.full((4, 4), 7.0)), (2, 2)).values == 7.0)
    assert pool_depth(dm([[1, 2], [3, 4]]), (1, 1)).values[0, 0] == 2.5


def test_empty_patch_is_zero_and_flagged():
    valid = np.ones((4, 4), bool)
    valid[:2, :2] = False
    p = pool_depth(dm(np.full((4, 4), 3.0), valid), (2, 2))
    assert p.values[0, 0] == 0.0 and p.empty[0, 0]
    assert not p.empty[1, 1]


def test_grid_larger_than_map_rejected():
    with pytest.raises(ContractError):
        pool_depth(dm(np.ones((3, 3))), (4, 2))


def test_normalize_min_max_to_alpha():
    rng = np.random.default_rng(2)
    v = rng.uniform(0.3, 9.0, (20, 30))
    n = normalize_depth(dm(v), 100.0).values
    assert n[np.unravel_index(v.argmin(), v.shape)] == 0.0
    assert n[np.unravel_index(v.argmax(), v.shape)] == pytest.approx(100.0, abs=1e-12)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_depth(dm([[1.0, 2.0, 3.0]]), 100).values, [[0, 50, 100]])
    assert np.all(normalize_depth(dm(np.full((3, 3), 4.2))).values == 0.0)
    valid = np.array([[True, False, True]])
    out = normalize_depth(dm([[1.0, 99.0, 3.0]], valid))
    assert out.values[0, 1] == 0.0 and not out.valid[0, 1]
    with pytest.raises(ContractError):
        normalize_depth(dm(np.ones((2, 2)), np.zeros((2, 2), bool)))


def test_normalize_pool_commute_under_uniform_validity():
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = rng.uniform(0.5, 6.0, (17, 23))
        a = pool_depth(normalize_depth(dm(v), 100), (5, 7)).values
        pooled = pool_depth(dm(v), (5, 7)).values
        b = (pooled - v.min()) / (v.max() - v.min()) * 100
        assert np.max(np.abs(a - b)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(0, math.pi - 1e-6), st.floats(0, math.pi - 1e-6))
def test_first_frequency_pair_is_injective(x, y):
    # channel 0 alone repeats (sin x = sin(pi - x)); the (sin, cos) pair does not
    if abs(x - y) < 1e-9:
        return
    E = depth_embedding(PooledDepthGrid(np.array([[x, y]]), np.zeros((1, 2), bool)), 2).values[0]
    assert not np.allclose(E[0], E[1], atol=1e-12, rtol=0)


def test_channel0_alone_not_injective():
    E = depth_embedding(PooledDepthGrid(np.array([[0.5, math.pi - 0.5]]), np.zeros((1, 2), bool)), 2).values[0]
    assert E[0, 0] == pytest.approx(E[1, 0], abs=1e-15)
    assert E[0, 1] != pytest.approx(E[1, 1])


def test_fuse_and_flatten():
    rng = np.random.default_rng(4)
    A = FeatureGrid(rng.normal(size=(3, 4, 6)))
    B = FeatureGrid(rng.normal(size=(3, 4, 6)))
    Z = FeatureGrid(np.zeros((3, 4, 6)))
    assert np.array_equal(fuse(A, Z).values, A.values)
    assert np.array_equal(fuse(A, B).values, fuse(B, A).values)
    flat = fuse(A, B).flatten()
    assert flat.shape == (12, 6)
    for i in range(3):
        for j in range(4):
            assert np.array_equal(flat[i * 4 + j], A.values[i, j] + B.values[i, j])
    with pytest.raises(ContractError):
        fuse(A, FeatureGrid(np.zeros((3, 4, 4))))


def test_binary_layout_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    depth = dm(rng.uniform(0.5, 4.0, (48, 64)))
    g = encode(depth, DpeConfig(alpha=100, embed_dim=8, grid=(6, 8)))
    path = tmp_path / "g.bin"
    write_grid(g, path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [6, 8, 8]
    assert len(raw) == 16 + 6 * 8 * 8 * 4
    back = read_grid(path)
    np.testing.assert_allclose(back.values, g.values, atol=1e-6)
    assert np.frombuffer(raw[16:20], "<f4")[0] == np.float32(g.values[0, 0, 0])


def test_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError):
        read_grid(p)


@pytest.mark.parametrize("kw", [{"alpha": 0}, {"embed_dim": 3}, {"embed_dim": 0}, {"grid": (0, 3)}])
def test_config_invariants(kw):
    with pytest.raises(ContractError):
        DpeConfig(**kw)


def test_encode_deterministic():
    v = np.random.default_rng(6).uniform(1, 3, (30, 40))
    cfg = DpeConfig(embed_dim=32, grid=(5, 5))
    assert np.array_equal(encode(dm(v), cfg).values, encode(dm(v), cfg).values)
