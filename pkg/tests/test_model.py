import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stpn._validation import DataError, ShapeError
from stpn.localize import tcam
from stpn.model import (ModelParams, attention_forward, classify, fnv1a64, forward,
                        init_params, load_checkpoint, pool, save_checkpoint, sigmoid)


def random_params(rng, m, h, C, scale=1.0):
    return ModelParams(W1=scale * rng.standard_normal((h, m)), b1=scale * rng.standard_normal(h),
                       W2=scale * rng.standard_normal((1, h)), b2=float(rng.standard_normal()),
                       Wc=scale * rng.standard_normal((C, m)))


def test_init_deterministic():
    a, b = init_params(7, 5, 3, seed=4), init_params(7, 5, 3, seed=4)
    assert a.equals(b)
    assert not a.equals(init_params(7, 5, 3, seed=5))


def test_init_zero_biases():
    p = init_params(7, 5, 3, seed=0)
    assert np.all(p.b1 == 0) and p.b2 == 0.0


def test_init_bounds():
    for seed in range(20):
        p = init_params(100, 100, 10, seed)
        assert np.abs(p.W1).max() <= math.sqrt(6 / 200)
        assert np.abs(p.W2).max() <= math.sqrt(6 / 101)
        assert np.abs(p.Wc).max() <= math.sqrt(6 / 110)
    # draws actually fill the range rather than collapsing near zero
    assert np.abs(init_params(100, 100, 10, 0).W1).max() > 0.9 * math.sqrt(6 / 200)


def test_shapes_checked():
    with pytest.raises(ShapeError):
        ModelParams(W1=np.zeros((3, 2)), b1=np.zeros(2), W2=np.zeros((1, 3)), b2=0.0,
                    Wc=np.zeros((2, 2)))
    with pytest.raises(DataError):
        ModelParams(W1=np.zeros((3, 2)), b1=np.zeros(3), W2=np.zeros((1, 3)), b2=np.nan,
                    Wc=np.zeros((2, 2)))
    p = init_params(4, 3, 2, 0)
    with pytest.raises(ShapeError):
        forward(p, np.zeros((5, 3)))


def test_sigmoid_stable():
    z = np.array([-1000.0, -30.0, 0.0, 30.0, 1000.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s))
    assert s[2] == 0.5
    np.testing.assert_allclose(s + sigmoid(-z), 1.0, atol=1e-15)


def test_attention_half_when_second_layer_zero(rng):
    p = random_params(rng, 4, 3, 2)
    p = ModelParams(W1=p.W1, b1=p.b1, W2=np.zeros((1, 3)), b2=0.0, Wc=p.Wc)
    lam, *_ = attention_forward(p, rng.standard_normal((6, 4)))
    np.testing.assert_array_equal(lam, 0.5)


def test_attention_zero_input(rng):
    p = random_params(rng, 4, 3, 2)
    p = ModelParams(W1=p.W1, b1=np.zeros(3), W2=p.W2, b2=0.7, Wc=p.Wc)
    lam, z1, r1, _ = attention_forward(p, np.zeros((5, 4)))
    assert np.all(z1 == 0) and np.all(r1 == 0)
    np.testing.assert_allclose(lam, 1 / (1 + math.exp(-0.7)), rtol=0, atol=1e-15)


def _straight_line_attention(p, X):
    # scalar loops, no numpy broadcasting
    out = []
    for x in X:
        hidden = [max(0.0, sum(p.W1[j, k] * x[k] for k in range(len(x))) + p.b1[j])
                  for j in range(p.h)]
        z = sum(p.W2[0, j] * hidden[j] for j in range(p.h)) + p.b2
        out.append(1.0 / (1.0 + math.exp(-z)))
    return np.array(out)


def test_attention_matches_straight_line(rng):
    for _ in range(20):
        p = random_params(rng, 5, 4, 3)
        X = rng.standard_normal((7, 5))
        lam, *_ = attention_forward(p, X)
        np.testing.assert_allclose(lam, _straight_line_attention(p, X), rtol=0, atol=1e-12)


def test_pool_one_hot(rng):
    X = rng.standard_normal((6, 4))
    lam = np.zeros(6)
    lam[3] = 1.0
    np.testing.assert_array_equal(pool(X, lam), X[3])
    np.testing.assert_array_equal(pool(X, np.zeros(6)), np.zeros(4))


def test_pool_hand_sum(rng):
    X = rng.standard_normal((3, 4))
    lam = rng.random(3)
    expected = [lam[0] * X[0, k] + lam[1] * X[1, k] + lam[2] * X[2, k] for k in range(4)]
    np.testing.assert_allclose(pool(X, lam), expected, rtol=0, atol=1e-12)


def test_pool_length_mismatch():
    with pytest.raises(ShapeError):
        pool(np.zeros((3, 2)), np.zeros(4))


def test_classify_zero_cases(rng):
    p = random_params(rng, 4, 3, 5)
    z = ModelParams(W1=p.W1, b1=p.b1, W2=p.W2, b2=p.b2, Wc=np.zeros((5, 4)))
    s, prob = classify(z, rng.standard_normal(4))
    assert np.all(s == 0) and np.all(prob == 0.5)
    s, _ = classify(p, np.zeros(4))
    assert np.all(s == 0)


def test_classify_tcam_identity(rng):
    for _ in range(50):
        p = random_params(rng, 6, 4, 3)
        X = rng.standard_normal((9, 6))
        cache = forward(p, X)
        a = tcam(p, X).values
        expanded = [sum(cache.lam[t] * (p.Wc[c] @ X[t]) for t in range(9)) for c in range(3)]
        np.testing.assert_allclose(cache.s, expanded, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(cache.s, cache.lam @ a, rtol=1e-9, atol=1e-12)


def test_forward_cache_invariants(rng):
    p = random_params(rng, 5, 4, 3)
    cache = forward(p, rng.standard_normal((11, 5)))
    assert np.all((cache.lam > 0) & (cache.lam < 1))
    np.testing.assert_array_equal(cache.p, sigmoid(cache.s))
    np.testing.assert_array_equal(cache.xbar, cache.lam @ cache.X)


dims = st.tuples(st.integers(1, 8), st.integers(1, 6), st.integers(1, 5), st.integers(1, 4))


@settings(max_examples=60, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_pool_linearity(dims, seed, a, b):
    T, m, _, _ = dims
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((T, m))
    l1, l2 = rng.random(T), rng.random(T)
    np.testing.assert_allclose(pool(X, a * l1 + b * l2), a * pool(X, l1) + b * pool(X, l2),
                               rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**31))
def test_permutation_equivariance(dims, seed):
    T, m, h, C = dims
    rng = np.random.default_rng(seed)
    p = random_params(rng, m, h, C)
    X = rng.standard_normal((T, m))
    perm = rng.permutation(T)
    c1, c2 = forward(p, X), forward(p, X[perm])
    np.testing.assert_array_equal(c2.lam, c1.lam[perm])
    np.testing.assert_allclose(c2.s, c1.s, rtol=0, atol=1e-12 * (1 + np.abs(c1.s).max()))
    np.testing.assert_allclose(c2.p, c1.p, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**31))
def test_attention_range(dims, seed):
    T, m, h, C = dims
    rng = np.random.default_rng(seed)
    lam = forward(random_params(rng, m, h, C), rng.standard_normal((T, m))).lam
    assert np.all((lam > 0) & (lam < 1))


def test_fnv1a64_known_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_checkpoint_roundtrip(tmp_path, rng):
    p = random_params(rng, 5, 3, 4)
    save_checkpoint(p, tmp_path / "m.ckpt")
    q = load_checkpoint(tmp_path / "m.ckpt")
    assert p.equals(q)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw[:8] == b"STPNMODL"
    assert len(raw) == 8 + 4 * 4 + 8 * (15 + 3 + 3 + 1 + 20) + 8
    save_checkpoint(q, tmp_path / "n.ckpt")
    assert (tmp_path / "n.ckpt").read_bytes() == raw


def test_checkpoint_corruption(tmp_path, rng):
    save_checkpoint(random_params(rng, 5, 3, 4), tmp_path / "m.ckpt")
    raw = bytearray((tmp_path / "m.ckpt").read_bytes())
    raw[40] ^= 0xFF
    (tmp_path / "bad.ckpt").write_bytes(bytes(raw))
    with pytest.raises(DataError, match="checksum"):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "short.ckpt").write_bytes(bytes(raw[:-3]))
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "short.ckpt")
