import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from permsec.channel import (ChannelModel, awgn_capacity, binary_entropy, bsc_capacity, draw_fade,
                             noise_variance, normalize_power, normalize_power_backward,
                             transmit_awgn, transmit_batch, transmit_bsc, transmit_rayleigh)


def test_normalize_power_examples():
    assert np.array_equal(normalize_power([1.0, 1.0, 1.0, 1.0]), [1.0, 1.0, 1.0, 1.0])
    assert np.array_equal(normalize_power([2.0, 2.0, 2.0, 2.0]), [1.0, 1.0, 1.0, 1.0])
    assert np.array_equal(normalize_power([2.0, 0.0, 0.0, 0.0]), [2.0, 0.0, 0.0, 0.0])
    assert np.array_equal(normalize_power(np.zeros(3)), np.zeros(3))
    with pytest.raises(ValueError):
        normalize_power(np.zeros(0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(1e-3, 1e3))
def test_normalize_power_idempotent_and_scale_invariant(values, c):
    X = np.array(values)
    if np.mean(X * X) < 1e-12:
        return
    once = normalize_power(X)
    assert np.mean(once**2) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(normalize_power(once), once, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(normalize_power(c * X), once, rtol=1e-10, atol=1e-12)


def test_normalize_power_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))
    g = normalize_power_backward(X, w)
    eps = 1e-6
    num = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += eps
        Xm[idx] -= eps
        num[idx] = (np.sum(w * normalize_power(Xp)) - np.sum(w * normalize_power(Xm))) / (2 * eps)
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-8)


def test_awgn_examples():
    X = normalize_power(np.random.default_rng(1).normal(size=100))
    assert np.array_equal(transmit_awgn(X, math.inf, np.random.default_rng(0)), X)
    Y = transmit_awgn(np.zeros(100_000), 0.0, np.random.default_rng(2))
    assert np.var(Y) == pytest.approx(1.0, rel=0.05)
    a = transmit_awgn(X, 5.0, np.random.default_rng(9))
    b = transmit_awgn(X, 5.0, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_noise_variance_definition():
    assert noise_variance(10.0) == pytest.approx(0.1)
    assert noise_variance(0.0) == 1.0
    assert noise_variance(math.inf) == 0.0


def test_rayleigh_examples():
    X = normalize_power(np.random.default_rng(3).normal(size=(4, 8)))
    assert np.array_equal(transmit_rayleigh(X, math.inf, np.random.default_rng(0)), X)
    rng = np.random.default_rng(4)
    h = rng.rayleigh(1 / math.sqrt(2), size=1_000_000)
    assert np.mean(h * h) == pytest.approx(1.0, rel=0.02)
    fades = np.array([draw_fade(rng) for _ in range(20_000)])
    assert np.mean(fades**2) == pytest.approx(1.0, rel=0.05)


def test_rayleigh_effective_noise_exceeds_awgn():
    rng = np.random.default_rng(5)
    X = np.zeros((2000, 16))
    ray = transmit_batch(ChannelModel("rayleigh", 10.0), X, rng)
    awgn = transmit_batch(ChannelModel("awgn", 10.0), X, rng)
    assert np.var(ray) > 2 * np.var(awgn)


def test_rayleigh_equalization_is_exact():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(6, 5))
    Y, h = transmit_rayleigh(X, 10.0, np.random.default_rng(7), return_fade=True)
    r2 = np.random.default_rng(7)
    h2 = draw_fade(r2)
    n = r2.normal(0.0, math.sqrt(0.1), size=X.shape)
    assert h == h2
    np.testing.assert_allclose(Y, X + n / h, rtol=1e-12, atol=1e-12)


def test_bsc_examples():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, size=1000)
    assert np.array_equal(transmit_bsc(bits, 0.0, rng), bits)
    assert np.array_equal(transmit_bsc(bits, 1.0, rng), 1 - bits)
    big = np.zeros(1_000_000, dtype=np.uint8)
    frac = transmit_bsc(big, 0.1, rng).mean()
    assert abs(frac - 0.1) < 0.002


@pytest.mark.parametrize("p", [0.05, 0.1, 0.3])
def test_bsc_flip_counts_are_binomial(p):
    rng = np.random.default_rng(int(p * 1000))
    n, trials = 50, 4000
    counts = np.array([int(transmit_bsc(np.zeros(n, np.uint8), p, rng).sum()) for _ in range(trials)])
    expected = stats.binom.pmf(np.arange(n + 1), n, p) * trials
    # merge sparse tails so every cell expects at least 5
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for k in range(n + 1):
        acc_o += np.sum(counts == k)
        acc_e += expected[k]
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    obs[-1] += acc_o
    exp[-1] += acc_e
    exp = np.array(exp) * trials / np.sum(exp)
    _, pval = stats.chisquare(obs, exp)
    assert pval > 0.01


def test_bsc_rejects_bad_input():
    with pytest.raises(ValueError):
        transmit_bsc([0, 1], 1.5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        transmit_bsc([0, 2], 0.1, np.random.default_rng(0))


def test_bsc_capacity_examples():
    assert bsc_capacity(0.0) == 1.0
    assert bsc_capacity(1.0) == 1.0
    assert bsc_capacity(0.5) == 0.0
    h = -0.11 * math.log2(0.11) - 0.89 * math.log2(0.89)
    assert bsc_capacity(0.11) == pytest.approx(0.5, abs=0.01)
    assert abs(bsc_capacity(0.11) - (1 - h)) < 1e-12
    assert binary_entropy(0.5) == 1.0


def test_awgn_capacity():
    assert awgn_capacity(0.0) == pytest.approx(0.5)
    assert awgn_capacity(math.inf) == math.inf


def test_channel_model_validation_and_flags():
    assert ChannelModel.from_flags("bsc", p=0.2) == ChannelModel("bsc", None, 0.2)
    assert ChannelModel.from_flags("rayleigh", snr=3.0).snr_db == 3.0
    with pytest.raises(ValueError):
        ChannelModel("bsc", 10.0, 0.1)
    with pytest.raises(ValueError):
        ChannelModel("awgn", math.nan)
    with pytest.raises(ValueError):
        ChannelModel("laser", 1.0)
    with pytest.raises(ValueError):
        ChannelModel("bsc", None, 1.2)


def test_awgn_is_pure_function_of_seed():
    X = np.random.default_rng(8).normal(size=(3, 3))
    m = ChannelModel("awgn", 7.0)
    assert np.array_equal(m.transmit(X, np.random.default_rng(1)), m.transmit(X, np.random.default_rng(1)))


def test_batch_rayleigh_draws_one_fade_per_message():
    X = np.ones((3, 4, 5))
    Y = transmit_batch(ChannelModel("rayleigh", 0.0), X, np.random.default_rng(0))
    assert Y.shape == X.shape
    assert not np.allclose(Y[0], Y[1])
