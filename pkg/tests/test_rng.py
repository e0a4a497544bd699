import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import stats

from meshnoise.rng import RngStream, normal_block


def test_repeatable():
    a = RngStream(7, 3).normal(1001)
    b = RngStream(7, 3).normal(1001)
    np.testing.assert_array_equal(a, b)


def test_streams_differ():
    assert not np.array_equal(RngStream(7, 3).normal(10), RngStream(7, 4).normal(10))
    assert not np.array_equal(RngStream(7, 3).normal(10), RngStream(8, 3).normal(10))
    assert not np.array_equal(RngStream(7, 3, 0).normal(10), RngStream(7, 3, 1).normal(10))


def test_continues_sequence():
    r = RngStream(1, 2)
    first, second = r.normal(5), r.normal(5)
    assert not np.array_equal(first, second)


def test_box_muller_from_uniforms():
    u = RngStream(5, 9).uniform(8)
    z = RngStream(5, 9).normal(8)
    u1, u2 = 1.0 - u[:4], u[4:]
    r = np.sqrt(-2 * np.log(u1))
    np.testing.assert_allclose(z[0::2], r * np.cos(2 * np.pi * u2), rtol=1e-15)
    np.testing.assert_allclose(z[1::2], r * np.sin(2 * np.pi * u2), rtol=1e-15)


def test_normality():
    z = RngStream(0, 0).normal(200_000)
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 10_000), st.integers(1, 50))
def test_block_matches_streams(seed, start, size):
    block = normal_block(seed, range(start, start + 3), size)
    for row, s in zip(block, range(start, start + 3)):
        np.testing.assert_array_equal(row, RngStream(seed, s).normal(size))


def test_channels_independent():
    r = RngStream(1, 1)
    assert r.channel(0).substream == 1 and r.channel(2).substream == 3
    assert not np.array_equal(r.channel(0).normal(5), r.channel(1).normal(5))
