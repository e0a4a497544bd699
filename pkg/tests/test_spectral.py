import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshnoise.spectral import (
    dump_spectrum_csv,
    inner_product_m,
    reconstruct,
    spectral_coeffs,
    theoretical_variance,
    weyl_slope,
    weyl_tail,
)


class TestInnerProduct:
    def test_ones_is_area(self, sphere2_ops):
        _, M, _ = sphere2_ops
        assert inner_product_m(np.ones(M.n), np.ones(M.n), M) == pytest.approx(M.total(), rel=1e-14)

    def test_orthogonal_modes(self, sphere2_ops):
        _, M, spec = sphere2_ops
        phi = spec.eigenvectors
        assert abs(inner_product_m(phi[:, 0], phi[:, 1], M)) < 1e-8

    def test_loop_oracle(self, sphere2_ops, rng):
        _, M, _ = sphere2_ops
        f, g = rng.standard_normal((2, M.n))
        loop = 0.0
        for i in range(M.n):
            loop += f[i] * M.diag[i] * g[i]
        assert inner_product_m(f, g, M) == pytest.approx(loop, rel=1e-14, abs=1e-14)

    def test_length_mismatch(self, sphere2_ops):
        _, M, _ = sphere2_ops
        with pytest.raises(ValueError):
            inner_product_m(np.ones(3), np.ones(3), M)


class TestCoeffs:
    def test_eigenvector_gives_unit_vector(self, sphere2_ops):
        _, M, spec = sphere2_ops
        for j in (0, 5, 100):
            c = spectral_coeffs(spec.eigenvectors[:, j], spec, M)
            e = np.zeros(spec.k)
            e[j] = 1
            assert np.abs(c - e).max() < 1e-8

    def test_constant(self, sphere2_ops):
        _, M, spec = sphere2_ops
        c = spectral_coeffs(np.full(M.n, 2.5), spec, M)
        assert c[0] == pytest.approx(2.5 * np.sqrt(M.total()), rel=1e-10)
        assert np.abs(c[1:]).max() < 1e-8

    def test_batched(self, sphere2_ops, rng):
        _, M, spec = sphere2_ops
        F = rng.standard_normal((4, M.n))
        batch = spectral_coeffs(F, spec, M)
        for row, f in zip(batch, F):
            np.testing.assert_allclose(row, spectral_coeffs(f, spec, M), rtol=1e-13, atol=1e-13)


class TestReconstruct:
    def test_unit_coeff(self, sphere2_ops):
        _, _, spec = sphere2_ops
        e = np.zeros(7)
        e[6] = 1
        np.testing.assert_array_equal(reconstruct(e, spec), spec.eigenvectors[:, 6])

    def test_zero(self, sphere2_ops):
        _, _, spec = sphere2_ops
        assert np.all(reconstruct(np.zeros(10), spec) == 0)

    @pytest.mark.parametrize("k", [1, 10, 80])
    def test_parseval(self, sphere2_ops, rng, k):
        _, M, spec = sphere2_ops
        f = rng.standard_normal(M.n)
        c = spectral_coeffs(f, spec, M)
        r = f - reconstruct(c[:k], spec)
        assert inner_product_m(r, r, M) == pytest.approx(np.sum(c[k:] ** 2), rel=1e-8)

    def test_too_many(self, sphere2_ops):
        _, _, spec = sphere2_ops
        with pytest.raises(ValueError):
            reconstruct(np.zeros(spec.k + 1), spec)


class TestTheoreticalVariance:
    def test_values(self):
        assert theoretical_variance(0.0, 100) == pytest.approx(1e-4)
        assert theoretical_variance(100.0, 100) == pytest.approx(2.5e-5)

    @given(st.floats(0, 1e6), st.floats(0, 1e6))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert theoretical_variance(hi, 100) <= theoretical_variance(lo, 100)

    def test_limit(self):
        v = theoretical_variance(np.logspace(0, 12, 50), 100)
        assert np.all(np.diff(v) < 0) and v[-1] < 1e-23

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            theoretical_variance(1.0, 0.0)


class TestWeylTail:
    def test_past_end(self):
        assert weyl_tail(np.array([0.0, 1.0]), 3, 100, 1.0).tail == 0.0

    def test_single(self):
        assert weyl_tail(np.array([0.0]), 1, 100, 1.0).tail == pytest.approx(1e-4)

    def test_monotone_and_bounded(self, sphere3_ops):
        _, M, spec = sphere3_ops
        tails = [weyl_tail(spec.eigenvalues, k, 100, M.total()) for k in range(1, spec.k + 2)]
        values = np.array([t.tail for t in tails])
        assert np.all(np.diff(values) <= 0)
        assert all(t.tail <= t.bound for t in tails)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            weyl_tail(np.array([0.0]), 0, 100, 1.0)


def test_weyl_slope_sphere(sphere3_ops):
    _, M, spec = sphere3_ops
    slope = weyl_slope(spec.eigenvalues, 20, 100)
    assert slope == pytest.approx(4 * np.pi / M.total(), rel=0.25)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parseval_random(sphere2_ops, seed):
    _, M, spec = sphere2_ops
    f = np.random.default_rng(seed).standard_normal(M.n)
    c = spectral_coeffs(f, spec, M)
    assert np.sum(c**2) == pytest.approx(inner_product_m(f, f, M), rel=1e-9)
    np.testing.assert_allclose(reconstruct(c, spec), f, atol=1e-9)


def test_dump_csv(tmp_path, sphere2_ops):
    _, _, spec = sphere2_ops
    dump_spectrum_csv(spec, None, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,eigenvalue,coefficient" and lines[1].endswith(",")
